//! Fourier transforms on `T^n` and the operators built from them.
//!
//! Conventions: grid points `x_k = 2 pi k / M` in every direction, synthesis
//! `u(x) = sum_j u_j e^{i j.x}` without normalization, analysis
//! `u_j = M^{-n} sum_k u(x_k) e^{-i j.x_k}`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::block::{BlockMatrix, CMatrix};
use crate::error::TransformError;
use crate::lattice::{build_index_set, BasisDescriptor, EigenIndex, SpectralField};

/// Samples of a function on the equispaced tensor grid, row-major with the
/// last axis contiguous.
#[derive(Debug, Clone)]
pub struct GridFunction {
    basis: BasisDescriptor,
    m: usize,
    values: Vec<Complex64>,
    real: bool,
}

impl GridFunction {
    pub fn new(basis: BasisDescriptor, m: usize, values: Vec<Complex64>, real: bool) -> Self {
        let dim = basis.torus_dim().expect("grid functions live on the torus");
        assert_eq!(values.len(), m.pow(dim as u32), "grid size mismatch");
        Self { basis, m, values, real }
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(basis: BasisDescriptor, m: usize, real: bool, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let dim = basis.torus_dim().expect("grid functions live on the torus");
        let total = m.pow(dim as u32);
        let mut x = vec![0.0; dim];
        let values = (0..total)
            .map(|flat| {
                let mut rem = flat;
                for k in (0..dim).rev() {
                    x[k] = 2.0 * std::f64::consts::PI * (rem % m) as f64 / m as f64;
                    rem /= m;
                }
                f(&x)
            })
            .collect();
        Self { basis, m, values, real }
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.m; self.dim()]
    }

    pub fn dim(&self) -> usize {
        self.basis.torus_dim().unwrap_or(1)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_real(&self) -> bool {
        self.real
    }
}

/// Smallest `n' >= n` whose only prime factors are 2, 3 and 5.
pub fn smooth_size(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

fn torus_dim(basis: &BasisDescriptor) -> Result<usize, TransformError> {
    basis.torus_dim().ok_or_else(|| {
        TransformError::Lattice(crate::error::LatticeError::BasisMismatch(
            "expected a torus basis".into(),
        ))
    })
}

fn flat_position(j: &[i64], m: usize) -> usize {
    j.iter()
        .fold(0, |acc, &c| acc * m + c.rem_euclid(m as i64) as usize)
}

/// In-place multidimensional FFT. `inverse` applies the unnormalized
/// `e^{+i}` transform.
fn fft_nd(data: &mut [Complex64], m: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = m.pow((dim - 1 - axis) as u32);
        for start in 0..total {
            if (start / stride) % m != 0 {
                continue;
            }
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[start + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[start + k * stride] = *v;
            }
        }
    }
}

/// Evaluates the Fourier series of `u` on the `m`-point grid. Refuses grids
/// that cannot represent every active frequency (`m < 2 max|j_k| + 1`).
pub fn to_physical(u: &SpectralField, m: usize) -> Result<GridFunction, TransformError> {
    let dim = torus_dim(u.basis())?;
    let bw = u.bandwidth();
    let needed = 2 * bw as usize + 1;
    if m < needed {
        return Err(TransformError::Aliasing {
            grid: m,
            frequency: bw,
            needed,
        });
    }
    let mut data = vec![Complex64::new(0.0, 0.0); m.pow(dim as u32)];
    for (idx, block) in u.iter() {
        data[flat_position(&idx.components(), m)] += block[0];
    }
    fft_nd(&mut data, m, dim, true);
    if u.declared_real() {
        for v in &mut data {
            v.im = 0.0;
        }
    }
    Ok(GridFunction {
        basis: *u.basis(),
        m,
        values: data,
        real: u.declared_real(),
    })
}

/// Fourier coefficients of the trigonometric interpolant of `g`, truncated to
/// `|j| <= cutoff`. Requires `M >= 2 floor(cutoff) + 1`.
pub fn to_spectral(g: &GridFunction, cutoff: f64) -> Result<SpectralField, TransformError> {
    let dim = torus_dim(&g.basis)?;
    let set = build_index_set(g.basis, cutoff)?;
    let needed = 2 * set.max_component() as usize + 1;
    if g.m < needed {
        return Err(TransformError::Aliasing {
            grid: g.m,
            frequency: set.max_component(),
            needed,
        });
    }
    let mut data = g.values.clone();
    fft_nd(&mut data, g.m, dim, false);
    let norm = 1.0 / (g.m.pow(dim as u32) as f64);
    let blocks = set
        .indices()
        .iter()
        .map(|idx| (*idx, vec![data[flat_position(&idx.components(), g.m)] * norm]));
    let field = SpectralField::from_blocks(g.basis, blocks, g.real)?;
    Ok(if g.real { field.enforce_real() } else { field })
}

/// Grid size used to evaluate a pointwise map whose result has per-axis
/// bandwidth `out_bandwidth`, from inputs of bandwidth `in_bandwidth`, when
/// only modes `|j| <= cutoff` of the result are kept.
///
/// Aliases of a frequency `k` land on `k - M`, so `M > out_bandwidth + cutoff`
/// keeps the retained band exact; the result is rounded up to a 5-smooth size.
pub fn dealiased_grid(out_bandwidth: u32, in_bandwidth: u32, cutoff: f64, max_degree: u32) -> usize {
    let n = cutoff.floor() as usize;
    let exact = out_bandwidth as usize + n + 1;
    let sampling = 2 * in_bandwidth.max(n as u32) as usize + 1;
    let rule = (max_degree as usize + 1) * n + 1;
    smooth_size(exact.max(sampling).max(rule))
}

/// Applies the pointwise map `f` to the grid values of `inputs` on an
/// `m`-point grid and returns the projection of the result onto `|j| <= cutoff`.
pub fn pointwise_on_grid<F>(
    basis: BasisDescriptor,
    inputs: &[&SpectralField],
    m: usize,
    cutoff: f64,
    f: F,
) -> Result<SpectralField, TransformError>
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let grids = inputs
        .iter()
        .map(|u| to_physical(u, m))
        .collect::<Result<Vec<_>, _>>()?;
    let real = inputs.iter().all(|u| u.declared_real());
    let total = m.pow(torus_dim(&basis)? as u32);
    let mut args = vec![Complex64::new(0.0, 0.0); inputs.len()];
    let values = (0..total)
        .map(|k| {
            for (a, g) in args.iter_mut().zip(&grids) {
                *a = g.values[k];
            }
            f(&args)
        })
        .collect();
    to_spectral(&GridFunction::new(basis, m, values, real), cutoff)
}

/// Matrix of `u -> Pi^(N)(b u)` on `|j| <= cutoff`: `T_j^{j'} = b_{j - j'}`.
pub fn multiplication_matrix(b: &SpectralField, cutoff: f64) -> Result<BlockMatrix, TransformError> {
    torus_dim(b.basis())?;
    if !b.declared_real() {
        return Err(TransformError::NotReal);
    }
    let set = Arc::new(build_index_set(*b.basis(), cutoff)?);
    let mut t = BlockMatrix::square(set.clone(), true);
    let modes: Vec<(Vec<i64>, Complex64)> = b
        .iter()
        .filter(|(_, c)| c[0] != Complex64::new(0.0, 0.0))
        .map(|(idx, c)| (idx.components(), c[0]))
        .collect();
    let mut jp = Vec::new();
    for (r, idx) in set.indices().iter().enumerate() {
        let j = idx.components();
        for (k, bk) in &modes {
            jp.clear();
            jp.extend(j.iter().zip(k).map(|(a, b)| (a - b) as i32));
            if let Some(c) = set.position(&EigenIndex::torus(&jp)) {
                t.add_block(r, c, CMatrix::from_element(1, 1, *bk));
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> BasisDescriptor {
        BasisDescriptor::torus(1).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn cos_x() -> SpectralField {
        SpectralField::torus_modes(t1(), &[(&[1], c(0.5)), (&[-1], c(0.5))], true).unwrap()
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(97), 100);
        assert_eq!(smooth_size(129), 135);
    }

    #[test]
    fn synthesis_of_cosine() {
        let g = to_physical(&cos_x(), 8).unwrap();
        for (k, v) in g.values().iter().enumerate() {
            let x = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            assert!((v.re - x.cos()).abs() < 1e-15 && v.im == 0.0);
        }
        let zero = to_physical(&SpectralField::zero(t1(), true), 8).unwrap();
        assert!(zero.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn refuses_aliasing_grids() {
        let u = SpectralField::torus_modes(t1(), &[(&[4], c(1.0))], false).unwrap();
        assert!(matches!(to_physical(&u, 8), Err(TransformError::Aliasing { needed: 9, .. })));
        let g = GridFunction::from_fn(t1(), 8, true, |_| c(1.0));
        assert!(matches!(to_spectral(&g, 4.0), Err(TransformError::Aliasing { .. })));
    }

    #[test]
    fn analysis_examples() {
        let cos = GridFunction::from_fn(t1(), 16, true, |x| c(x[0].cos()));
        let u = to_spectral(&cos, 3.0).unwrap();
        assert!((u.coeff(&[1]) - c(0.5)).norm() < 1e-15);
        assert!((u.coeff(&[-1]) - c(0.5)).norm() < 1e-15);
        assert!(u.coeff(&[0]).norm() < 1e-15 && u.coeff(&[2]).norm() < 1e-15);

        let one = GridFunction::from_fn(t1(), 9, true, |_| c(1.0));
        let u = to_spectral(&one, 2.0).unwrap();
        assert!((u.coeff(&[0]) - c(1.0)).norm() < 1e-15);
        assert!(u.iter().filter(|(i, _)| i.eigenvalue() > 0).all(|(_, b)| b[0].norm() < 1e-15));

        // cos^2 x = 1/2 + cos(2x)/2
        let cos2 = GridFunction::from_fn(t1(), 16, true, |x| c(x[0].cos().powi(2)));
        let u = to_spectral(&cos2, 2.0).unwrap();
        assert!((u.coeff(&[0]) - c(0.5)).norm() < 1e-15);
        assert!((u.coeff(&[2]) - c(0.25)).norm() < 1e-15);
        assert!((u.coeff(&[-2]) - c(0.25)).norm() < 1e-15);
        assert!(u.coeff(&[1]).norm() < 1e-15);
    }

    #[test]
    fn two_dimensional_transform() {
        let t2 = BasisDescriptor::torus(2).unwrap();
        let g = GridFunction::from_fn(t2, 12, true, |x| c((x[0] + 2.0 * x[1]).cos()));
        let u = to_spectral(&g, 3.0).unwrap();
        assert!((u.coeff(&[1, 2]) - c(0.5)).norm() < 1e-14);
        assert!((u.coeff(&[-1, -2]) - c(0.5)).norm() < 1e-14);
        let back = to_physical(&u, 12).unwrap();
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn multiplication_by_constant_and_cosine() {
        let konst = SpectralField::torus_modes(t1(), &[(&[0], c(2.5))], true).unwrap();
        let t = multiplication_matrix(&konst, 3.0).unwrap();
        let dense = t.to_dense();
        assert_eq!(dense, CMatrix::identity(7, 7) * c(2.5));

        let t = multiplication_matrix(&cos_x(), 2.0).unwrap();
        let set = t.rows().clone();
        for (r, jr) in set.indices().iter().enumerate() {
            for (k, jc) in set.indices().iter().enumerate() {
                let gap = (jr.components()[0] - jc.components()[0]).abs();
                let expect = if gap == 1 { 0.5 } else { 0.0 };
                assert_eq!(t.to_dense()[(set.range(r).start, set.range(k).start)], c(expect));
            }
        }
        assert_eq!(t.adjoint_defect(), 0.0);
    }

    #[test]
    fn multiplication_needs_real_symbol() {
        let b = SpectralField::torus_modes(t1(), &[(&[1], c(1.0))], false).unwrap();
        assert!(matches!(multiplication_matrix(&b, 2.0), Err(TransformError::NotReal)));
    }
}
