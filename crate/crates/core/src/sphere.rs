//! Spherical-harmonic transforms on `S^2`.
//!
//! Harmonics are the orthonormal complex `Y_l^m(theta, phi)` with the
//! Condon-Shortley phase, so `Y_1^0 = sqrt(3/4pi) cos(theta)` and
//! `Y_l^{-m} = (-1)^m conj(Y_l^m)`. Grids are Gauss-Legendre in
//! `x = cos(theta)` times equispaced longitudes.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::block::{BlockMatrix, CMatrix};
use crate::error::{LatticeError, TransformError};
use crate::lattice::{BasisDescriptor, EigenIndex, IndexSet, SpectralField};

/// Default harmonic degree cap.
pub const DEFAULT_L_MAX: u32 = 32;

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Orthonormal associated Legendre values `Pbar_l^m(x)` for `0 <= m <= l <= l_max`,
/// stored at `l(l+1)/2 + m`, such that `Y_l^m = Pbar_l^m(cos theta) e^{i m phi}`.
///
/// Each order starts from the sectoral value `Pbar_m^m` held in log-scaled
/// form and runs the three-term recurrence in `l`, rescaling whenever the
/// working values grow large, so high orders underflow to zero instead of
/// poisoning the recurrence.
pub fn legendre_table(l_max: u32, x: f64) -> Vec<f64> {
    let l_max = l_max as usize;
    let mut out = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
    let sin = (1.0 - x * x).max(0.0).sqrt();
    let ln_sin = sin.ln();
    // log of prod_{k=1}^m (2k-1)/(2k)
    let mut ln_prod = 0.0;
    const BIG: f64 = 1e150;
    for m in 0..=l_max {
        if m > 0 {
            ln_prod += ((2 * m - 1) as f64 / (2 * m) as f64).ln();
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut scale = 0.5 * (((2 * m + 1) as f64 / (4.0 * PI)).ln() + ln_prod)
            + if m > 0 { m as f64 * ln_sin } else { 0.0 };
        if m > 0 && sin == 0.0 {
            continue; // Pbar_l^m vanishes at the poles for m > 0
        }
        let mut prev2 = 0.0;
        let mut prev = sign;
        out[m * (m + 1) / 2 + m] = prev * scale.exp();
        for l in (m + 1)..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = if l == m + 1 {
                0.0
            } else {
                (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt()
            };
            let cur = a * (x * prev - b * prev2);
            prev2 = prev;
            prev = cur;
            if prev.abs() > BIG {
                prev /= BIG;
                prev2 /= BIG;
                scale += BIG.ln();
            }
            out[l * (l + 1) / 2 + m] = prev * scale.exp();
        }
    }
    out
}

#[inline]
fn plm_at(table: &[f64], l: usize, m: usize) -> f64 {
    table[l * (l + 1) / 2 + m]
}

/// Tensor quadrature on the sphere: Gauss-Legendre in `cos(theta)`,
/// equispaced in longitude.
///
/// Integrates exactly every product of harmonics whose polynomial degree in
/// `cos(theta)` is at most `2 n_theta - 1` and whose longitude frequency is
/// below `n_phi`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    n_theta: usize,
    n_phi: usize,
    x: Vec<f64>,
    weights: Vec<f64>,
    /// Legendre tables up to degree `n_theta - 1`, one per latitude.
    tables: Vec<Vec<f64>>,
}

impl SphereQuadrature {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta >= 1 && n_phi >= 1);
        let (x, weights) = gauss_legendre(n_theta);
        let l_table = (n_theta - 1) as u32;
        let tables = x.iter().map(|&xi| legendre_table(l_table, xi)).collect();
        Self {
            n_theta,
            n_phi,
            x,
            weights,
            tables,
        }
    }

    /// Smallest grid integrating products of total degree `degree` exactly.
    pub fn for_degree(degree: u32) -> Self {
        let d = degree as usize;
        Self::new(d / 2 + 1, d + 1)
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn points(&self) -> usize {
        self.n_theta * self.n_phi
    }

    fn phi(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_phi as f64
    }

    /// Quadrature weight of grid point `(i, k)`.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i] * 2.0 * PI / self.n_phi as f64
    }

    /// Largest degree this grid can synthesize and analyze exactly.
    pub fn max_degree(&self) -> u32 {
        let by_theta = self.n_theta as u32 - 1;
        let by_phi = (self.n_phi as u32 - 1) / 2;
        by_theta.min(by_phi)
    }

    fn check(&self, l_max: u32) -> Result<(), TransformError> {
        if (self.n_theta as u32) <= l_max || (self.n_phi as u32) <= 2 * l_max {
            return Err(TransformError::Resolution(format!(
                "degree {l_max} needs n_theta > {l_max} and n_phi > {}, grid is {}x{}",
                2 * l_max,
                self.n_theta,
                self.n_phi
            )));
        }
        Ok(())
    }

    /// `Y_l^m` at latitude `i`, longitude `k`.
    pub fn harmonic(&self, l: u32, m: i32, i: usize, k: usize) -> Complex64 {
        assert!(l < self.n_theta as u32, "degree {l} exceeds the grid's Legendre table");
        let am = m.unsigned_abs() as usize;
        let p = plm_at(&self.tables[i], l as usize, am);
        let sign = if m < 0 && am % 2 == 1 { -1.0 } else { 1.0 };
        Complex64::from_polar(sign * p, m as f64 * self.phi(k))
    }
}

/// Samples on a [`SphereQuadrature`], latitude-major.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    quad: Arc<SphereQuadrature>,
    values: Vec<Complex64>,
    real: bool,
}

impl SphereGrid {
    pub fn new(quad: Arc<SphereQuadrature>, values: Vec<Complex64>, real: bool) -> Self {
        assert_eq!(values.len(), quad.points());
        Self { quad, values, real }
    }

    /// Samples `f(theta, phi)` at the quadrature nodes.
    pub fn from_fn(quad: Arc<SphereQuadrature>, real: bool, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(quad.points());
        for i in 0..quad.n_theta {
            let theta = quad.x[i].acos();
            for k in 0..quad.n_phi {
                values.push(f(theta, quad.phi(k)));
            }
        }
        Self { quad, values, real }
    }

    pub fn quadrature(&self) -> &Arc<SphereQuadrature> {
        &self.quad
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn at(&self, i: usize, k: usize) -> Complex64 {
        self.values[i * self.quad.n_phi + k]
    }
}

fn require_sphere(basis: &BasisDescriptor) -> Result<(), TransformError> {
    if basis.is_sphere() {
        Ok(())
    } else {
        Err(LatticeError::BasisMismatch("expected the sphere basis".into()).into())
    }
}

/// Per-latitude longitude Fourier coefficients `(2pi/n_phi) sum_k f_k e^{-i m phi_k}`
/// for `|m| <= m_max`, stored at `m + m_max`.
fn ring_coefficients(grid: &SphereGrid, i: usize, m_max: usize) -> Vec<Complex64> {
    let q = &grid.quad;
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * m_max + 1];
    for (slot, m) in (-(m_max as i64)..=m_max as i64).enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..q.n_phi {
            acc += grid.at(i, k) * Complex64::from_polar(1.0, -(m as f64) * q.phi(k));
        }
        out[slot] = acc * (2.0 * PI / q.n_phi as f64);
    }
    out
}

/// Evaluates `sum_{l,m} u_{l,m} Y_l^m` on the quadrature grid.
pub fn sphere_synthesis(u: &SpectralField, quad: &Arc<SphereQuadrature>) -> Result<SphereGrid, TransformError> {
    require_sphere(u.basis())?;
    let l_max = u.bandwidth();
    quad.check(l_max)?;
    let lm = l_max as usize;
    let mut values = vec![Complex64::new(0.0, 0.0); quad.points()];
    let mut ring = vec![Complex64::new(0.0, 0.0); 2 * lm + 1];
    for i in 0..quad.n_theta {
        ring.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        for (idx, block) in u.iter() {
            let EigenIndex::Sphere { l } = *idx else { unreachable!() };
            let l = l as usize;
            if l > lm {
                // stored but identically zero
                continue;
            }
            for (slot, c) in block.iter().enumerate() {
                let m = slot as i64 - l as i64;
                let am = m.unsigned_abs() as usize;
                let sign = if m < 0 && am % 2 == 1 { -1.0 } else { 1.0 };
                ring[(m + lm as i64) as usize] += c * (sign * plm_at(&quad.tables[i], l, am));
            }
        }
        for k in 0..quad.n_phi {
            let phi = quad.phi(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (slot, g) in ring.iter().enumerate() {
                let m = slot as f64 - lm as f64;
                acc += g * Complex64::from_polar(1.0, m * phi);
            }
            values[i * quad.n_phi + k] = if u.declared_real() { Complex64::new(acc.re, 0.0) } else { acc };
        }
    }
    Ok(SphereGrid {
        quad: quad.clone(),
        values,
        real: u.declared_real(),
    })
}

/// Harmonic coefficients `u_{l,m} = <f, Y_l^m>` for `l <= l_max` by quadrature.
pub fn sphere_analysis(grid: &SphereGrid, l_max: u32) -> Result<SpectralField, TransformError> {
    let quad = &grid.quad;
    quad.check(l_max)?;
    let lm = l_max as usize;
    let mut blocks: Vec<Vec<Complex64>> = (0..=lm).map(|l| vec![Complex64::new(0.0, 0.0); 2 * l + 1]).collect();
    for i in 0..quad.n_theta {
        let ring = ring_coefficients(grid, i, lm);
        let w = quad.weights[i];
        for (l, block) in blocks.iter_mut().enumerate() {
            for (slot, c) in block.iter_mut().enumerate() {
                let m = slot as i64 - l as i64;
                let am = m.unsigned_abs() as usize;
                let sign = if m < 0 && am % 2 == 1 { -1.0 } else { 1.0 };
                *c += ring[(m + lm as i64) as usize] * (w * sign * plm_at(&quad.tables[i], l, am));
            }
        }
    }
    let basis = BasisDescriptor::sphere();
    let field = SpectralField::from_blocks(
        basis,
        blocks
            .into_iter()
            .enumerate()
            .map(|(l, b)| (EigenIndex::sphere(l as u32), b)),
        grid.real,
    )?;
    Ok(if grid.real { field.enforce_real() } else { field })
}

/// Dof layout of all degrees `l <= l_max`.
pub fn sphere_index_set(l_max: u32) -> IndexSet {
    IndexSet::from_indices(
        BasisDescriptor::sphere(),
        (0..=l_max).map(EigenIndex::sphere).collect(),
    )
}

/// Matrix of `u -> P_{l <= l_max}(b u)` in the harmonic basis, on a
/// quadrature chosen to be exact for `deg(b) + 2 l_max`. Components of `b`
/// above degree `2 l_max` do not contribute.
pub fn sphere_multiplication_matrix(b: &SpectralField, l_max: u32) -> Result<BlockMatrix, TransformError> {
    require_sphere(b.basis())?;
    let deg = b.bandwidth();
    let quad = Arc::new(SphereQuadrature::for_degree(2 * l_max + deg));
    sphere_multiplication_matrix_with(b, l_max, &quad)
}

/// As [`sphere_multiplication_matrix`] on a caller-supplied quadrature,
/// refused when it cannot integrate degree `deg(b) + 2 l_max` exactly.
pub fn sphere_multiplication_matrix_with(
    b: &SpectralField,
    l_max: u32,
    quad: &Arc<SphereQuadrature>,
) -> Result<BlockMatrix, TransformError> {
    require_sphere(b.basis())?;
    if !b.declared_real() {
        return Err(TransformError::NotReal);
    }
    let deg = b.bandwidth();
    let total = 2 * l_max + deg;
    if 2 * quad.n_theta < total as usize + 1 || quad.n_phi <= total as usize {
        return Err(TransformError::Resolution(format!(
            "products up to degree {total} need n_theta >= {} and n_phi > {total}, grid is {}x{}",
            (total + 1).div_ceil(2),
            quad.n_theta,
            quad.n_phi
        )));
    }
    let bg = sphere_synthesis(b, quad)?;
    let set = Arc::new(IndexSet::from_indices(*b.basis(), (0..=l_max).map(EigenIndex::sphere).collect()));
    let dofs = set.dofs();
    let points = quad.points();
    // Y: points x dofs, and the weighted copy diag(w b) Y
    let mut y = CMatrix::zeros(points, dofs);
    let mut wy = CMatrix::zeros(points, dofs);
    for i in 0..quad.n_theta {
        for k in 0..quad.n_phi {
            let row = i * quad.n_phi + k;
            let wb = bg.at(i, k) * quad.weight(i);
            for l in 0..=l_max {
                let start = set.range(l as usize).start;
                for m in -(l as i32)..=(l as i32) {
                    let col = start + (m + l as i32) as usize;
                    let v = quad.harmonic(l, m, i, k);
                    y[(row, col)] = v;
                    wy[(row, col)] = v * wb;
                }
            }
        }
    }
    let dense = y.adjoint() * wy;
    Ok(BlockMatrix::from_dense(set.clone(), set, &dense, true))
}

/// Barycentric differentiation matrix for polynomial interpolation on `x`.
fn differentiation_matrix(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut w = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if k != j {
                w[j] *= x[j] - x[k];
            }
        }
        w[j] = 1.0 / w[j];
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Laplace-Beltrami operator applied in physical space.
///
/// Each longitude Fourier component `f_m(x)` is written as
/// `(1 - x^2)^{e/2} q(x)` with `e = |m| mod 2` and `q` a polynomial, which is
/// differentiated exactly on the latitude nodes; the operator
/// `((1 - x^2) f')' - m^2 f / (1 - x^2)` is then applied to that form. Exact
/// for inputs of degree below `n_theta`; no Legendre tables are involved.
pub fn sphere_laplacian(grid: &SphereGrid) -> SphereGrid {
    let quad = &grid.quad;
    let n = quad.n_theta;
    let m_max = quad.max_degree() as usize;
    let d1 = differentiation_matrix(&quad.x);
    let d2 = &d1 * &d1;
    let rings: Vec<Vec<Complex64>> = (0..n).map(|i| ring_coefficients(grid, i, m_max)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); quad.points()];
    for (slot, m) in (-(m_max as i64)..=m_max as i64).enumerate() {
        let am = m.unsigned_abs() as f64;
        let odd = m.unsigned_abs() % 2 == 1;
        let q: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = (1.0 - quad.x[i] * quad.x[i]).sqrt();
                let f = rings[i][slot] / (2.0 * PI);
                if odd { f / s } else { f }
            })
            .collect();
        for i in 0..n {
            let xi = quad.x[i];
            let one_m = 1.0 - xi * xi;
            let s = one_m.sqrt();
            let (mut dq, mut ddq) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for j in 0..n {
                dq += q[j] * d1[(i, j)];
                ddq += q[j] * d2[(i, j)];
            }
            let lap = if odd {
                (ddq * one_m - dq * (4.0 * xi) - q[i] * 2.0) * s + q[i] * ((1.0 - am * am) / s)
            } else {
                ddq * one_m - dq * (2.0 * xi) - q[i] * (am * am / one_m)
            };
            for k in 0..quad.n_phi {
                out[i * quad.n_phi + k] += lap * Complex64::from_polar(1.0, m as f64 * quad.phi(k));
            }
        }
    }
    if grid.real {
        for v in &mut out {
            v.im = 0.0;
        }
    }
    SphereGrid {
        quad: quad.clone(),
        values: out,
        real: grid.real,
    }
}

/// Grid for evaluating a pointwise map with result degree `out_degree` from
/// inputs of degree `in_degree`, keeping degrees `l <= l_out`.
pub fn dealiased_quadrature(out_degree: u32, in_degree: u32, l_out: u32) -> SphereQuadrature {
    let exact = out_degree + l_out;
    let n_theta = (exact as usize / 2 + 1).max(in_degree.max(l_out) as usize + 1);
    let n_phi = (exact as usize + 1).max(2 * in_degree.max(l_out) as usize + 1);
    SphereQuadrature::new(n_theta, n_phi)
}

/// Applies `f` pointwise to the synthesized `inputs` and analyzes the result
/// up to degree `l_out`.
pub fn pointwise_on_sphere<F>(
    inputs: &[&SpectralField],
    quad: &Arc<SphereQuadrature>,
    l_out: u32,
    f: F,
) -> Result<SpectralField, TransformError>
where
    F: Fn(&[Complex64]) -> Complex64,
{
    let grids = inputs
        .iter()
        .map(|u| sphere_synthesis(u, quad))
        .collect::<Result<Vec<_>, _>>()?;
    let real = inputs.iter().all(|u| u.declared_real());
    let mut args = vec![Complex64::new(0.0, 0.0); inputs.len()];
    let values = (0..quad.points())
        .map(|p| {
            for (a, g) in args.iter_mut().zip(&grids) {
                *a = g.values[p];
            }
            f(&args)
        })
        .collect();
    sphere_analysis(&SphereGrid::new(quad.clone(), values, real), l_out)
}
