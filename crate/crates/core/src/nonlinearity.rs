//! Polynomial nonlinearities `f(x, u) = sum_q c_q(x) u^q` and their exact,
//! dealiased evaluation on either manifold.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::NonlinearityError;
use crate::lattice::{BasisDescriptor, SpectralField};
use crate::sphere::{dealiased_quadrature, pointwise_on_sphere};
use crate::torus::{dealiased_grid, pointwise_on_grid};

/// Largest supported power of `u`.
pub const MAX_DEGREE: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub degree: u32,
    pub coeff: SpectralField,
}

/// `f(x, u) = sum_q c_q(x) u^q`, one term per distinct degree.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    basis: BasisDescriptor,
    monomials: Vec<Monomial>,
}

impl NonlinearitySpec {
    /// Builds the spec from `(degree, coefficient)` terms. Terms of equal
    /// degree are summed. Degrees must be non-negative integers.
    pub fn new(basis: BasisDescriptor, terms: Vec<(f64, SpectralField)>) -> Result<Self, NonlinearityError> {
        let mut monomials: Vec<Monomial> = Vec::new();
        for (degree, coeff) in terms {
            if !(degree >= 0.0) || degree.fract() != 0.0 || degree > MAX_DEGREE as f64 {
                return Err(NonlinearityError::Unsupported(format!(
                    "monomial degree {degree} is not an integer in 0..={MAX_DEGREE}"
                )));
            }
            if coeff.basis().kind != basis.kind {
                return Err(NonlinearityError::Unsupported(
                    "coefficient field lives on a different manifold".into(),
                ));
            }
            let q = degree as u32;
            let coeff = coeff.with_basis(basis);
            match monomials.iter_mut().find(|m| m.degree == q) {
                Some(m) => m.coeff = m.coeff.add(&coeff),
                None => monomials.push(Monomial { degree: q, coeff }),
            }
        }
        monomials.sort_by_key(|m| m.degree);
        Ok(Self { basis, monomials })
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn max_degree(&self) -> u32 {
        self.active().map(|m| m.degree).max().unwrap_or(0)
    }

    /// Lowest degree `q >= 1` with a nonzero coefficient.
    pub fn leading_degree(&self) -> Option<u32> {
        self.active().map(|m| m.degree).find(|&q| q >= 1)
    }

    /// The `u`-independent term `f(x, 0)`.
    pub fn forcing(&self) -> SpectralField {
        self.monomials
            .iter()
            .find(|m| m.degree == 0)
            .map_or_else(|| SpectralField::zero(self.basis, true), |m| m.coeff.clone())
    }

    pub fn is_u_independent(&self) -> bool {
        self.active().all(|m| m.degree == 0)
    }

    /// Whether every coefficient is declared real.
    pub fn is_real(&self) -> bool {
        self.monomials.iter().all(|m| m.coeff.declared_real())
    }

    /// `d f / d u`.
    pub fn derivative(&self) -> Self {
        Self {
            basis: self.basis,
            monomials: self
                .monomials
                .iter()
                .filter(|m| m.degree > 0)
                .map(|m| Monomial {
                    degree: m.degree - 1,
                    coeff: m.coeff.scale(m.degree as f64),
                })
                .collect(),
        }
    }

    fn active(&self) -> impl Iterator<Item = &Monomial> {
        self.monomials.iter().filter(|m| m.coeff.max_abs() > 0.0)
    }

    /// Bandwidth of `f(x, u)` when `u` has bandwidth `u_bw`.
    fn output_bandwidth(&self, u_bw: u32) -> u32 {
        self.monomials
            .iter()
            .map(|m| m.coeff.bandwidth() + m.degree * u_bw)
            .max()
            .unwrap_or(0)
    }

    fn coeff_bandwidth(&self) -> u32 {
        self.monomials.iter().map(|m| m.coeff.bandwidth()).max().unwrap_or(0)
    }
}

fn horner(monomials: &[Monomial], coeffs: &[Complex64], u: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, c) in monomials.iter().zip(coeffs) {
        acc += c * u.powu(m.degree);
    }
    acc
}

/// Evaluates `g(u_1, .., u_k, c_0(x), ..)` pointwise on a grid exact for the
/// projection onto `|j + rho| <= cutoff`, where the result has bandwidth
/// `out_bw` and the largest power of any input is `max_power`.
fn evaluate<G>(
    f: &NonlinearitySpec,
    fields: &[&SpectralField],
    out_bw: u32,
    max_power: u32,
    cutoff: f64,
    g: G,
) -> Result<SpectralField, NonlinearityError>
where
    G: Fn(&[Complex64], &[Complex64]) -> Complex64,
{
    for u in fields {
        if u.basis().kind != f.basis.kind {
            return Err(NonlinearityError::Unsupported("field and nonlinearity live on different manifolds".into()));
        }
    }
    let nf = fields.len();
    let mut inputs: Vec<&SpectralField> = fields.to_vec();
    inputs.extend(f.monomials.iter().map(|m| &m.coeff));
    let in_bw = inputs.iter().map(|u| u.bandwidth()).max().unwrap_or(0);
    let pointwise = |args: &[Complex64]| g(&args[..nf], &args[nf..]);
    let out = if f.basis.is_sphere() {
        let l_out = (cutoff - 0.5).floor().max(0.0) as u32;
        let quad = Arc::new(dealiased_quadrature(out_bw, in_bw, l_out));
        pointwise_on_sphere(&inputs, &quad, l_out, pointwise)?
    } else {
        let m = dealiased_grid(out_bw, in_bw, cutoff, max_power);
        pointwise_on_grid(f.basis, &inputs, m, cutoff, pointwise)?
    };
    Ok(out.with_basis(f.basis))
}

/// `Pi^(N) f(x, u)`, exact for polynomial `f`.
pub fn apply_nonlinearity(f: &NonlinearitySpec, u: &SpectralField, cutoff: f64) -> Result<SpectralField, NonlinearityError> {
    let out_bw = f.output_bandwidth(u.bandwidth());
    let mons = &f.monomials;
    evaluate(f, &[u], out_bw, f.max_degree(), cutoff, |v, c| horner(mons, c, v[0]))
}

/// `Pi^(N) d_u f(x, u)`.
pub fn linearized_coeff(f: &NonlinearitySpec, u: &SpectralField, cutoff: f64) -> Result<SpectralField, NonlinearityError> {
    apply_nonlinearity(&f.derivative(), u, cutoff)
}

/// `Pi^(N) (f(u + v) - f(u) - d_u f(u) v)`, evaluated pointwise from its
/// definition.
pub fn taylor_remainder(
    f: &NonlinearitySpec,
    u: &SpectralField,
    v: &SpectralField,
    cutoff: f64,
) -> Result<SpectralField, NonlinearityError> {
    let w_bw = u.bandwidth().max(v.bandwidth());
    let out_bw = f.output_bandwidth(w_bw).max(f.coeff_bandwidth());
    let mons = &f.monomials;
    let deriv: Vec<(u32, f64)> = mons.iter().map(|m| (m.degree, m.degree as f64)).collect();
    evaluate(f, &[u, v], out_bw, f.max_degree().max(1), cutoff, |x, c| {
        let (u, v) = (x[0], x[1]);
        let full = horner(mons, c, u + v);
        let base = horner(mons, c, u);
        let mut slope = Complex64::new(0.0, 0.0);
        for ((q, qf), cq) in deriv.iter().zip(c) {
            if *q > 0 {
                slope += cq * u.powu(q - 1) * *qf;
            }
        }
        full - base - slope * v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn t1() -> BasisDescriptor {
        BasisDescriptor::torus(1).unwrap()
    }

    fn cos1() -> SpectralField {
        SpectralField::torus_modes(t1(), &[(&[1], c(0.5)), (&[-1], c(0.5))], true).unwrap()
    }

    fn one() -> SpectralField {
        SpectralField::torus_modes(t1(), &[(&[0], c(1.0))], true).unwrap()
    }

    #[test]
    fn square_of_cosine() {
        let f = NonlinearitySpec::new(t1(), vec![(2.0, one())]).unwrap();
        let out = apply_nonlinearity(&f, &cos1(), 4.0).unwrap();
        assert!((out.coeff(&[0]) - c(0.5)).norm() < 1e-15);
        assert!((out.coeff(&[2]) - c(0.25)).norm() < 1e-15);
        assert!((out.coeff(&[-2]) - c(0.25)).norm() < 1e-15);
        assert!(out.coeff(&[1]).norm() < 1e-15);
        let b = linearized_coeff(&f, &cos1(), 4.0).unwrap();
        assert!((b.coeff(&[1]) - c(1.0)).norm() < 1e-15);
        assert!(b.coeff(&[0]).norm() < 1e-15);
    }

    #[test]
    fn forcing_and_identity() {
        let forcing = NonlinearitySpec::new(t1(), vec![(0.0, cos1())]).unwrap();
        assert!(forcing.is_u_independent());
        let u = SpectralField::torus_modes(t1(), &[(&[3], c(2.0)), (&[-3], c(2.0))], true).unwrap();
        let out = apply_nonlinearity(&forcing, &u, 5.0).unwrap();
        assert!(out.sub(&cos1()).max_abs() < 1e-15);

        let id = NonlinearitySpec::new(t1(), vec![(1.0, one())]).unwrap();
        let out = apply_nonlinearity(&id, &u, 2.0).unwrap();
        assert!(out.max_abs() < 1e-15, "projection drops |j| = 3");
        let out = apply_nonlinearity(&id, &u, 3.0).unwrap();
        assert!(out.sub(&u).max_abs() < 1e-15);
    }

    #[test]
    fn degrees_validated() {
        assert!(matches!(
            NonlinearitySpec::new(t1(), vec![(1.5, one())]),
            Err(NonlinearityError::Unsupported(_))
        ));
        let f = NonlinearitySpec::new(t1(), vec![(0.0, cos1()), (3.0, one()), (2.0, one().scale(0.0))]).unwrap();
        assert_eq!(f.leading_degree(), Some(3));
        assert_eq!(f.max_degree(), 3);
    }

    #[test]
    fn quadratic_remainder_is_square() {
        let f = NonlinearitySpec::new(t1(), vec![(2.0, one()), (0.0, cos1())]).unwrap();
        let u = cos1().scale(0.3);
        let v = SpectralField::torus_modes(t1(), &[(&[2], c(0.1)), (&[-2], c(0.1))], true).unwrap();
        let rem = taylor_remainder(&f, &u, &v, 8.0).unwrap();
        let sq = NonlinearitySpec::new(t1(), vec![(2.0, one())]).unwrap();
        let want = apply_nonlinearity(&sq, &v, 8.0).unwrap();
        assert!(rem.sub(&want).max_abs() < 1e-15);
    }

    #[test]
    fn sphere_square_of_constant() {
        use crate::lattice::EigenIndex;
        let s2 = BasisDescriptor::sphere();
        let y00 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        let u = SpectralField::from_blocks(s2, [(EigenIndex::sphere(0), vec![c(1.0 / y00)])], true).unwrap();
        let one = u.clone();
        let f = NonlinearitySpec::new(s2, vec![(2.0, one)]).unwrap();
        // u = 1 pointwise, f = 1 * u^2 = 1
        let out = apply_nonlinearity(&f, &u, 4.5).unwrap();
        assert!(out.sub(&u).max_abs() < 1e-13);
    }
}
