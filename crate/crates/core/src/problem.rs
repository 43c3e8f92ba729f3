//! The equation being solved: basis, perturbation order, coefficient `a`,
//! small parameter `eps` and the nonlinearity.

use serde::Serialize;

use crate::error::NashMoserError;
use crate::lattice::{BasisDescriptor, EigenIndex, SpectralField};
use crate::nonlinearity::NonlinearitySpec;
use crate::small_divisors::divisor;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub basis: BasisDescriptor,
    /// Order `rho >= 1` of the singular perturbation `Lap^rho`.
    pub rho: u32,
    pub a: f64,
    pub epsilon: f64,
    pub nonlinearity: NonlinearitySpec,
}

impl ProblemSpec {
    pub fn new(
        basis: BasisDescriptor,
        rho: u32,
        a: f64,
        epsilon: f64,
        nonlinearity: NonlinearitySpec,
    ) -> Result<Self, NashMoserError> {
        if rho == 0 {
            return Err(NashMoserError::InvalidParams("rho >= 1 required".into()));
        }
        if !a.is_finite() {
            return Err(NashMoserError::InvalidParams(format!("a must be finite, got {a}")));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(NashMoserError::InvalidParams(format!("epsilon >= 0 required, got {epsilon}")));
        }
        if nonlinearity.basis().kind != basis.kind {
            return Err(NashMoserError::InvalidParams("nonlinearity lives on a different manifold".into()));
        }
        Ok(Self {
            basis,
            rho,
            a,
            epsilon,
            nonlinearity,
        })
    }

    /// Symbol `D_j` of the operator `L_a` at label `j`.
    pub fn divisor(&self, j: &EigenIndex) -> f64 {
        divisor(j.eigenvalue(), self.a, self.epsilon, self.rho)
    }

    /// `L_a u`, applied label by label.
    pub fn apply_operator(&self, u: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zero(*u.basis(), u.declared_real());
        for (j, block) in u.iter() {
            let d = self.divisor(j);
            out.insert(*j, block.iter().map(|c| c * d).collect())
                .expect("block shape is preserved");
        }
        out
    }

    pub fn summary(&self) -> ProblemSummary {
        ProblemSummary {
            basis: self.basis,
            rho: self.rho,
            a: self.a,
            epsilon: self.epsilon,
            leading_degree: self.nonlinearity.leading_degree(),
            max_degree: self.nonlinearity.max_degree(),
        }
    }
}

/// Serializable description of a [`ProblemSpec`] for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSummary {
    pub basis: BasisDescriptor,
    pub rho: u32,
    pub a: f64,
    pub epsilon: f64,
    pub leading_degree: Option<u32>,
    pub max_degree: u32,
}
