//! Eigenspace index lattices, weighted Sobolev norms and Galerkin projectors.
//!
//! Every basis (Fourier modes on `T^n`, spherical harmonics on `S^2`) is
//! described by an ordered set of eigenspace labels. Each label carries a
//! shifted norm `|j + rho|`, a block dimension (the multiplicity of the
//! eigenvalue) and the exact Laplace-Beltrami eigenvalue. Coefficient fields
//! live on these labels, one complex block per eigenspace.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::LatticeError;

/// Largest supported torus dimension.
pub const MAX_TORUS_DIM: usize = 3;

/// Weight used by [`sobolev_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `e^{2 |j+rho| s}`
    Exponential,
    /// `max(1, |j+rho|)^{2 s}`
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Torus { dim: u8 },
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub kind: BasisKind,
    pub weight_mode: WeightMode,
}

impl BasisDescriptor {
    pub fn torus(dim: usize) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_TORUS_DIM {
            return Err(LatticeError::UnsupportedBasis(format!(
                "torus dimension {dim} outside 1..={MAX_TORUS_DIM}"
            )));
        }
        Ok(Self {
            kind: BasisKind::Torus { dim: dim as u8 },
            weight_mode: WeightMode::Exponential,
        })
    }

    pub fn sphere() -> Self {
        Self {
            kind: BasisKind::Sphere,
            weight_mode: WeightMode::Exponential,
        }
    }

    pub fn with_weight_mode(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    /// Shift added to the lattice label before taking its norm. Zero on the
    /// torus; on the sphere the shifted norm of degree `l` is `l + 1/2`.
    pub fn weight_shift(&self) -> f64 {
        match self.kind {
            BasisKind::Torus { .. } => 0.0,
            BasisKind::Sphere => 0.5,
        }
    }

    pub fn torus_dim(&self) -> Option<usize> {
        match self.kind {
            BasisKind::Torus { dim } => Some(dim as usize),
            BasisKind::Sphere => None,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, BasisKind::Sphere)
    }

    /// Dimension of the manifold.
    pub fn manifold_dim(&self) -> usize {
        match self.kind {
            BasisKind::Torus { dim } => dim as usize,
            BasisKind::Sphere => 2,
        }
    }

    fn validate(&self) -> Result<(), LatticeError> {
        if let BasisKind::Torus { dim } = self.kind {
            if dim == 0 || dim as usize > MAX_TORUS_DIM {
                return Err(LatticeError::UnsupportedBasis(format!(
                    "torus dimension {dim} outside 1..={MAX_TORUS_DIM}"
                )));
            }
        }
        Ok(())
    }
}

/// Label of one eigenspace.
///
/// Torus labels are integer multi-indices (unused trailing components are
/// zero); sphere labels are the harmonic degree `l`, whose eigenspace has
/// dimension `2l + 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub enum EigenIndex {
    Torus { j: [i32; MAX_TORUS_DIM], dim: u8 },
    Sphere { l: u32 },
}

impl EigenIndex {
    pub fn torus(j: &[i32]) -> Self {
        assert!(
            !j.is_empty() && j.len() <= MAX_TORUS_DIM,
            "torus index must have 1..={MAX_TORUS_DIM} components"
        );
        let mut arr = [0; MAX_TORUS_DIM];
        arr[..j.len()].copy_from_slice(j);
        EigenIndex::Torus {
            j: arr,
            dim: j.len() as u8,
        }
    }

    pub fn sphere(l: u32) -> Self {
        EigenIndex::Sphere { l }
    }

    /// Integer components: the multi-index on the torus, `[l]` on the sphere.
    pub fn components(&self) -> Vec<i64> {
        match *self {
            EigenIndex::Torus { j, dim } => j[..dim as usize].iter().map(|&v| v as i64).collect(),
            EigenIndex::Sphere { l } => vec![l as i64],
        }
    }

    /// `|j|^2` on the torus, `l(l+1)` on the sphere: the eigenvalue of `-Delta`.
    pub fn eigenvalue(&self) -> i64 {
        match *self {
            EigenIndex::Torus { j, .. } => j.iter().map(|&v| (v as i64) * (v as i64)).sum(),
            EigenIndex::Sphere { l } => (l as i64) * (l as i64 + 1),
        }
    }

    /// `|j + rho|`.
    pub fn shift_norm(&self) -> f64 {
        match *self {
            EigenIndex::Torus { .. } => (self.eigenvalue() as f64).sqrt(),
            EigenIndex::Sphere { l } => l as f64 + 0.5,
        }
    }

    pub fn block_dim(&self) -> usize {
        match *self {
            EigenIndex::Torus { .. } => 1,
            EigenIndex::Sphere { l } => 2 * l as usize + 1,
        }
    }

    /// Largest absolute component; the per-axis bandwidth on the torus.
    pub fn max_component(&self) -> u32 {
        match *self {
            EigenIndex::Torus { j, .. } => j.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0),
            EigenIndex::Sphere { l } => l,
        }
    }

    /// Partner label under complex conjugation of the eigenfunctions.
    pub fn conjugate(&self) -> Self {
        match *self {
            EigenIndex::Torus { j, dim } => EigenIndex::Torus {
                j: [-j[0], -j[1], -j[2]],
                dim,
            },
            s @ EigenIndex::Sphere { .. } => s,
        }
    }

    /// Lattice distance `|j - j'|`.
    pub fn distance(&self, other: &Self) -> f64 {
        match (self, other) {
            (EigenIndex::Torus { j: a, .. }, EigenIndex::Torus { j: b, .. }) => {
                let sq: i64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        let d = x as i64 - y as i64;
                        d * d
                    })
                    .sum();
                (sq as f64).sqrt()
            }
            (EigenIndex::Sphere { l: a }, EigenIndex::Sphere { l: b }) => {
                (*a as f64 - *b as f64).abs()
            }
            _ => f64::INFINITY,
        }
    }

    /// Does the label belong to the ball `|j + rho| <= cutoff`? Torus labels
    /// are compared through the integer `|j|^2`.
    pub fn within(&self, cutoff: f64) -> bool {
        match *self {
            EigenIndex::Torus { .. } => (self.eigenvalue() as f64) <= cutoff * cutoff,
            EigenIndex::Sphere { l } => l as f64 + 0.5 <= cutoff,
        }
    }

    fn order_key(&self) -> (u8, i64) {
        match *self {
            EigenIndex::Torus { .. } => (0, self.eigenvalue()),
            EigenIndex::Sphere { l } => (1, l as i64),
        }
    }

    fn matches(&self, basis: &BasisDescriptor) -> bool {
        match (self, basis.kind) {
            (EigenIndex::Torus { dim, .. }, BasisKind::Torus { dim: d }) => *dim == d,
            (EigenIndex::Sphere { .. }, BasisKind::Sphere) => true,
            _ => false,
        }
    }
}

impl Ord for EigenIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key()
            .cmp(&other.order_key())
            .then_with(|| match (self, other) {
                (EigenIndex::Torus { j: a, .. }, EigenIndex::Torus { j: b, .. }) => a.cmp(b),
                _ => Ordering::Equal,
            })
    }
}

impl PartialOrd for EigenIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for EigenIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for EigenIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EigenIndex::Torus { j, dim } => {
                write!(f, "(")?;
                for (k, v) in j[..*dim as usize].iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            EigenIndex::Sphere { l } => write!(f, "l={l}"),
        }
    }
}

impl Serialize for EigenIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.components().serialize(s)
    }
}

/// Ordered set of eigenspace labels with a flat degree-of-freedom layout.
///
/// Labels are sorted by shifted norm, then lexicographically, so every
/// vector and matrix built on top of an index set is reproducible.
#[derive(Debug, Clone)]
pub struct IndexSet {
    basis: BasisDescriptor,
    indices: Vec<EigenIndex>,
    offsets: Vec<usize>,
    lookup: HashMap<EigenIndex, usize>,
    dofs: usize,
}

impl IndexSet {
    /// Arbitrary subset of labels, re-sorted into canonical order.
    pub fn from_indices(basis: BasisDescriptor, mut indices: Vec<EigenIndex>) -> Self {
        indices.sort();
        indices.dedup();
        let mut offsets = Vec::with_capacity(indices.len() + 1);
        let mut lookup = HashMap::with_capacity(indices.len());
        let mut acc = 0;
        for (pos, idx) in indices.iter().enumerate() {
            offsets.push(acc);
            lookup.insert(*idx, pos);
            acc += idx.block_dim();
        }
        offsets.push(acc);
        Self {
            basis,
            indices,
            offsets,
            lookup,
            dofs: acc,
        }
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[EigenIndex] {
        &self.indices
    }

    pub fn get(&self, pos: usize) -> EigenIndex {
        self.indices[pos]
    }

    pub fn position(&self, idx: &EigenIndex) -> Option<usize> {
        self.lookup.get(idx).copied()
    }

    pub fn contains(&self, idx: &EigenIndex) -> bool {
        self.lookup.contains_key(idx)
    }

    /// Total number of scalar unknowns.
    pub fn dofs(&self) -> usize {
        self.dofs
    }

    /// Dof range of the block at `pos`.
    pub fn range(&self, pos: usize) -> std::ops::Range<usize> {
        self.offsets[pos]..self.offsets[pos + 1]
    }

    pub fn max_shift_norm(&self) -> f64 {
        self.indices.last().map_or(0.0, |i| i.shift_norm())
    }

    pub fn max_component(&self) -> u32 {
        self.indices.iter().map(|i| i.max_component()).max().unwrap_or(0)
    }
}

/// All labels with `|j + rho| <= cutoff`, in canonical order.
pub fn build_index_set(basis: BasisDescriptor, cutoff: f64) -> Result<IndexSet, LatticeError> {
    basis.validate()?;
    if !(cutoff >= 1.0) || !cutoff.is_finite() {
        return Err(LatticeError::InvalidCutoff(cutoff));
    }
    let mut out = Vec::new();
    match basis.kind {
        BasisKind::Torus { dim } => {
            let r = cutoff.floor() as i32;
            let dim = dim as usize;
            let mut j = vec![-r; dim];
            loop {
                let idx = EigenIndex::torus(&j);
                if idx.within(cutoff) {
                    out.push(idx);
                }
                // odometer over [-r, r]^dim
                let mut k = 0;
                loop {
                    if k == dim {
                        return Ok(IndexSet::from_indices(basis, out));
                    }
                    j[k] += 1;
                    if j[k] > r {
                        j[k] = -r;
                        k += 1;
                    } else {
                        break;
                    }
                }
            }
        }
        BasisKind::Sphere => {
            let l_max = (cutoff - 0.5).floor() as u32;
            out.extend((0..=l_max).map(EigenIndex::sphere));
        }
    }
    Ok(IndexSet::from_indices(basis, out))
}

/// Coefficients of a function over the eigenspace labels.
///
/// Absent labels are exactly zero. On the sphere the block of degree `l`
/// stores the complex harmonic coefficients for `m = -l..=l` in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    basis: BasisDescriptor,
    coeffs: BTreeMap<EigenIndex, Vec<Complex64>>,
    declared_real: bool,
}

impl SpectralField {
    pub fn zero(basis: BasisDescriptor, declared_real: bool) -> Self {
        Self {
            basis,
            coeffs: BTreeMap::new(),
            declared_real,
        }
    }

    pub fn from_blocks(
        basis: BasisDescriptor,
        blocks: impl IntoIterator<Item = (EigenIndex, Vec<Complex64>)>,
        declared_real: bool,
    ) -> Result<Self, LatticeError> {
        let mut field = Self::zero(basis, declared_real);
        for (idx, block) in blocks {
            field.insert(idx, block)?;
        }
        Ok(field)
    }

    /// Torus field from `(multi-index, coefficient)` pairs.
    pub fn torus_modes(
        basis: BasisDescriptor,
        modes: &[(&[i32], Complex64)],
        declared_real: bool,
    ) -> Result<Self, LatticeError> {
        Self::from_blocks(
            basis,
            modes.iter().map(|(j, c)| (EigenIndex::torus(j), vec![*c])),
            declared_real,
        )
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn declared_real(&self) -> bool {
        self.declared_real
    }

    /// Same coefficients under `basis`, which must be of the same kind
    /// (only the weight mode may differ).
    pub fn with_basis(mut self, basis: BasisDescriptor) -> Self {
        assert_eq!(self.basis.kind, basis.kind, "basis kind mismatch");
        self.basis = basis;
        self
    }

    pub fn set_declared_real(&mut self, real: bool) {
        self.declared_real = real;
    }

    /// Adds `block` to the coefficients stored at `idx`.
    pub fn insert(&mut self, idx: EigenIndex, block: Vec<Complex64>) -> Result<(), LatticeError> {
        if !idx.matches(&self.basis) {
            return Err(LatticeError::BasisMismatch(format!("{idx} does not belong to {:?}", self.basis.kind)));
        }
        if block.len() != idx.block_dim() {
            return Err(LatticeError::BlockShape {
                index: idx.to_string(),
                expected: idx.block_dim(),
                got: block.len(),
            });
        }
        match self.coeffs.get_mut(&idx) {
            Some(existing) => {
                for (e, b) in existing.iter_mut().zip(block) {
                    *e += b;
                }
            }
            None => {
                self.coeffs.insert(idx, block);
            }
        }
        Ok(())
    }

    pub fn get(&self, idx: &EigenIndex) -> Option<&[Complex64]> {
        self.coeffs.get(idx).map(Vec::as_slice)
    }

    /// Scalar coefficient of a torus mode (zero if absent).
    pub fn coeff(&self, j: &[i32]) -> Complex64 {
        self.coeffs
            .get(&EigenIndex::torus(j))
            .map_or(Complex64::new(0.0, 0.0), |b| b[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EigenIndex, &[Complex64])> {
        self.coeffs.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest shifted norm among stored labels with a nonzero block.
    pub fn max_shift_norm(&self) -> f64 {
        self.active().map(|(i, _)| i.shift_norm()).fold(0.0, f64::max)
    }

    /// Largest per-axis frequency (torus) or degree (sphere) with a nonzero block.
    pub fn bandwidth(&self) -> u32 {
        self.active().map(|(i, _)| i.max_component()).max().unwrap_or(0)
    }

    fn active(&self) -> impl Iterator<Item = (&EigenIndex, &Vec<Complex64>)> {
        self.coeffs
            .iter()
            .filter(|(_, b)| b.iter().any(|c| c.re != 0.0 || c.im != 0.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for block in out.coeffs.values_mut() {
            for c in block.iter_mut() {
                *c *= factor;
            }
        }
        out
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Self) -> Self {
        debug_assert_eq!(self.basis.kind, other.basis.kind);
        let mut out = self.clone();
        for (idx, block) in &other.coeffs {
            let entry = out
                .coeffs
                .entry(*idx)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); block.len()]);
            for (e, b) in entry.iter_mut().zip(block) {
                *e += b * factor;
            }
        }
        out.declared_real = self.declared_real && other.declared_real;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// Galerkin projector onto `|j + rho| <= cutoff`.
    pub fn project(&self, cutoff: f64) -> Self {
        Self {
            basis: self.basis,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(idx, _)| idx.within(cutoff))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            declared_real: self.declared_real,
        }
    }

    /// `(I - Pi^(N)) u`.
    pub fn project_complement(&self, cutoff: f64) -> Self {
        Self {
            basis: self.basis,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(idx, _)| !idx.within(cutoff))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            declared_real: self.declared_real,
        }
    }

    /// Flattens onto the dof layout of `set`. Labels outside `set` are dropped.
    pub fn to_vector(&self, set: &IndexSet) -> DVector<Complex64> {
        let mut v = DVector::zeros(set.dofs());
        for (idx, block) in &self.coeffs {
            if let Some(pos) = set.position(idx) {
                let r = set.range(pos);
                for (k, c) in r.zip(block) {
                    v[k] = *c;
                }
            }
        }
        v
    }

    pub fn from_vector(set: &IndexSet, v: &DVector<Complex64>, declared_real: bool) -> Self {
        assert_eq!(v.len(), set.dofs(), "vector length does not match index set");
        let coeffs = set
            .indices()
            .iter()
            .enumerate()
            .map(|(pos, idx)| (*idx, v.as_slice()[set.range(pos)].to_vec()))
            .collect();
        Self {
            basis: *set.basis(),
            coeffs,
            declared_real,
        }
    }

    /// Coefficient the conjugation relation of a real function demands at
    /// `(idx, k)`, derived from the partner coefficient.
    fn real_partner(&self, idx: &EigenIndex, k: usize) -> Complex64 {
        match idx {
            EigenIndex::Torus { .. } => self
                .coeffs
                .get(&idx.conjugate())
                .map_or(Complex64::new(0.0, 0.0), |b| b[0].conj()),
            EigenIndex::Sphere { l } => {
                let l = *l as i64;
                let m = k as i64 - l;
                let partner = (l - m) as usize;
                let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                self.coeffs
                    .get(idx)
                    .map_or(Complex64::new(0.0, 0.0), |b| b[partner].conj() * sign)
            }
        }
    }

    /// Largest deviation from the conjugation symmetry of a real function:
    /// `u_{-j} = conj(u_j)` on the torus and `u_{l,-m} = (-1)^m conj(u_{l,m})`
    /// on the sphere.
    pub fn conjugation_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (idx, block) in &self.coeffs {
            for (k, c) in block.iter().enumerate() {
                worst = worst.max((c - self.real_partner(idx, k)).norm());
            }
        }
        worst
    }

    /// Projects onto real functions by averaging each coefficient with its
    /// conjugation partner, and marks the field real.
    pub fn enforce_real(&self) -> Self {
        let mut out = self.clone();
        // make sure every partner label is present so the averaging is symmetric
        for idx in self.coeffs.keys() {
            let partner = idx.conjugate();
            out.coeffs
                .entry(partner)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); partner.block_dim()]);
        }
        let snapshot = out.clone();
        for (idx, block) in out.coeffs.iter_mut() {
            for (k, c) in block.iter_mut().enumerate() {
                *c = (*c + snapshot.real_partner(idx, k)) * 0.5;
            }
        }
        out.declared_real = true;
        out
    }

    /// Plain coefficient norm `sqrt(sum |u_j|^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs
            .values()
            .flat_map(|b| b.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .values()
            .flat_map(|b| b.iter())
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

impl Serialize for SpectralField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;

        #[derive(Serialize)]
        struct Block {
            j: EigenIndex,
            re: Vec<f64>,
            im: Vec<f64>,
        }
        let blocks: Vec<Block> = self
            .coeffs
            .iter()
            .map(|(j, b)| Block {
                j: *j,
                re: b.iter().map(|c| c.re).collect(),
                im: b.iter().map(|c| c.im).collect(),
            })
            .collect();
        let mut st = s.serialize_struct("SpectralField", 3)?;
        st.serialize_field("basis", &self.basis)?;
        st.serialize_field("declared_real", &self.declared_real)?;
        st.serialize_field("coeffs", &blocks)?;
        st.end()
    }
}

/// Natural log of the norm weight at shifted norm `shift`, i.e. `log w_j(s)`
/// where `||u||_s^2 = sum_j w_j(s) |u_j|^2`.
pub fn log_weight(mode: WeightMode, shift: f64, s: f64) -> f64 {
    match mode {
        WeightMode::Exponential => 2.0 * shift * s,
        WeightMode::Polynomial => 2.0 * s * shift.max(1.0).ln(),
    }
}

/// Weighted Sobolev norm of `u` at regularity `s`, using the weight mode of
/// the field's basis.
///
/// The weights are rescaled by their maximum before summation, so large `s`
/// only fails when the final norm itself is not representable.
pub fn sobolev_norm(u: &SpectralField, s: f64) -> Result<f64, LatticeError> {
    sobolev_norm_with(u, s, u.basis.weight_mode)
}

pub fn sobolev_norm_with(u: &SpectralField, s: f64, mode: WeightMode) -> Result<f64, LatticeError> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(LatticeError::InvalidRegularity(s));
    }
    if s == 0.0 {
        return Ok(u.l2_norm());
    }
    let terms: Vec<(EigenIndex, f64, f64)> = u
        .coeffs
        .iter()
        .map(|(idx, b)| {
            let mass: f64 = b.iter().map(|c| c.norm_sqr()).sum();
            (*idx, log_weight(mode, idx.shift_norm(), s), mass)
        })
        .filter(|t| t.2 > 0.0)
        .collect();
    let Some(&(top_idx, top, _)) = terms
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
    else {
        return Ok(0.0);
    };
    let scaled: f64 = terms.iter().map(|(_, lw, m)| (lw - top).exp() * m).sum();
    let norm = scaled.sqrt() * (0.5 * top).exp();
    if !norm.is_finite() {
        return Err(LatticeError::NormOverflow {
            index: top_idx.to_string(),
            s,
        });
    }
    Ok(norm)
}

/// Smallest constant `C` with `||Pi^(N) u||_{s+d} <= C ||u||_s` for the given
/// weight: `max(1, N)^d` for polynomial weights and `e^{N d}` for
/// exponential ones.
pub fn smoothing_gain(mode: WeightMode, cutoff: f64, d: f64) -> f64 {
    match mode {
        WeightMode::Polynomial => cutoff.max(1.0).powf(d),
        WeightMode::Exponential => (cutoff * d).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn torus_1d_ball() {
        let set = build_index_set(BasisDescriptor::torus(1).unwrap(), 2.0).unwrap();
        let js: Vec<i64> = set.indices().iter().map(|i| i.components()[0]).collect();
        assert_eq!(js, vec![0, -1, 1, -2, 2]);
    }

    #[test]
    fn torus_2d_unit_ball() {
        let set = build_index_set(BasisDescriptor::torus(2).unwrap(), 1.0).unwrap();
        let js: Vec<Vec<i64>> = set.indices().iter().map(|i| i.components()).collect();
        assert_eq!(js, vec![vec![0, 0], vec![-1, 0], vec![0, -1], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn sphere_half_integer_shift() {
        let set = build_index_set(BasisDescriptor::sphere(), 3.5).unwrap();
        let dims: Vec<usize> = set.indices().iter().map(|i| i.block_dim()).collect();
        assert_eq!(dims, vec![1, 3, 5, 7]);
        assert_eq!(set.dofs(), 16);
        assert_eq!(set.get(3).eigenvalue(), 12);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(BasisDescriptor::torus(0).is_err());
        assert!(BasisDescriptor::torus(4).is_err());
        let bogus = BasisDescriptor {
            kind: BasisKind::Torus { dim: 5 },
            weight_mode: WeightMode::Exponential,
        };
        assert!(matches!(build_index_set(bogus, 2.0), Err(LatticeError::UnsupportedBasis(_))));
        let t1 = BasisDescriptor::torus(1).unwrap();
        assert!(matches!(build_index_set(t1, 0.5), Err(LatticeError::InvalidCutoff(_))));
    }

    #[test]
    fn norm_examples() {
        let t1 = BasisDescriptor::torus(1).unwrap();
        let zero_mode = SpectralField::torus_modes(t1, &[(&[0], c(3.0))], true).unwrap();
        for s in [0.0, 0.3, 5.0] {
            assert_eq!(sobolev_norm(&zero_mode, s).unwrap(), 3.0);
        }
        let two = SpectralField::torus_modes(t1, &[(&[2], c(1.0))], false).unwrap();
        let n = sobolev_norm(&two, 0.5).unwrap();
        // weight e^{2 |j| s} = e^2, so the norm is its square root
        assert!((n - 1f64.exp()).abs() < 1e-14);
        assert!((n * n - 7.389056).abs() < 1e-6);
        assert_eq!(sobolev_norm(&SpectralField::zero(t1, true), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn polynomial_weight() {
        let t1 = BasisDescriptor::torus(1).unwrap().with_weight_mode(WeightMode::Polynomial);
        let u = SpectralField::torus_modes(t1, &[(&[3], c(2.0))], false).unwrap();
        assert!((sobolev_norm(&u, 1.0).unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn overflow_reports_index() {
        let t1 = BasisDescriptor::torus(1).unwrap();
        let u = SpectralField::torus_modes(t1, &[(&[40], c(1.0)), (&[1], c(1.0))], false).unwrap();
        match sobolev_norm(&u, 20.0) {
            Err(LatticeError::NormOverflow { index, .. }) => assert_eq!(index, "(40)"),
            other => panic!("expected overflow, got {other:?}"),
        }
        // the log-scaled accumulation survives weights whose squares overflow
        let big = sobolev_norm(&u, 8.0).unwrap();
        assert!((big.ln() - 320.0).abs() < 1e-9);
    }

    #[test]
    fn projection_keeps_ball() {
        let t1 = BasisDescriptor::torus(1).unwrap();
        let u = SpectralField::torus_modes(t1, &[(&[1], c(1.5)), (&[3], c(-2.0))], false).unwrap();
        let p = u.project(2.0);
        assert_eq!(p.len(), 1);
        assert_eq!(p.coeff(&[1]), c(1.5));
        assert_eq!(p.project(2.0), p);
    }

    #[test]
    fn sphere_reality_relation() {
        let s2 = BasisDescriptor::sphere();
        let z = Complex64::new(0.3, -0.7);
        let block = vec![-z.conj(), c(1.0), z];
        let u = SpectralField::from_blocks(s2, [(EigenIndex::sphere(1), block)], true).unwrap();
        assert!(u.conjugation_defect() < 1e-15);
        assert_eq!(u.enforce_real(), u);
    }

    #[test]
    fn block_shape_checked() {
        let s2 = BasisDescriptor::sphere();
        let err = SpectralField::from_blocks(s2, [(EigenIndex::sphere(2), vec![c(1.0)])], true);
        assert!(matches!(err, Err(LatticeError::BlockShape { expected: 5, .. })));
    }
}
