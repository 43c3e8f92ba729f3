//! Operators on spectral fields stored as sparse grids of dense blocks.
//!
//! Block `(j, j')` maps the eigenspace of `j'` into the eigenspace of `j`,
//! so on the sphere it has shape `(2l+1) x (2l'+1)`. Missing blocks are zero.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::lattice::IndexSet;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone)]
pub struct BlockMatrix {
    rows: Arc<IndexSet>,
    cols: Arc<IndexSet>,
    blocks: Vec<BTreeMap<usize, CMatrix>>,
    self_adjoint: bool,
}

impl BlockMatrix {
    pub fn new(rows: Arc<IndexSet>, cols: Arc<IndexSet>, self_adjoint: bool) -> Self {
        let blocks = vec![BTreeMap::new(); rows.len()];
        Self {
            rows,
            cols,
            blocks,
            self_adjoint,
        }
    }

    pub fn square(index: Arc<IndexSet>, self_adjoint: bool) -> Self {
        Self::new(index.clone(), index, self_adjoint)
    }

    /// Cuts `dense` (laid out on the dof layouts of `rows` x `cols`) into
    /// blocks, dropping blocks that are exactly zero.
    pub fn from_dense(
        rows: Arc<IndexSet>,
        cols: Arc<IndexSet>,
        dense: &CMatrix,
        self_adjoint: bool,
    ) -> Self {
        assert_eq!(dense.nrows(), rows.dofs());
        assert_eq!(dense.ncols(), cols.dofs());
        let mut m = Self::new(rows.clone(), cols.clone(), self_adjoint);
        for r in 0..rows.len() {
            let rr = rows.range(r);
            for c in 0..cols.len() {
                let cr = cols.range(c);
                let view = dense.view((rr.start, cr.start), (rr.len(), cr.len()));
                if view.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    m.blocks[r].insert(c, view.into_owned());
                }
            }
        }
        m
    }

    pub fn rows(&self) -> &Arc<IndexSet> {
        &self.rows
    }

    pub fn cols(&self) -> &Arc<IndexSet> {
        &self.cols
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    /// Adds `block` into position `(r, c)` (positions within the row/column sets).
    pub fn add_block(&mut self, r: usize, c: usize, block: CMatrix) {
        assert_eq!(block.nrows(), self.rows.range(r).len(), "block row dimension");
        assert_eq!(block.ncols(), self.cols.range(c).len(), "block column dimension");
        match self.blocks[r].get_mut(&c) {
            Some(existing) => *existing += block,
            None => {
                self.blocks[r].insert(c, block);
            }
        }
    }

    pub fn block(&self, r: usize, c: usize) -> Option<&CMatrix> {
        self.blocks[r].get(&c)
    }

    /// Stored blocks of row `r`, ordered by column position.
    pub fn row_blocks(&self, r: usize) -> impl Iterator<Item = (usize, &CMatrix)> {
        self.blocks[r].iter().map(|(c, b)| (*c, b))
    }

    pub fn stored_blocks(&self) -> usize {
        self.blocks.iter().map(BTreeMap::len).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.blocks {
            for b in row.values_mut() {
                *b *= Complex64::new(factor, 0.0);
            }
        }
        out
    }

    pub fn matvec(&self, x: &CVector) -> CVector {
        assert_eq!(x.len(), self.cols.dofs(), "matvec dimension mismatch");
        let mut y = CVector::zeros(self.rows.dofs());
        for (r, row) in self.blocks.iter().enumerate() {
            let rr = self.rows.range(r);
            for (c, b) in row {
                let cr = self.cols.range(*c);
                let xs = x.rows(cr.start, cr.len());
                let mut ys = y.rows_mut(rr.start, rr.len());
                ys.gemv(Complex64::new(1.0, 0.0), b, &xs, Complex64::new(1.0, 0.0));
            }
        }
        y
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut d = CMatrix::zeros(self.rows.dofs(), self.cols.dofs());
        for (r, row) in self.blocks.iter().enumerate() {
            let rr = self.rows.range(r);
            for (c, b) in row {
                let cr = self.cols.range(*c);
                d.view_mut((rr.start, cr.start), (rr.len(), cr.len())).copy_from(b);
            }
        }
        d
    }

    /// Sub-operator on the given row and column label subsets.
    pub fn restrict(&self, rows: Arc<IndexSet>, cols: Arc<IndexSet>) -> Self {
        let mut out = Self::new(rows.clone(), cols.clone(), self.self_adjoint && Arc::ptr_eq(&rows, &cols));
        for (r_new, idx) in rows.indices().iter().enumerate() {
            let Some(r_old) = self.rows.position(idx) else { continue };
            for (c_old, b) in &self.blocks[r_old] {
                if let Some(c_new) = cols.position(&self.cols.get(*c_old)) {
                    out.blocks[r_new].insert(c_new, b.clone());
                }
            }
        }
        out
    }

    /// Largest entry of `A_j^{j'} - (A_{j'}^{j})^H` over all stored pairs,
    /// counting a missing partner block as zero.
    pub fn adjoint_defect(&self) -> f64 {
        assert_eq!(self.rows.indices(), self.cols.indices(), "adjoint defect needs a square operator");
        let mut worst: f64 = 0.0;
        for (r, row) in self.blocks.iter().enumerate() {
            for (c, b) in row {
                let partner = self.blocks[*c].get(&r);
                for i in 0..b.nrows() {
                    for k in 0..b.ncols() {
                        let other = partner.map_or(Complex64::new(0.0, 0.0), |p| p[(k, i)].conj());
                        worst = worst.max((b[(i, k)] - other).norm());
                    }
                }
            }
        }
        worst
    }

    /// Weighted block norm `|A|_s = sup_j sqrt(sum_{j'} e^{2 s |j - j'|} ||A_j^{j'}||_0^2)`
    /// with `||.||_0` the spectral norm of each block.
    pub fn weighted_norm(&self, s: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for (r, row) in self.blocks.iter().enumerate() {
            let jr = self.rows.get(r);
            let total: f64 = row
                .iter()
                .map(|(c, b)| {
                    let d = jr.distance(&self.cols.get(*c));
                    (2.0 * s * d).exp() * block_norm(b).powi(2)
                })
                .sum();
            sup = sup.max(total.sqrt());
        }
        sup
    }

    /// `||A_j^{j'}||_0` for the stored block at `(r, c)`, zero if absent.
    pub fn block_norm(&self, r: usize, c: usize) -> f64 {
        self.block(r, c).map_or(0.0, block_norm)
    }
}

/// Spectral norm of a dense block.
pub fn block_norm(b: &CMatrix) -> f64 {
    if b.nrows() == 1 && b.ncols() == 1 {
        return b[(0, 0)].norm();
    }
    b.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_index_set, BasisDescriptor};

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dense_round_trip_and_matvec() {
        let set = Arc::new(build_index_set(BasisDescriptor::sphere(), 1.5).unwrap());
        assert_eq!(set.dofs(), 4);
        let dense = CMatrix::from_fn(4, 4, |i, k| if i == k { z(2.0, 0.0) } else if i < 1 && k == 2 { z(0.5, 0.5) } else { z(0.0, 0.0) });
        let m = BlockMatrix::from_dense(set.clone(), set.clone(), &dense, false);
        assert_eq!(m.to_dense(), dense);
        let x = CVector::from_fn(4, |i, _| z(i as f64, 1.0));
        assert!((m.matvec(&x) - &dense * &x).norm() < 1e-15);
        assert!(m.adjoint_defect() > 0.5);
    }

    #[test]
    fn weighted_norm_of_shift() {
        let set = Arc::new(build_index_set(BasisDescriptor::torus(1).unwrap(), 3.0).unwrap());
        let mut m = BlockMatrix::square(set.clone(), false);
        // superdiagonal shift j -> j+1 with unit entries
        for (r, idx) in set.indices().iter().enumerate() {
            let next = crate::lattice::EigenIndex::torus(&[idx.components()[0] as i32 + 1]);
            if let Some(c) = set.position(&next) {
                m.add_block(r, c, CMatrix::from_element(1, 1, z(1.0, 0.0)));
            }
        }
        assert!((m.weighted_norm(0.0) - 1.0).abs() < 1e-15);
        assert!((m.weighted_norm(0.5) - 0.5f64.exp()).abs() < 1e-14);
    }
}
