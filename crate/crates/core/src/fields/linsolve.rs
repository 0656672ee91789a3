use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut, Par, Side};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Sparse Cholesky factorisation of `scale·A + diag(d)` for symmetric `A`.
///
/// Factorisation and solves run sequentially so that results do not depend
/// on the size of the surrounding thread pool.
pub struct SpdFactor {
    n: usize,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor").field("n", &self.n).finish()
    }
}

impl SpdFactor {
    pub fn new(a: &CsrMatrix, scale: f64, diag: &[f64]) -> Result<Self> {
        let n = a.dim();
        let triplets: Vec<Triplet<usize, usize, f64>> = a
            .lower_triplets(scale, diag)
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolveFailure(format!("assembly: {e:?}")))?;
        let symbolic = factorize_symbolic_cholesky(mat.symbolic(), Side::Lower, Default::default(), Default::default())
            .map_err(|e| Error::LinearSolveFailure(format!("symbolic factorisation: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let scratch = symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default());
        symbolic
            .factorize_numeric_llt::<f64>(
                &mut values,
                mat.as_ref(),
                Side::Lower,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut MemBuffer::new(scratch)),
                Default::default(),
            )
            .map_err(|e| Error::LinearSolveFailure(format!("matrix not positive definite: {e:?}")))?;
        Ok(SpdFactor { n, symbolic, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        self.solve_many_in_place(rhs, 1);
    }

    /// Solves for several right-hand sides stored column-major in `rhs`.
    pub fn solve_many_in_place(&self, rhs: &mut [f64], ncols: usize) {
        let scratch = self.symbolic.solve_in_place_scratch::<f64>(ncols, Par::Seq);
        LltRef::<'_, usize, f64>::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(rhs, self.n, ncols),
            Par::Seq,
            MemStack::new(&mut MemBuffer::new(scratch)),
        );
    }
}
