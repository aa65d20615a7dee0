//! Compressed sparse row matrices for vectorized superoperators, a thin wrapper
//! around faer's sparse LU, and a shift-invert Arnoldi eigensolver.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::C64;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trips: Vec<(usize, usize, C64)>) -> Self {
        trips.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<C64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(trips.len());
        for (r, c, v) in trips {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                rows.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != ZERO {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self { n_rows, n_cols, indptr, indices: keep_idx, values: keep_val }
    }

    /// Exact nonzeros of a dense matrix.
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut t = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().cloned().zip(self.values[a..b].iter().cloned())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.push((r, c, v));
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    fn row_dot(&self, r: usize, x: &[C64]) -> C64 {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        let mut acc = ZERO;
        for k in a..b {
            acc += self.values[k] * x[self.indices[k]];
        }
        acc
    }

    /// y = A x.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        #[cfg(feature = "parallel")]
        if self.nnz() > 200_000 {
            y.par_chunks_mut(512).enumerate().for_each(|(ci, chunk)| {
                for (k, yi) in chunk.iter_mut().enumerate() {
                    *yi = self.row_dot(ci * 512 + k, x);
                }
            });
            return;
        }
        for (r, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(r, x);
        }
    }

    /// y += s·A x.
    pub fn matvec_add(&self, s: C64, x: &[C64], y: &mut [C64]) {
        for (r, yi) in y.iter_mut().enumerate() {
            *yi += s * self.row_dot(r, x);
        }
    }

    /// Linear combination a·A + b·B of equally shaped matrices.
    pub fn combine(a: C64, lhs: &Csr, b: C64, rhs: &Csr) -> Csr {
        assert_eq!((lhs.n_rows, lhs.n_cols), (rhs.n_rows, rhs.n_cols));
        let mut t: Vec<_> = lhs.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(rhs.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Csr::from_triplets(lhs.n_rows, lhs.n_cols, t)
    }

    /// Principal submatrix on the index list `keep` (order preserved).
    pub fn principal(&self, keep: &[usize]) -> Csr {
        let mut map = vec![usize::MAX; self.n_cols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if map[c] != usize::MAX {
                    t.push((new_r, map[c], v));
                }
            }
        }
        Csr::from_triplets(keep.len(), keep.len(), t)
    }

    /// True if some entry connects an index inside `mask` with one outside.
    pub fn couples_across(&self, mask: &[bool]) -> bool {
        (0..self.n_rows).any(|r| self.row(r).any(|(c, _)| mask[r] != mask[c]))
    }
}

/// Sparse LU of (A − shift·I), optionally with row `trace_row` of A replaced.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
}

impl SparseLu {
    pub fn new(a: &Csr, shift: C64) -> Result<Self> {
        Self::with_rows(a, shift, None)
    }

    /// Factor A − shift·I after replacing row `r` by the dense row `repl`
    /// (given as (col, value) pairs).
    pub fn with_rows(a: &Csr, shift: C64, replace: Option<(usize, &[(usize, C64)])>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::InvalidArgument("LU of a non-square matrix".into()));
        }
        let mut trips = Vec::with_capacity(a.nnz() + n);
        for r in 0..n {
            if let Some((rr, row)) = replace {
                if r == rr {
                    trips.extend(row.iter().map(|&(c, v)| Triplet::new(r, c, v)));
                    continue;
                }
            }
            let mut diag = false;
            for (c, v) in a.row(r) {
                if c == r {
                    trips.push(Triplet::new(r, c, v - shift));
                    diag = true;
                } else {
                    trips.push(Triplet::new(r, c, v));
                }
            }
            if !diag && shift != ZERO {
                trips.push(Triplet::new(r, r, -shift));
            }
        }
        let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| Error::EigenFailure(format!("sparse assembly: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::EigenFailure(format!("sparse LU: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut rhs = Mat::<C64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }
}

fn dotc(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
}

/// Eigenpairs of A nearest `shift`, from Arnoldi on (A − shift)⁻¹. The
/// optional `project` is applied after every operator application and is used
/// to deflate known eigenvectors.
pub fn shift_invert_eigs(
    a: &Csr,
    shift: C64,
    n_eig: usize,
    krylov: usize,
    start: &[C64],
    project: &dyn Fn(&mut [C64]),
) -> Result<Vec<EigenPair>> {
    let n = a.n_rows();
    let lu = SparseLu::new(a, shift)?;
    let m = krylov.min(n).max(n_eig + 2).min(n);
    let mut v0 = start.to_vec();
    project(&mut v0);
    let mut best: Vec<EigenPair> = Vec::new();
    for _restart in 0..6 {
        let nv = norm(&v0);
        if nv == 0.0 || !nv.is_finite() {
            return Err(Error::EigenFailure("start vector vanished after projection".into()));
        }
        let mut basis: Vec<Vec<C64>> = vec![v0.iter().map(|z| z / nv).collect()];
        let mut h = DMatrix::<C64>::zeros(m + 1, m);
        let mut steps = m;
        for j in 0..m {
            let mut w = lu.solve(&basis[j]);
            project(&mut w);
            for _pass in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dotc(q, &w);
                    h[(i, j)] += c;
                    for (wk, qk) in w.iter_mut().zip(q) {
                        *wk -= c * qk;
                    }
                }
            }
            let hn = norm(&w);
            h[(j + 1, j)] = C64::new(hn, 0.0);
            if hn < 1e-300 || j + 1 == m {
                steps = j + 1;
                if hn >= 1e-300 {
                    basis.push(w.iter().map(|z| z / hn).collect());
                }
                break;
            }
            basis.push(w.iter().map(|z| z / hn).collect());
        }
        let hm = h.view((0, 0), (steps, steps)).into_owned();
        let beta = h[(steps, steps - 1)].norm();
        let schur = nalgebra::Schur::try_new(hm.clone(), 1e-14, 10_000)
            .ok_or_else(|| Error::EigenFailure("Hessenberg Schur did not converge".into()))?;
        let (q, t) = schur.unpack();
        let thetas: Vec<C64> = (0..steps).map(|i| t[(i, i)]).collect();
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&x, &y| thetas[y].norm().partial_cmp(&thetas[x].norm()).unwrap());
        let mut pairs = Vec::new();
        for &k in order.iter().take(n_eig.min(steps)) {
            // eigenvector of H for theta_k via back substitution on T
            let mut yt = vec![ZERO; steps];
            yt[k] = C64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = ZERO;
                for l in i + 1..=k {
                    s += t[(i, l)] * yt[l];
                }
                let mut d = t[(i, i)] - thetas[k];
                if d.norm() < 1e-14 * thetas[k].norm().max(1e-300) {
                    d = C64::new(1e-14 * thetas[k].norm().max(1e-300), 0.0);
                }
                yt[i] = -s / d;
            }
            let y: Vec<C64> = (0..steps).map(|i| (0..steps).map(|l| q[(i, l)] * yt[l]).sum()).collect();
            let yn = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let y: Vec<C64> = y.iter().map(|z| z / yn).collect();
            let mut x = vec![ZERO; n];
            for (l, yl) in y.iter().enumerate() {
                for (xi, bi) in x.iter_mut().zip(&basis[l]) {
                    *xi += yl * bi;
                }
            }
            let theta = thetas[k];
            let resid = beta * y[steps - 1].norm() / theta.norm().max(1e-300);
            let value = shift + C64::new(1.0, 0.0) / theta;
            pairs.push(EigenPair { value, vector: x, residual: resid });
        }
        let converged = pairs.iter().all(|p| p.residual < 1e-9);
        best = pairs;
        if converged || steps < m {
            break;
        }
        // restart from a mix of the wanted Ritz vectors
        v0 = vec![ZERO; n];
        for p in &best {
            for (vi, xi) in v0.iter_mut().zip(&p.vector) {
                *vi += xi;
            }
        }
        project(&mut v0);
    }
    if best.is_empty() {
        return Err(Error::EigenFailure("no Ritz values".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn triplets_merge_and_matvec() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, c(1.0)), (0, 0, c(2.0)), (1, 0, c(4.0)), (1, 1, c(0.0))]);
        assert_eq!(a.nnz(), 2);
        let mut y = vec![ZERO; 2];
        a.matvec(&[c(1.0), c(5.0)], &mut y);
        assert_eq!(y, vec![c(3.0), c(4.0)]);
        assert_eq!(a.norm_inf(), 4.0);
    }

    #[test]
    fn lu_solves() {
        let d = DMatrix::<C64>::from_fn(5, 5, |i, j| {
            if i == j { c(4.0 + i as f64) } else if (i as i64 - j as i64).abs() == 1 { C64::new(0.5, -0.3) } else { ZERO }
        });
        let a = Csr::from_dense(&d);
        let b: Vec<C64> = (0..5).map(|i| C64::new(i as f64, 1.0)).collect();
        let x = SparseLu::new(&a, ZERO).unwrap().solve(&b);
        let mut r = vec![ZERO; 5];
        a.matvec(&x, &mut r);
        for i in 0..5 {
            assert!((r[i] - b[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn arnoldi_finds_smallest() {
        let n = 60;
        let diag: Vec<f64> = (0..n).map(|k| -(k as f64 + 1.0) * 0.5).collect();
        let mut t: Vec<_> = (0..n).map(|k| (k, k, c(diag[k]))).collect();
        for k in 0..n - 1 {
            t.push((k, k + 1, c(0.01)));
        }
        let a = Csr::from_triplets(n, n, t);
        let start: Vec<C64> = (0..n).map(|k| c(1.0 + k as f64 * 0.01)).collect();
        let pairs = shift_invert_eigs(&a, c(0.01), 2, 20, &start, &|_| {}).unwrap();
        assert!((pairs[0].value.re + 0.5).abs() < 1e-9);
        assert!((pairs[1].value.re + 1.0).abs() < 1e-9);
    }
}
