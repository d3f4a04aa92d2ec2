//! Symmetric positive definite block systems `H x = b` and three ways of
//! solving them.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Block-sparse symmetric matrix. Only the upper triangle `(i, j), i < j`
/// of the off-diagonal blocks is stored.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    diag: Vec<DMatrix<f64>>,
    upper: BTreeMap<(usize, usize), DMatrix<f64>>,
    rhs: DVector<f64>,
}

impl BlockSystem {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Self {
            diag: dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            dims,
            offsets,
            upper: BTreeMap::new(),
            rhs: DVector::zeros(total),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Adds `m` to block `(i, j)`; blocks below the diagonal are transposed
    /// into the upper triangle.
    pub fn add_block(&mut self, i: usize, j: usize, m: &DMatrix<f64>) {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => self.diag[i] += m,
            Less => {
                *self
                    .upper
                    .entry((i, j))
                    .or_insert_with(|| DMatrix::zeros(self.dims[i], self.dims[j])) += m
            }
            Greater => {
                *self
                    .upper
                    .entry((j, i))
                    .or_insert_with(|| DMatrix::zeros(self.dims[j], self.dims[i])) += m.transpose()
            }
        }
    }

    pub fn add_rhs(&mut self, i: usize, v: &DVector<f64>) {
        let mut seg = self.rhs.rows_mut(self.offsets[i], self.dims[i]);
        seg += v;
    }

    pub fn add_diagonal(&mut self, lambda: f64) {
        for d in &mut self.diag {
            for k in 0..d.nrows() {
                d[(k, k)] += lambda;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, d) in self.diag.iter().enumerate() {
            m.view_mut((self.offsets[i], self.offsets[i]), (d.nrows(), d.ncols()))
                .copy_from(d);
        }
        for (&(i, j), b) in &self.upper {
            m.view_mut((self.offsets[i], self.offsets[j]), (b.nrows(), b.ncols()))
                .copy_from(b);
            m.view_mut((self.offsets[j], self.offsets[i]), (b.ncols(), b.nrows()))
                .copy_from(&b.transpose());
        }
        m
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        for (i, d) in self.diag.iter().enumerate() {
            let (o, k) = (self.offsets[i], self.dims[i]);
            let prod = d * x.rows(o, k);
            let mut seg = y.rows_mut(o, k);
            seg += &prod;
        }
        for (&(i, j), b) in &self.upper {
            let (oi, ki, oj, kj) = (self.offsets[i], self.dims[i], self.offsets[j], self.dims[j]);
            let top = b * x.rows(oj, kj);
            let bottom = b.tr_mul(&x.rows(oi, ki));
            let mut seg = y.rows_mut(oi, ki);
            seg += &top;
            let mut seg = y.rows_mut(oj, kj);
            seg += &bottom;
        }
        y
    }

    pub fn solve(&self, solver: LinearSolver) -> Result<DVector<f64>> {
        match solver {
            LinearSolver::DenseCholesky => self.solve_dense(),
            LinearSolver::SparseBlockCholesky => self.solve_sparse(),
            LinearSolver::ConjugateGradient => self.solve_cg(1e-12, 10 * self.dim().max(10)),
        }
    }

    fn solve_dense(&self) -> Result<DVector<f64>> {
        let chol = Cholesky::new(self.to_dense())
            .ok_or_else(|| Error::Singular("normal matrix is not positive definite".into()))?;
        Ok(chol.solve(&self.rhs))
    }

    fn neighbours(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.num_blocks()];
        for &(i, j) in self.upper.keys() {
            adj[i].insert(j);
            adj[j].insert(i);
        }
        adj
    }

    /// Block Cholesky in minimum-degree order.
    fn solve_sparse(&self) -> Result<DVector<f64>> {
        let n = self.num_blocks();
        let order = minimum_degree_order(self.neighbours());
        let mut position = vec![0; n];
        for (p, &b) in order.iter().enumerate() {
            position[b] = p;
        }

        // Column p holds the blocks L[q][p] for q > p, keyed by q.
        let mut diag: Vec<DMatrix<f64>> = order.iter().map(|&b| self.diag[b].clone()).collect();
        let mut cols: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); n];
        for (&(i, j), b) in &self.upper {
            let (pi, pj) = (position[i], position[j]);
            if pi > pj {
                cols[pj].insert(pi, b.clone());
            } else {
                cols[pi].insert(pj, b.transpose());
            }
        }

        let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for p in 0..n {
            let chol = Cholesky::<f64, Dyn>::new(diag[p].clone()).ok_or_else(|| {
                Error::Singular(format!("pivot block {} is not positive definite", order[p]))
            })?;
            let l = chol.l();
            let column = std::mem::take(&mut cols[p]);
            let mut scaled = BTreeMap::new();
            for (q, a) in column {
                // L_qp = A_qp L_pp^-T
                let lt = l
                    .solve_lower_triangular(&a.transpose())
                    .ok_or_else(|| Error::Singular("triangular solve".into()))?
                    .transpose();
                scaled.insert(q, lt);
            }
            let rows: Vec<usize> = scaled.keys().copied().collect();
            for (a_idx, &q) in rows.iter().enumerate() {
                let lq = &scaled[&q];
                diag[q] -= lq * lq.transpose();
                for &r in &rows[a_idx + 1..] {
                    let update = &scaled[&r] * lq.transpose();
                    let entry = cols[q]
                        .entry(r)
                        .or_insert_with(|| DMatrix::zeros(update.nrows(), update.ncols()));
                    *entry -= update;
                }
            }
            cols[p] = scaled;
            factors.push(l);
        }

        // Forward substitution L y = b, then L^T x = y, in permuted order.
        let seg = |p: usize| (self.offsets[order[p]], self.dims[order[p]]);
        let mut y: Vec<DVector<f64>> = (0..n)
            .map(|p| {
                let (o, k) = seg(p);
                self.rhs.rows(o, k).into_owned()
            })
            .collect();
        for p in 0..n {
            let yp = factors[p]
                .solve_lower_triangular(&y[p])
                .ok_or_else(|| Error::Singular("forward substitution".into()))?;
            for (&q, lqp) in &cols[p] {
                y[q] -= lqp * &yp;
            }
            y[p] = yp;
        }
        for p in (0..n).rev() {
            let mut acc = y[p].clone();
            for (&q, lqp) in &cols[p] {
                acc -= lqp.tr_mul(&y[q]);
            }
            y[p] = factors[p]
                .tr_solve_lower_triangular(&acc)
                .ok_or_else(|| Error::Singular("back substitution".into()))?;
        }

        let mut x = DVector::zeros(self.dim());
        for (p, yp) in y.iter().enumerate() {
            let (o, k) = seg(p);
            x.rows_mut(o, k).copy_from(yp);
        }
        Ok(x)
    }

    /// Preconditioned conjugate gradients with block-Jacobi preconditioner.
    fn solve_cg(&self, rel_tol: f64, max_iters: usize) -> Result<DVector<f64>> {
        let precond: Vec<Cholesky<f64, Dyn>> = self
            .diag
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Cholesky::new(d.clone()).ok_or_else(|| {
                    Error::Singular(format!("diagonal block {i} is not positive definite"))
                })
            })
            .collect::<Result<_>>()?;
        let apply_precond = |r: &DVector<f64>| {
            let mut z = DVector::zeros(r.len());
            for (i, c) in precond.iter().enumerate() {
                let (o, k) = (self.offsets[i], self.dims[i]);
                z.rows_mut(o, k)
                    .copy_from(&c.solve(&r.rows(o, k).into_owned()));
            }
            z
        };

        let b_norm = self.rhs.norm();
        let mut x = DVector::zeros(self.dim());
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut r = self.rhs.clone();
        let mut z = apply_precond(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..max_iters {
            let ap = self.matvec(&p);
            let pap = p.dot(&ap);
            if !(pap > 0.0) {
                return Err(Error::Singular(
                    "conjugate gradients lost positive definiteness".into(),
                ));
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            if r.norm() <= rel_tol * b_norm {
                return Ok(x);
            }
            z = apply_precond(&r);
            let rz_next = r.dot(&z);
            p = &z + &p * (rz_next / rz);
            rz = rz_next;
        }
        log::warn!("conjugate gradients stopped after {max_iters} iterations");
        Ok(x)
    }
}

/// Greedy minimum-degree elimination order of a graph given as adjacency sets.
pub fn minimum_degree_order(mut adj: Vec<BTreeSet<usize>>) -> Vec<usize> {
    let n = adj.len();
    let mut eliminated = vec![false; n];
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = by_degree.pop_first() {
        eliminated[v] = true;
        order.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !eliminated[u]).collect();
        for &u in &nbrs {
            by_degree.remove(&(adj[u].len(), u));
        }
        for &u in &nbrs {
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
        }
        for &u in &nbrs {
            by_degree.insert((adj[u].len(), u));
        }
        adj[v].clear();
    }
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LinearSolver {
    DenseCholesky,
    #[default]
    SparseBlockCholesky,
    ConjugateGradient,
}
