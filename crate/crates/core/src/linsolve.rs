//! Compressed-row sparse matrices, Jacobi-preconditioned conjugate
//! gradients, and a banded LU with partial pivoting behind a reverse
//! Cuthill-McKee ordering.

use std::collections::VecDeque;
use std::fmt;

use crate::discretization::dot;
use crate::error::{ChbError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed in input order, so assembly is
    /// deterministic for a fixed triplet sequence.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(ChbError::mismatch(
                    format!("index within {nrows}x{ncols}"),
                    format!("({r}, {c})"),
                ));
            }
            if !v.is_finite() {
                return Err(ChbError::NonFinite("matrix entry".into()));
            }
        }
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transpose of a valid matrix")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entrywise `|a_rc - a_cr| <= tol * max|a|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|r| {
            self.row(r)
                .all(|(c, v)| (v - self.get(c, r)).abs() <= tol * scale)
        })
    }

    fn check_square(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(ChbError::mismatch(
                "square matrix",
                format!("{}x{}", self.nrows, self.ncols),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||Ax - b|| / ||b||`, recomputed from the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
    /// Recursively updated relative residual after each iteration.
    pub residual_history: Vec<f64>,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, relative residual {:.3e}, converged = {}",
            self.iterations, self.final_residual, self.converged
        )
    }
}

pub fn cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport)> {
    a.check_square()?;
    if b.len() != a.nrows {
        return Err(ChbError::mismatch(format!("rhs of length {}", a.nrows), b.len()));
    }
    if !(tol > 0.0) {
        return Err(ChbError::InvalidParameter(format!("cg tolerance must be > 0, got {tol}")));
    }
    if !a.is_symmetric(1e-12) {
        return Err(ChbError::InvalidParameter("cg_solve needs a symmetric matrix".into()));
    }
    let (x, report) = pcg(a, b, None, tol, maxit);
    if report.converged {
        Ok((x, report))
    } else {
        Err(ChbError::NotConverged { report })
    }
}

/// Jacobi-preconditioned CG. Restarts from the true residual when the
/// recursive estimate claims convergence that the true residual does not
/// confirm.
pub(crate) fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    maxit: usize,
) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        let x = vec![0.0; n];
        return (
            x,
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
                residual_history: history,
            },
        );
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let true_residual = |x: &[f64]| {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        r
    };
    let mut it = 0usize;
    let mut r = true_residual(&x);
    let mut final_res = dot(&r, &r).sqrt() / bnorm;
    let mut ap = vec![0.0; n];
    'outer: while final_res > tol && it < maxit {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while it < maxit {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break 'outer;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            it += 1;
            let rel = dot(&r, &r).sqrt() / bnorm;
            history.push(rel);
            if rel <= tol {
                r = true_residual(&x);
                final_res = dot(&r, &r).sqrt() / bnorm;
                continue 'outer;
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        r = true_residual(&x);
        final_res = dot(&r, &r).sqrt() / bnorm;
    }
    let report = SolveReport {
        iterations: it,
        final_residual: final_res,
        converged: final_res <= tol,
        residual_history: history,
    };
    (x, report)
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern. Returns
/// `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &SparseMatrix) -> Vec<usize> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in a.row(r) {
            if c != r && c < n {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Banded LU factors `P A P^T = L U` (row pivoting inside the band).
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    perm: Vec<usize>,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        a.check_square()?;
        let n = a.nrows;
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for (c, _) in a.row(r) {
                let (i, j) = (inv[r], inv[c]);
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            perm,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                let (i, j) = (inv[r], inv[c]);
                lu.ab[j * ldab + kv + i - j] += v;
            }
        }
        let scale = a.max_abs();
        lu.factorize(scale)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    fn factorize(&mut self, scale: f64) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let tiny = scale * 1e-14;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0usize;
            let mut best = self.ab[self.idx(j, j)].abs();
            for t in 1..=km {
                let v = self.ab[self.idx(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            self.ipiv[j] = j + jp;
            if !(best > tiny) {
                return Err(ChbError::SingularSystem { row: self.perm[j] });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (p, q) = (self.idx(j, c), self.idx(j + jp, c));
                    self.ab.swap(p, q);
                }
            }
            let inv = 1.0 / self.ab[self.idx(j, j)];
            for t in 1..=km {
                let k = self.idx(j + t, j);
                self.ab[k] *= inv;
            }
            for c in j + 1..=ju {
                let u = self.ab[self.idx(j, c)];
                if u != 0.0 {
                    for t in 1..=km {
                        let l = self.ab[self.idx(j + t, j)];
                        let k = self.idx(j + t, c);
                        self.ab[k] -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                y.swap(j, p);
            }
            let yj = y[j];
            if yj != 0.0 {
                for t in 1..=kl.min(n - 1 - j) {
                    y[j + t] -= self.ab[self.idx(j + t, j)] * yj;
                }
            }
        }
        for j in (0..n).rev() {
            y[j] /= self.ab[self.idx(j, j)];
            let yj = y[j];
            if yj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    y[i] -= self.ab[self.idx(i, j)] * yj;
                }
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solves `A^T x = b` with the same factors.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let mut s = y[j];
            for i in j.saturating_sub(kv)..j {
                s -= self.ab[self.idx(i, j)] * y[i];
            }
            y[j] = s / self.ab[self.idx(j, j)];
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for t in 1..=kl.min(n - 1 - j) {
                s -= self.ab[self.idx(j + t, j)] * y[j + t];
            }
            y[j] = s;
            let p = self.ipiv[j];
            if p != j {
                y.swap(j, p);
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Relative residual `||Ax - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let bn = dot(b, b).sqrt();
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Direct solve with up to three steps of iterative refinement.
pub fn lu_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows {
        return Err(ChbError::mismatch(format!("rhs of length {}", a.nrows), b.len()));
    }
    let lu = LuFactors::factor(a)?;
    let mut x = lu.solve(b);
    for _ in 0..3 {
        if relative_residual(a, &x, b) <= 1e-12 {
            break;
        }
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    Ok(x)
}
