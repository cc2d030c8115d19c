//! Sparse symmetric positive-definite linear algebra.
//!
//! [`cg_solve`] is Jacobi-preconditioned conjugate gradients. For operators
//! that are reused across many solves, [`EnvelopeCholesky`] factors the matrix
//! once after a reverse Cuthill-McKee reordering.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};

/// Square matrix in compressed sparse row format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_parts(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return Err(Error::Usage("inconsistent CSR row offsets".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::Usage("CSR column and value arrays differ in length".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Usage(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= n) {
                return Err(Error::Usage(format!("row {i}: column indices not strictly increasing")));
            }
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Usage(format!("triplet ({i}, {j}) outside {n}x{n}")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(n, row_ptr, col_idx, values)
    }

    pub fn dim(&self) -> usize {
        self.n
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

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j)
            .map_or(0.0, |k| self.values[self.row_ptr[i] + k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Writes Matrix Market coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// `A x`.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n {
        return Err(Error::Usage(format!(
            "spmv: vector of length {} for a {}x{} matrix",
            x.len(),
            a.n,
            a.n
        )));
    }
    let mut y = vec![0.0; a.n];
    spmv_into(a, x, &mut y);
    Ok(y)
}

fn spmv_into(a: &CsrMatrix, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            acc += a.values[k] * x[a.col_idx[k]];
        }
        *yi = acc;
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
///
/// Returns the last iterate with a non-converged report when `max_it` is
/// exhausted; a non-positive curvature `pᵀ A p` is reported as an error.
pub fn cg_solve(a: &CsrMatrix, rhs: &[f64], tol: f64, max_it: usize) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = a.n;
    if rhs.len() != n {
        return Err(Error::Usage(format!("cg: rhs of length {} for dimension {n}", rhs.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("cg: tolerance must be positive, got {tol}")));
    }
    let mut x = vec![0.0; n];
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok((
            x,
            LinearSolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_it {
        spmv_into(a, &p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Numerical(format!(
                "cg: non-positive curvature {curvature:e} at iteration {it}; matrix is not SPD"
            )));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / rhs_norm;
        if rel <= tol {
            // confirm against the true residual to guard against drift
            let mut res = vec![0.0; n];
            spmv_into(a, &x, &mut res);
            let true_rel = res.iter().zip(rhs).map(|(ax, b)| (b - ax).powi(2)).sum::<f64>().sqrt() / rhs_norm;
            if true_rel <= tol {
                return Ok((
                    x,
                    LinearSolveReport {
                        iterations: it,
                        relative_residual: true_rel,
                        converged: true,
                    },
                ));
            }
            for i in 0..n {
                r[i] = rhs[i] - res[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        LinearSolveReport {
            iterations: max_it,
            relative_residual: rel,
            converged: false,
        },
    ))
}

/// `sqrt(xᵀ A x)`.
pub fn energy_norm(a: &CsrMatrix, x: &[f64]) -> Result<f64> {
    let ax = spmv(a, x)?;
    let q = dot(x, &ax);
    if q < -1e-12 * dot(x, x) {
        return Err(Error::Numerical(format!("negative quadratic form {q:e}")));
    }
    Ok(q.max(0.0).sqrt())
}

/// Reverse Cuthill-McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factorization `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    /// First column of the envelope in each row of the permuted matrix.
    first: Vec<usize>,
    /// Row `i` of `L` stored for columns `first[i]..=i`.
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (j_old, _) in a.row(old) {
                let j = inv[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for old in 0..n {
            let i = inv[old];
            for (j_old, v) in a.row(old) {
                let j = inv[j_old];
                if j <= i {
                    data[offsets[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let start = fi.max(fj);
                let row_i = &data[offsets[i] + start - fi..offsets[i] + j - fi];
                let row_j = &data[offsets[j] + start - fj..offsets[j] + j - fj];
                let s: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let idx = offsets[i] + j - fi;
                if j < i {
                    let diag = data[offsets[j + 1] - 1];
                    data[idx] = (data[idx] - s) / diag;
                } else {
                    let d = data[idx] - s;
                    if !(d > 0.0) {
                        return Err(Error::Numerical(format!(
                            "Cholesky: non-positive pivot {d:e} at row {i}; matrix is not SPD"
                        )));
                    }
                    data[idx] = d.sqrt();
                }
            }
        }
        Ok(Self {
            perm,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::Usage(format!("Cholesky: rhs of length {} for dimension {n}", rhs.len())));
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, y)| l * y).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (l, yj) in row[..i - fi].iter().zip(&mut y[fi..i]) {
                *yj -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}
