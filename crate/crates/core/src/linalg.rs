//! Compressed-row sparse matrices and Jacobi-preconditioned Krylov solvers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row layout. Column indices are strictly
/// increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Collects `(row, col, value)` contributions; duplicates are summed at
/// finalization in index order.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder { n, entries: Vec::with_capacity(cap) }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        // Stable sort keeps insertion order among duplicates, so the summation
        // order (and therefore the result) is reproducible.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n: self.n, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut b = TripletBuilder::new(rows.len());
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.add(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.add(j, i, v);
            }
        }
        b.build()
    }

    /// `max |a_ij - a_ji| <= rel_tol * max |a_ij|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let t = self.transpose();
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = rel_tol * scale;
        (0..self.n).all(|i| {
            let mut a = self.row(i).filter(|e| e.1 != 0.0).peekable();
            let mut b = t.row(i).filter(|e| e.1 != 0.0).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => return true,
                    (Some((ja, va)), Some((jb, vb))) if ja == jb => {
                        if (va - vb).abs() > tol {
                            return false;
                        }
                        a.next();
                        b.next();
                    }
                    (Some((ja, va)), Some((jb, _))) if ja < jb => {
                        if va.abs() > tol {
                            return false;
                        }
                        a.next();
                    }
                    (Some(_), Some((_, vb))) | (None, Some((_, vb))) => {
                        if vb.abs() > tol {
                            return false;
                        }
                        b.next();
                    }
                    (Some((_, va)), None) => {
                        if va.abs() > tol {
                            return false;
                        }
                        a.next();
                    }
                }
            }
        })
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// Coordinate dump: one `i j value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:e}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    Bicgstab,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` of the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
    pub method: Method,
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-10, max_iter: 20_000 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inverse_diagonal(m: &CsrMatrix) -> Result<Vec<f64>> {
    m.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| if d == 0.0 { Err(Error::ZeroDiagonal(i)) } else { Ok(1.0 / d) })
        .collect()
}

fn true_residual(m: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; m.n];
    m.spmv_into(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm(&r)
}

fn check_dims(m: &CsrMatrix, rhs: &[f64]) -> Result<()> {
    if rhs.len() != m.n {
        return Err(Error::DimensionMismatch { expected: m.n, found: rhs.len() });
    }
    Ok(())
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_cg(m: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport)> {
    solve_cg_traced(m, rhs, tol, max_iter, |_| {})
}

/// As [`solve_cg`], calling `observe` with the iterate after every step.
pub fn solve_cg_traced(
    m: &CsrMatrix,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> Result<(Vec<f64>, SolveReport)> {
    check_dims(m, rhs)?;
    let n = m.n;
    let inv_d = inverse_diagonal(m)?;
    let b_norm = norm(rhs);
    let mut x = vec![0.0; n];
    let report = |iterations, x: &[f64]| {
        let res = if b_norm == 0.0 { 0.0 } else { true_residual(m, x, rhs) / b_norm };
        SolveReport { iterations, final_residual: res, converged: res <= tol, method: Method::Cg, restarts: 0 }
    };
    if b_norm == 0.0 {
        let rep = report(0, &x);
        return Ok((x, rep));
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        m.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            return Ok((x.clone(), report(it, &x)));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        observe(&x);
        if norm(&r) <= tol * b_norm {
            let rep = report(it + 1, &x);
            if rep.converged {
                return Ok((x, rep));
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rep = report(max_iter, &x);
    Ok((x, rep))
}

/// Jacobi (right-)preconditioned BiCGStab from a zero initial guess. On a
/// breakdown the method restarts once from the current iterate; a second
/// breakdown ends the solve with `converged = false`.
pub fn solve_bicgstab(m: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport)> {
    check_dims(m, rhs)?;
    let n = m.n;
    let inv_d = inverse_diagonal(m)?;
    let b_norm = norm(rhs);
    let mut x = vec![0.0; n];
    let finish = |iterations, restarts, x: &[f64]| {
        let res = if b_norm == 0.0 { 0.0 } else { true_residual(m, x, rhs) / b_norm };
        SolveReport { iterations, final_residual: res, converged: res <= tol, method: Method::Bicgstab, restarts }
    };
    if b_norm == 0.0 {
        return Ok((x, SolveReport {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            method: Method::Bicgstab,
            restarts: 0,
        }));
    }
    let mut restarts = 0;
    let mut it = 0;
    'outer: loop {
        let mut r: Vec<f64> = {
            let mut ax = vec![0.0; n];
            m.spmv_into(&x, &mut ax);
            rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        };
        let r_hat = r.clone();
        let r_hat_norm = norm(&r_hat);
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut zv = vec![0.0; n];
        let mut t = vec![0.0; n];
        while it < max_iter {
            if norm(&r) <= tol * b_norm {
                let rep = finish(it, restarts, &x);
                if rep.converged {
                    return Ok((x, rep));
                }
            }
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() <= 1e-30 * r_hat_norm * norm(&r) || omega == 0.0 {
                if restarts == 0 {
                    restarts = 1;
                    continue 'outer;
                }
                break 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] * inv_d[i];
            }
            m.spmv_into(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                if restarts == 0 {
                    restarts = 1;
                    continue 'outer;
                }
                break 'outer;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            it += 1;
            if norm(&s) <= tol * b_norm {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                let rep = finish(it, restarts, &x);
                if rep.converged {
                    return Ok((x, rep));
                }
                for i in 0..n {
                    x[i] -= alpha * y[i];
                }
            }
            for i in 0..n {
                zv[i] = s[i] * inv_d[i];
            }
            m.spmv_into(&zv, &mut t);
            let tt = dot(&t, &t);
            omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * zv[i];
                r[i] = s[i] - omega * t[i];
            }
        }
        break;
    }
    let rep = finish(it, restarts, &x);
    Ok((x, rep))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmv_identity_and_hand_case() {
        let id = CsrMatrix::identity(4);
        assert_eq!(id.spmv(&[1.0, -2.0, 3.5, 0.0]).unwrap(), vec![1.0, -2.0, 3.5, 0.0]);
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 3.0]]);
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        assert!(matches!(a.spmv(&[1.0]), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn duplicates_merge_in_order() {
        let mut b = TripletBuilder::new(2);
        b.add(1, 0, 1.0);
        b.add(0, 1, 2.0);
        b.add(1, 0, 0.5);
        b.add(0, 0, 4.0);
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 4.0), (1, 2.0)]);
    }

    #[test]
    fn cg_identity_one_iteration() {
        let b = vec![1.0, 2.0, 3.0];
        let (x, rep) = solve_cg(&CsrMatrix::identity(3), &b, 1e-12, 10).unwrap();
        assert_eq!(x, b);
        assert!(rep.converged && rep.iterations <= 1);
    }

    #[test]
    fn cg_zero_iterations_does_not_converge() {
        let (_, rep) = solve_cg(&CsrMatrix::identity(3), &[1.0, 0.0, 0.0], 1e-12, 0).unwrap();
        assert!(!rep.converged);
        let (_, rep) = solve_bicgstab(&CsrMatrix::identity(3), &[1.0, 0.0, 0.0], 1e-12, 0).unwrap();
        assert!(!rep.converged);
    }

    #[test]
    fn zero_diagonal_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(solve_cg(&a, &[1.0, 1.0], 1e-10, 10), Err(Error::ZeroDiagonal(0))));
    }

    #[test]
    fn bicgstab_hand_cases() {
        let b = vec![1.0, -1.0, 2.0];
        let (x, rep) = solve_bicgstab(&CsrMatrix::identity(3), &b, 1e-12, 10).unwrap();
        assert_eq!(x, b);
        assert_eq!(rep.iterations, 1);
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        let (x, rep) = solve_bicgstab(&a, &[3.0, 1.0], 1e-12, 50).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_check() {
        let a = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        assert!(a.is_symmetric(0.0));
        let b = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![0.0, 2.0]]);
        assert!(!b.is_symmetric(1e-13));
        assert_eq!(b.transpose().to_dense(), vec![vec![2.0, 0.0], vec![-1.0, 2.0]]);
    }

    #[test]
    fn coordinate_dump() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![-1.0, 0.5]]);
        assert_eq!(a.to_coordinate_text(), "0 0 2e0\n1 0 -1e0\n1 1 5e-1\n");
    }
}
