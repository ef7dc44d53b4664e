//! Vector fields `F` with `int <F, grad psi> = int f psi`, built as the
//! gradient of the Newtonian potential of `f`.
//!
//! `F(x) = -1/(d alpha(d)) int f(y) (x - y) / |x - y|^d dy`, summed over a
//! tensor grid of cells on the support box. Far cells use the midpoint rule;
//! the cells next to `x` are integrated exactly against the kernel with `f`
//! frozen at the cell center.

use serde::Serialize;

use crate::coeff::Expr;
use crate::constants::unit_ball_volume;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::quadrature::{gauss_legendre_unit, Quadrature};

pub type Point3 = [f64; 3];

pub const SUBSAMPLE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonianField {
    pub d: usize,
    pub source: Expr,
    /// `[lo, hi]` per dimension.
    pub support: Vec<[f64; 2]>,
    pub grid_n: usize,
    h: Point3,
    /// Cell values of `f`, x fastest.
    values: Vec<f64>,
}

fn xlny(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

/// Antiderivative of `u / (u^2 + v^2)` in both variables.
fn prim2(u: f64, v: f64) -> f64 {
    let r2 = u * u + v * v;
    let t = if u == 0.0 { 0.0 } else { u * (v / u).atan() };
    0.5 * xlny(v, r2) + t
}

/// `ln(w + sqrt(s + w^2))` without cancellation for negative `w`.
fn ln_w_plus_r(w: f64, s: f64, r: f64) -> f64 {
    if w >= 0.0 {
        (w + r).ln()
    } else {
        (s / (r - w)).ln()
    }
}

/// Antiderivative of `u / |(u, v, w)|^3` in all three variables.
fn prim3(u: f64, v: f64, w: f64) -> f64 {
    let r = (u * u + v * v + w * w).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let a = if v == 0.0 { 0.0 } else { v * ln_w_plus_r(w, u * u + v * v, r) };
    let b = if w == 0.0 { 0.0 } else { w * ln_w_plus_r(v, u * u + w * w, r) };
    let c = if u == 0.0 { 0.0 } else { u * (v * w / (u * r)).atan() };
    -(a + b - c)
}

/// `int_box u / |u|^d du` for the box `[lo, hi]` in `u`-space, component `j`.
fn box_kernel(d: usize, lo: Point3, hi: Point3, j: usize) -> f64 {
    let mut acc = 0.0;
    for corner in 0..(1 << d) {
        let mut p = [0.0; 3];
        let mut sign = 1.0;
        for k in 0..d {
            if corner >> k & 1 == 1 {
                p[k] = hi[k];
            } else {
                p[k] = lo[k];
                sign = -sign;
            }
        }
        acc += sign
            * if d == 2 {
                prim2(p[j], p[1 - j])
            } else {
                prim3(p[j], p[(j + 1) % 3], p[(j + 2) % 3])
            };
    }
    acc
}

impl NewtonianField {
    pub fn new(source: Expr, support: &[[f64; 2]], grid_n: usize) -> Result<Self> {
        Self::with_subsample(source, support, grid_n, SUBSAMPLE)
    }

    /// Cell values are averages of `subsample^d` midpoint samples.
    pub fn with_subsample(source: Expr, support: &[[f64; 2]], grid_n: usize, subsample: usize) -> Result<Self> {
        let d = support.len();
        if d != 2 && d != 3 {
            return Err(Error::Precondition(format!("dimension must be 2 or 3, got {d}")));
        }
        if grid_n < 8 {
            return Err(Error::Precondition(format!("grid_n must be at least 8, got {grid_n}")));
        }
        if support.iter().any(|s| !(s[1] > s[0])) {
            return Err(Error::InvalidGeometry("support box has an empty side".into()));
        }
        let mut h = [1.0; 3];
        for k in 0..d {
            h[k] = (support[k][1] - support[k][0]) / grid_n as f64;
        }
        let nz = if d == 3 { grid_n } else { 1 };
        if subsample == 0 {
            return Err(Error::Precondition("subsample must be at least 1".into()));
        }
        let rule: Vec<(f64, f64)> = (0..subsample).map(|p| ((p as f64 + 0.5) / subsample as f64, 1.0 / subsample as f64)).collect();
        let mut values = Vec::with_capacity(grid_n * grid_n * nz);
        for k in 0..nz {
            for j in 0..grid_n {
                for i in 0..grid_n {
                    let mut acc = 0.0;
                    for s in 0..rule.len().pow(d as u32) {
                        let mut y = [0.0; 3];
                        let mut w = 1.0;
                        for (a, idx) in [i, j, k].into_iter().enumerate().take(d) {
                            let (t, wt) = rule[s / rule.len().pow(a as u32) % rule.len()];
                            y[a] = support[a][0] + (idx as f64 + t) * h[a];
                            w *= wt;
                        }
                        acc += w * source.eval3(y)?;
                    }
                    values.push(acc);
                }
            }
        }
        Ok(NewtonianField { d, source, support: support.to_vec(), grid_n, h, values })
    }

    /// `d alpha(d)`: `2 pi` in the plane, `4 pi` in space.
    pub fn normalization(&self) -> f64 {
        self.d as f64 * unit_ball_volume(self.d as u32)
    }

    fn center(&self, idx: [usize; 3]) -> Point3 {
        let mut y = [0.0; 3];
        for a in 0..self.d {
            y[a] = self.support[a][0] + (idx[a] as f64 + 0.5) * self.h[a];
        }
        y
    }

    /// Cell index of `x` along axis `a`, as a signed integer so points
    /// outside the box still have neighbours.
    fn cell_of(&self, x: Point3, a: usize) -> i64 {
        ((x[a] - self.support[a][0]) / self.h[a]).floor() as i64
    }

    /// Field value at `x`; the `z` entry is ignored and returned as 0 in the plane.
    pub fn eval(&self, x: Point3) -> Point3 {
        let d = self.d;
        let n = self.grid_n;
        let nz = if d == 3 { n } else { 1 };
        let near = |a: usize, idx: usize, c: i64| (idx as i64 - c).abs() <= 1 || a >= d;
        let c = [0, 1, 2].map(|a| if a < d { self.cell_of(x, a) } else { 0 });
        let vol: f64 = self.h[..d].iter().product();
        let mut far = [0.0; 3];
        let mut close = [0.0; 3];
        let mut idx = 0;
        for k in 0..nz {
            for j in 0..n {
                for i in 0..n {
                    let fv = self.values[idx];
                    idx += 1;
                    if fv == 0.0 {
                        continue;
                    }
                    let y = self.center([i, j, k]);
                    if near(0, i, c[0]) && near(1, j, c[1]) && near(2, k, c[2]) {
                        let mut lo = [0.0; 3];
                        let mut hi = [0.0; 3];
                        for a in 0..d {
                            lo[a] = x[a] - y[a] - 0.5 * self.h[a];
                            hi[a] = x[a] - y[a] + 0.5 * self.h[a];
                        }
                        for a in 0..d {
                            close[a] += fv * box_kernel(d, lo, hi, a);
                        }
                    } else {
                        let u = [x[0] - y[0], x[1] - y[1], if d == 3 { x[2] - y[2] } else { 0.0 }];
                        let r2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
                        let s = fv * vol / if d == 2 { r2 } else { r2 * r2.sqrt() };
                        for a in 0..d {
                            far[a] += s * u[a];
                        }
                    }
                }
            }
        }
        let k = -1.0 / self.normalization();
        [0, 1, 2].map(|a| if a < d { k * (far[a] + close[a]) } else { 0.0 })
    }
}

pub fn newtonian_field(f: Expr, support: &[[f64; 2]], grid_n: usize) -> Result<NewtonianField> {
    NewtonianField::new(f, support, grid_n)
}

/// Uniform node grid in space for trilinear hat functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid3 {
    pub lo: Point3,
    pub spacing: f64,
    /// Cells per axis.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub d: usize,
    pub grid_n: usize,
    pub test_functions: usize,
    /// `max_i |int <F, grad psi_i> - int f psi_i| / (||f|| ||psi_i|| + eps)`.
    pub max_defect: f64,
    pub worst_node: Point3,
    pub f_l2: f64,
}

/// Test functions for the weak identity.
pub enum TestSpace<'a> {
    Hats2(&'a TriMesh),
    Hats3(Grid3),
}

/// Barycentric corners of the `4^levels` congruent subtriangles.
fn subtriangles(levels: usize) -> Vec<[[f64; 3]; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in tris {
            let mid = |a: [f64; 3], b: [f64; 3]| [0, 1, 2].map(|k| 0.5 * (a[k] + b[k]));
            let (m01, m12, m02) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[0], t[2]));
            next.extend([[t[0], m01, m02], [m01, t[1], m12], [m02, m12, t[2]], [m01, m12, m02]]);
        }
        tris = next;
    }
    tris
}

/// Composite degree-4 rule on a subdivided reference triangle.
fn composite_rule(levels: usize) -> Vec<([f64; 3], f64)> {
    let subs = subtriangles(levels);
    let scale = 1.0 / subs.len() as f64;
    let mut out = vec![];
    for s in &subs {
        for &(b, w) in Quadrature::Degree4.points() {
            let p = [0, 1, 2].map(|k| b[0] * s[0][k] + b[1] * s[1][k] + b[2] * s[2][k]);
            out.push((p, w * scale));
        }
    }
    out
}

/// `(1D Gauss points in [0,1], weights)` repeated over `m` equal pieces.
fn composite_1d(m: usize, g: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre_unit(g);
    let mut out = vec![];
    for piece in 0..m {
        for &(t, w) in &rule {
            out.push(((piece as f64 + t) / m as f64, w / m as f64));
        }
    }
    out
}

/// Defect of the weak identity against the interior hats of `space`.
/// `field_levels` and `source_levels` control the composite quadrature used
/// for the field term and for the source term.
pub fn verify_div_identity(
    field: &NewtonianField,
    space: TestSpace<'_>,
    field_levels: usize,
    source_levels: usize,
) -> Result<DefectReport> {
    let f_l2 = source_l2(field)?;
    match space {
        TestSpace::Hats2(mesh) => {
            if field.d != 2 {
                return Err(Error::DimensionMismatch { expected: field.d, found: 2 });
            }
            let n = mesh.num_vertices();
            let (mut lhs, mut rhs, mut mass) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let frule = composite_rule(field_levels);
            let srule = composite_rule(source_levels);
            for el in mesh.elements() {
                for k in 0..3 {
                    mass[el.nodes[k]] += el.area / 6.0;
                }
                for &(b, w) in &frule {
                    let x = el.map(b);
                    let fv = field.eval([x[0], x[1], 0.0]);
                    for k in 0..3 {
                        lhs[el.nodes[k]] += w * el.area * (fv[0] * el.grads[k][0] + fv[1] * el.grads[k][1]);
                    }
                }
                for &(b, w) in &srule {
                    let x = el.map(b);
                    let s = field.source.eval(x)?;
                    for k in 0..3 {
                        rhs[el.nodes[k]] += w * el.area * s * b[k];
                    }
                }
            }
            let mut worst = (0.0, [0.0; 3], 0usize);
            for i in (0..n).filter(|&i| !mesh.is_boundary(i)) {
                let v = (lhs[i] - rhs[i]).abs() / (f_l2 * mass[i].sqrt() + f64::MIN_POSITIVE);
                worst.2 += 1;
                if v > worst.0 {
                    let p = mesh.vertices()[i];
                    worst = (v, [p[0], p[1], 0.0], worst.2);
                }
            }
            Ok(DefectReport {
                d: 2,
                grid_n: field.grid_n,
                test_functions: worst.2,
                max_defect: worst.0,
                worst_node: worst.1,
                f_l2,
            })
        }
        TestSpace::Hats3(g) => {
            if field.d != 3 {
                return Err(Error::DimensionMismatch { expected: field.d, found: 3 });
            }
            if g.n < 2 || !(g.spacing > 0.0) {
                return Err(Error::InvalidGeometry("test grid needs at least 2 cells per axis".into()));
            }
            let nn = g.n + 1;
            let node = |i: usize, j: usize, k: usize| (k * nn + j) * nn + i;
            let (mut lhs, mut rhs) = (vec![0.0; nn * nn * nn], vec![0.0; nn * nn * nn]);
            let fr = composite_1d(1 << field_levels, 3);
            let sr = composite_1d(1 << source_levels, 3);
            let hsp = g.spacing;
            let vol = hsp * hsp * hsp;
            for ck in 0..g.n {
                for cj in 0..g.n {
                    for ci in 0..g.n {
                        let base = [ci, cj, ck];
                        let at = |t: [f64; 3]| [0, 1, 2].map(|a| g.lo[a] + (base[a] as f64 + t[a]) * hsp);
                        // the eight trilinear shape functions of this cell
                        let shape = |t: [f64; 3], c: usize| {
                            (0..3).map(|a| if c >> a & 1 == 1 { t[a] } else { 1.0 - t[a] }).product::<f64>()
                        };
                        let shape_grad = |t: [f64; 3], c: usize| {
                            [0, 1, 2].map(|a| {
                                (0..3)
                                    .map(|b| {
                                        let on = c >> b & 1 == 1;
                                        if a == b {
                                            (if on { 1.0 } else { -1.0 }) / hsp
                                        } else if on {
                                            t[b]
                                        } else {
                                            1.0 - t[b]
                                        }
                                    })
                                    .product::<f64>()
                            })
                        };
                        let id = |c: usize| node(ci + (c & 1), cj + (c >> 1 & 1), ck + (c >> 2 & 1));
                        for &(tx, wx) in &fr {
                            for &(ty, wy) in &fr {
                                for &(tz, wz) in &fr {
                                    let t = [tx, ty, tz];
                                    let fv = field.eval(at(t));
                                    let w = wx * wy * wz * vol;
                                    for c in 0..8 {
                                        let gr = shape_grad(t, c);
                                        lhs[id(c)] += w * (fv[0] * gr[0] + fv[1] * gr[1] + fv[2] * gr[2]);
                                    }
                                }
                            }
                        }
                        for &(tx, wx) in &sr {
                            for &(ty, wy) in &sr {
                                for &(tz, wz) in &sr {
                                    let t = [tx, ty, tz];
                                    let s = field.source.eval3(at(t))?;
                                    if s == 0.0 {
                                        continue;
                                    }
                                    let w = wx * wy * wz * vol;
                                    for c in 0..8 {
                                        rhs[id(c)] += w * s * shape(t, c);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let hat_norm = (2.0 * hsp / 3.0).powf(1.5);
            let mut worst = (0.0, [0.0; 3]);
            let mut count = 0;
            for k in 1..g.n {
                for j in 1..g.n {
                    for i in 1..g.n {
                        count += 1;
                        let id = node(i, j, k);
                        let v = (lhs[id] - rhs[id]).abs() / (f_l2 * hat_norm + f64::MIN_POSITIVE);
                        if v > worst.0 {
                            worst = (v, [0, 1, 2].map(|a| g.lo[a] + [i, j, k][a] as f64 * hsp));
                        }
                    }
                }
            }
            Ok(DefectReport {
                d: 3,
                grid_n: field.grid_n,
                test_functions: count,
                max_defect: worst.0,
                worst_node: worst.1,
                f_l2,
            })
        }
    }
}

/// `||f||_{L^2}` over the support box by the midpoint rule on the source grid.
fn source_l2(field: &NewtonianField) -> Result<f64> {
    let vol: f64 = field.h[..field.d].iter().product();
    Ok((field.values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt())
}

/// Midpoint `L^t` norm of the field over `box_` sampled on `m^d` cells.
pub fn field_norm(field: &NewtonianField, box_: &[[f64; 2]], m: usize, t: f64) -> f64 {
    let d = field.d;
    let hs: Vec<f64> = box_.iter().map(|b| (b[1] - b[0]) / m as f64).collect();
    let vol: f64 = hs.iter().product();
    let nz = if d == 3 { m } else { 1 };
    let mut acc = 0.0;
    for k in 0..nz {
        for j in 0..m {
            for i in 0..m {
                let mut x = [0.0; 3];
                for (a, idx) in [i, j, k].into_iter().enumerate().take(d) {
                    x[a] = box_[a][0] + (idx as f64 + 0.5) * hs[a];
                }
                let v = field.eval(x);
                acc += vol * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().powf(t);
            }
        }
    }
    acc.powf(1.0 / t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormSample {
    pub f: String,
    pub field_norm: f64,
    pub source_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorNormReport {
    pub d: usize,
    pub beta: f64,
    /// `d beta / (d - beta)`.
    pub target_exponent: f64,
    pub samples: Vec<NormSample>,
    pub max_ratio: f64,
    pub finite: bool,
    pub bounded: bool,
}

/// Ratios `||F||_{L^{d beta/(d - beta)}} / ||f||_{L^beta}`, with the field norm
/// taken over the support box enlarged twofold about its center.
pub fn estimate_operator_norm(
    sources: &[Expr],
    support: &[[f64; 2]],
    beta: f64,
    grid_n: usize,
    eval_n: usize,
) -> Result<OperatorNormReport> {
    let d = support.len();
    if !(beta > 1.0 && beta < d as f64) {
        return Err(Error::Precondition(format!("beta must lie in (1, {d}), got {beta}")));
    }
    let target = d as f64 * beta / (d as f64 - beta);
    let outer: Vec<[f64; 2]> = support
        .iter()
        .map(|s| {
            let (c, w) = (0.5 * (s[0] + s[1]), s[1] - s[0]);
            [c - w, c + w]
        })
        .collect();
    let mut samples = vec![];
    for f in sources {
        let field = NewtonianField::new(f.clone(), support, grid_n)?;
        let vol: f64 = field.h[..d].iter().product();
        let src = (field.values.iter().map(|v| v.abs().powf(beta)).sum::<f64>() * vol).powf(1.0 / beta);
        if !(src > 0.0) {
            return Err(Error::Precondition(format!("source {f} vanishes on the grid")));
        }
        let fno = field_norm(&field, &outer, eval_n, target);
        samples.push(NormSample { f: f.to_string(), field_norm: fno, source_norm: src, ratio: fno / src });
    }
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let finite = samples.iter().all(|s| s.ratio.is_finite());
    let bounded = samples.iter().all(|s| s.ratio <= 10.0 * max_ratio);
    Ok(OperatorNormReport { d, beta, target_exponent: target, samples, max_ratio, finite, bounded })
}
