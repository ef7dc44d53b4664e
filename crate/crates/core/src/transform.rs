//! The positive weight `rho` with `int <A^T grad rho + rho H, grad phi> = 0`,
//! and the transformed problem with weakly divergence-free drift `rho B`,
//! `B = H + rho^-1 A^T grad rho`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_adjoint, solve_weak, Form, ProblemSpec, Weight};
use crate::coeff::{eval_matrix, eval_vector, min_sym_eigenvalue, CoefficientSet, Expr};
use crate::constants;
use crate::error::{Error, Result};
use crate::linalg::{solve_bicgstab, solve_cg, SolveReport, SolverSettings};
use crate::mesh::{build_disk_mesh, dist, interpolate, refine_uniform, Enclosure, Point, PointLocator, TriMesh};
use crate::quadrature::Quadrature;

/// How the drift is continued outside the working domain on the enclosing ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    /// `H = 0` outside the domain.
    #[default]
    Zero,
    /// The drift expression is evaluated everywhere on the ball.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSource {
    Constructed,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoOptions {
    pub enclosure: Enclosure,
    /// Ring count of the disk mesh on the ball of radius `4r`.
    pub rings: usize,
    /// Normalization point; defaults to the domain center.
    pub x1: Option<Point>,
    pub extension: Extension,
    pub quadrature: Quadrature,
    pub solver: SolverSettings,
}

impl RhoOptions {
    pub fn new(enclosure: Enclosure) -> Self {
        RhoOptions {
            enclosure,
            rings: 48,
            x1: None,
            extension: Extension::Zero,
            quadrature: Quadrature::Degree2,
            solver: SolverSettings { tol: 1e-12, max_iter: 20000 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RhoField {
    /// P1 values on the ball mesh.
    Discrete { ball_mesh: Arc<TriMesh>, nodal: Vec<f64> },
    Analytic { rho: Expr, grad: [Expr; 2], scale: f64 },
}

impl RhoField {
    /// Weight usable on `mesh`; discrete fields are interpolated to its vertices.
    pub fn weight_on(&self, mesh: &TriMesh) -> Result<Weight> {
        match self {
            RhoField::Discrete { ball_mesh, nodal } => {
                let vals =
                    if **ball_mesh == *mesh { nodal.clone() } else { interpolate(ball_mesh, nodal, mesh.vertices())? };
                Ok(Weight::Nodal(Arc::new(vals)))
            }
            RhoField::Analytic { rho, grad, scale } => {
                Ok(Weight::Analytic { rho: rho.clone(), grad: grad.clone(), scale: *scale })
            }
        }
    }

    fn sample(&self, points: &[Point]) -> Result<Vec<f64>> {
        match self {
            RhoField::Discrete { ball_mesh, nodal } => interpolate(ball_mesh, nodal, points),
            RhoField::Analytic { rho, scale, .. } => points.iter().map(|&p| Ok(scale * rho.eval(p)?)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoTransform {
    pub source: RhoSource,
    pub field: RhoField,
    pub coeffs: CoefficientSet,
    pub extension: Extension,
    pub enclosure: Enclosure,
    pub quadrature: Quadrature,
    pub u_mesh: Arc<TriMesh>,
    pub x1: Option<Point>,
    /// `max rho / min rho` over vertices and quadrature points of the working mesh.
    pub k1: f64,
    /// `max rho / min rho` over ball-mesh vertices in `B_3r`.
    pub k1_b3r: Option<f64>,
    pub k2: f64,
    pub h_norm_lp: f64,
    /// `B` at the centroid of each working-mesh triangle.
    pub b_elements: Vec<[f64; 2]>,
    pub div_residual: f64,
    pub positivity_min: f64,
    pub solve_report: Option<SolveReport>,
}

fn sample_points(mesh: &TriMesh, q: Quadrature) -> Vec<Point> {
    let mut pts = mesh.vertices().to_vec();
    for el in mesh.elements() {
        pts.extend(q.points().iter().map(|&(b, _)| el.map(b)));
    }
    pts
}

fn ratio(vals: &[f64]) -> (f64, f64) {
    vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn default_x1(mesh: &TriMesh) -> Result<Point> {
    let c = mesh.domain().center();
    if PointLocator::new(mesh).locate(c).is_some() {
        return Ok(c);
    }
    (0..mesh.num_vertices())
        .find(|&v| !mesh.is_boundary(v))
        .map(|v| mesh.vertices()[v])
        .ok_or_else(|| Error::Precondition("working mesh has no interior vertex".into()))
}

/// `||h||_{L^p}` over the elements of `mesh` whose quadrature points pass `keep`.
fn h_norm(coeffs: &CoefficientSet, mesh: &TriMesh, keep: impl Fn(Point) -> bool) -> Result<f64> {
    let p = coeffs.p;
    let mut acc = 0.0;
    for el in mesh.elements() {
        for &(bary, w) in Quadrature::Degree4.points() {
            let x = el.map(bary);
            if keep(x) {
                acc += w * el.area * coeffs.h_value(x)?.abs().powf(p);
            }
        }
    }
    Ok(acc.powf(1.0 / p))
}

fn elliptic_a(coeffs: &CoefficientSet, x: Point) -> Result<[[f64; 2]; 2]> {
    let a = eval_matrix(&coeffs.a, x)?;
    let eig = min_sym_eigenvalue(a);
    if eig < coeffs.lambda * (1.0 - 1e-12) {
        return Err(Error::Ellipticity { point: x, min_eig: eig, lambda: coeffs.lambda });
    }
    Ok(a)
}

/// Solves the auxiliary problem on the ball `B_4r(x0)` and normalizes
/// `rho = w / w(x1)` with `w = v + 1`.
pub fn construct_rho(coeffs: &CoefficientSet, u_mesh: Arc<TriMesh>, opts: &RhoOptions) -> Result<RhoTransform> {
    coeffs.validate().map_err(Error::Config)?;
    let enc = Enclosure::new(opts.enclosure.x0, opts.enclosure.r, &u_mesh)?;
    if opts.rings < 2 {
        return Err(Error::Config("the ball mesh needs at least 2 rings".into()));
    }
    let ball = Arc::new(build_disk_mesh(enc.x0, enc.radius(4.0), opts.rings)?);
    let inside = PointLocator::new(&u_mesh);
    let in_u = |x: Point| inside.locate(x).is_some();
    let h_ext = |x: Point| -> Result<[f64; 2]> {
        if opts.extension == Extension::Natural || in_u(x) {
            Ok(eval_vector(&coeffs.drift, x)?)
        } else {
            Ok([0.0, 0.0])
        }
    };
    let (m, b) = assemble_adjoint(&ball, opts.quadrature, true, |x| elliptic_a(coeffs, x), h_ext)?;
    let (tol, it) = (opts.solver.tol, opts.solver.max_iter);
    let (v, report) = if m.is_symmetric(0.0) { solve_cg(&m, &b, tol, it)? } else { solve_bicgstab(&m, &b, tol, it)? };
    if !report.converged {
        return Err(Error::NotConverged(report));
    }
    let w: Vec<f64> = v.iter().map(|vi| vi + 1.0).collect();
    if let Some((i, &wi)) = w.iter().enumerate().find(|(_, &wi)| !(wi > 0.0)) {
        return Err(Error::Positivity { value: wi, point: ball.vertices()[i] });
    }
    let x1 = match opts.x1 {
        Some(p) => p,
        None => default_x1(&u_mesh)?,
    };
    if !in_u(x1) {
        return Err(Error::Precondition(format!("x1 = ({}, {}) is not in the working domain", x1[0], x1[1])));
    }
    let w1 = PointLocator::new(&ball).interpolate_at(&w, x1)?;
    let nodal: Vec<f64> = w.iter().map(|wi| wi / w1).collect();

    let h_norm_lp = match opts.extension {
        Extension::Zero => h_norm(coeffs, &u_mesh, |_| true)?,
        Extension::Natural => h_norm(coeffs, &ball, |x| dist(x, enc.x0) < enc.radius(3.0))?,
    };
    let k2 = constants::k2(2, coeffs.m_bound, coeffs.lambda, enc.r, coeffs.p, h_norm_lp, enc.measure_b3r());
    let t = RhoTransform {
        source: RhoSource::Constructed,
        field: RhoField::Discrete { ball_mesh: ball, nodal },
        coeffs: coeffs.clone(),
        extension: opts.extension,
        enclosure: enc,
        quadrature: opts.quadrature,
        u_mesh,
        x1: Some(x1),
        k1: f64::NAN,
        k1_b3r: None,
        k2,
        h_norm_lp,
        b_elements: vec![],
        div_residual: f64::NAN,
        positivity_min: f64::NAN,
        solve_report: Some(report),
    };
    t.derive()
}

/// Wraps a closed-form weight `rho` with gradient `grad`.
pub fn supply_rho(
    rho: Expr,
    grad: [Expr; 2],
    coeffs: &CoefficientSet,
    u_mesh: Arc<TriMesh>,
    quadrature: Quadrature,
) -> Result<RhoTransform> {
    coeffs.validate().map_err(Error::Config)?;
    let enc = Enclosure::around(&u_mesh.domain());
    let h_norm_lp = h_norm(coeffs, &u_mesh, |_| true)?;
    let k2 = constants::k2(2, coeffs.m_bound, coeffs.lambda, enc.r, coeffs.p, h_norm_lp, enc.measure_b3r());
    let t = RhoTransform {
        source: RhoSource::UserSupplied,
        field: RhoField::Analytic { rho, grad, scale: 1.0 },
        coeffs: coeffs.clone(),
        extension: Extension::Zero,
        enclosure: enc,
        quadrature,
        u_mesh,
        x1: None,
        k1: f64::NAN,
        k1_b3r: None,
        k2,
        h_norm_lp,
        b_elements: vec![],
        div_residual: f64::NAN,
        positivity_min: f64::NAN,
        solve_report: None,
    };
    t.derive()
}

impl RhoTransform {
    /// Recomputes everything that depends on the values of `rho`.
    fn derive(mut self) -> Result<Self> {
        let pts = sample_points(&self.u_mesh, self.quadrature);
        let vals = self.field.sample(&pts)?;
        if let Some((i, &v)) = vals.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::Positivity { value: v, point: pts[i] });
        }
        let (lo, hi) = ratio(&vals);
        self.k1 = hi / lo;
        self.positivity_min = lo;
        if let RhoField::Discrete { ball_mesh, nodal } = &self.field {
            let r3 = self.enclosure.radius(3.0);
            let inner: Vec<f64> = ball_mesh
                .vertices()
                .iter()
                .zip(nodal)
                .filter(|(p, _)| dist(**p, self.enclosure.x0) <= r3)
                .map(|(_, &v)| v)
                .collect();
            let (lo3, hi3) = ratio(&inner);
            self.k1_b3r = Some(hi3 / lo3);
            self.positivity_min = ratio(nodal).0;
        }
        let weight = self.field.weight_on(&self.u_mesh)?;
        let centroid = [1.0 / 3.0; 3];
        self.b_elements = self
            .u_mesh
            .elements()
            .map(|el| {
                let x = el.map(centroid);
                let (rho, g) = weight.eval(&el, centroid)?;
                let a = eval_matrix(&self.coeffs.a, x)?;
                let h = eval_vector(&self.coeffs.drift, x)?;
                Ok([h[0] + (a[0][0] * g[0] + a[1][0] * g[1]) / rho, h[1] + (a[0][1] * g[0] + a[1][1] * g[1]) / rho])
            })
            .collect::<Result<_>>()?;
        let own = match &self.field {
            RhoField::Discrete { ball_mesh, .. } => ball_mesh.clone(),
            RhoField::Analytic { .. } => self.u_mesh.clone(),
        };
        self.div_residual = weak_residual_of_rho(&self, &own)?;
        Ok(self)
    }

    /// The same transform with `rho` multiplied by `k > 0`; derived quantities
    /// are recomputed from the scaled field.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Precondition(format!("scale factor must be positive, got {k}")));
        }
        let mut t = self.clone();
        match &mut t.field {
            RhoField::Discrete { nodal, .. } => nodal.iter_mut().for_each(|v| *v *= k),
            RhoField::Analytic { scale, .. } => *scale *= k,
        }
        t.derive()
    }

    /// Drift `H`, continued outside the working domain as configured.
    fn drift_at(&self, x: Point, inside: &PointLocator) -> Result<[f64; 2]> {
        if self.extension == Extension::Natural || inside.locate(x).is_some() {
            Ok(eval_vector(&self.coeffs.drift, x)?)
        } else {
            Ok([0.0, 0.0])
        }
    }

    /// `rho` at the vertices of `mesh`.
    pub fn values_on(&self, mesh: &TriMesh) -> Result<Vec<f64>> {
        self.field.sample(mesh.vertices())
    }

    /// Nodal `rho` on the ball mesh, for constructed transforms.
    pub fn ball_values(&self) -> Option<(&Arc<TriMesh>, &[f64])> {
        match &self.field {
            RhoField::Discrete { ball_mesh, nodal } => Some((ball_mesh, nodal)),
            RhoField::Analytic { .. } => None,
        }
    }
}

/// `max_i |int <rho B, grad phi_i>| / (||rho B||_2 ||grad phi_i||_2)` over the
/// interior hat functions of `test_mesh`, with `rho B = A^T grad rho + rho H`.
pub fn weak_residual_of_rho(t: &RhoTransform, test_mesh: &TriMesh) -> Result<f64> {
    let weight = t.field.weight_on(test_mesh)?;
    let inside = PointLocator::new(&t.u_mesh);
    let n = test_mesh.num_vertices();
    let mut r = vec![0.0; n];
    let mut grad_sq = vec![0.0; n];
    let mut e_sq = 0.0;
    for el in test_mesh.elements() {
        for k in 0..3 {
            let g = el.grads[k];
            grad_sq[el.nodes[k]] += el.area * (g[0] * g[0] + g[1] * g[1]);
        }
        for &(bary, w) in t.quadrature.points() {
            let x = el.map(bary);
            let (rho, g) = weight.eval(&el, bary)?;
            let a = eval_matrix(&t.coeffs.a, x)?;
            let h = t.drift_at(x, &inside)?;
            let e = [a[0][0] * g[0] + a[1][0] * g[1] + rho * h[0], a[0][1] * g[0] + a[1][1] * g[1] + rho * h[1]];
            let wa = w * el.area;
            e_sq += wa * (e[0] * e[0] + e[1] * e[1]);
            for k in 0..3 {
                r[el.nodes[k]] += wa * (e[0] * el.grads[k][0] + e[1] * el.grads[k][1]);
            }
        }
    }
    let e_norm = e_sq.sqrt();
    if e_norm == 0.0 {
        return Ok(0.0);
    }
    Ok((0..n)
        .filter(|&i| !test_mesh.is_boundary(i) && grad_sq[i] > 0.0)
        .map(|i| r[i].abs() / (e_norm * grad_sq[i].sqrt()))
        .fold(0.0, f64::max))
}

pub fn compute_k2(m: f64, lambda: f64, r: f64, p: f64, h_norm_lp: f64, measure_b3r: f64) -> f64 {
    constants::k2(2, m, lambda, r, p, h_norm_lp, measure_b3r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Report {
    /// Discrete `||grad rho||_{L2(B_2r)}`.
    pub lhs: f64,
    pub k1: f64,
    pub k2: f64,
    /// `1.05 K1 K2`.
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Checks `||grad rho||_{L2(B_2r)} <= K1 K2` (5% allowance) with `K1` taken
/// over `B_3r`. Triangles count toward `B_2r` by their centroid.
pub fn verify_k2_bound(t: &RhoTransform) -> Result<K2Report> {
    let (ball, nodal) =
        t.ball_values().ok_or_else(|| Error::Precondition("the gradient bound needs a constructed weight".into()))?;
    let r2 = t.enclosure.radius(2.0);
    let mut acc = 0.0;
    for el in ball.elements() {
        if dist(el.map([1.0 / 3.0; 3]), t.enclosure.x0) < r2 {
            let g = el.gradient(el.nodes.map(|n| nodal[n]));
            acc += el.area * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    let lhs = acc.sqrt();
    let k1 = t.k1_b3r.unwrap_or(t.k1);
    let rhs = 1.05 * k1 * t.k2;
    Ok(K2Report { lhs, k1, k2: t.k2, rhs, slack: if lhs > 0.0 { rhs / lhs } else { f64::INFINITY }, pass: lhs <= rhs })
}

/// Multiplies the problem by `rho`: diffusion `rho A`, drift `rho B`, zero-order
/// term `rho c`, source `rho f + <grad rho, F>`, flux `rho F`.
pub fn transform_problem(spec: &ProblemSpec, t: &RhoTransform) -> Result<ProblemSpec> {
    if spec.form != Form::Divergence {
        return Err(Error::Precondition("transform a divergence-form problem".into()));
    }
    if spec.weight.is_some() {
        return Err(Error::Precondition("problem is already weighted".into()));
    }
    let weight = t.field.weight_on(&spec.mesh)?;
    let at_nodes = match &weight {
        Weight::Nodal(v) => v.to_vec(),
        Weight::Analytic { .. } => t.field.sample(spec.mesh.vertices())?,
    };
    if let Some((i, &v)) = at_nodes.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::Positivity { value: v, point: spec.mesh.vertices()[i] });
    }
    let mut out = spec.clone();
    out.weight = Some(weight);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceLevel {
    pub h: f64,
    pub diff_l2: f64,
    pub original_l2: f64,
    /// Observed order against the previous level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub levels: Vec<EquivalenceLevel>,
    pub min_order: Option<f64>,
    /// Every difference within `10 * tol`.
    pub identical: bool,
    pub pass: bool,
}

/// Solves original and transformed problems on `levels` uniform refinements
/// of the problem mesh and compares them.
pub fn equivalence_check(spec: &ProblemSpec, t: &RhoTransform, levels: usize) -> Result<EquivalenceReport> {
    if levels == 0 {
        return Err(Error::Precondition("need at least one level".into()));
    }
    let mut out: Vec<EquivalenceLevel> = vec![];
    let mut s = spec.clone();
    for k in 0..levels {
        if k > 0 {
            s.mesh = Arc::new(refine_uniform(&s.mesh));
        }
        let orig = solve_weak(&s)?;
        let trans = solve_weak(&transform_problem(&s, t)?)?;
        let h = s.mesh.h_max();
        let diff = orig.l2_distance(&trans)?;
        let order = out.last().map(|p| (p.diff_l2 / diff).ln() / (p.h / h).ln());
        out.push(EquivalenceLevel { h, diff_l2: diff, original_l2: orig.norms.l2, order });
    }
    let identical = out.iter().all(|l| l.diff_l2 <= 10.0 * spec.solver.tol);
    let min_order = out.iter().filter_map(|l| l.order).reduce(f64::min);
    let pass = identical || min_order.is_some_and(|o| o >= 0.9);
    Ok(EquivalenceReport { levels: out, min_order, identical, pass })
}
