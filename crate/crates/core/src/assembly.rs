//! P1 Galerkin discretization of
//! `int <A grad u, grad psi> + <H, grad u> psi + c u psi = int f psi + <F, grad psi>`
//! with homogeneous Dirichlet data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeff::{eval_matrix, eval_vector, min_sym_eigenvalue, CoefficientSet, Expr};
use crate::error::{Error, Result};
use crate::linalg::{solve_bicgstab, solve_cg, CsrMatrix, SolveReport, SolverSettings, TripletBuilder};
use crate::mesh::{refine_uniform, Element, Enclosure, Point, TriMesh};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Divergence,
    Nondivergence,
}

/// Positive multiplier applied to every coefficient of a problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// P1 field on the problem mesh; gradients are taken per element.
    Nodal(Arc<Vec<f64>>),
    /// Closed-form weight with its gradient, times `scale`.
    Analytic { rho: Expr, grad: [Expr; 2], scale: f64 },
}

impl Weight {
    /// Value and gradient at the point with barycentric coordinates `bary` in `el`.
    pub fn eval(&self, el: &Element, bary: [f64; 3]) -> Result<(f64, [f64; 2])> {
        match self {
            Weight::Nodal(vals) => {
                let v = el.nodes.map(|n| vals[n]);
                if v[0] == v[1] && v[1] == v[2] {
                    return Ok((v[0], [0.0, 0.0]));
                }
                Ok((bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2], el.gradient(v)))
            }
            Weight::Analytic { rho, grad, scale } => {
                let x = el.map(bary);
                let g = eval_vector(grad, x)?;
                Ok((scale * rho.eval(x)?, [scale * g[0], scale * g[1]]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub mesh: Arc<TriMesh>,
    pub coeffs: CoefficientSet,
    pub form: Form,
    /// `n` in `min(c, n)`.
    pub truncation_level: Option<f64>,
    pub quadrature: Quadrature,
    pub enclosure: Enclosure,
    pub weight: Option<Weight>,
    pub solver: SolverSettings,
}

impl ProblemSpec {
    pub fn new(mesh: Arc<TriMesh>, coeffs: CoefficientSet) -> Self {
        let enclosure = Enclosure::around(&mesh.domain());
        ProblemSpec {
            mesh,
            coeffs,
            form: Form::Divergence,
            truncation_level: None,
            quadrature: Quadrature::Degree2,
            enclosure,
            weight: None,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.coeffs.validate().map_err(Error::Config)?;
        if self.form == Form::Nondivergence && self.coeffs.div_a.is_none() {
            return Err(Error::MissingDivA);
        }
        if let Some(n) = self.truncation_level {
            if !(n >= 1.0) {
                return Err(Error::Config(format!("truncation level must be at least 1, got {n}")));
            }
        }
        Ok(())
    }
}

/// Replaces the non-divergence drift by `H = drift + div A`.
pub fn nondiv_to_div(spec: &ProblemSpec) -> Result<ProblemSpec> {
    if spec.form == Form::Divergence {
        return Ok(spec.clone());
    }
    let div_a = spec.coeffs.div_a.as_ref().ok_or(Error::MissingDivA)?;
    let mut out = spec.clone();
    out.coeffs.drift = [0, 1].map(|k| Expr::add(spec.coeffs.drift[k].clone(), div_a[k].clone()));
    out.form = Form::Divergence;
    Ok(out)
}

/// Coefficients after truncation and weighting, at one quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoeffs {
    pub a: [[f64; 2]; 2],
    pub drift: [f64; 2],
    pub c: f64,
    pub f: f64,
    pub flux: [f64; 2],
}

pub fn point_coeffs(spec: &ProblemSpec, el: &Element, bary: [f64; 3]) -> Result<PointCoeffs> {
    let co = &spec.coeffs;
    let x = el.map(bary);
    let a = eval_matrix(&co.a, x)?;
    let lambda = co.lambda;
    let eig = min_sym_eigenvalue(a);
    if eig < lambda * (1.0 - 1e-12) {
        return Err(Error::Ellipticity { point: x, min_eig: eig, lambda });
    }
    let h = eval_vector(&co.drift, x)?;
    let c = match (co.c.eval(x), spec.truncation_level) {
        (Ok(v), Some(n)) => v.min(n),
        (Ok(v), None) => v,
        (Err(_), Some(n)) => n,
        (Err(e), None) => return Err(e.into()),
    };
    if c < 0.0 {
        return Err(Error::Hypothesis(format!("c = {c} < 0 at ({}, {})", x[0], x[1])));
    }
    let f = co.f.eval(x)?;
    let flux = match &co.flux {
        Some(fl) => eval_vector(fl, x)?,
        None => [0.0, 0.0],
    };
    let Some(weight) = &spec.weight else {
        return Ok(PointCoeffs { a, drift: h, c, f, flux });
    };
    let (rho, g) = weight.eval(el, bary)?;
    if !(rho > 0.0) {
        return Err(Error::Positivity { value: rho, point: x });
    }
    Ok(PointCoeffs {
        a: [[rho * a[0][0], rho * a[0][1]], [rho * a[1][0], rho * a[1][1]]],
        drift: [rho * h[0] + (a[0][0] * g[0] + a[1][0] * g[1]), rho * h[1] + (a[0][1] * g[0] + a[1][1] * g[1])],
        c: rho * c,
        f: rho * f + (g[0] * flux[0] + g[1] * flux[1]),
        flux: [rho * flux[0], rho * flux[1]],
    })
}

/// `<A gj, gi>` arranged so that swapping `i` and `j` gives the same bits when `A` is symmetric.
fn stiffness_term(a: &[[f64; 2]; 2], gi: [f64; 2], gj: [f64; 2]) -> f64 {
    a[0][0] * (gi[0] * gj[0]) + a[1][1] * (gi[1] * gj[1]) + (a[0][1] * (gi[0] * gj[1]) + a[1][0] * (gi[1] * gj[0]))
}

/// Element matrix (row = test, column = trial) and load vector.
pub fn element_system(spec: &ProblemSpec, el: &Element) -> Result<([[f64; 3]; 3], [f64; 3])> {
    let mut k = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for &(bary, w) in spec.quadrature.points() {
        let pc = point_coeffs(spec, el, bary)?;
        let wa = w * el.area;
        for i in 0..3 {
            let gi = el.grads[i];
            for j in 0..3 {
                let gj = el.grads[j];
                let stiff = stiffness_term(&pc.a, gi, gj);
                let drift = (pc.drift[0] * gj[0] + pc.drift[1] * gj[1]) * bary[i];
                let mass = pc.c * (bary[i] * bary[j]);
                k[i][j] += wa * (stiff + drift + mass);
            }
            b[i] += wa * (pc.f * bary[i] + (pc.flux[0] * gi[0] + pc.flux[1] * gi[1]));
        }
    }
    Ok((k, b))
}

fn scatter(
    mesh: &TriMesh,
    dirichlet: bool,
    mut local: impl FnMut(&Element) -> Result<([[f64; 3]; 3], [f64; 3])>,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = mesh.num_vertices();
    let mut tb = TripletBuilder::with_capacity(n, 9 * mesh.num_triangles() + n);
    let mut rhs = vec![0.0; n];
    for el in mesh.elements() {
        let (k, b) = local(&el)?;
        for i in 0..3 {
            let gi = el.nodes[i];
            if dirichlet && mesh.is_boundary(gi) {
                continue;
            }
            rhs[gi] += b[i];
            for j in 0..3 {
                let gj = el.nodes[j];
                if dirichlet && mesh.is_boundary(gj) {
                    continue;
                }
                tb.add(gi, gj, k[i][j]);
            }
        }
    }
    if dirichlet {
        for v in 0..n {
            if mesh.is_boundary(v) {
                tb.add(v, v, 1.0);
            }
        }
    }
    Ok((tb.build(), rhs))
}

fn require_divergence(spec: &ProblemSpec) -> Result<()> {
    spec.validate()?;
    if spec.form != Form::Divergence {
        return Err(Error::Precondition("assembly needs a divergence-form problem; convert it first".into()));
    }
    Ok(())
}

/// Global system with boundary rows and columns replaced by the identity.
pub fn assemble_system(spec: &ProblemSpec) -> Result<(CsrMatrix, Vec<f64>)> {
    require_divergence(spec)?;
    scatter(&spec.mesh, true, |el| element_system(spec, el))
}

/// Global system over all nodes, without boundary conditions.
pub fn assemble_unconstrained(spec: &ProblemSpec) -> Result<(CsrMatrix, Vec<f64>)> {
    require_divergence(spec)?;
    scatter(&spec.mesh, false, |el| element_system(spec, el))
}

/// Assembles `int <A^T grad v + v H, grad phi> = -int <H, grad phi>`, the drift
/// acting on the trial function. `a` and `h` are pointwise callbacks so that
/// callers can extend coefficients beyond the working domain.
pub fn assemble_adjoint(
    mesh: &TriMesh,
    quadrature: Quadrature,
    dirichlet: bool,
    a: impl Fn(Point) -> Result<[[f64; 2]; 2]>,
    h: impl Fn(Point) -> Result<[f64; 2]>,
) -> Result<(CsrMatrix, Vec<f64>)> {
    scatter(mesh, dirichlet, |el| {
        let mut k = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for &(bary, w) in quadrature.points() {
            let x = el.map(bary);
            let am = a(x)?;
            let hv = h(x)?;
            let wa = w * el.area;
            for i in 0..3 {
                let gi = el.grads[i];
                for j in 0..3 {
                    let gj = el.grads[j];
                    // <A^T gj, gi> = <A gi, gj>
                    let stiff = stiffness_term(&am, gj, gi);
                    let drift = bary[j] * (hv[0] * gi[0] + hv[1] * gi[1]);
                    k[i][j] += wa * (stiff + drift);
                }
                b[i] -= wa * (hv[0] * gi[0] + hv[1] * gi[1]);
            }
        }
        Ok((k, b))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L2,
    Ltheta(f64),
    Linf,
    H10,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSummary {
    pub l2: f64,
    pub h1_0: f64,
    pub linf: f64,
}

/// Nodal P1 field on a mesh, zero at boundary vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub mesh: Arc<TriMesh>,
    pub values: Vec<f64>,
    pub report: SolveReport,
    pub quadrature: Quadrature,
    pub norms: NormSummary,
}

impl DiscreteSolution {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>, report: SolveReport, quadrature: Quadrature) -> Self {
        let norms = NormSummary {
            l2: p1_norm(&mesh, &values, Norm::L2, quadrature),
            h1_0: p1_norm(&mesh, &values, Norm::H10, quadrature),
            linf: p1_norm(&mesh, &values, Norm::Linf, quadrature),
        };
        DiscreteSolution { mesh, values, report, quadrature, norms }
    }

    pub fn norm(&self, which: Norm) -> f64 {
        match which {
            Norm::L2 => self.norms.l2,
            Norm::H10 => self.norms.h1_0,
            Norm::Linf => self.norms.linf,
            Norm::Ltheta(_) => p1_norm(&self.mesh, &self.values, which, self.quadrature),
        }
    }

    pub fn min_value(&self) -> (f64, usize) {
        self.values.iter().enumerate().fold((f64::INFINITY, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc })
    }

    pub fn max_value(&self) -> (f64, usize) {
        self.values.iter().enumerate().fold((f64::NEG_INFINITY, 0), |acc, (i, &v)| if v > acc.0 { (v, i) } else { acc })
    }

    /// `||u_h - u||_{L2}` with the degree-4 rule.
    pub fn l2_error(&self, exact: &Expr) -> Result<f64> {
        let mut acc = 0.0;
        for el in self.mesh.elements() {
            let v = el.nodes.map(|n| self.values[n]);
            for &(bary, w) in Quadrature::Degree4.points() {
                let uh = bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2];
                let d = uh - exact.eval(el.map(bary))?;
                acc += w * el.area * d * d;
            }
        }
        Ok(acc.sqrt())
    }

    /// `||grad u_h - grad u||_{L2}` with the degree-4 rule.
    pub fn h1_error(&self, exact_grad: &[Expr; 2]) -> Result<f64> {
        let mut acc = 0.0;
        for el in self.mesh.elements() {
            let g = el.gradient(el.nodes.map(|n| self.values[n]));
            for &(bary, w) in Quadrature::Degree4.points() {
                let e = eval_vector(exact_grad, el.map(bary))?;
                let (dx, dy) = (g[0] - e[0], g[1] - e[1]);
                acc += w * el.area * (dx * dx + dy * dy);
            }
        }
        Ok(acc.sqrt())
    }

    /// `||u_h - v_h||_{L2}` for two fields on the same mesh.
    pub fn l2_distance(&self, other: &DiscreteSolution) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch { expected: self.values.len(), found: other.values.len() });
        }
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(p1_norm(&self.mesh, &diff, Norm::L2, self.quadrature))
    }
}

/// Norms of a P1 field. `Linf` is the nodal maximum.
pub fn p1_norm(mesh: &TriMesh, values: &[f64], which: Norm, quadrature: Quadrature) -> f64 {
    match which {
        Norm::Linf => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        Norm::H10 => mesh
            .elements()
            .map(|el| {
                let g = el.gradient(el.nodes.map(|n| values[n]));
                el.area * (g[0] * g[0] + g[1] * g[1])
            })
            .sum::<f64>()
            .sqrt(),
        Norm::L2 => p1_norm(mesh, values, Norm::Ltheta(2.0), quadrature),
        Norm::Ltheta(theta) if theta.is_infinite() => p1_norm(mesh, values, Norm::Linf, quadrature),
        Norm::Ltheta(theta) => {
            let mut acc = 0.0;
            for el in mesh.elements() {
                let v = el.nodes.map(|n| values[n]);
                for &(bary, w) in quadrature.points() {
                    let u = bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2];
                    acc += w * el.area * u.abs().powf(theta);
                }
            }
            acc.powf(1.0 / theta)
        }
    }
}

/// `L^theta` norm of an expression over the mesh; `theta = inf` takes the
/// maximum over vertices and quadrature points.
pub fn expr_norm(mesh: &TriMesh, e: &Expr, theta: f64, quadrature: Quadrature) -> Result<f64> {
    if theta.is_infinite() {
        let mut m = 0.0f64;
        for v in mesh.vertices() {
            m = m.max(e.eval(*v)?.abs());
        }
        for el in mesh.elements() {
            for &(bary, _) in quadrature.points() {
                m = m.max(e.eval(el.map(bary))?.abs());
            }
        }
        return Ok(m);
    }
    let mut acc = 0.0;
    for el in mesh.elements() {
        for &(bary, w) in quadrature.points() {
            acc += w * el.area * e.eval(el.map(bary))?.abs().powf(theta);
        }
    }
    Ok(acc.powf(1.0 / theta))
}

/// Solves with CG when the assembled matrix is exactly symmetric and with
/// BiCGStab otherwise.
pub fn solve_weak(spec: &ProblemSpec) -> Result<DiscreteSolution> {
    let (m, b) = assemble_system(spec)?;
    let (tol, max_iter) = (spec.solver.tol, spec.solver.max_iter);
    let (mut x, report) =
        if m.is_symmetric(0.0) { solve_cg(&m, &b, tol, max_iter)? } else { solve_bicgstab(&m, &b, tol, max_iter)? };
    if !report.converged {
        return Err(Error::NotConverged(report));
    }
    for (v, xi) in x.iter_mut().enumerate() {
        if spec.mesh.is_boundary(v) {
            *xi = 0.0;
        }
    }
    Ok(DiscreteSolution::new(spec.mesh.clone(), x, report, spec.quadrature))
}

#[derive(Debug, Clone)]
pub struct TruncationStep {
    pub level: f64,
    pub solution: DiscreteSolution,
    /// `||u_n - u_prev||_{L2}`; absent for the first level.
    pub diff_l2: Option<f64>,
}

/// Solves with `c` replaced by `min(c, n)` for each `n` in `levels`.
pub fn truncation_study(spec: &ProblemSpec, levels: &[f64]) -> Result<Vec<TruncationStep>> {
    if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) || !(levels[0] >= 1.0) {
        return Err(Error::Precondition("truncation levels must be increasing and at least 1".into()));
    }
    let mut out: Vec<TruncationStep> = Vec::with_capacity(levels.len());
    for &n in levels {
        let mut s = spec.clone();
        s.truncation_level = Some(n);
        let solution = solve_weak(&s)?;
        let diff_l2 = match out.last() {
            Some(prev) => Some(solution.l2_distance(&prev.solution)?),
            None => None,
        };
        out.push(TruncationStep { level: n, solution, diff_l2 });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub l2_error: f64,
    pub h1_error: Option<f64>,
    pub order_l2: Option<f64>,
    pub order_h1: Option<f64>,
}

/// Errors against `exact` on the spec mesh and `levels - 1` uniform
/// refinements, with observed orders between consecutive levels.
pub fn convergence_study(
    spec: &ProblemSpec,
    exact: &Expr,
    exact_grad: Option<&[Expr; 2]>,
    levels: usize,
) -> Result<Vec<ConvergenceRow>> {
    if levels == 0 {
        return Err(Error::Precondition("need at least one level".into()));
    }
    let mut rows: Vec<ConvergenceRow> = vec![];
    let mut s = spec.clone();
    for level in 0..levels {
        if level > 0 {
            s.mesh = Arc::new(refine_uniform(&s.mesh));
        }
        let u = solve_weak(&s)?;
        let h = s.mesh.h_max();
        let l2_error = u.l2_error(exact)?;
        let h1_error = exact_grad.map(|g| u.h1_error(g)).transpose()?;
        let order = |a: f64, b: f64, ha: f64| (a / b).ln() / (ha / h).ln();
        let (order_l2, order_h1) = match rows.last() {
            Some(p) => (Some(order(p.l2_error, l2_error, p.h)), p.h1_error.zip(h1_error).map(|(a, b)| order(a, b, p.h))),
            None => (None, None),
        };
        rows.push(ConvergenceRow { level, h, l2_error, h1_error, order_l2, order_h1 });
    }
    Ok(rows)
}
