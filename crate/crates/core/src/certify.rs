//! L2 error certificates for candidate solutions given in closed form:
//! `||u - Phi||_{L2} <= (K1 / gamma) ||f - L[Phi]||_{L2}` with
//! `L[Phi] = -trace(A D^2 Phi) + <H, grad Phi> + c Phi`.

use serde::{Deserialize, Serialize};

use crate::assembly::{DiscreteSolution, Form, ProblemSpec};
use crate::coeff::{eval_matrix, eval_vector, Expr, Matrix2};
use crate::error::{Error, Result};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::{gauss_legendre_unit, Quadrature};

pub const COMPLIANCE_TOL: f64 = 1e-8;
pub const VALIDATION_SLACK: f64 = 0.02;

/// Candidate with user-supplied exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub phi: Expr,
    pub grad: [Expr; 2],
    pub hess: Matrix2<Expr>,
}

impl Candidate {
    /// Flags a Hessian whose off-diagonal entries are written differently.
    pub fn hessian_declared_symmetric(&self) -> bool {
        self.hess[0][1] == self.hess[1][0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub points: Vec<Point>,
    /// Quadrature weights including element areas.
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl ResidualField {
    pub fn l2(&self) -> f64 {
        self.weights.iter().zip(&self.values).map(|(w, r)| w * r * r).sum::<f64>().sqrt()
    }
}

/// Coefficient of the first-order term in non-divergence form.
fn nondiv_drift(spec: &ProblemSpec) -> Result<Box<dyn Fn(Point) -> Result<[f64; 2]> + '_>> {
    let co = &spec.coeffs;
    match spec.form {
        Form::Nondivergence => Ok(Box::new(move |x| Ok(eval_vector(&co.drift, x)?))),
        Form::Divergence => {
            if let Some(div_a) = &co.div_a {
                Ok(Box::new(move |x| {
                    let h = eval_vector(&co.drift, x)?;
                    let d = eval_vector(div_a, x)?;
                    Ok([h[0] - d[0], h[1] - d[1]])
                }))
            } else if co.a_is_constant() {
                Ok(Box::new(move |x| Ok(eval_vector(&co.drift, x)?)))
            } else {
                Err(Error::MissingDivA)
            }
        }
    }
}

/// `f - L[Phi]` at every quadrature point of the spec mesh. `c` is used as
/// given, without truncation.
pub fn residual_field(candidate: &Candidate, spec: &ProblemSpec, quadrature: Quadrature) -> Result<ResidualField> {
    let co = &spec.coeffs;
    let drift = nondiv_drift(spec)?;
    let mut out = ResidualField { points: vec![], weights: vec![], values: vec![] };
    for el in spec.mesh.elements() {
        for &(bary, w) in quadrature.points() {
            let x = el.map(bary);
            let a = eval_matrix(&co.a, x)?;
            let hs = eval_matrix(&candidate.hess, x)?;
            let g = eval_vector(&candidate.grad, x)?;
            let h = drift(x)?;
            let trace = a[0][0] * hs[0][0] + a[0][1] * hs[1][0] + a[1][0] * hs[0][1] + a[1][1] * hs[1][1];
            let l = -trace + h[0] * g[0] + h[1] * g[1] + co.c.eval(x)? * candidate.phi.eval(x)?;
            out.points.push(x);
            out.weights.push(w * el.area);
            out.values.push(co.f.eval(x)? - l);
        }
    }
    Ok(out)
}

/// `max |Phi|` at Gauss points and endpoints of the boundary edges, and `max |Phi|`
/// over vertices and element quadrature points.
fn compliance(candidate: &Candidate, mesh: &TriMesh, quadrature: Quadrature) -> Result<(f64, f64)> {
    let v = mesh.vertices();
    let mut edge_pts: Vec<f64> = gauss_legendre_unit(3).into_iter().map(|(t, _)| t).collect();
    edge_pts.extend([0.0, 1.0]);
    let mut boundary = 0.0f64;
    for &[a, b] in mesh.boundary_edges() {
        for &t in &edge_pts {
            let p = [v[a][0] + t * (v[b][0] - v[a][0]), v[a][1] + t * (v[b][1] - v[a][1])];
            boundary = boundary.max(candidate.phi.eval(p)?.abs());
        }
    }
    let mut sup = boundary;
    for p in v {
        sup = sup.max(candidate.phi.eval(*p)?.abs());
    }
    for el in mesh.elements() {
        for &(bary, _) in quadrature.points() {
            sup = sup.max(candidate.phi.eval(el.map(bary))?.abs());
        }
    }
    Ok((boundary, sup))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub gamma: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    pub residual_l2: f64,
    /// `K1 / gamma * residual_l2`.
    pub bound: f64,
    pub boundary_compliance: f64,
    pub phi_sup: f64,
    /// The candidate does not vanish on the boundary to `1e-8` relative.
    pub advisory: bool,
    pub hessian_symmetric: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_error: Option<f64>,
}

impl Certificate {
    pub fn recomputed_bound(&self) -> f64 {
        self.k1 / self.gamma * self.residual_l2
    }
}

/// Certificate with the degree-4 rule. `k1` is the weight ratio of a
/// constructed or supplied transform, or any larger number.
pub fn certify_l2(candidate: &Candidate, spec: &ProblemSpec, k1: f64, gamma: f64) -> Result<Certificate> {
    certify_l2_with(candidate, spec, k1, gamma, Quadrature::Degree4)
}

pub fn certify_l2_with(
    candidate: &Candidate,
    spec: &ProblemSpec,
    k1: f64,
    gamma: f64,
    quadrature: Quadrature,
) -> Result<Certificate> {
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma must be positive, got {gamma}")));
    }
    if !(k1 >= 1.0) {
        return Err(Error::Precondition(format!("K1 must be at least 1, got {k1}")));
    }
    for el in spec.mesh.elements() {
        for &(bary, _) in quadrature.points() {
            let x = el.map(bary);
            let c = spec.coeffs.c.eval(x)?;
            if c < gamma {
                return Err(Error::Hypothesis(format!("c = {c} < gamma = {gamma} at ({}, {})", x[0], x[1])));
            }
        }
    }
    let r = residual_field(candidate, spec, quadrature)?;
    let residual_l2 = r.l2();
    let (boundary_compliance, phi_sup) = compliance(candidate, &spec.mesh, quadrature)?;
    Ok(Certificate {
        gamma,
        k1,
        residual_l2,
        bound: k1 / gamma * residual_l2,
        boundary_compliance,
        phi_sup,
        advisory: boundary_compliance > COMPLIANCE_TOL * phi_sup,
        hessian_symmetric: candidate.hessian_declared_symmetric(),
        true_error: None,
    })
}

pub enum Reference<'a> {
    Exact(&'a Expr),
    Discrete(&'a DiscreteSolution),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub true_error: f64,
    pub bound: f64,
    /// `bound / true_error`; absent when the error is zero.
    pub slack: Option<f64>,
    pub advisory: bool,
    pub pass: bool,
}

/// `||u_ref - Phi||_{L2}` against the certified bound. Exact references are
/// integrated on `mesh`, discrete ones on their own mesh.
pub fn validate_certificate(
    cert: &Certificate,
    candidate: &Candidate,
    mesh: &TriMesh,
    reference: Reference<'_>,
) -> Result<CertificateCheck> {
    let mut acc = 0.0;
    let rule = Quadrature::Degree4.points();
    match reference {
        Reference::Exact(u) => {
            for el in mesh.elements() {
                for &(bary, w) in rule {
                    let x = el.map(bary);
                    let d = u.eval(x)? - candidate.phi.eval(x)?;
                    acc += w * el.area * d * d;
                }
            }
        }
        Reference::Discrete(sol) => {
            for el in sol.mesh.elements() {
                let v = el.nodes.map(|n| sol.values[n]);
                for &(bary, w) in rule {
                    let uh = bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2];
                    let d = uh - candidate.phi.eval(el.map(bary))?;
                    acc += w * el.area * d * d;
                }
            }
        }
    }
    let true_error = acc.sqrt();
    Ok(CertificateCheck {
        true_error,
        bound: cert.bound,
        slack: (true_error > 0.0).then(|| cert.bound / true_error),
        advisory: cert.advisory,
        pass: true_error <= cert.bound * (1.0 + VALIDATION_SLACK) && !cert.advisory,
    })
}
