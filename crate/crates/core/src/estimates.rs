//! Discrete checks of the contraction, energy and sup-norm estimates.

use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::assembly::{expr_norm, p1_norm, point_coeffs, solve_weak, Norm, ProblemSpec};
use crate::coeff::{eval_vector, Expr};
use crate::error::{Error, Result};
use crate::mesh::{refine_uniform, Domain};
use crate::transform::RhoTransform;

pub const CONTRACTION_TOL: f64 = 0.02;
pub const STABILITY_TOL: f64 = 0.10;

/// Writes infinite exponents as the string `"inf"`.
pub fn serialize_exponent<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    #[serde(serialize_with = "serialize_exponent")]
    pub theta: f64,
    pub lhs: f64,
    pub rhs_bound: f64,
    /// `rhs_bound / lhs`; absent when `lhs = 0`.
    pub slack: Option<f64>,
    pub pass: bool,
}

fn theta_norm_of_expr(spec: &ProblemSpec, e: &Expr, theta: f64) -> Result<f64> {
    if theta.is_infinite() {
        let mut m = 0.0f64;
        for v in spec.mesh.vertices() {
            m = m.max(e.eval(*v)?.abs());
        }
        return Ok(m);
    }
    expr_norm(&spec.mesh, e, theta, spec.quadrature)
}

/// `||F||_{L^t}` of the Euclidean length of the flux.
fn flux_norm(spec: &ProblemSpec, flux: &[Expr; 2], t: f64) -> Result<f64> {
    let mut acc = 0.0;
    for el in spec.mesh.elements() {
        for &(bary, w) in spec.quadrature.points() {
            let v = eval_vector(flux, el.map(bary))?;
            acc += w * el.area * v[0].hypot(v[1]).powf(t);
        }
    }
    Ok(acc.powf(1.0 / t))
}

/// Checks `||u_h||_theta <= (K1 / alpha) ||f||_theta` for each exponent, plus
/// `|U|^(1/2) K4_hat ||F||_{L^2q}` when a flux is present.
pub fn verify_contraction(
    spec: &ProblemSpec,
    transform: &RhoTransform,
    thetas: &[f64],
    k4_hat: Option<f64>,
) -> Result<Vec<EstimateReport>> {
    let alpha = spec
        .coeffs
        .alpha
        .ok_or_else(|| Error::Precondition("the contraction estimate needs alpha".into()))?;
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("alpha must be positive, got {alpha}")));
    }
    if let Some(&t) = thetas.iter().find(|&&t| !(t >= 1.0)) {
        return Err(Error::Precondition(format!("theta must lie in [1, inf], got {t}")));
    }
    for el in spec.mesh.elements() {
        for &(bary, _) in spec.quadrature.points() {
            let c = point_coeffs(spec, &el, bary)?.c;
            if c < alpha {
                let x = el.map(bary);
                return Err(Error::Hypothesis(format!("c = {c} < alpha = {alpha} at ({}, {})", x[0], x[1])));
            }
        }
    }
    let flux_term = match (&spec.coeffs.flux, spec.coeffs.has_flux()) {
        (Some(fl), true) => {
            let k4 = k4_hat.ok_or_else(|| Error::Precondition("a nonzero flux needs K4_hat".into()))?;
            spec.mesh.total_area().sqrt() * k4 * flux_norm(spec, fl, 2.0 * spec.coeffs.q)?
        }
        _ => 0.0,
    };
    let u = solve_weak(spec)?;
    thetas
        .iter()
        .map(|&theta| {
            let lhs = p1_norm(&u.mesh, &u.values, Norm::Ltheta(theta), u.quadrature);
            let rhs_bound = transform.k1 / alpha * theta_norm_of_expr(spec, &spec.coeffs.f, theta)? + flux_term;
            Ok(EstimateReport {
                theta,
                lhs,
                rhs_bound,
                slack: (lhs > 0.0).then(|| rhs_bound / lhs),
                pass: lhs <= rhs_bound * (1.0 + CONTRACTION_TOL),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioLevel {
    pub h: f64,
    /// `||u_h||_{H1_0} / ||f||_{L^{2*}}`.
    pub energy: f64,
    /// `||u_h||_inf / ||f||_{L^q}`.
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRatios {
    pub f: String,
    pub levels: Vec<RatioLevel>,
    /// Relative change of both ratios between the last two levels.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorRatioReport {
    pub two_star: f64,
    pub q: f64,
    pub samples: Vec<SampleRatios>,
    pub max_energy: f64,
    pub max_sup: f64,
    pub finite: bool,
    pub stable: bool,
}

/// Measures the solution-to-data ratios for each source in `f_samples` on
/// `levels` uniform refinements of the spec mesh.
pub fn empirical_operator_ratios(
    spec: &ProblemSpec,
    f_samples: &[Expr],
    levels: usize,
    two_star: f64,
) -> Result<OperatorRatioReport> {
    if f_samples.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 sources, got {}", f_samples.len())));
    }
    if levels < 2 {
        return Err(Error::Precondition("need at least 2 levels".into()));
    }
    if !(two_star > 1.0 && two_star < 2.0) {
        return Err(Error::Precondition(format!("2* must lie in (1, 2), got {two_star}")));
    }
    let q = spec.coeffs.q;
    let mut meshes = vec![spec.mesh.clone()];
    for _ in 1..levels {
        let next = Arc::new(refine_uniform(meshes.last().unwrap()));
        meshes.push(next);
    }
    let mut samples = vec![];
    for f in f_samples {
        let mut out = vec![];
        for mesh in &meshes {
            let mut s = spec.clone();
            s.mesh = mesh.clone();
            s.coeffs.f = f.clone();
            let f_2s = expr_norm(mesh, f, two_star, s.quadrature)?;
            let f_q = expr_norm(mesh, f, q, s.quadrature)?;
            if !(f_2s > 0.0 && f_q > 0.0) {
                return Err(Error::Precondition(format!("source {f} vanishes")));
            }
            let u = solve_weak(&s)?;
            out.push(RatioLevel { h: mesh.h_max(), energy: u.norms.h1_0 / f_2s, sup: u.norms.linf / f_q });
        }
        let [a, b] = [&out[levels - 2], &out[levels - 1]];
        let drift = ((b.energy - a.energy).abs() / b.energy).max((b.sup - a.sup).abs() / b.sup);
        samples.push(SampleRatios { f: f.to_string(), levels: out, drift });
    }
    let all = samples.iter().flat_map(|s| s.levels.iter());
    let max_energy = all.clone().map(|l| l.energy).fold(0.0, f64::max);
    let max_sup = all.clone().map(|l| l.sup).fold(0.0, f64::max);
    let finite = all.clone().all(|l| l.energy.is_finite() && l.sup.is_finite());
    let stable = samples.iter().all(|s| s.drift <= STABILITY_TOL);
    Ok(OperatorRatioReport { two_star, q, samples, max_energy, max_sup, finite, stable })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    NonnegF,
    NonposF,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub sign: Sign,
    /// Minimum nodal value for `nonneg_f`, maximum for `nonpos_f`.
    pub extreme: f64,
    pub node: usize,
    pub point: [f64; 2],
    pub pass: bool,
}

pub const MAX_PRINCIPLE_TOL: f64 = 1e-12;

/// Solves and checks that the sign of `f` carries over to the nodal values.
pub fn verify_max_principle(spec: &ProblemSpec, sign: Sign) -> Result<MaxPrincipleReport> {
    if !matches!(spec.mesh.domain(), Domain::Rectangle { .. }) {
        return Err(Error::Precondition("the sign check needs a structured rectangle mesh".into()));
    }
    if !(spec.coeffs.a[0][1].is_literal_zero() && spec.coeffs.a[1][0].is_literal_zero()) {
        return Err(Error::Precondition("the sign check needs a diagonal diffusion matrix".into()));
    }
    let s = if sign == Sign::NonnegF { 1.0 } else { -1.0 };
    for el in spec.mesh.elements() {
        for &(bary, _) in spec.quadrature.points() {
            let pc = point_coeffs(spec, &el, bary)?;
            if s * pc.f < 0.0 {
                let x = el.map(bary);
                return Err(Error::Precondition(format!("f = {} has the wrong sign at ({}, {})", pc.f, x[0], x[1])));
            }
        }
    }
    let u = solve_weak(spec)?;
    let (extreme, node) = if sign == Sign::NonnegF { u.min_value() } else { u.max_value() };
    Ok(MaxPrincipleReport {
        sign,
        extreme,
        node,
        point: u.mesh.vertices()[node],
        pass: s * extreme >= -MAX_PRINCIPLE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{parse, CoefficientSet};
    use crate::mesh::build_rect_mesh;
    use crate::quadrature::Quadrature;
    use crate::transform::supply_rho;
    use std::f64::consts::{E, PI};

    fn e(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn spec(n: usize, co: CoefficientSet) -> ProblemSpec {
        ProblemSpec::new(Arc::new(build_rect_mesh([0.0, 1.0, 0.0, 1.0], n, n).unwrap()), co)
    }

    fn unit_rho(s: &ProblemSpec) -> RhoTransform {
        supply_rho(e("1"), [e("0"), e("0")], &s.coeffs, s.mesh.clone(), Quadrature::Degree2).unwrap()
    }

    #[test]
    fn eigenfunction_contraction() {
        let co = CoefficientSet { c: e("4"), f: e("sin(pi*x)*sin(pi*y)"), alpha: Some(4.0), ..Default::default() };
        let s = spec(64, co);
        let t = unit_rho(&s);
        let r = &verify_contraction(&s, &t, &[2.0], None).unwrap()[0];
        let f2 = 0.5;
        let ratio = r.lhs / f2;
        let exact = 1.0 / (2.0 * PI * PI + 4.0);
        assert!((ratio / exact - 1.0).abs() < 0.02, "{ratio} vs {exact}");
        assert!((r.rhs_bound - 0.25 * f2).abs() < 1e-3);
        assert!(r.pass);
    }

    #[test]
    fn zero_source_contraction() {
        let co = CoefficientSet { c: e("1"), alpha: Some(1.0), ..Default::default() };
        let s = spec(8, co);
        let r = verify_contraction(&s, &unit_rho(&s), &[1.0, f64::INFINITY], None).unwrap();
        assert!(r.iter().all(|r| r.lhs == 0.0 && r.rhs_bound == 0.0 && r.pass && r.slack.is_none()));
    }

    #[test]
    fn exponential_weight_contraction() {
        let co = CoefficientSet {
            drift: [e("1"), e("0")],
            c: e("1"),
            f: e("1 + x*y"),
            alpha: Some(1.0),
            ..Default::default()
        };
        let s = spec(32, co);
        let t = supply_rho(e("exp(-x)"), [e("-exp(-x)"), e("0")], &s.coeffs, s.mesh.clone(), Quadrature::Degree2)
            .unwrap();
        assert!((t.k1 - E).abs() < 1e-12);
        for r in verify_contraction(&s, &t, &[1.0, 2.0, f64::INFINITY], None).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn contraction_hypotheses() {
        let co = CoefficientSet { c: e("x"), f: e("1"), alpha: Some(0.5), ..Default::default() };
        let s = spec(4, co);
        assert!(matches!(verify_contraction(&s, &unit_rho(&s), &[2.0], None), Err(Error::Hypothesis(_))));
        let co = CoefficientSet { c: e("1"), f: e("1"), flux: Some([e("1"), e("0")]), alpha: Some(1.0), ..Default::default() };
        let s = spec(4, co);
        let t = unit_rho(&s);
        assert!(matches!(verify_contraction(&s, &t, &[2.0], None), Err(Error::Precondition(_))));
        let r = &verify_contraction(&s, &t, &[2.0], Some(1.0)).unwrap()[0];
        // |U|^(1/2) * 1 * ||(1,0)||_{L^4} = 1
        assert!((r.rhs_bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_exponent_serializes_as_string() {
        let r = EstimateReport { theta: f64::INFINITY, lhs: 1.0, rhs_bound: 2.0, slack: Some(2.0), pass: true };
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(j["theta"], "inf");
    }

    #[test]
    fn laplacian_ratios_follow_spectrum() {
        let fs: Vec<Expr> = (1..=3).map(|k| e(&format!("sin({k}*pi*x)*sin({k}*pi*y)"))).collect();
        let s = spec(16, CoefficientSet::default());
        let rep = empirical_operator_ratios(&s, &fs, 3, 1.5).unwrap();
        assert!(rep.finite && rep.stable, "{rep:?}");
        let energy: Vec<f64> = rep.samples.iter().map(|s| s.levels.last().unwrap().energy).collect();
        assert!(energy.windows(2).all(|w| w[1] < w[0]));
        // against ||f||_{L2} = 1/2 the energy ratio is 1 / (sqrt(2) k pi)
        let fine = s.mesh.clone();
        let fine = Arc::new(refine_uniform(&refine_uniform(&fine)));
        for (k, f) in fs.iter().enumerate() {
            let mut sk = s.clone();
            sk.mesh = fine.clone();
            sk.coeffs.f = f.clone();
            let u = solve_weak(&sk).unwrap();
            let kk = (k + 1) as f64;
            let exact = 1.0 / (2f64.sqrt() * kk * PI);
            assert!((u.norms.h1_0 / 0.5 / exact - 1.0).abs() < 0.01 * kk * kk);
        }
        assert!(empirical_operator_ratios(&s, &fs[..2], 2, 1.5).is_err());
        assert!(empirical_operator_ratios(&s, &[e("0"), e("1"), e("x")], 2, 1.5).is_err());
    }

    #[test]
    fn sign_is_preserved() {
        for f in ["1", "sin(pi*x)*sin(pi*y)"] {
            let s = spec(16, CoefficientSet { f: e(f), ..Default::default() });
            let r = verify_max_principle(&s, Sign::NonnegF).unwrap();
            assert!(r.pass && r.extreme >= -1e-12);
        }
        let s = spec(16, CoefficientSet { f: e("-1"), c: e("2"), ..Default::default() });
        let r = verify_max_principle(&s, Sign::NonposF).unwrap();
        assert!(r.pass && r.extreme <= 1e-12);
        let s = spec(8, CoefficientSet::default());
        let r = verify_max_principle(&s, Sign::NonnegF).unwrap();
        assert_eq!(r.extreme, 0.0);
        let s = spec(8, CoefficientSet { f: e("x - 0.5"), ..Default::default() });
        assert!(verify_max_principle(&s, Sign::NonnegF).is_err());
    }
}
