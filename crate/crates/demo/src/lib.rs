//! Browser demo: solve a problem, build its weight, certify a candidate.
//!
//! The page passes problem JSON in the same format the command-line tool reads
//! and gets back a mesh with one nodal field to draw.

use std::path::Path;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use driftfree::assembly::{nondiv_to_div, solve_weak, ProblemSpec};
use driftfree::certify::{certify_l2, validate_certificate, Candidate, Reference};
use driftfree::config::{MeshConfig, ProblemConfig};
use driftfree::mesh::TriMesh;

fn load(problem: &str) -> Result<(ProblemConfig, ProblemSpec), String> {
    let cfg = ProblemConfig::from_json(problem).map_err(|e| e.to_string())?;
    if matches!(cfg.mesh, MeshConfig::File { .. }) {
        return Err("mesh files are not available in the browser".into());
    }
    let spec = cfg.spec(Path::new("")).map_err(|e| e.to_string())?;
    Ok((cfg, spec))
}

fn field(mesh: &TriMesh, name: &str, values: &[f64]) -> Value {
    json!({
        "vertices": mesh.vertices(),
        "triangles": mesh.triangles(),
        "name": name,
        "values": values,
    })
}

pub fn solve_problem(problem: &str) -> Result<String, String> {
    let (cfg, spec) = load(problem)?;
    let u = solve_weak(&nondiv_to_div(&spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut out = field(&spec.mesh, "u", &u.values);
    out["iterations"] = json!(u.report.iterations);
    out["l2_norm"] = json!(u.norms.l2);
    if let Some(ex) = &cfg.exact {
        out["l2_error"] = json!(u.l2_error(&ex.u).map_err(|e| e.to_string())?);
    }
    Ok(out.to_string())
}

pub fn build_weight(problem: &str) -> Result<String, String> {
    let (cfg, spec) = load(problem)?;
    let spec = nondiv_to_div(&spec).map_err(|e| e.to_string())?;
    let t = cfg.transform(&spec).map_err(|e| e.to_string())?;
    let rho = t.values_on(&t.u_mesh).map_err(|e| e.to_string())?;
    let mut out = field(&t.u_mesh, "rho", &rho);
    out["K1"] = json!(t.k1);
    out["K2"] = json!(t.k2);
    out["div_residual"] = json!(t.div_residual);
    Ok(out.to_string())
}

/// `gamma` falls back to `alpha` of the problem, `k1` to the weight ratio.
pub fn certify_candidate(problem: &str, candidate: &str, k1: Option<f64>, gamma: Option<f64>) -> Result<String, String> {
    let (cfg, spec) = load(problem)?;
    let cand: Candidate = serde_json::from_str(candidate).map_err(|e| format!("candidate: {e}"))?;
    let gamma = gamma.or(spec.coeffs.alpha).ok_or("set alpha in the coefficients or give gamma")?;
    let k1 = match k1 {
        Some(k) => k,
        None => cfg.transform(&nondiv_to_div(&spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.k1,
    };
    let cert = certify_l2(&cand, &spec, k1, gamma).map_err(|e| e.to_string())?;
    let mut out = serde_json::to_value(&cert).map_err(|e| e.to_string())?;
    if let Some(ex) = &cfg.exact {
        let check = validate_certificate(&cert, &cand, &spec.mesh, Reference::Exact(&ex.u)).map_err(|e| e.to_string())?;
        out["check"] = serde_json::to_value(&check).map_err(|e| e.to_string())?;
    }
    Ok(out.to_string())
}

#[wasm_bindgen]
pub fn solve(problem: &str) -> Result<String, JsValue> {
    solve_problem(problem).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn weight(problem: &str) -> Result<String, JsValue> {
    build_weight(problem).map_err(|e| JsValue::from_str(&e))
}

/// Non-finite `k1` or `gamma` means "use the default".
#[wasm_bindgen]
pub fn certify(problem: &str, candidate: &str, k1: f64, gamma: f64) -> Result<String, JsValue> {
    let opt = |v: f64| v.is_finite().then_some(v);
    certify_candidate(problem, candidate, opt(k1), opt(gamma)).map_err(|e| JsValue::from_str(&e))
}
