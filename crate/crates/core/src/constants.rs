//! Closed-form constants of the weighted estimates. `max` plays the role of
//! the lattice join; every input is a plain number supplied by the caller.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volume of the unit ball in dimension `d` (2 or 3).
pub fn unit_ball_volume(d: u32) -> f64 {
    match d {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2),
    }
}

/// `Gamma(n / 2)` for integer `n >= 1`.
fn gamma_half_integer(n: u32) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(f64::from).product()
    } else {
        let mut g = PI.sqrt();
        let mut k = 0.5;
        while k < n as f64 / 2.0 - 0.25 {
            g *= k;
            k += 1.0;
        }
        g
    }
}

pub const K2_FORMULA: &str =
    "K2 = sqrt( 8 d^2 M^2 / (lambda^2 r^2) |B3r| + (2 / lambda^2) |B3r|^(1-2/p) ||h||_p^2 + (2 / (r lambda)) |B3r|^(1-1/p) ||h||_p )";
pub const K7_FORMULA: &str = "K7 = K1 * max( K3 |U|^(1/2-1/(2q)), K2 K3 + |U|^(1/2-1/(2q)) )";
pub const K8_FORMULA: &str = "K8 = K1 * max( K4 |U|^(1/2-1/(2q)), K2 K4, |U|^(1/4-1/(4q)) )";
pub const K10_FORMULA: &str = "K10 = K1 * max( K3, K2 K3 + |U|^(1/2-1/d) )";
pub const K11_FORMULA: &str = "K11 = K1 * max( K4, |U|^(1/q-(2+theta)/(2 theta)) K2 K4, |U|^(1/(2q)-1/theta) )";
pub const K12_FORMULA: &str = "K12 = max( K1 K3, |U|^(1/two_star-1/p-1/gamma) C~ + K1 |U|^(1/2-1/gamma) )";
pub const K13_FORMULA: &str =
    "K13 = max( K1 K4 |U|^(1/q_hat-1/q), |U|^(1/q_hat-1/gamma-1/p) K4 C~ + |U|^(1/(2 q_hat)-1/gamma) K1 )";

pub fn k2(d: u32, m: f64, lambda: f64, r: f64, p: f64, h_norm: f64, measure_b3r: f64) -> f64 {
    let d = d as f64;
    let t1 = 8.0 * d * d * m * m / (lambda * lambda * r * r) * measure_b3r;
    let t2 = 2.0 / (lambda * lambda) * measure_b3r.powf(1.0 - 2.0 / p) * h_norm * h_norm;
    let t3 = 2.0 / (r * lambda) * measure_b3r.powf(1.0 - 1.0 / p) * h_norm;
    (t1 + t2 + t3).sqrt()
}

pub fn k7(k1: f64, k2: f64, k3: f64, measure_u: f64, q: f64) -> f64 {
    let e = measure_u.powf(0.5 - 1.0 / (2.0 * q));
    k1 * (k3 * e).max(k2 * k3 + e)
}

pub fn k8(k1: f64, k2: f64, k4: f64, measure_u: f64, q: f64) -> f64 {
    let e = measure_u.powf(0.5 - 1.0 / (2.0 * q));
    let e4 = measure_u.powf(0.25 - 1.0 / (4.0 * q));
    k1 * (k4 * e).max(k2 * k4).max(e4)
}

pub fn k10(k1: f64, k2: f64, k3: f64, measure_u: f64, d: u32) -> f64 {
    k1 * k3.max(k2 * k3 + measure_u.powf(0.5 - 1.0 / d as f64))
}

pub fn k11(k1: f64, k2: f64, k4: f64, measure_u: f64, q: f64, theta: f64) -> f64 {
    let a = measure_u.powf(1.0 / q - (2.0 + theta) / (2.0 * theta)) * k2 * k4;
    let b = measure_u.powf(1.0 / (2.0 * q) - 1.0 / theta);
    k1 * k4.max(a).max(b)
}

pub fn k12(k1: f64, k3: f64, c_tilde: f64, measure_u: f64, two_star: f64, p: f64, gamma: f64) -> f64 {
    let a = measure_u.powf(1.0 / two_star - 1.0 / p - 1.0 / gamma) * c_tilde;
    (k1 * k3).max(a + k1 * measure_u.powf(0.5 - 1.0 / gamma))
}

pub fn k13(k1: f64, k4: f64, c_tilde: f64, measure_u: f64, q: f64, q_hat: f64, p: f64, gamma: f64) -> f64 {
    let a = k1 * k4 * measure_u.powf(1.0 / q_hat - 1.0 / q);
    let b = measure_u.powf(1.0 / q_hat - 1.0 / gamma - 1.0 / p) * k4 * c_tilde;
    let c = measure_u.powf(1.0 / (2.0 * q_hat) - 1.0 / gamma) * k1;
    a.max(b + c)
}

/// Inputs for [`evaluate`]; each constant is computed when its inputs are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantInputs {
    #[serde(default = "two")]
    pub d: u32,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub k4: Option<f64>,
    pub c_tilde: Option<f64>,
    pub measure_u: Option<f64>,
    pub m_bound: Option<f64>,
    pub lambda: Option<f64>,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub theta: Option<f64>,
    /// Integrability exponent of the flux `F`.
    pub gamma: Option<f64>,
    pub two_star: Option<f64>,
    pub q_hat: Option<f64>,
    pub h_norm: Option<f64>,
    /// Defaults to the volume of a ball of radius `3r`.
    pub measure_b3r: Option<f64>,
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantValue {
    pub value: f64,
    pub formula: &'static str,
    pub inputs: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub values: BTreeMap<&'static str, ConstantValue>,
    /// Constants that could not be evaluated, with the reason.
    pub skipped: BTreeMap<&'static str, String>,
}

fn need(missing: &mut Vec<&'static str>, name: &'static str, v: Option<f64>) -> f64 {
    match v {
        Some(x) => x,
        None => {
            missing.push(name);
            f64::NAN
        }
    }
}

fn check(cond: bool, msg: &str) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Evaluates every constant whose inputs are available. A computed `K2` feeds
/// the later constants when `k2` is not given.
pub fn evaluate(inp: &ConstantInputs) -> Result<ConstantsReport> {
    if !(2..=3).contains(&inp.d) {
        return Err(Error::Config(format!("dimension must be 2 or 3, got {}", inp.d)));
    }
    let mut rep = ConstantsReport::default();
    let d = inp.d;
    let mut k2_value = inp.k2;

    type Eval = Box<dyn Fn(&mut Vec<&'static str>) -> std::result::Result<(f64, Vec<(&'static str, f64)>), String>>;
    let run = |name: &'static str, formula: &'static str, f: Eval, rep: &mut ConstantsReport| -> Option<f64> {
        let mut missing = vec![];
        match f(&mut missing) {
            _ if !missing.is_empty() => {
                rep.skipped.insert(name, format!("missing inputs: {}", missing.join(", ")));
                None
            }
            Ok((value, inputs)) => {
                rep.values.insert(name, ConstantValue { value, formula, inputs: inputs.into_iter().collect() });
                Some(value)
            }
            Err(msg) => {
                rep.skipped.insert(name, msg);
                None
            }
        }
    };

    let i = inp.clone();
    let computed = run(
        "K2",
        K2_FORMULA,
        Box::new(move |m| {
            let (mb, la, r, p) = (need(m, "m_bound", i.m_bound), need(m, "lambda", i.lambda), need(m, "r", i.r), need(m, "p", i.p));
            let h = need(m, "h_norm", i.h_norm);
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(la > 0.0 && r > 0.0 && mb >= 0.0 && h >= 0.0, "need lambda > 0, r > 0, M >= 0, ||h|| >= 0")?;
            check(p > d as f64, "need p > d")?;
            let b3 = i.measure_b3r.unwrap_or(unit_ball_volume(d) * (3.0 * r).powi(d as i32));
            let v = k2(d, mb, la, r, p, h, b3);
            Ok((v, vec![("d", d as f64), ("m_bound", mb), ("lambda", la), ("r", r), ("p", p), ("h_norm", h), ("measure_b3r", b3)]))
        }),
        &mut rep,
    );
    if k2_value.is_none() {
        k2_value = computed;
    }

    let i = inp.clone();
    run(
        "K7",
        K7_FORMULA,
        Box::new(move |m| {
            let (k1, k3, u, q) = (need(m, "k1", i.k1), need(m, "k3", i.k3), need(m, "measure_u", i.measure_u), need(m, "q", i.q));
            let k2 = need(m, "k2", k2_value);
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(q > d as f64 / 2.0, "need q > d/2")?;
            Ok((k7(k1, k2, k3, u, q), vec![("k1", k1), ("k2", k2), ("k3", k3), ("measure_u", u), ("q", q)]))
        }),
        &mut rep,
    );
    let i = inp.clone();
    run(
        "K8",
        K8_FORMULA,
        Box::new(move |m| {
            let (k1, k4, u, q) = (need(m, "k1", i.k1), need(m, "k4", i.k4), need(m, "measure_u", i.measure_u), need(m, "q", i.q));
            let k2 = need(m, "k2", k2_value);
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(q > d as f64 / 2.0, "need q > d/2")?;
            Ok((k8(k1, k2, k4, u, q), vec![("k1", k1), ("k2", k2), ("k4", k4), ("measure_u", u), ("q", q)]))
        }),
        &mut rep,
    );
    let i = inp.clone();
    run(
        "K10",
        K10_FORMULA,
        Box::new(move |m| {
            let (k1, k3, u) = (need(m, "k1", i.k1), need(m, "k3", i.k3), need(m, "measure_u", i.measure_u));
            let k2 = need(m, "k2", k2_value);
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(d == 3, "defined for d = 3")?;
            Ok((k10(k1, k2, k3, u, d), vec![("k1", k1), ("k2", k2), ("k3", k3), ("measure_u", u), ("d", d as f64)]))
        }),
        &mut rep,
    );
    let i = inp.clone();
    run(
        "K11",
        K11_FORMULA,
        Box::new(move |m| {
            let (k1, k4, u) = (need(m, "k1", i.k1), need(m, "k4", i.k4), need(m, "measure_u", i.measure_u));
            let (q, th) = (need(m, "q", i.q), need(m, "theta", i.theta));
            let k2 = need(m, "k2", k2_value);
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(d == 3, "defined for d = 3")?;
            check(th > 6.0, "need theta > 6")?;
            check(q > 1.5 && q <= 2.0 * th / (2.0 + th), "need 3/2 < q <= 2 theta / (2 + theta)")?;
            Ok((k11(k1, k2, k4, u, q, th), vec![("k1", k1), ("k2", k2), ("k4", k4), ("measure_u", u), ("q", q), ("theta", th)]))
        }),
        &mut rep,
    );
    let i = inp.clone();
    run(
        "K12",
        K12_FORMULA,
        Box::new(move |m| {
            let (k1, k3, ct, u) = (need(m, "k1", i.k1), need(m, "k3", i.k3), need(m, "c_tilde", i.c_tilde), need(m, "measure_u", i.measure_u));
            let (p, g) = (need(m, "p", i.p), need(m, "gamma", i.gamma));
            let ts = if d == 2 { need(m, "two_star", i.two_star) } else { 2.0 * d as f64 / (d as f64 + 2.0) };
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(p > d as f64 && g > d as f64, "need p > d and gamma > d")?;
            if d == 2 {
                check(ts > 1.0 && ts < (p * g / (p + g)).min(2.0), "need 1 < two_star < min(p gamma / (p + gamma), 2)")?;
            }
            let v = k12(k1, k3, ct, u, ts, p, g);
            Ok((v, vec![("k1", k1), ("k3", k3), ("c_tilde", ct), ("measure_u", u), ("two_star", ts), ("p", p), ("gamma", g)]))
        }),
        &mut rep,
    );
    let i = inp.clone();
    run(
        "K13",
        K13_FORMULA,
        Box::new(move |m| {
            let (k1, k4, ct, u) = (need(m, "k1", i.k1), need(m, "k4", i.k4), need(m, "c_tilde", i.c_tilde), need(m, "measure_u", i.measure_u));
            let (q, qh, p, g) = (need(m, "q", i.q), need(m, "q_hat", i.q_hat), need(m, "p", i.p), need(m, "gamma", i.gamma));
            if !m.is_empty() {
                return Ok((f64::NAN, vec![]));
            }
            check(p > d as f64 && g > d as f64, "need p > d and gamma > d")?;
            let upper = q.min(p * g / (p + g)).min(g / 2.0);
            check(qh > d as f64 / 2.0 && qh < upper, "need d/2 < q_hat < min(q, p gamma / (p + gamma), gamma / 2)")?;
            let v = k13(k1, k4, ct, u, q, qh, p, g);
            Ok((v, vec![("k1", k1), ("k4", k4), ("c_tilde", ct), ("measure_u", u), ("q", q), ("q_hat", qh), ("p", p), ("gamma", g)]))
        }),
        &mut rep,
    );
    Ok(rep)
}
