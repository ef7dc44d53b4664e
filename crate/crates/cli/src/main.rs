use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use driftfree::assembly::{convergence_study, nondiv_to_div, solve_weak, truncation_study, ProblemSpec};
use driftfree::certify::{certify_l2, validate_certificate, Candidate, Reference};
use driftfree::config::{json_error, ProblemConfig};
use driftfree::constants::{evaluate, ConstantInputs};
use driftfree::coeff::{parse, Expr};
use driftfree::divsolve::{verify_div_identity, Grid3, NewtonianField, TestSpace};
use driftfree::estimates::{empirical_operator_ratios, verify_contraction, verify_max_principle};
use driftfree::io::{csv_table, nodal_csv, to_sorted_json, vtk};
use driftfree::mesh::{build_rect_mesh, refine_uniform, TriMesh};
use driftfree::transform::{verify_k2_bound, RhoSource, RhoTransform};
use driftfree::Error;

#[derive(Parser)]
#[command(name = "driftfree", version, about = "Elliptic Dirichlet problems with drift: solve, transform, verify, certify")]
struct Cli {
    /// Directory for report files.
    #[arg(long, global = true, env = "DRIFTFREE_OUT", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Problem {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Uniform refinements applied to the configured mesh.
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Relative residual tolerance of the linear solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Skip VTK and nodal CSV output.
    #[arg(long)]
    no_fields: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem with P1 elements.
    Solve(Problem),
    /// Build the weight rho and the divergence-free drift B.
    Transform(Problem),
    /// A-posteriori L2 bound for a candidate solution.
    Certify {
        #[command(flatten)]
        problem: Problem,
        /// Candidate file with `phi`, `grad` and `hess` expressions.
        #[arg(long)]
        candidate: PathBuf,
        /// Weight ratio; defaults to the one of the configured transform.
        #[arg(long)]
        k1: Option<f64>,
        /// Lower bound of c; defaults to `alpha` of the coefficients.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Check the estimates configured under `verify`.
    Verify(Problem),
    /// Errors against the exact solution over uniform refinements.
    Convergence {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Gradient of the Newtonian potential of a source.
    Divsolve(DivArgs),
    /// Evaluate the closed-form constants.
    Constants(ConstArgs),
}

#[derive(Args)]
struct DivArgs {
    /// Source expression in x, y (and z for --dim 3).
    #[arg(long)]
    source: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Cells per axis of the source grid.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// The source is supported in [-w, w]^d.
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    /// Sample points per axis in the output table.
    #[arg(long, default_value_t = 9)]
    samples: usize,
}

#[derive(Args)]
struct ConstArgs {
    /// Inputs file (JSON); flags override its entries.
    inputs: Option<PathBuf>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    m_bound: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    h_norm: Option<f64>,
    #[arg(long)]
    measure_b3r: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
}

type Run<T> = Result<T, Error>;

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Run<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, text: &str) -> Run<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, text)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn json(&self, name: &str, v: &Value) -> Run<()> {
        self.write(name, &to_sorted_json(v)?)
    }
}

fn ser<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn load(p: &Problem) -> Run<(ProblemConfig, ProblemSpec)> {
    let (cfg, base) = ProblemConfig::load(&p.problem)?;
    let mut spec = cfg.spec(&base)?;
    for _ in 0..p.refine {
        spec.mesh = Arc::new(refine_uniform(&spec.mesh));
    }
    if let Some(t) = p.tol {
        spec.solver.tol = t;
    }
    if let Some(m) = p.max_iter {
        spec.solver.max_iter = m;
    }
    Ok((cfg, spec))
}

fn mesh_json(m: &TriMesh) -> Value {
    json!({"stats": ser(&m.stats()), "h_max": m.h_max(), "area": m.total_area()})
}

fn solve(p: &Problem, out: &Out) -> Run<bool> {
    let (cfg, spec) = load(p)?;
    let u = solve_weak(&nondiv_to_div(&spec)?)?;
    let mut report = json!({
        "mesh": mesh_json(&spec.mesh),
        "solver": ser(&u.report),
        "norms": ser(&u.norms),
        "min": u.min_value().0,
        "max": u.max_value().0,
    });
    if let Some(ex) = &cfg.exact {
        report["l2_error"] = json!(u.l2_error(&ex.u)?);
        if let Some(g) = &ex.grad {
            report["h1_error"] = json!(u.h1_error(g)?);
        }
    }
    if !p.no_fields {
        out.write("solution.vtk", &vtk(&spec.mesh, "driftfree solution", &[("u", &u.values)], &[])?)?;
        out.write("solution.csv", &nodal_csv(&spec.mesh, &u.values))?;
    }
    out.json("solve.json", &report)?;
    Ok(true)
}

fn transform_json(t: &RhoTransform) -> Run<(Value, bool)> {
    let mut v = json!({
        "source": ser(&t.source),
        "K1": t.k1,
        "K2": t.k2,
        "h_norm_lp": t.h_norm_lp,
        "div_residual": t.div_residual,
        "positivity_min": t.positivity_min,
        "enclosure": ser(&t.enclosure),
        "extension": ser(&t.extension),
        "mesh": mesh_json(&t.u_mesh),
    });
    if let Some(r) = &t.solve_report {
        v["solver"] = ser(r);
    }
    let mut pass = true;
    if t.source == RhoSource::Constructed {
        let k = verify_k2_bound(t)?;
        pass = k.pass;
        v["K1_b3r"] = json!(t.k1_b3r);
        v["k2_bound"] = ser(&k);
    }
    Ok((v, pass))
}

fn transform(p: &Problem, out: &Out) -> Run<bool> {
    let (cfg, spec) = load(p)?;
    let spec = nondiv_to_div(&spec)?;
    let t = cfg.transform(&spec)?;
    let (v, pass) = transform_json(&t)?;
    if !p.no_fields {
        let rho = t.values_on(&t.u_mesh)?;
        out.write("rho.vtk", &vtk(&t.u_mesh, "driftfree weight", &[("rho", &rho)], &[("B", &t.b_elements)])?)?;
    }
    out.json("transform.json", &v)?;
    Ok(pass)
}

fn certify(p: &Problem, cand: &Path, k1: Option<f64>, gamma: Option<f64>, out: &Out) -> Run<bool> {
    let (cfg, spec) = load(p)?;
    let text = std::fs::read_to_string(cand)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cand.display())))?;
    let candidate: Candidate = serde_json::from_str(&text).map_err(json_error)?;
    let gamma = gamma
        .or(spec.coeffs.alpha)
        .ok_or_else(|| Error::Config("give --gamma or set alpha in the coefficients".into()))?;
    let k1 = match k1 {
        Some(k) => k,
        None => cfg.transform(&nondiv_to_div(&spec)?)?.k1,
    };
    let mut cert = certify_l2(&candidate, &spec, k1, gamma)?;
    let mut pass = !cert.advisory;
    let mut v = ser(&cert);
    if let Some(ex) = &cfg.exact {
        let check = validate_certificate(&cert, &candidate, &spec.mesh, Reference::Exact(&ex.u))?;
        cert.true_error = Some(check.true_error);
        pass &= check.pass;
        v = ser(&cert);
        v["check"] = ser(&check);
    }
    out.json("certificate.json", &v)?;
    Ok(pass)
}

fn verify(p: &Problem, out: &Out) -> Run<bool> {
    let (cfg, spec) = load(p)?;
    let spec = nondiv_to_div(&spec)?;
    let vc = &cfg.verify;
    let t = cfg.transform(&spec)?;
    let (tv, mut pass) = transform_json(&t)?;
    let mut report = json!({"transform": tv});
    if spec.coeffs.alpha.is_some() {
        let rows = verify_contraction(&spec, &t, &vc.thetas, vc.k4_hat)?;
        pass &= rows.iter().all(|r| r.pass);
        let table: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| vec![Some(r.theta), Some(r.lhs), Some(r.rhs_bound), r.slack]).collect();
        out.write("contraction.csv", &csv_table(&["theta", "lhs", "rhs_bound", "slack"], &table))?;
        report["contraction"] = ser(&rows);
    }
    if let Some(sign) = vc.sign {
        let r = verify_max_principle(&spec, sign)?;
        pass &= r.pass;
        report["max_principle"] = ser(&r);
    }
    if !vc.sources.is_empty() {
        report["operator_ratios"] = ser(&empirical_operator_ratios(&spec, &vc.sources, vc.levels, vc.two_star)?);
    }
    if let Some(levels) = &vc.truncation_levels {
        let steps = truncation_study(&spec, levels)?;
        report["truncation"] = steps
            .iter()
            .map(|s| json!({"level": s.level, "diff_l2": s.diff_l2, "l2": s.solution.norms.l2}))
            .collect();
    }
    report["pass"] = json!(pass);
    out.json("verify.json", &report)?;
    Ok(pass)
}

fn convergence(p: &Problem, levels: usize, out: &Out) -> Run<bool> {
    let (cfg, spec) = load(p)?;
    let ex = cfg.exact.as_ref().ok_or_else(|| Error::Config("convergence needs an `exact` section".into()))?;
    let rows = convergence_study(&nondiv_to_div(&spec)?, &ex.u, ex.grad.as_ref(), levels)?;
    let table: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| vec![Some(r.level as f64), Some(r.h), Some(r.l2_error), r.h1_error, r.order_l2, r.order_h1])
        .collect();
    out.write("convergence.csv", &csv_table(&["level", "h", "L2_error", "H1_error", "order_L2", "order_H1"], &table))?;
    Ok(true)
}

fn divsolve(a: &DivArgs, out: &Out) -> Run<bool> {
    if !(2..=3).contains(&a.dim) {
        return Err(Error::Config(format!("--dim must be 2 or 3, got {}", a.dim)));
    }
    if a.samples < 2 {
        return Err(Error::Config("--samples must be at least 2".into()));
    }
    let w = a.half_width;
    let source: Expr = parse(&a.source)?;
    let support = vec![[-w, w]; a.dim];
    let field = NewtonianField::new(source, &support, a.grid)?;
    let defect = if a.dim == 2 {
        let n = (a.grid / 4).max(2);
        let mesh = build_rect_mesh([-1.5 * w, 1.5 * w, -1.5 * w, 1.5 * w], n, n)?;
        verify_div_identity(&field, TestSpace::Hats2(&mesh), 1, 3)?
    } else {
        verify_div_identity(&field, TestSpace::Hats3(Grid3 { lo: [-1.5 * w; 3], spacing: 0.5 * w, n: 6 }), 0, 3)?
    };
    let m = a.samples;
    let mut rows = vec![];
    for j in 0..m {
        for i in 0..m {
            let s = |k: usize| -2.0 * w + 4.0 * w * k as f64 / (m - 1) as f64;
            let x = [s(i), s(j), 0.0];
            let v = field.eval(x);
            rows.push([x, v].concat().into_iter().map(Some).collect());
        }
    }
    out.write("divsolve.csv", &csv_table(&["x", "y", "z", "Fx", "Fy", "Fz"], &rows))?;
    out.json(
        "divsolve.json",
        &json!({
            "source": a.source,
            "dim": a.dim,
            "grid_n": a.grid,
            "support": support,
            "normalization": field.normalization(),
            "defect": ser(&defect),
        }),
    )?;
    Ok(true)
}

fn constants(a: &ConstArgs, out: &Out) -> Run<bool> {
    let mut inp = match &a.inputs {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<ConstantInputs>(&text).map_err(json_error)?
        }
        None => ConstantInputs { d: 2, ..Default::default() },
    };
    if let Some(d) = a.d {
        inp.d = d;
    }
    let set = |slot: &mut Option<f64>, v: Option<f64>| {
        if v.is_some() {
            *slot = v;
        }
    };
    set(&mut inp.m_bound, a.m_bound);
    set(&mut inp.lambda, a.lambda);
    set(&mut inp.r, a.r);
    set(&mut inp.p, a.p);
    set(&mut inp.h_norm, a.h_norm);
    set(&mut inp.measure_b3r, a.measure_b3r);
    set(&mut inp.k1, a.k1);
    let rep = evaluate(&inp)?;
    out.json("constants.json", &json!({"inputs": ser(&inp), "report": ser(&rep)}))?;
    Ok(true)
}

fn run(cli: &Cli) -> Run<bool> {
    let out = Out::new(&cli.out)?;
    match &cli.command {
        Command::Solve(p) => solve(p, &out),
        Command::Transform(p) => transform(p, &out),
        Command::Certify { problem, candidate, k1, gamma } => certify(problem, candidate, *k1, *gamma, &out),
        Command::Verify(p) => verify(p, &out),
        Command::Convergence { problem, levels } => convergence(problem, *levels, &out),
        Command::Divsolve(a) => divsolve(a, &out),
        Command::Constants(a) => constants(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed; see the reports");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
