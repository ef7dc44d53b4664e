use std::sync::Arc;

use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

use driftfree::assembly::{assemble_system, nondiv_to_div, solve_weak, Form, ProblemSpec};
use driftfree::certify::{certify_l2, Candidate};
use driftfree::coeff::{check_ellipticity, parse, CoefficientSet, Expr};
use driftfree::divsolve::{estimate_operator_norm, NewtonianField};
use driftfree::io::to_sorted_json;
use driftfree::linalg::{solve_bicgstab, solve_cg, solve_cg_traced, CsrMatrix, TripletBuilder};
use driftfree::mesh::{build_rect_mesh, interpolate, Enclosure, TriMesh};
use driftfree::transform::{construct_rho, transform_problem, RhoOptions};

fn e(s: &str) -> Expr {
    parse(s).unwrap()
}

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= m * a[k][j];
            }
            b[i] -= m * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn random_sparse(rng: &mut StdRng, n: usize, density: f64) -> (CsrMatrix, Vec<Vec<f64>>) {
    let mut dense = vec![vec![0.0; n]; n];
    let mut t = TripletBuilder::new(n);
    for (i, row) in dense.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if rng.gen::<f64>() < density {
                let v = rng.gen_range(-1.0..1.0);
                *cell += v;
                t.add(i, j, v);
            }
        }
    }
    (t.build(), dense)
}

fn random_spd(rng: &mut StdRng, n: usize) -> Vec<Vec<f64>> {
    let (_, b) = random_sparse(rng, n, 0.2);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..n).map(|k| b[i][k] * b[j][k]).sum();
        }
        a[i][i] += 0.5;
    }
    a
}

fn a_norm(a: &[Vec<f64>], v: &[f64]) -> f64 {
    a.iter().zip(v).map(|(row, vi)| vi * row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spmv_matches_dense(seed in any::<u64>(), n in 1usize..=50, density in 0.0f64..0.6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (m, dense) = random_sparse(&mut rng, n, density);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = m.spmv(&x).unwrap();
        for i in 0..n {
            let want: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            prop_assert!((y[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
        prop_assert_eq!(m.to_dense(), dense);
    }

    #[test]
    fn cg_error_energy_never_grows(seed in any::<u64>(), n in 2usize..=40) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = dense_solve(a.clone(), b.clone());
        let m = CsrMatrix::from_dense(&a);
        let mut errs = vec![a_norm(&a, &exact)];
        let (x, rep) = solve_cg_traced(&m, &b, 1e-12, 10 * n, |xk| {
            let d: Vec<f64> = xk.iter().zip(&exact).map(|(p, q)| p - q).collect();
            errs.push(a_norm(&a, &d));
        }).unwrap();
        prop_assert!(rep.converged);
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{:?}", errs);
        }
        let r: Vec<f64> = m.spmv(&x).unwrap().iter().zip(&b).map(|(p, q)| q - p).collect();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12 * bn * 1.0001);
    }

    #[test]
    fn solvers_are_deterministic(seed in any::<u64>(), n in 2usize..=30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = CsrMatrix::from_dense(&a);
        let (x1, r1) = solve_cg(&m, &b, 1e-10, 500).unwrap();
        let (x2, r2) = solve_cg(&m, &b, 1e-10, 500).unwrap();
        prop_assert_eq!(x1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), x2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(r1, r2);
        let (y1, s1) = solve_bicgstab(&m, &b, 1e-10, 500).unwrap();
        let (y2, s2) = solve_bicgstab(&m, &b, 1e-10, 500).unwrap();
        prop_assert_eq!(y1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn rect_meshes_are_valid(x0 in -5.0f64..5.0, y0 in -5.0f64..5.0, w in 0.1f64..4.0, ht in 0.1f64..4.0,
                             nx in 1usize..12, ny in 1usize..12) {
        let m = build_rect_mesh([x0, x0 + w, y0, y0 + ht], nx, ny).unwrap();
        prop_assert!(m.validate().is_ok());
        prop_assert_eq!(m.euler_characteristic(), 1);
        prop_assert!(m.elements().all(|el| el.area > 0.0));
        prop_assert!((m.total_area() - w * ht).abs() <= 1e-12 * w * ht);
        let mut edge_use = std::collections::HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edge_use.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        prop_assert!(edge_use.values().all(|&c| c == 1 || c == 2));
        prop_assert_eq!(edge_use.values().filter(|&&c| c == 1).count(), m.boundary_edges().len());
    }

    #[test]
    fn interpolation_reproduces_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                                       pts in prop::collection::vec((0.001f64..0.999, 0.001f64..0.999), 1..20)) {
        let m = build_rect_mesh([0.0, 1.0, 0.0, 1.0], 5, 7).unwrap();
        let nodal: Vec<f64> = m.vertices().iter().map(|p| a + b * p[0] + c * p[1]).collect();
        let points: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        for (p, v) in points.iter().zip(interpolate(&m, &nodal, &points).unwrap()) {
            prop_assert!((v - (a + b * p[0] + c * p[1])).abs() <= 1e-13);
        }
    }

    #[test]
    fn expressions_print_and_reparse(s in expr_text()) {
        let first = parse(&s).unwrap();
        let again = parse(&first.to_string()).unwrap();
        prop_assert_eq!(&first, &again);
        for p in [[0.3, 0.7], [1.1, -0.4]] {
            let (u, v) = (first.eval(p), again.eval(p));
            match (u, v) {
                (Ok(u), Ok(v)) => prop_assert!(u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan())),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "evaluation differs for {}", s),
            }
        }
    }

    #[test]
    fn identity_is_elliptic_up_to_one(lambda in 0.01f64..2.0) {
        let id = [[e("1"), e("0")], [e("0"), e("1")]];
        let pts = [[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]];
        prop_assert_eq!(check_ellipticity(&id, lambda, 1.0, &pts).pass, lambda <= 1.0);
    }

    #[test]
    fn newtonian_field_is_linear(px in -2.0f64..2.0, py in -2.0f64..2.0) {
        let sup = [[-1.0, 1.0], [-1.0, 1.0]];
        let f1 = NewtonianField::new(e("x*y + 1"), &sup, 16).unwrap();
        let f2 = NewtonianField::new(e("cos(x) - y^2"), &sup, 16).unwrap();
        let sum = NewtonianField::new(e("(x*y + 1) + (cos(x) - y^2)"), &sup, 16).unwrap();
        let p = [px, py, 0.0];
        let (a, b, s) = (f1.eval(p), f2.eval(p), sum.eval(p));
        for k in 0..2 {
            prop_assert!((s[k] - a[k] - b[k]).abs() <= 1e-12 * (1.0 + s[k].abs()));
        }
    }

    #[test]
    fn radial_source_gives_radial_field(angle in 0.0f64..std::f64::consts::TAU, r in 1.6f64..3.0) {
        let f = radial_field();
        let p = [r * angle.cos(), r * angle.sin(), 0.0];
        let v = f.eval(p);
        let reference = f.eval([r, 0.0, 0.0])[0].abs();
        let mag = v[0].hypot(v[1]);
        prop_assert!((mag - reference).abs() <= 1e-2 * reference, "{mag} vs {reference}");
        let cross = (v[0] * p[1] - v[1] * p[0]).abs() / (mag * r);
        prop_assert!(cross <= 1e-2);
    }
}

fn radial_field() -> &'static NewtonianField {
    use std::sync::OnceLock;
    static F: OnceLock<NewtonianField> = OnceLock::new();
    F.get_or_init(|| NewtonianField::new(e("exp(-4*(x^2 + y^2))"), &[[-1.5, 1.5], [-1.5, 1.5]], 48).unwrap())
}

fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        Just("pi".to_string()),
        (0u32..100).prop_map(|v| format!("{}", v as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]))
                .prop_map(|(a, b, op)| format!("({a}){op}({b})")),
            (inner.clone(), prop::sample::select(vec!["sin", "cos", "exp", "sqrt", "abs"]))
                .prop_map(|(a, f)| format!("{f}({a})")),
            inner.prop_map(|a| format!("-{a}")),
        ]
    })
}

#[test]
fn laplacian_1d_matches_elimination() {
    let n = 10;
    let mut t = TripletBuilder::new(n);
    let mut dense = vec![vec![0.0; n]; n];
    for i in 0..n {
        t.add(i, i, 2.0);
        dense[i][i] = 2.0;
        if i > 0 {
            t.add(i, i - 1, -1.0);
            dense[i][i - 1] = -1.0;
        }
        if i + 1 < n {
            t.add(i, i + 1, -1.0);
            dense[i][i + 1] = -1.0;
        }
    }
    let m = t.build();
    let b: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
    let want = dense_solve(dense, b.clone());
    let (x, rep) = solve_cg(&m, &b, 1e-13, 100).unwrap();
    assert!(rep.converged && rep.iterations <= n);
    for (p, q) in x.iter().zip(&want) {
        assert!((p - q).abs() < 1e-11, "{p} vs {q}");
    }
    let (y, _) = solve_bicgstab(&m, &b, 1e-13, 200).unwrap();
    for (p, q) in y.iter().zip(&want) {
        assert!((p - q).abs() < 1e-11);
    }
}

fn convection_diffusion(n: usize) -> ProblemSpec {
    let co = CoefficientSet {
        a: [[e("1 + x^2"), e("0.2")], [e("0.2"), e("1")]],
        drift: [e("3"), e("-2*x")],
        c: e("1 + y"),
        f: e("exp(x)*cos(y)"),
        m_bound: 2.0,
        lambda: 0.7,
        ..Default::default()
    };
    let mut s = ProblemSpec::new(Arc::new(build_rect_mesh([0.0, 1.0, 0.0, 1.0], n, n).unwrap()), co);
    s.solver.tol = 1e-13;
    s
}

#[test]
fn convection_diffusion_matches_dense_solve() {
    let spec = convection_diffusion(8);
    let (m, b) = assemble_system(&spec).unwrap();
    assert!(!m.is_symmetric(0.0));
    let want = dense_solve(m.to_dense(), b);
    let u = solve_weak(&spec).unwrap();
    for (p, q) in u.values.iter().zip(&want) {
        assert!((p - q).abs() <= 1e-6 * (1.0 + q.abs()));
    }
    let scale = want.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(scale > 1e-3);
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let spec = convection_diffusion(12);
    let (a, b) = (solve_weak(&spec).unwrap(), solve_weak(&spec).unwrap());
    assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(to_sorted_json(&a.report).unwrap(), to_sorted_json(&b.report).unwrap());
    assert_eq!(assemble_system(&spec).unwrap().0.to_coordinate_text(), assemble_system(&spec).unwrap().0.to_coordinate_text());
}

#[test]
fn nondivergence_conversion_equals_direct_solve() {
    let mesh = Arc::new(build_rect_mesh([0.0, 1.0, 0.0, 1.0], 10, 10).unwrap());
    let (drift, div_a) = ([e("1"), e("y")], [e("2*x"), e("0")]);
    let base = CoefficientSet {
        a: [[e("1 + x^2"), e("0")], [e("0"), e("1")]],
        c: e("1"),
        f: e("1 + x*y"),
        m_bound: 2.0,
        ..Default::default()
    };
    let mut nd = ProblemSpec::new(mesh.clone(), CoefficientSet { drift: drift.clone(), div_a: Some(div_a.clone()), ..base.clone() });
    nd.form = Form::Nondivergence;
    let converted = nondiv_to_div(&nd).unwrap();
    let direct = ProblemSpec::new(
        mesh,
        CoefficientSet {
            drift: [0, 1].map(|k| Expr::add(drift[k].clone(), div_a[k].clone())),
            div_a: Some(div_a),
            ..base
        },
    );
    assert_eq!(converted, direct);
    let (u, v) = (solve_weak(&converted).unwrap(), solve_weak(&direct).unwrap());
    assert_eq!(u.values, v.values);
}

#[test]
fn weight_scaling_leaves_transform_unchanged() {
    let mesh = Arc::new(build_rect_mesh([0.0, 1.0, 0.0, 1.0], 8, 8).unwrap());
    let co = CoefficientSet { drift: [e("x - y"), e("1")], c: e("1"), f: e("1"), ..Default::default() };
    let spec = ProblemSpec::new(mesh.clone(), co);
    let t = construct_rho(&spec.coeffs, mesh, &RhoOptions::new(spec.enclosure)).unwrap();
    let base = solve_weak(&transform_problem(&spec, &t).unwrap()).unwrap();
    for k in [1e-3, 0.37, 3.0, 250.0] {
        let s = t.scaled(k).unwrap();
        assert!((s.k1 - t.k1).abs() <= 1e-10 * t.k1);
        assert!((s.div_residual - t.div_residual).abs() <= 1e-10);
        for (a, b) in s.b_elements.iter().zip(&t.b_elements) {
            assert!((a[0] - b[0]).abs() <= 1e-10 && (a[1] - b[1]).abs() <= 1e-10);
        }
        let u = solve_weak(&transform_problem(&spec, &s).unwrap()).unwrap();
        let d = u.values.iter().zip(&base.values).map(|(p, q)| (p - q).abs()).fold(0.0f64, f64::max);
        assert!(d <= 1e-10, "k = {k}: {d}");
    }
    assert!(t.scaled(0.0).is_err());
}

#[test]
fn operator_norm_is_homogeneous_and_translation_invariant() {
    let sup = [[-1.0, 1.0], [-1.0, 1.0]];
    let base = estimate_operator_norm(&[e("1 - x^2*y^2")], &sup, 1.5, 16, 12).unwrap();
    let scaled = estimate_operator_norm(&[e("-3*(1 - x^2*y^2)")], &sup, 1.5, 16, 12).unwrap();
    let shifted_sup = [[1.0, 3.0], [-0.5, 1.5]];
    let shifted = estimate_operator_norm(&[e("1 - (x - 2)^2*(y - 0.5)^2")], &shifted_sup, 1.5, 16, 12).unwrap();
    let r = base.samples[0].ratio;
    assert!(r.is_finite() && r > 0.0);
    assert!((scaled.samples[0].ratio - r).abs() <= 1e-10 * r);
    assert!((shifted.samples[0].ratio - r).abs() <= 1e-8 * r);
}

#[test]
fn certificate_bound_recomputes_exactly() {
    let mesh = Arc::new(build_rect_mesh([0.0, 1.0, 0.0, 1.0], 8, 8).unwrap());
    let u = "sin(pi*x)*sin(pi*y)";
    let co = CoefficientSet { c: e("2 + x"), f: e(&format!("(2*pi^2 + 2 + x)*{u}")), ..Default::default() };
    let spec = ProblemSpec::new(mesh, co);
    let cand = Candidate {
        phi: e(&format!("{u} + 0.1*x*y*(1 - x)*(1 - y)")),
        grad: [e("pi*cos(pi*x)*sin(pi*y) + 0.1*y*(1 - y)*(1 - 2*x)"), e("pi*sin(pi*x)*cos(pi*y) + 0.1*x*(1 - x)*(1 - 2*y)")],
        hess: [
            [e(&format!("-pi^2*{u} - 0.2*y*(1 - y)")), e("pi^2*cos(pi*x)*cos(pi*y) + 0.1*(1 - 2*x)*(1 - 2*y)")],
            [e("pi^2*cos(pi*x)*cos(pi*y) + 0.1*(1 - 2*x)*(1 - 2*y)"), e(&format!("-pi^2*{u} - 0.2*x*(1 - x)"))],
        ],
    };
    let cert = certify_l2(&cand, &spec, 1.3, 2.0).unwrap();
    assert_eq!(cert.bound, cert.k1 / cert.gamma * cert.residual_l2);
    assert!(!cert.advisory);
}

#[test]
fn disk_enclosure_must_cover_mesh() {
    let m: TriMesh = build_rect_mesh([0.0, 2.0, 0.0, 1.0], 2, 1).unwrap();
    assert!(Enclosure::new([0.0, 0.0], 1.0, &m).is_err());
    assert!(Enclosure::new([1.0, 0.5], 1.2, &m).is_ok());
}

#[test]
fn planar_defect_decreases_under_refinement() {
    use driftfree::divsolve::{verify_div_identity, TestSpace};
    let mut defects = vec![];
    for k in 0..4 {
        let field = NewtonianField::new(e("step(1 - x^2 - y^2)"), &[[-1.0, 1.0], [-1.0, 1.0]], 16 << k).unwrap();
        let mesh = build_rect_mesh([-1.5, 1.5, -1.5, 1.5], 4 << k, 4 << k).unwrap();
        defects.push(verify_div_identity(&field, TestSpace::Hats2(&mesh), 1, 4).unwrap().max_defect);
    }
    let two_level = (defects[0] / defects[1]).log2();
    assert!(two_level >= 0.9, "two-level order {two_level}, {defects:?}");
    assert!(defects[3] < defects[0]);
    let x: Vec<f64> = (0..4).map(|k| -(k as f64) * 2f64.ln()).collect();
    let y: Vec<f64> = defects.iter().map(|d| d.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 4.0, y.iter().sum::<f64>() / 4.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!(slope >= 0.9, "fitted order {slope}, {defects:?}");
}
