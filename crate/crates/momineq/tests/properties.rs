//! Property tests for the structural invariants: constructor contracts,
//! positivity of the quadratic forms, parser round-trips, and method
//! agreement on a fixed corpus.

use proptest::prelude::*;

use momineq::counterexample::search_two_point;
use momineq::expr::{parse_expr, print_expr, BinaryOp, ExprAST, UnaryOp};
use momineq::model::{build_cauchy_discrete, build_general_discrete, DiscreteJoint, RExponent};
use momineq::moments::{delta_parts, expectation_xy, DeltaMethod, MomentSign};
use momineq::positivity::{
    cauchy_positivity_witness, check_psd_discrete, sin_quadratic_form, Verdict, DEFAULT_PSD_TOL,
};
use momineq::rng::SplitMix64;

// --- strategies --------------------------------------------------------------

fn arb_positive_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..10.0f64, n)
}

fn arb_cauchy_model() -> impl Strategy<Value = DiscreteJoint<f64>> {
    (1usize..=8)
        .prop_flat_map(|n| (arb_positive_vec(n), arb_positive_vec(n), Just(n)))
        .prop_map(|(c, d, n)| {
            let atoms: Vec<f64> = (0..n).map(|i| i as f64 - 3.0 + 0.1 * i as f64).collect();
            build_cauchy_discrete(&atoms, &c, &d, true).expect("valid cauchy model")
        })
}

/// Convex mixtures of vv^T with entrywise non-negative v: generators of
/// the completely positive class.
fn arb_completely_positive() -> impl Strategy<Value = DiscreteJoint<f64>> {
    (1usize..=6, 1usize..=4)
        .prop_flat_map(|(n, k)| {
            (
                prop::collection::vec(prop::collection::vec(0.0..1.0f64, n), k),
                prop::collection::vec(0.05..1.0f64, k),
                prop::collection::vec(-5.0..5.0f64, n),
                Just(n),
            )
        })
        .prop_filter_map("atoms must be distinct, matrix nonzero", |(vs, mix, atoms, n)| {
            for i in 0..n {
                for j in (i + 1)..n {
                    if (atoms[i] - atoms[j]).abs() < 1e-6 {
                        return None;
                    }
                }
            }
            let mut w = vec![vec![0.0f64; n]; n];
            for (v, m) in vs.iter().zip(mix.iter()) {
                for i in 0..n {
                    for j in 0..n {
                        w[i][j] += m * v[i] * v[j];
                    }
                }
            }
            let total: f64 = w.iter().flatten().sum();
            if total < 1e-9 {
                return None;
            }
            for row in w.iter_mut() {
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            Some(build_general_discrete(&atoms, &w).expect("valid PSD model"))
        })
}

fn arb_expr() -> impl Strategy<Value = ExprAST> {
    let leaf = prop_oneof![
        (0.0..100.0f64).prop_map(ExprAST::Constant),
        Just(ExprAST::Variable),
    ];
    leaf.prop_recursive(6, 64, 8, |inner| {
        prop_oneof![
            (
                prop_oneof![
                    Just(UnaryOp::Neg),
                    Just(UnaryOp::Exp),
                    Just(UnaryOp::Log),
                    Just(UnaryOp::Abs),
                    Just(UnaryOp::Sqrt)
                ],
                inner.clone()
            )
                .prop_map(|(op, child)| ExprAST::Unary(op, Box::new(child))),
            (
                prop_oneof![
                    Just(BinaryOp::Add),
                    Just(BinaryOp::Sub),
                    Just(BinaryOp::Mul),
                    Just(BinaryOp::Div),
                    Just(BinaryOp::Pow)
                ],
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| ExprAST::Binary(op, Box::new(l), Box::new(r))),
        ]
    })
}

// --- model_core invariants ---------------------------------------------------

proptest! {
    #[test]
    fn normalized_cauchy_sums_to_one(model in arb_cauchy_model()) {
        prop_assert!((model.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_c_is_rank_one(
        d in prop::collection::vec(0.01..10.0f64, 2..=6),
        c0 in 0.1..5.0f64,
    ) {
        let n = d.len();
        let atoms: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let c = vec![c0; n];
        let m = build_cauchy_discrete(&atoms, &c, &d, true).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let lhs = m.weight(i, j) * m.weight(k, l);
                        let rhs = m.weight(i, l) * m.weight(k, j);
                        prop_assert!((lhs - rhs).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    // --- positivity invariants ----------------------------------------------

    #[test]
    fn cauchy_models_certify(model in arb_cauchy_model()) {
        let rep = check_psd_discrete(&model, DEFAULT_PSD_TOL);
        prop_assert_eq!(rep.verdict, Verdict::Certified);
    }

    #[test]
    fn certified_sin_form_nonnegative(model in arb_cauchy_model(), seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        for _ in 0..64 {
            let t = rng.uniform(-100.0, 100.0);
            prop_assert!(sin_quadratic_form(&model, t) >= -1e-12);
        }
    }

    #[test]
    fn completely_positive_certifies_and_holds(model in arb_completely_positive()) {
        let rep = check_psd_discrete(&model, DEFAULT_PSD_TOL);
        prop_assert_eq!(rep.verdict, Verdict::Certified);
        let m = momineq::model::Model::Discrete(model);
        for rv in [0.5, 1.0, 1.9, 2.0] {
            let parts = delta_parts(&m, RExponent::new(rv).unwrap(), &DeltaMethod::Exact).unwrap();
            let scale = parts.e_plus.value.max(1.0);
            prop_assert!(parts.delta.value >= -1e-10 * scale, "r={rv}");
        }
    }

    #[test]
    fn witness_form_nonnegative(
        pairs in prop::collection::vec((0.01..10.0f64, -1.0..1.0f64), 1..=8)
    ) {
        let (c, eta): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let v = cauchy_positivity_witness(&c, &eta).unwrap();
        prop_assert!(v >= -1e-12, "form value {v}");
    }

    #[test]
    fn psd_verdict_scale_invariant(model in arb_cauchy_model(), lambda in 1e-8..1e3f64) {
        let scaled: Vec<Vec<f64>> = model
            .weights()
            .iter()
            .map(|row| row.iter().map(|w| w * lambda).collect())
            .collect();
        // bypass normalization by checking the raw matrix through a fresh
        // model with adjusted tail is impossible; assert on eigen scale math
        // instead: verdicts agree between the model and its scaled matrix
        let rep = check_psd_discrete(&model, DEFAULT_PSD_TOL);
        let scaled_model = DiscreteJoint::new(
            model.atoms().to_vec(),
            scaled,
            (1.0 - lambda * model.total_mass()).max(0.0),
        );
        if let Ok(sm) = scaled_model {
            let rep2 = check_psd_discrete(&sm, DEFAULT_PSD_TOL);
            prop_assert_eq!(rep.verdict, rep2.verdict);
        }
    }

    // --- moments invariants ---------------------------------------------------

    #[test]
    fn marginals_equal_and_symmetric(model in arb_completely_positive()) {
        // symmetric weights make both marginals the same vector
        let marg = model.marginal();
        for (i, &row_sum) in marg.iter().enumerate() {
            let col: f64 = (0..model.n()).map(|j| model.weight(j, i)).sum();
            prop_assert!((row_sum - col).abs() <= 1e-14);
        }
    }

    #[test]
    fn r2_identity_on_random_models(model in arb_completely_positive()) {
        let m = momineq::model::Model::Discrete(model);
        let parts = delta_parts(&m, RExponent::new(2.0).unwrap(), &DeltaMethod::Exact).unwrap();
        let exy = expectation_xy(&m).unwrap();
        prop_assert!(exy.value >= -1e-12);
        let scale = parts.e_plus.value.max(1.0);
        prop_assert!((parts.delta.value - 4.0 * exy.value).abs() <= 1e-10 * scale);
    }

    #[test]
    fn finiteness_bound_random(model in arb_cauchy_model(), rv in 0.1..1.9f64) {
        let r = RExponent::new(rv).unwrap();
        let a_r = r.a_r().unwrap();
        let marg = model.marginal();
        let ex: f64 = model
            .atoms()
            .iter()
            .zip(marg.iter())
            .map(|(&a, &w)| w * a.abs().powf(rv))
            .sum();
        for sign in [MomentSign::Plus, MomentSign::Minus] {
            let est = momineq::moments::moment_discrete(&model, r, sign).unwrap();
            prop_assert!(est.value <= a_r * 2.0 * ex + 1e-10);
        }
    }

    #[test]
    fn exact_estimates_satisfy_error_contract(model in arb_cauchy_model(), rv in 0.1..3.0f64) {
        let r = RExponent::new(rv).unwrap();
        let est = momineq::moments::moment_discrete(&model, r, MomentSign::Plus).unwrap();
        prop_assert!(est.abs_error_bound <= 1e-12 * est.value.abs().max(1.0));
    }

    // --- counterexample sweep -------------------------------------------------

    #[test]
    fn no_failures_at_or_below_two(
        rv in 0.1..=2.0f64,
        a_grid in prop::collection::vec(-30.0..30.0f64, 1..30),
        p_grid in prop::collection::vec(1e-6..0.999999f64, 1..20),
    ) {
        let hits = search_two_point(RExponent::new(rv).unwrap(), &a_grid, &p_grid).unwrap();
        prop_assert!(hits.is_empty(), "spurious failure at r={rv}: {:?}", hits.first());
    }

    // --- parser invariants ------------------------------------------------------

    #[test]
    fn print_parse_round_trip(ast in arb_expr()) {
        let printed = print_expr(&ast);
        let reparsed = parse_expr(&printed);
        prop_assert!(reparsed.is_ok(), "`{printed}` failed to reparse: {reparsed:?}");
        prop_assert_eq!(reparsed.unwrap(), ast, "round trip changed `{}`", printed);
    }

    #[test]
    fn parser_never_panics_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_expr(&text);
        let _ = momineq::modelfile::parse_model_file_bytes(&bytes);
    }
}

// --- method agreement corpus -------------------------------------------------

/// Exact, quadrature (discrete models smoothed with eps = 1e-3), and Monte
/// Carlo agree within their combined error bounds on a fixed corpus.
#[test]
fn method_agreement_golden_corpus() {
    use momineq::model::Model;

    let mut models: Vec<(String, Model<f64>)> = Vec::new();
    let mut rng = SplitMix64::new(0xC0FFEE);
    for k in 0..4 {
        let n = 2 + k;
        let atoms: Vec<f64> = (0..n).map(|i| -2.0 + 1.3 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.uniform(0.2, 8.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.uniform(0.2, 8.0)).collect();
        models.push((
            format!("cauchy-{n}"),
            Model::Discrete(build_cauchy_discrete(&atoms, &c, &d, true).unwrap()),
        ));
    }
    for (a, p) in [(2.0, 0.3), (5.0, 0.1)] {
        let q: f64 = 1.0 - p;
        models.push((
            format!("two-point-a{a}"),
            Model::Discrete(
                build_general_discrete(&[a, -1.0], &[vec![p * p, p * q], vec![p * q, q * q]])
                    .unwrap(),
            ),
        ));
    }
    models.push((
        "uniform-remark".into(),
        Model::Density(momineq::model::build_uniform_remark()),
    ));
    models.push((
        "smoothed-r3".into(),
        Model::Density(
            momineq::model::build_smoothed(
                &momineq::model::build_counterexample(RExponent::new(3.0).unwrap()).unwrap(),
                0.1,
            )
            .unwrap(),
        ),
    ));
    models.push((
        "mixture".into(),
        Model::Density(
            momineq::model::DensityModel::mixture(vec![
                momineq::model::UniformComponent {
                    center: -1.0,
                    halfwidth: 0.5,
                    mass: 0.6,
                },
                momineq::model::UniformComponent {
                    center: 2.0,
                    halfwidth: 1.0,
                    mass: 0.4,
                },
            ])
            .unwrap(),
        ),
    ));
    models.push((
        "product-two-seg".into(),
        Model::Density(
            momineq::model::DensityModel::product(vec![
                momineq::model::MarginalSegment {
                    lo: 0.0,
                    hi: 1.0,
                    height: 0.5,
                },
                momineq::model::MarginalSegment {
                    lo: 2.0,
                    hi: 3.0,
                    height: 0.5,
                },
            ])
            .unwrap(),
        ),
    ));
    assert_eq!(models.len(), 10);

    let r_grid = [0.5, 1.0, 1.5, 2.0, 3.0];
    for (name, model) in &models {
        for (k, &rv) in r_grid.iter().enumerate() {
            let r = RExponent::new(rv).unwrap();
            let mc = delta_parts(
                model,
                r,
                &DeltaMethod::MonteCarlo {
                    n: 40_000,
                    seed: 0x5EED + k as u64,
                    workers: 2,
                },
            )
            .unwrap();
            let reference = match model {
                Model::Discrete(_) => {
                    let exact = delta_parts(model, r, &DeltaMethod::Exact).unwrap();
                    let quad =
                        delta_parts(model, r, &DeltaMethod::Quadrature { rel_tol: 1e-8 }).unwrap();
                    let budget =
                        exact.delta.abs_error_bound + quad.delta.abs_error_bound + 1e-9;
                    assert!(
                        (exact.delta.value - quad.delta.value).abs() <= budget,
                        "{name} r={rv}: exact {} vs quadrature {} (budget {budget:.3e})",
                        exact.delta.value,
                        quad.delta.value,
                    );
                    exact
                }
                Model::Density(_) => {
                    delta_parts(model, r, &DeltaMethod::Quadrature { rel_tol: 1e-7 }).unwrap()
                }
            };
            let budget =
                1.5 * (mc.delta.abs_error_bound + reference.delta.abs_error_bound) + 1e-9;
            assert!(
                (mc.delta.value - reference.delta.value).abs() <= budget,
                "{name} r={rv}: mc {} ± {} vs reference {}",
                mc.delta.value,
                mc.delta.abs_error_bound,
                reference.delta.value,
            );
        }
    }
}

/// The generic core runs at f32 as well; sanity-check a couple of paths.
#[test]
fn f32_instantiation() {
    let m = build_cauchy_discrete(&[0.0f32, 1.0, 2.5], &[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0], true)
        .unwrap();
    assert!((m.total_mass() - 1.0).abs() < 1e-5);
    let rep = check_psd_discrete(&m, 1e-5f32);
    assert_eq!(rep.verdict, Verdict::Certified);
    let r = RExponent::new(1.0f32).unwrap();
    let est = momineq::moments::moment_discrete(&m, r, MomentSign::Plus).unwrap();
    assert!(est.value > 0.0);
}
