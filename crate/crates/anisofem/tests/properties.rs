//! Property tests over randomly generated inputs.

use std::sync::Arc;

use anisofem::anisofield::{CaseId, FieldSpec, ManufacturedCase, ALPHA_MAX};
use anisofem::check::dense_inverse_norm1;
use anisofem::fem::{make_space, Family, RieszMap};
use anisofem::geometry::{classify_boundary, structured_quad_mesh, structured_tri_mesh, BoundaryTag};
use anisofem::schemes::SolveStatus;
use anisofem::sparse::{lu_factor, CooBuilder, CsrMatrix};
use anisofem::spectral::{regularity_violations, spectral_solve, FourierRhs, Mode};
use anisofem::studies::config::parse_run_config;
use anisofem::studies::output::{parse_records_csv, record_line, to_csv};
use anisofem::studies::{observed_order, StudyOutput, StudyRecord};
use anisofem::Exec;
use proptest::prelude::*;

fn any_finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(f64::NAN),
        Just(f64::INFINITY),
        (-300i32..300, -1.0f64..1.0).prop_map(|(e, m)| m * 10f64.powi(e)),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

fn any_record() -> impl Strategy<Value = StudyRecord> {
    (
        prop::sample::select(vec!["inflow", "stabilized", "standard"]),
        1usize..10_000,
        prop::collection::vec(any_finite(), 12),
        prop::sample::select(vec![SolveStatus::Ok, SolveStatus::IllConditioned, SolveStatus::Singular]),
    )
        .prop_map(|(scheme, n, f, status)| StudyRecord {
            scheme: scheme.to_string(),
            n,
            h: f[0],
            eps: f[1],
            sigma: f[2],
            alpha: f[3],
            err_l2_abs: f[4],
            err_h1_abs: f[5],
            err_l2_rel: f[6],
            err_h1_rel: f[7],
            q_or_xi_l2_norm: f[8],
            q_or_xi_h1_norm: f[9],
            cond1: f[10],
            solve_status: status,
            wall_time_seconds: f[11],
        })
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(records in prop::collection::vec(any_record(), 0..8)) {
        let text = to_csv(&StudyOutput::Records(records.clone()));
        prop_assert_eq!(text.lines().count(), records.len() + 1);
        let back = parse_records_csv(&text).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            prop_assert_eq!(record_line(a), record_line(b));
            prop_assert!(same_bits(a.err_l2_abs, b.err_l2_abs) && same_bits(a.cond1, b.cond1) && same_bits(a.h, b.h));
        }
    }

    #[test]
    fn config_number_lists(ns in prop::collection::vec(1usize..500, 1..6), sig in prop::collection::vec(1e-16f64..1.0, 1..6)) {
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        let text = format!(
            "[s]\nkind = sigma_sweep\nn = {}\nsigma = {}\n",
            list(ns.iter().map(|n| n.to_string()).collect()),
            list(sig.iter().map(|s| format!("{s:e}")).collect()),
        );
        let cfg = parse_run_config(&text).unwrap();
        prop_assert_eq!(&cfg.studies[0].n, &ns);
        prop_assert_eq!(cfg.studies[0].sigma.values(0.1), sig);
    }

    #[test]
    fn exec_policies_agree(n in 0usize..300) {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = Exec::Sequential.map(n, f);
        let b = Exec::Parallel.map(n, f);
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()) && a.len() == n);
    }

    #[test]
    fn tags_partition_boundary(nx in 1usize..12, ny in 1usize..12, alpha in 0.0..ALPHA_MAX, tri in any::<bool>()) {
        let mesh = if tri { structured_tri_mesh(nx, ny, 1.0, 1.0) } else { structured_quad_mesh(nx, ny, 1.0, 1.0) }.unwrap();
        let f = FieldSpec::variable_alpha(alpha).unwrap();
        let t = classify_boundary(&mesh, &f).unwrap();
        let total = t.count(BoundaryTag::Dirichlet) + t.count(BoundaryTag::Inflow) + t.count(BoundaryTag::Outflow);
        prop_assert_eq!(total, 2 * (nx + ny));
    }

    #[test]
    fn b_is_unit_and_u0_constant_along_b(alpha in 0.0..ALPHA_MAX, x in 0.001f64..0.999, y in 0.001f64..0.999) {
        let f = FieldSpec::variable_alpha(alpha).unwrap();
        let b = f.eval_b(x, y).unwrap();
        prop_assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - 1.0).abs() <= 1e-14);
        for id in [CaseId::Smooth, CaseId::LowReg] {
            let (_, g) = ManufacturedCase::new(id, alpha, 0.1).unwrap().u0(x, y).unwrap();
            prop_assert!((b[0] * g[0] + b[1] * g[1]).abs() <= 1e-11 * (1.0 + g[0].abs() + g[1].abs()));
        }
    }

    #[test]
    fn regularity_holds(
        modes in prop::collection::vec((1u32..25, 0u32..25, -3.0f64..3.0), 1..8),
        eps in prop_oneof![Just(0.0), 1e-14f64..1.0],
        sigma in prop_oneof![Just(0.0), 1e-14f64..1.0],
        s in 0.0f64..4.0,
    ) {
        prop_assume!(eps > 0.0 || sigma > 0.0);
        let f = FourierRhs::new(modes.into_iter().map(|(k, l, coef)| Mode { k, l, coef }).collect()).unwrap();
        let sol = spectral_solve(&f, eps, sigma).unwrap();
        prop_assert_eq!(regularity_violations(&f, &sol, s), 0);
    }

    #[test]
    fn observed_order_is_log2_on_halving(e in 1e-12f64..1.0, r in 0.5f64..100.0, h in 1e-4f64..1.0) {
        let o = observed_order(e * r, e, h, h / 2.0);
        prop_assert!((o - r.log2()).abs() <= 1e-12 * (1.0 + r.log2().abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cond1_estimate_is_sandwiched(
        n in 2usize..30,
        entries in prop::collection::vec((0usize..900, -1.0f64..1.0), 0..80),
        diag in prop::collection::vec(0.5f64..3.0, 30),
    ) {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, diag[i]);
        }
        for (p, v) in entries {
            b.push((p / 30) % n, p % n, v);
        }
        let a = b.build();
        let Some(inv) = dense_inverse_norm1(&a.to_dense()) else { return Ok(()) };
        let exact = a.norm1() * inv;
        prop_assume!(exact < 1e12);
        let est = lu_factor(a).unwrap().cond1_estimate();
        prop_assert!(est <= exact * (1.0 + 1e-10), "{est} > {exact}");
        prop_assert!(est >= 0.1 * exact, "{est} << {exact}");
    }

    #[test]
    fn lu_solves_known_systems(n in 1usize..40, seed in any::<u64>()) {
        let mut s = seed | 1;
        let mut next = || { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 2000) as f64 / 1000.0 - 1.0 };
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 4.0 + next() } else if next() > 0.6 { next() } else { 0.0 }).collect()).collect();
        let a = CsrMatrix::from_dense(&rows);
        let x: Vec<f64> = (0..n).map(|_| next()).collect();
        let rhs = a.matvec(&x);
        let y = lu_factor(a).unwrap().solve(&rhs).unwrap();
        prop_assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn star_norm_homogeneous_and_dominated(alpha in 0.0f64..2.0, c in -10.0f64..10.0, seed in any::<u64>()) {
        prop_assume!(c.abs() > 1e-3);
        let field = FieldSpec::variable_alpha(alpha).unwrap();
        let mesh = Arc::new(structured_quad_mesh(4, 4, 1.0, 1.0).unwrap());
        let tags = classify_boundary(&mesh, &field).unwrap();
        let space = make_space(mesh, Family::Q2, &[BoundaryTag::Dirichlet], &tags).unwrap();
        let riesz = RieszMap::new(&space, &field, Exec::Sequential).unwrap();
        let mut s = seed | 1;
        let q: Vec<f64> = (0..space.num_dofs()).map(|_| { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 1000) as f64 / 500.0 - 1.0 }).collect();
        let base = riesz.star_norm(&q).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| c * v).collect();
        let sc = riesz.star_norm(&scaled).unwrap();
        prop_assert!((sc - c.abs() * base).abs() <= 1e-12 * c.abs() * base.max(1e-300));
        prop_assert!(base <= riesz.par_seminorm(&q) * (1.0 + 1e-10));
    }
}
