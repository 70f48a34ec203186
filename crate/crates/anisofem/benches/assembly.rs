//! Sequential versus data-parallel execution for assembly, error norms and a
//! small study sweep. Without the `parallel` feature both variants run the
//! same sequential code.

use std::hint::black_box;
use std::sync::Arc;

use anisofem::anisofield::{CaseId, FieldSpec, ManufacturedCase};
use anisofem::fem::{assemble_forms, error_norms, interpolate, make_space, Family, Form};
use anisofem::geometry::{classify_boundary, structured_quad_mesh, BoundaryTag};
use anisofem::studies::{run_h_convergence, StudyConfig, StudyKind};
use anisofem::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn assembly(c: &mut Criterion) {
    let field = FieldSpec::variable_alpha(2.0).expect("valid alpha");
    let mut g = c.benchmark_group("assemble_q2");
    for n in [20, 40] {
        let mesh = Arc::new(structured_quad_mesh(n, n, 1.0, 1.0).expect("valid mesh"));
        let tags = classify_boundary(&mesh, &field).expect("regular field");
        let space = make_space(mesh, Family::Q2, &[BoundaryTag::Dirichlet], &tags).expect("compatible");
        for (name, exec) in POLICIES {
            g.bench_with_input(BenchmarkId::new(name, n), &space, |b, s| {
                b.iter(|| assemble_forms(black_box(&[Form::Full, Form::Par, Form::Mass]), s, &field, exec).expect("assembles"))
            });
        }
    }
    g.finish();
}

fn norms(c: &mut Criterion) {
    let field = FieldSpec::variable_alpha(2.0).expect("valid alpha");
    let case = ManufacturedCase::new(CaseId::Smooth, 2.0, 1e-10).expect("valid case");
    let mesh = Arc::new(structured_quad_mesh(40, 40, 1.0, 1.0).expect("valid mesh"));
    let tags = classify_boundary(&mesh, &field).expect("regular field");
    let space = make_space(mesh, Family::Q2, &[], &tags).expect("compatible");
    let u = interpolate(&space, |x, y| case.u(x, y).map(|p| p.0)).expect("inside domain");
    let mut g = c.benchmark_group("error_norms_q2_n40");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| error_norms(&space, black_box(&u), &|x, y| case.u(x, y), exec).expect("finite")));
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = StudyConfig::defaults(StudyKind::HConvergence);
    cfg.n = vec![2, 4, 8];
    let mut g = c.benchmark_group("h_convergence_sweep");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        cfg.exec = exec;
        g.bench_function(name, |b| b.iter(|| run_h_convergence(black_box(&cfg))));
    }
    g.finish();
}

criterion_group!(benches, assembly, norms, sweep);
criterion_main!(benches);
