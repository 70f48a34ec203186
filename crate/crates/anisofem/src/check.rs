//! Invariant suite run by `anisofem check`.
//!
//! Each check is a small self-contained experiment returning a one-line
//! detail on success. Random inputs come from fixed seeds so the suite is
//! reproducible. The condition number oracle inverts matrices densely with its
//! own Gauss-Jordan elimination and does not touch the sparse solver.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anisofield::{diffusion_tensor, rhs_functional, CaseId, FieldSpec, ManufacturedCase, ALPHA_MAX};
use crate::exec::Exec;
use crate::fem::{assemble, assemble_forms, interpolate, make_space, reference_basis, star_h_norm, Family, Form, RieszMap};
use crate::geometry::{classify_boundary, structured_quad_mesh, structured_tri_mesh, BoundaryTag};
use crate::schemes::{build_system, solve_scheme, ProblemSpec, Scheme, SolveStatus};
use crate::sparse::{lu_factor, CsrMatrix};
use crate::spectral::{regularity_violations, spectral_solve, FourierRhs, Mode};
use crate::studies::output::{parse_records_csv, record_line, to_csv};
use crate::studies::{convergence_orders, run_h_convergence, StudyConfig, StudyKind, StudyOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(Exec) -> Result<String, String>;

pub const CHECKS: [(&str, Check); 22] = [
    ("boundary tag partition", tag_partition),
    ("tags stable under refinement", tag_refinement),
    ("mesh size halves with n", mesh_halving),
    ("unit b-field", unit_field),
    ("parallel gradient of u0 vanishes", parallel_gradient_u0),
    ("diffusion tensor symmetric and elliptic", tensor_ellipticity),
    ("q vanishes on the inflow side", q_inflow_trace),
    ("closed-form gradients match finite differences", closed_form_gradients),
    ("partition of unity", partition_of_unity),
    ("Q2 mass matrix exact", q2_mass_exact),
    ("assembled forms symmetric", assembly_symmetry),
    ("A_par kernel on aligned field", par_kernel),
    ("assembly deterministic", assembly_determinism),
    ("star norm homogeneous and dominated", star_norm_properties),
    ("LU residual contract", lu_residual),
    ("cond1 estimate within dense oracle sandwich", cond1_sandwich),
    ("decoupling at eps = 1", decoupling_eps_one),
    ("schemes agree on aligned field", aligned_agreement),
    ("inflow cond1 independent of eps", inflow_cond_eps),
    ("standard scheme cond1 grows like 1/eps", standard_degradation),
    ("spectral regularity bounds (100 samples)", spectral_regularity),
    ("CSV round trip, determinism and orders", csv_and_orders),
];

pub fn run_all(exec: Exec) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, f)| match f(exec) {
            Ok(detail) => CheckResult { name, passed: true, detail },
            Err(detail) => CheckResult { name, passed: false, detail },
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fields() -> Vec<FieldSpec> {
    let mut v: Vec<FieldSpec> = [0.0, 1.0, 2.0, ALPHA_MAX].iter().map(|&a| FieldSpec::variable_alpha(a).expect("in range")).collect();
    v.push(FieldSpec::aligned_e2());
    v
}

fn sample_grid(m: usize) -> impl Iterator<Item = (f64, f64)> {
    // cell centres of an m x m grid: strictly interior
    (0..m * m).map(move |k| (((k % m) as f64 + 0.5) / m as f64, ((k / m) as f64 + 0.5) / m as f64))
}

fn tag_partition(_: Exec) -> Result<String, String> {
    let mut meshes = 0;
    for n in [1, 3, 8] {
        for mesh in [structured_quad_mesh(n, n + 1, 1.0, 1.0), structured_tri_mesh(n, n, 1.0, 2.0)] {
            let mesh = mesh.map_err(|e| e.to_string())?;
            for f in fields() {
                let t = classify_boundary(&mesh, &f).map_err(|e| e.to_string())?;
                let total = t.count(BoundaryTag::Dirichlet) + t.count(BoundaryTag::Inflow) + t.count(BoundaryTag::Outflow);
                ensure(total == mesh.boundary().len(), || format!("{total} tags for {} edges", mesh.boundary().len()))?;
                meshes += 1;
            }
        }
    }
    Ok(format!("{meshes} mesh/field pairs"))
}

fn tag_refinement(_: Exec) -> Result<String, String> {
    for n in [2, 5, 10] {
        for f in fields() {
            let coarse = structured_quad_mesh(n, n, 1.0, 1.0).map_err(|e| e.to_string())?;
            let fine = structured_quad_mesh(2 * n, 2 * n, 1.0, 1.0).map_err(|e| e.to_string())?;
            let tc = classify_boundary(&coarse, &f).map_err(|e| e.to_string())?;
            let tf = classify_boundary(&fine, &f).map_err(|e| e.to_string())?;
            // every coarse boundary vertex is a fine one; compare node tags
            for (i, node) in coarse.nodes().iter().enumerate() {
                let Some(tag) = tc.nodes[i] else { continue };
                let j = fine.nodes().iter().position(|p| p == node).ok_or("coarse node missing in fine mesh")?;
                ensure(tf.nodes[j] == Some(tag), || format!("node {node:?}: {tag:?} vs {:?}", tf.nodes[j]))?;
            }
        }
    }
    Ok("n = 2, 5, 10 against 2n".into())
}

fn mesh_halving(_: Exec) -> Result<String, String> {
    for n in [1, 3, 7, 40] {
        let a = structured_quad_mesh(n, n, 1.0, 1.0).map_err(|e| e.to_string())?.h();
        let b = structured_quad_mesh(2 * n, 2 * n, 1.0, 1.0).map_err(|e| e.to_string())?.h();
        ensure(a == 2.0 * b, || format!("n = {n}: {a} vs 2 * {b}"))?;
    }
    Ok("exact for n = 1, 3, 7, 40".into())
}

fn unit_field(_: Exec) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for f in fields() {
        for (x, y) in sample_grid(50) {
            let b = f.eval_b(x, y).map_err(|e| e.to_string())?;
            worst = worst.max(((b[0] * b[0] + b[1] * b[1]).sqrt() - 1.0).abs());
        }
    }
    ensure(worst <= 1e-14, || format!("| |b| - 1 | = {worst:e}"))?;
    Ok(format!("max | |b| - 1 | = {worst:.1e}"))
}

fn parallel_gradient_u0(_: Exec) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 1.0, 2.0, ALPHA_MAX] {
        let f = FieldSpec::variable_alpha(alpha).map_err(|e| e.to_string())?;
        for id in [CaseId::Smooth, CaseId::LowReg] {
            let c = ManufacturedCase::new(id, alpha, 1e-3).map_err(|e| e.to_string())?;
            for (x, y) in sample_grid(50) {
                let b = f.eval_b(x, y).map_err(|e| e.to_string())?;
                let (_, g) = c.u0(x, y).map_err(|e| e.to_string())?;
                let scale = 1.0 + g[0].abs() + g[1].abs();
                worst = worst.max((b[0] * g[0] + b[1] * g[1]).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-12, || format!("|b . grad u0| = {worst:e}"))?;
    Ok(format!("max {worst:.1e}"))
}

fn tensor_ellipticity(_: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let t: f64 = rng.random_range(0.0..2.0 * PI);
        let b = [t.cos(), t.sin()];
        let a_par: f64 = rng.random_range(0.1..3.0);
        let (p, q, r): (f64, f64, f64) = (rng.random_range(0.5..2.0), rng.random_range(-0.3..0.3), rng.random_range(0.5..2.0));
        let a_perp = [[p, q], [q, r]];
        let a = diffusion_tensor(b, a_par, a_perp);
        ensure((a[0][1] - a[1][0]).abs() <= 1e-14, || "asymmetric tensor".into())?;
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let lmin = tr / 2.0 - ((tr / 2.0).powi(2) - det).max(0.0).sqrt();
        let perp_min = (p + r) / 2.0 - (((p - r) / 2.0).powi(2) + q * q).sqrt();
        ensure(lmin >= a_par.min(perp_min) - 1e-12, || format!("lambda_min {lmin} below bound"))?;
    }
    Ok("200 random tensors".into())
}

fn q_inflow_trace(_: Exec) -> Result<String, String> {
    for alpha in [0.0, 2.0] {
        for id in [CaseId::Smooth, CaseId::LowReg] {
            let c = ManufacturedCase::new(id, alpha, 1e-2).map_err(|e| e.to_string())?;
            for j in 0..=50 {
                let q = c.eval(0.0, j as f64 / 50.0).map_err(|e| e.to_string())?.q;
                ensure(q.abs() <= 1e-15, || format!("q(0, {}) = {q:e}", j as f64 / 50.0))?;
            }
        }
    }
    Ok("51 points per case".into())
}

fn closed_form_gradients(_: Exec) -> Result<String, String> {
    let d = 1e-5;
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 2.0] {
        for id in [CaseId::Smooth, CaseId::LowReg] {
            let c = ManufacturedCase::new(id, alpha, 0.3).map_err(|e| e.to_string())?;
            type Eval = fn(&ManufacturedCase, f64, f64) -> Result<(f64, [f64; 2]), crate::anisofield::FieldError>;
            let evals: [Eval; 3] = [ManufacturedCase::u0, ManufacturedCase::perturbation, ManufacturedCase::u];
            for ev in evals {
                for (x, y) in sample_grid(7) {
                    let (_, g) = ev(&c, x, y).map_err(|e| e.to_string())?;
                    let fx = (ev(&c, x + d, y).map_err(|e| e.to_string())?.0 - ev(&c, x - d, y).map_err(|e| e.to_string())?.0) / (2.0 * d);
                    let fy = (ev(&c, x, y + d).map_err(|e| e.to_string())?.0 - ev(&c, x, y - d).map_err(|e| e.to_string())?.0) / (2.0 * d);
                    let rel = ((g[0] - fx).powi(2) + (g[1] - fy).powi(2)).sqrt() / (1.0 + (g[0] * g[0] + g[1] * g[1]).sqrt());
                    worst = worst.max(rel);
                }
            }
        }
    }
    ensure(worst < 1e-6, || format!("relative gradient mismatch {worst:e}"))?;
    Ok(format!("max relative mismatch {worst:.1e}"))
}

fn partition_of_unity(_: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for fam in [Family::P1, Family::P2, Family::Q1, Family::Q2] {
        let (mut v, mut g) = ([0.0; 9], [[0.0; 2]; 9]);
        for _ in 0..100 {
            let (mut s, mut t): (f64, f64) = (rng.random(), rng.random());
            if matches!(fam, Family::P1 | Family::P2) && s + t > 1.0 {
                (s, t) = (1.0 - s, 1.0 - t);
            }
            reference_basis(fam, [s, t], &mut v, &mut g);
            let nl = fam.local_dofs();
            let sum: f64 = v[..nl].iter().sum();
            let gs = g[..nl].iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
            ensure((sum - 1.0).abs() < 1e-13 && gs[0].abs() < 1e-12 && gs[1].abs() < 1e-12, || {
                format!("{}: sum {sum}, grad sum {gs:?}", fam.name())
            })?;
        }
    }
    Ok("P1, P2, Q1, Q2 at 100 points each".into())
}

fn q2_mass_exact(exec: Exec) -> Result<String, String> {
    // 1D quadratic mass on [0, 1] with nodes 0, 1/2, 1
    let m1 = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]].map(|r| r.map(|x: f64| x / 30.0));
    let (lx, ly) = (0.7, 1.3);
    let mesh = Arc::new(structured_quad_mesh(1, 1, lx, ly).map_err(|e| e.to_string())?);
    let f = FieldSpec::aligned_e2();
    let tags = classify_boundary(&mesh, &f).map_err(|e| e.to_string())?;
    let space = make_space(mesh, Family::Q2, &[], &tags).map_err(|e| e.to_string())?;
    let m = assemble(Form::Mass, &space, &f, exec).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for a in 0..9 {
        for b in 0..9 {
            let exact = lx * ly * m1[a % 3][b % 3] * m1[a / 3][b / 3];
            worst = worst.max((m.get(a, b) - exact).abs());
        }
    }
    ensure(worst <= 1e-13, || format!("max entry error {worst:e}"))?;
    Ok(format!("max entry error {worst:.1e}"))
}

fn spaces(n: usize) -> Result<Vec<(FieldSpec, crate::fem::FemSpace)>, String> {
    let mut out = Vec::new();
    for f in [FieldSpec::variable_alpha(2.0).expect("in range"), FieldSpec::aligned_e2()] {
        for fam in [Family::P1, Family::P2, Family::Q1, Family::Q2] {
            let mesh = match fam {
                Family::P1 | Family::P2 => structured_tri_mesh(n, n, 1.0, 1.0),
                _ => structured_quad_mesh(n, n, 1.0, 1.0),
            };
            let mesh = Arc::new(mesh.map_err(|e| e.to_string())?);
            let tags = classify_boundary(&mesh, &f).map_err(|e| e.to_string())?;
            let s = make_space(mesh, fam, &[BoundaryTag::Dirichlet], &tags).map_err(|e| e.to_string())?;
            out.push((f.clone(), s));
        }
    }
    Ok(out)
}

fn assembly_symmetry(exec: Exec) -> Result<String, String> {
    for (f, s) in spaces(4)? {
        let mats = assemble_forms(&[Form::Full, Form::Par, Form::Mass], &s, &f, exec).map_err(|e| e.to_string())?;
        for (m, name) in mats.iter().zip(["full", "par", "mass"]) {
            ensure(m.is_symmetric(1e-14), || format!("{} {name} not symmetric", s.family().name()))?;
        }
    }
    Ok("3 forms x 4 families x 2 fields".into())
}

fn par_kernel(exec: Exec) -> Result<String, String> {
    let f = FieldSpec::variable_alpha(0.0).map_err(|e| e.to_string())?;
    let c = ManufacturedCase::new(CaseId::Smooth, 0.0, 0.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for fam in [Family::Q1, Family::Q2] {
        let mesh = Arc::new(structured_quad_mesh(6, 6, 1.0, 1.0).map_err(|e| e.to_string())?);
        let tags = classify_boundary(&mesh, &f).map_err(|e| e.to_string())?;
        let s = make_space(mesh, fam, &[], &tags).map_err(|e| e.to_string())?;
        let mats = assemble_forms(&[Form::Par, Form::Mass], &s, &f, exec).map_err(|e| e.to_string())?;
        let q = interpolate(&s, |x, y| c.u0(x, y).map(|p| p.0)).map_err(|e| e.to_string())?;
        worst = worst.max(mats[0].bilinear(&q, &q) / mats[1].bilinear(&q, &q));
    }
    ensure(worst <= 1e-10, || format!("q'A_par q / q'M q = {worst:e}"))?;
    Ok(format!("ratio {worst:.1e}"))
}

fn assembly_determinism(_: Exec) -> Result<String, String> {
    let field = FieldSpec::variable_alpha(2.0).map_err(|e| e.to_string())?;
    let case = ManufacturedCase::new(CaseId::Smooth, 2.0, 1e-6).map_err(|e| e.to_string())?;
    let build = |exec: Exec| {
        let mesh = Arc::new(structured_quad_mesh(6, 6, 1.0, 1.0).expect("valid"));
        let mut spec = ProblemSpec::new(Scheme::InflowAp, 1e-6, 0.0, field.clone(), Family::Q2);
        spec.exec = exec;
        build_system(&spec, mesh, &rhs_functional(case, &field), &|x, y| case.u(x, y).map(|p| p.0)).map_err(|e| e.to_string())
    };
    let a = build(Exec::Parallel)?;
    let b = build(Exec::Parallel)?;
    let c = build(Exec::Sequential)?;
    for other in [&b, &c] {
        ensure(
            a.matrix.indptr() == other.matrix.indptr()
                && a.matrix.indices() == other.matrix.indices()
                && a.matrix.values().iter().zip(other.matrix.values()).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.rhs.iter().zip(&other.rhs).all(|(x, y)| x.to_bits() == y.to_bits()),
            || "CSR arrays differ between builds".into(),
        )?;
    }
    let f1 = solve_scheme(&a);
    let f2 = solve_scheme(&b);
    ensure(f1.u.iter().zip(&f2.u).all(|(x, y)| x.to_bits() == y.to_bits()), || "solutions differ".into())?;
    Ok(format!("{} nonzeros bit-identical, sequential and parallel", a.matrix.nnz()))
}

fn star_norm_properties(exec: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_h: f64 = 0.0;
    for (f, s) in spaces(4)? {
        let riesz = RieszMap::new(&s, &f, exec).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let q: Vec<f64> = (0..s.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = riesz.star_norm(&q).map_err(|e| e.to_string())?;
            let c: f64 = rng.random_range(-5.0..5.0);
            let scaled: Vec<f64> = q.iter().map(|v| c * v).collect();
            let sc = riesz.star_norm(&scaled).map_err(|e| e.to_string())?;
            worst_h = worst_h.max((sc - c.abs() * base).abs() / (c.abs() * base));
            let par = riesz.par_seminorm(&q);
            ensure(base <= par * (1.0 + 1e-10), || format!("{}: |q|_* = {base} > |q|_par = {par}", s.family().name()))?;
        }
    }
    ensure(worst_h <= 1e-12, || format!("homogeneity error {worst_h:e}"))?;
    let (f, s) = spaces(3)?.swap_remove(3);
    let q = vec![1.0; s.num_dofs()];
    let one = star_h_norm(&q, &f, &s, exec).map_err(|e| e.to_string())?;
    ensure(one.is_finite(), || "non-finite norm".into())?;
    Ok(format!("homogeneity error {worst_h:.1e}; dominance on 24 samples"))
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CsrMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i == j || rng.random::<f64>() < density {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        row[i] += if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.0..2.0);
    }
    CsrMatrix::from_dense(&rows)
}

fn lu_residual(_: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(5..80);
        let a = random_sparse(&mut rng, n, 0.1);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.matvec(&x);
        let lu = lu_factor(a.clone()).map_err(|e| e.to_string())?;
        let y = lu.solve(&b).map_err(|e| e.to_string())?;
        let r = a.matvec(&y);
        let res = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = a.max_abs() * y.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
        worst = worst.max(res / scale);
        let lu2 = lu_factor(a).map_err(|e| e.to_string())?;
        let y2 = lu2.solve(&b).map_err(|e| e.to_string())?;
        ensure(y.iter().zip(&y2).all(|(p, q)| p.to_bits() == q.to_bits()), || "factorisation not deterministic".into())?;
    }
    ensure(worst <= 1e-13, || format!("scaled residual {worst:e}"))?;
    Ok(format!("20 systems, scaled residual {worst:.1e}"))
}

/// Exact `||A^-1||_1` by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse_norm1(a: &[Vec<f64>]) -> Option<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c] == 0.0 {
            return None;
        }
        m.swap(c, p);
        let piv = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= piv);
        let pivot_row = m[c].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != c && row[c] != 0.0 {
                let f = row[c];
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    Some((0..n).map(|j| (0..n).map(|i| m[i][n + j].abs()).sum::<f64>()).fold(0.0, f64::max))
}

fn cond1_sandwich(_: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..20 {
        let a = random_sparse(&mut rng, 50, 0.08);
        let exact = a.norm1() * dense_inverse_norm1(&a.to_dense()).ok_or("singular sample")?;
        let est = lu_factor(a).map_err(|e| e.to_string())?.cond1_estimate();
        ensure(est <= exact * (1.0 + 1e-12), || format!("estimate {est:e} above exact {exact:e}"))?;
        min_ratio = min_ratio.min(est / exact);
    }
    ensure(min_ratio >= 0.1, || format!("estimate/exact dropped to {min_ratio}"))?;
    Ok(format!("20 random 50x50, min estimate/exact = {min_ratio:.3}"))
}

fn manufactured_solve(scheme: Scheme, eps: f64, sigma: f64, alpha: f64, n: usize) -> Result<(crate::schemes::BlockSystem, crate::schemes::SchemeSolution), String> {
    let field = FieldSpec::variable_alpha(alpha).map_err(|e| e.to_string())?;
    let case = ManufacturedCase::new(CaseId::Smooth, alpha, eps).map_err(|e| e.to_string())?;
    let mesh = Arc::new(structured_quad_mesh(n, n, 1.0, 1.0).map_err(|e| e.to_string())?);
    let spec = ProblemSpec::new(scheme, eps, sigma, field.clone(), Family::Q2);
    let sys = build_system(&spec, mesh, &rhs_functional(case, &field), &|x, y| case.u(x, y).map(|p| p.0)).map_err(|e| e.to_string())?;
    let sol = solve_scheme(&sys);
    ensure(sol.status != SolveStatus::Singular, || format!("{scheme:?} singular"))?;
    Ok((sys, sol))
}

fn decoupling_eps_one(exec: Exec) -> Result<String, String> {
    let (_, reference) = manufactured_solve(Scheme::Standard, 1.0, 0.0, 2.0, 6)?;
    let mut worst: f64 = 0.0;
    for (scheme, sigma) in [(Scheme::InflowAp, 0.0), (Scheme::StabilizedAp, 1e-3)] {
        let (_, sol) = manufactured_solve(scheme, 1.0, sigma, 2.0, 6)?;
        let diff = sol.u.iter().zip(&reference.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = reference.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    let _ = exec;
    ensure(worst <= 1e-10, || format!("relative difference {worst:e}"))?;
    Ok(format!("max relative difference {worst:.1e}"))
}

fn rel_l2(sys: &crate::schemes::BlockSystem, sol: &crate::schemes::SchemeSolution, eps: f64, alpha: f64, exec: Exec) -> Result<f64, String> {
    let case = ManufacturedCase::new(CaseId::Smooth, alpha, eps).map_err(|e| e.to_string())?;
    crate::fem::error_norms(&sys.u_space, &sol.u, &|x, y| case.u(x, y), exec).map(|e| e.l2_rel).map_err(|e| e.to_string())
}

fn aligned_agreement(exec: Exec) -> Result<String, String> {
    let n = 10;
    let h = 1.0 / (2 * n) as f64;
    let (s1, a) = manufactured_solve(Scheme::InflowAp, 1e-10, 0.0, 0.0, n)?;
    let (s2, b) = manufactured_solve(Scheme::StabilizedAp, 1e-10, h.powi(3), 0.0, n)?;
    let (ea, eb) = (rel_l2(&s1, &a, 1e-10, 0.0, exec)?, rel_l2(&s2, &b, 1e-10, 0.0, exec)?);
    ensure((ea - eb).abs() <= 5e-4 * ea, || format!("inflow {ea:e} vs stabilized {eb:e}"))?;
    Ok(format!("relative L2 {ea:.4e} vs {eb:.4e}"))
}

fn inflow_cond_eps(_: Exec) -> Result<String, String> {
    let conds: Vec<f64> = [1e-12, 1e-8, 1e-4].iter().map(|&e| manufactured_solve(Scheme::InflowAp, e, 0.0, 2.0, 6).map(|s| s.1.cond1)).collect::<Result<_, _>>()?;
    let (lo, hi) = conds.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    ensure(hi / lo <= 2.0, || format!("cond1 spread {conds:?}"))?;
    Ok(format!("max/min = {:.3}", hi / lo))
}

fn standard_degradation(_: Exec) -> Result<String, String> {
    let conds: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| manufactured_solve(Scheme::Standard, e, 0.0, 2.0, 6).map(|s| s.1.cond1)).collect::<Result<_, _>>()?;
    ensure(conds.windows(2).all(|w| w[1] >= 10.0 * w[0]), || format!("cond1 {conds:?}"))?;
    Ok(format!("cond1 {:.1e}, {:.1e}, {:.1e}", conds[0], conds[1], conds[2]))
}

fn spectral_regularity(_: Exec) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut checked = 0;
    for sample in 0..100 {
        let modes: Vec<Mode> = (0..rng.random_range(1..8))
            .map(|_| Mode { k: rng.random_range(1..12), l: rng.random_range(0..12), coef: rng.random_range(-1.0..1.0) })
            .collect();
        let f = FourierRhs::new(modes).map_err(|e| e.to_string())?;
        let eps = if sample % 4 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-12.0..0.0)) };
        let sigma = if sample % 3 == 0 && eps > 0.0 { 0.0 } else { 10f64.powf(rng.random_range(-12.0..0.0)) };
        let sol = spectral_solve(&f, eps, sigma).map_err(|e| e.to_string())?;
        let s: f64 = rng.random_range(0.0..3.0);
        let bad = regularity_violations(&f, &sol, s);
        ensure(bad == 0, || format!("sample {sample}: {bad} violations"))?;
        checked += 1;
    }
    Ok(format!("{checked} samples, 0 violations"))
}

fn csv_and_orders(_: Exec) -> Result<String, String> {
    let mut cfg = StudyConfig::defaults(StudyKind::HConvergence);
    cfg.n = vec![1, 2, 4];
    cfg.regimes = vec![(1e-10, 2.0)];
    let rs = run_h_convergence(&cfg);
    let again = run_h_convergence(&cfg);
    let text = to_csv(&StudyOutput::Records(rs.clone()));
    ensure(text == to_csv(&StudyOutput::Records(again)), || "two runs differ".into())?;
    let back = parse_records_csv(&text)?;
    ensure(back.len() == rs.len() && back.iter().zip(&rs).all(|(a, b)| record_line(a) == record_line(b)), || "round trip changed a record".into())?;
    for o in convergence_orders(&rs, |r| r.err_l2_rel) {
        let a = rs.iter().find(|r| r.scheme == o.scheme && r.n == o.n_coarse).ok_or("missing record")?;
        let b = rs.iter().find(|r| r.scheme == o.scheme && r.n == o.n_fine).ok_or("missing record")?;
        let log2 = (a.err_l2_rel / b.err_l2_rel).log2();
        ensure((o.order - log2).abs() <= 1e-12, || format!("order {} vs log2 ratio {log2}", o.order))?;
    }
    Ok(format!("{} records", rs.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_oracle_known_inverse() {
        // inverse of [[2, 1], [1, 1]] is [[1, -1], [-1, 2]]
        let n = dense_inverse_norm1(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((n - 3.0).abs() < 1e-15);
        assert!(dense_inverse_norm1(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_none());
    }

    #[test]
    fn every_check_passes() {
        let failed: Vec<String> = run_all(Exec::default()).into_iter().filter(|r| !r.passed).map(|r| format!("{}: {}", r.name, r.detail)).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }
}
