//! Numerical studies: parameter sweeps over the schemes, the two norm
//! diagnostics, and their CSV/plot output.
//!
//! Mesh sizes follow the dof lattice: a degree-k family on `n` cells per side
//! of the unit square has `h = 1/(k n)`, so Q2 with `n = 5` is `h = 0.1`.

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::anisofield::{rhs_functional, FieldError, FieldSpec, ManufacturedCase, ALPHA_MAX};
use crate::exec::Exec;
use crate::fem::{error_norms, fe_norms, interpolate, make_space, par_coupling_rhs, Family, FemError, RieszMap};
use crate::geometry::{classify_boundary, structured_quad_mesh, structured_tri_mesh, BoundaryTag, CellKind, Mesh};
use crate::schemes::{build_system, solve_scheme, ProblemSpec, Scheme, SchemeError, SolveStatus};
use crate::spectral::{eval_series_grad, spectral_solve, FourierRhs, Quantity};

pub use config::{parse_run_config, ConfigError, RunConfig, SigmaRule, StudyConfig, StudyKind};
pub use output::{emit_csv, emit_plot_script, parse_records_csv, InfsupRow, Remark3Row, StudyOutput, StudyRecord};

/// Grid points whose dof lattice is at most this size run concurrently;
/// larger ones run one at a time so only one big factorisation is alive.
pub const CONCURRENT_DOF_LIMIT: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Point {
    scheme: Scheme,
    n: usize,
    eps: f64,
    alpha: f64,
    sigma: f64,
}

/// Mesh size of a degree-`family` lattice with `n` cells over length `l`.
pub fn mesh_size(family: Family, n: usize, l: f64) -> f64 {
    l / (family.degree() * n) as f64
}

fn lattice_size(family: Family, n: usize) -> usize {
    (family.degree() * n + 1).pow(2)
}

/// Runs `f` on every point, keeping the grid order. Small points may run
/// concurrently (each with sequential inner loops), large ones sequentially
/// with the configured inner policy.
fn run_points<P: Sync, T: Send>(points: &[P], size: impl Fn(&P) -> usize, exec: Exec, f: impl Fn(&P, Exec) -> T + Sync + Send) -> Vec<T> {
    let small: Vec<usize> = (0..points.len()).filter(|&i| size(&points[i]) <= CONCURRENT_DOF_LIMIT).collect();
    let mut out: Vec<Option<T>> = (0..points.len()).map(|_| None).collect();
    let done = exec.map(small.len(), |k| f(&points[small[k]], Exec::Sequential));
    for (k, r) in done.into_iter().enumerate() {
        out[small[k]] = Some(r);
    }
    for i in 0..points.len() {
        if out[i].is_none() {
            out[i] = Some(f(&points[i], exec));
        }
    }
    out.into_iter().map(|r| r.expect("every point ran")).collect()
}

fn grid(cfg: &StudyConfig, h_of: impl Fn(usize) -> f64) -> Vec<Point> {
    let mut pts = Vec::new();
    for &(eps, alpha) in &cfg.regimes {
        for &scheme in &cfg.schemes {
            for &n in &cfg.n {
                let sigmas = if scheme == Scheme::StabilizedAp { cfg.sigma.values(h_of(n)) } else { vec![0.0] };
                for sigma in sigmas {
                    pts.push(Point { scheme, n, eps, alpha, sigma });
                }
            }
        }
    }
    pts
}

fn failed(p: &Point, h: f64, wall: f64) -> StudyRecord {
    StudyRecord {
        scheme: p.scheme.name().to_string(),
        n: p.n,
        h,
        eps: p.eps,
        sigma: p.sigma,
        alpha: p.alpha,
        err_l2_abs: f64::NAN,
        err_h1_abs: f64::NAN,
        err_l2_rel: f64::NAN,
        err_h1_rel: f64::NAN,
        q_or_xi_l2_norm: f64::NAN,
        q_or_xi_h1_norm: f64::NAN,
        cond1: f64::INFINITY,
        solve_status: SolveStatus::Singular,
        wall_time_seconds: wall,
    }
}

/// Solves one manufactured-solution problem on the unit square.
fn manufactured_point(cfg: &StudyConfig, p: &Point, exec: Exec) -> StudyRecord {
    let start = Instant::now();
    let wall = |s: Instant| if cfg.timing { s.elapsed().as_secs_f64() } else { 0.0 };
    let h = mesh_size(cfg.family, p.n, 1.0);
    let run = || -> Result<StudyRecord, SchemeError> {
        let field = FieldSpec::variable_alpha(p.alpha)?;
        let case = ManufacturedCase::new(cfg.case, p.alpha, p.eps)?;
        let mesh = Arc::new(unit_mesh(cfg.family, p.n, 1.0)?);
        let mut spec = ProblemSpec::new(p.scheme, p.eps, p.sigma, field.clone(), cfg.family);
        spec.flip_second_row = cfg.flip_second_row;
        spec.exec = exec;
        let system = build_system(&spec, mesh, &rhs_functional(case, &field), &|x, y| case.u(x, y).map(|v| v.0))?;
        let sol = solve_scheme(&system);
        if sol.status == SolveStatus::Singular {
            return Ok(failed(p, h, wall(start)));
        }
        let e = error_norms(&system.u_space, &sol.u, &|x, y| case.u(x, y), exec)?;
        let (ql2, qh1) = match (&system.q_space, &sol.aux) {
            (Some(s), Some(q)) => fe_norms(s, q, exec),
            _ => (f64::NAN, f64::NAN),
        };
        Ok(record(p, h, e, (ql2, qh1), sol.cond1, sol.status, wall(start)))
    };
    run().unwrap_or_else(|_| failed(p, h, wall(start)))
}

fn record(p: &Point, h: f64, e: crate::fem::ErrorNorms, aux: (f64, f64), cond1: f64, status: SolveStatus, wall: f64) -> StudyRecord {
    StudyRecord {
        scheme: p.scheme.name().to_string(),
        n: p.n,
        h,
        eps: p.eps,
        sigma: p.sigma,
        alpha: p.alpha,
        err_l2_abs: e.l2_abs,
        err_h1_abs: e.h1_abs,
        err_l2_rel: e.l2_rel,
        err_h1_rel: e.h1_rel,
        q_or_xi_l2_norm: aux.0,
        q_or_xi_h1_norm: aux.1,
        cond1,
        solve_status: status,
        wall_time_seconds: wall,
    }
}

fn unit_mesh(family: Family, n: usize, l: f64) -> Result<Mesh, FemError> {
    let m = match family.cell_kind() {
        CellKind::Quad => structured_quad_mesh(n, n, l, l),
        CellKind::Triangle => structured_tri_mesh(n, n, l, l),
    };
    // n >= 1 and l > 0 are guaranteed by the config layer
    Ok(m.expect("valid structured mesh"))
}

fn manufactured_sweep(cfg: &StudyConfig) -> Vec<StudyRecord> {
    let pts = grid(cfg, |n| mesh_size(cfg.family, n, 1.0));
    run_points(&pts, |p| lattice_size(cfg.family, p.n), cfg.exec, |p, exec| manufactured_point(cfg, p, exec))
}

pub fn run_sigma_sweep(cfg: &StudyConfig) -> Vec<StudyRecord> {
    manufactured_sweep(cfg)
}

pub fn run_h_convergence(cfg: &StudyConfig) -> Vec<StudyRecord> {
    manufactured_sweep(cfg)
}

pub fn run_eps_sweep(cfg: &StudyConfig) -> Vec<StudyRecord> {
    manufactured_sweep(cfg)
}

pub fn run_conditioning(cfg: &StudyConfig) -> Vec<StudyRecord> {
    manufactured_sweep(cfg)
}

pub fn run_low_regularity(cfg: &StudyConfig) -> Vec<StudyRecord> {
    manufactured_sweep(cfg)
}

/// Finite elements on `(0, π)²` with `b = e2` against the Fourier series.
/// Error columns hold the FEM-minus-series differences for `u`.
pub fn run_oracle_validation(cfg: &StudyConfig) -> Vec<StudyRecord> {
    let pts = grid(cfg, |n| mesh_size(cfg.family, n, PI));
    run_points(&pts, |p| lattice_size(cfg.family, p.n), cfg.exec, |p, exec| oracle_point(cfg, p, exec))
}

fn oracle_point(cfg: &StudyConfig, p: &Point, exec: Exec) -> StudyRecord {
    let start = Instant::now();
    let wall = |s: Instant| if cfg.timing { s.elapsed().as_secs_f64() } else { 0.0 };
    let h = mesh_size(cfg.family, p.n, PI);
    let p = Point { alpha: 0.0, ..*p };
    let run = || -> Result<Option<StudyRecord>, SchemeError> {
        let Ok(f) = FourierRhs::new(cfg.modes.clone()) else { return Ok(None) };
        let Ok(series) = spectral_solve(&f, p.eps, p.sigma) else { return Ok(None) };
        let field = FieldSpec::aligned_e2();
        let mesh = Arc::new(unit_mesh(cfg.family, p.n, PI)?);
        let mut spec = ProblemSpec::new(p.scheme, p.eps, p.sigma, field, cfg.family);
        spec.flip_second_row = cfg.flip_second_row;
        spec.exec = exec;
        let system = build_system(&spec, mesh, &f, &|_, _| Ok(0.0))?;
        let sol = solve_scheme(&system);
        if sol.status == SolveStatus::Singular {
            return Ok(None);
        }
        let exact = |x: f64, y: f64| eval_series_grad(&series, Quantity::U, x, y).map_err(|_| FieldError::DomainError { x, y });
        let e = error_norms(&system.u_space, &sol.u, &exact, exec)?;
        let aux = match (&system.q_space, &sol.aux) {
            (Some(s), Some(q)) => fe_norms(s, q, exec),
            _ => (f64::NAN, f64::NAN),
        };
        Ok(Some(record(&p, h, e, aux, sol.cond1, sol.status, wall(start))))
    };
    match run() {
        Ok(Some(r)) => r,
        _ => failed(&p, h, wall(start)),
    }
}

/// `(1/√5) sqrt(1/(k²+1) + 16/(k²+4))`.
pub fn remark3_closed_form(k: u32) -> f64 {
    let k2 = (k * k) as f64;
    (1.0 / (k2 + 1.0) + 16.0 / (k2 + 4.0)).sqrt() / 5f64.sqrt()
}

/// `|q_k|_*h / |q_k|_par` for the interpolant of `q_k = sin(kx)(cos y - cos 2y)`
/// on a Q2 mesh of `(0, π)²` with `b = e2`; one factorisation serves all `k`.
pub fn run_remark3_check(cfg: &StudyConfig) -> Result<Vec<Remark3Row>, FemError> {
    let n = *cfg.n.last().expect("validated non-empty");
    let field = FieldSpec::aligned_e2();
    let mesh = Arc::new(unit_mesh(cfg.family, n, PI)?);
    let tags = classify_boundary(&mesh, &field)?;
    let space = make_space(mesh, cfg.family, &[BoundaryTag::Dirichlet], &tags)?;
    let riesz = RieszMap::new(&space, &field, cfg.exec)?;
    cfg.k
        .iter()
        .map(|&k| {
            let kf = k as f64;
            let q = interpolate(&space, |x, y| Ok::<f64, FemError>((kf * x).sin() * (y.cos() - (2.0 * y).cos())))?;
            Ok(Remark3Row { k, computed_ratio: riesz.star_norm(&q)? / riesz.par_seminorm(&q), analytic_ratio: remark3_closed_form(k) })
        })
        .collect()
}

/// Ratio of the coupling supremum over P1 on the `n`-mesh to the one over
/// P2 on the nested `2n`-mesh; unit square, `b = e2`, `A = I`.
///
/// The probe is the grid-scale oscillation across the field lines,
/// `q_h(x_i, y_j) = y_j sin(π n x_i / 2)`: it vanishes on `Γ_D` (x = 0, 1,
/// n even) and on the inflow side. Oscillating along `b` instead gives a
/// ratio that tends to 1 and probes nothing.
pub fn infsup_ratio(n: usize, exec: Exec) -> Result<f64, FemError> {
    let field = FieldSpec::aligned_e2();
    let coarse = Arc::new(structured_tri_mesh(n, n, 1.0, 1.0).expect("n >= 1"));
    let tags = classify_boundary(&coarse, &field)?;
    let v_h = make_space(coarse.clone(), Family::P1, &[BoundaryTag::Dirichlet], &tags)?;
    let q_space = make_space(coarse, Family::P1, &[], &tags)?;
    let nf = n as f64;
    let q = interpolate(&q_space, |x, y| Ok::<f64, FemError>(y * (PI * nf * x / 2.0).sin()))?;
    let coarse_norm = RieszMap::new(&v_h, &field, exec)?.star_norm(&q)?;

    let fine = Arc::new(structured_tri_mesh(2 * n, 2 * n, 1.0, 1.0).expect("n >= 1"));
    let fine_tags = classify_boundary(&fine, &field)?;
    let v_f = make_space(fine, Family::P2, &[BoundaryTag::Dirichlet], &fine_tags)?;
    let rhs = par_coupling_rhs(&v_f, &field, &q_space, &q, exec)?;
    let fine_norm = RieszMap::new(&v_f, &field, exec)?.star_norm_from_rhs(&rhs)?;
    Ok(coarse_norm / fine_norm)
}

pub fn run_infsup_probe(cfg: &StudyConfig) -> Result<Vec<InfsupRow>, FemError> {
    if let Some(&n) = cfg.n.iter().find(|&&n| n % 2 == 1 || n == 0) {
        return Err(FemError::Field(FieldError::InvalidParameter(format!("infsup probe needs even n, got {n}"))));
    }
    let rows = run_points(&cfg.n, |&n| (4 * n + 1).pow(2), cfg.exec, |&n, exec| {
        infsup_ratio(n, exec).map(|ratio| InfsupRow { n, h: 1.0 / n as f64, ratio })
    });
    rows.into_iter().collect()
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid study: {0}")]
    Invalid(String),
}

/// Runs one configured study.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput, StudyError> {
    if cfg.regimes.iter().any(|r| r.1 > ALPHA_MAX) && !matches!(cfg.kind, StudyKind::OracleValidation) {
        return Err(StudyError::Invalid(format!("alpha must not exceed {ALPHA_MAX}")));
    }
    Ok(match cfg.kind {
        StudyKind::SigmaSweep => StudyOutput::Records(run_sigma_sweep(cfg)),
        StudyKind::HConvergence => StudyOutput::Records(run_h_convergence(cfg)),
        StudyKind::EpsSweep => StudyOutput::Records(run_eps_sweep(cfg)),
        StudyKind::Conditioning => StudyOutput::Records(run_conditioning(cfg)),
        StudyKind::LowRegularity => StudyOutput::Records(run_low_regularity(cfg)),
        StudyKind::OracleValidation => StudyOutput::Records(run_oracle_validation(cfg)),
        StudyKind::InfsupProbe => StudyOutput::Infsup(run_infsup_probe(cfg)?),
        StudyKind::Remark3Check => StudyOutput::Remark3(run_remark3_check(cfg)?),
    })
}

/// Writes `<output>.csv` and `<output>.gp` under `dir`.
pub fn write_outputs(cfg: &StudyConfig, out: &StudyOutput, dir: &Path) -> std::io::Result<()> {
    let path = dir.join(&cfg.output);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    emit_csv(out, &path)?;
    emit_plot_script(cfg.kind, out, &path)
}

/// `log(e_c / e_f) / log(h_c / h_f)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Observed order between consecutive mesh sizes of one curve.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderRow {
    pub scheme: String,
    pub eps: f64,
    pub alpha: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub order: f64,
}

/// Orders of `metric` along each (scheme, ε, α) curve, for consecutive
/// records (in grid order) where neither solve failed.
pub fn convergence_orders(records: &[StudyRecord], metric: impl Fn(&StudyRecord) -> f64) -> Vec<OrderRow> {
    let mut out = Vec::new();
    for (i, a) in records.iter().enumerate() {
        let next = records[i + 1..].iter().find(|b| b.scheme == a.scheme && b.eps == a.eps && b.alpha == a.alpha);
        let Some(b) = next else { continue };
        if a.solve_status == SolveStatus::Singular || b.solve_status == SolveStatus::Singular || b.n <= a.n {
            continue;
        }
        out.push(OrderRow {
            scheme: a.scheme.clone(),
            eps: a.eps,
            alpha: a.alpha,
            n_coarse: a.n,
            n_fine: b.n,
            order: observed_order(metric(a), metric(b), a.h, b.h),
        });
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert!((remark3_closed_form(1) - 0.860233).abs() < 5e-7);
        // 1/17 + 16/20 under the root
        assert!((remark3_closed_form(4) - (1.0f64 / 17.0 + 0.8).sqrt() / 5f64.sqrt()).abs() < 1e-15);
        assert!((1..10).all(|k| remark3_closed_form(k + 1) < remark3_closed_form(k)));
    }

    #[test]
    fn slope_and_order() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        assert!((loglog_slope(&h, &e) - 3.0).abs() < 1e-12);
        assert!((observed_order(e[0], e[1], h[0], h[1]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_h_convergence_run() {
        let mut cfg = StudyConfig::defaults(StudyKind::HConvergence);
        cfg.n = vec![2, 4];
        cfg.regimes = vec![(1.0, 0.0)];
        let rs = run_h_convergence(&cfg);
        assert_eq!(rs.len(), 4);
        assert!(rs.iter().all(|r| r.solve_status == SolveStatus::Ok && r.err_l2_rel > 0.0));
        assert_eq!(rs[0].h, 0.25);
        let orders = convergence_orders(&rs, |r| r.err_l2_rel);
        assert_eq!(orders.len(), 2);
        let again = run_h_convergence(&cfg);
        assert_eq!(output::to_csv(&StudyOutput::Records(rs)), output::to_csv(&StudyOutput::Records(again)));
    }

    #[test]
    fn solver_failure_is_recorded() {
        // eps = sigma = 0 on aligned field lines: ξ constant along them is a null vector
        let mut cfg = StudyConfig::defaults(StudyKind::SigmaSweep);
        cfg.n = vec![2];
        cfg.regimes = vec![(0.0, 0.0)];
        cfg.sigma = SigmaRule::Fixed(vec![0.0, 1e-2]);
        let rs = run_sigma_sweep(&cfg);
        assert_eq!(rs.len(), 2);
        assert_ne!(rs[0].solve_status, SolveStatus::Ok);
        assert_eq!(rs[1].solve_status, SolveStatus::Ok);
    }

    #[test]
    fn odd_infsup_rejected() {
        let mut cfg = StudyConfig::defaults(StudyKind::InfsupProbe);
        cfg.n = vec![3];
        assert!(run_infsup_probe(&cfg).is_err());
    }
}
