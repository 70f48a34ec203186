//! The three discretisations of the anisotropic problem and their solution.
//!
//! Unknowns on constrained dofs are eliminated from the linear system; the
//! block system only carries free dofs. Non-zero Dirichlet data on `Γ_D`
//! enters both right-hand side blocks through a lifting.

use std::sync::Arc;

use thiserror::Error;

use crate::anisofield::{FieldError, FieldSpec, LoadDensity};
use crate::exec::Exec;
use crate::fem::{assemble_forms, assemble_rhs, interpolate, make_space, Family, FemError, FemSpace, Form};
use crate::geometry::{classify_boundary, BoundaryTag, Mesh};
use crate::sparse::{lu_factor_with, CooBuilder, CsrMatrix, PivotPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid problem: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// `(1-ε)/ε a_par(u, v) + a(u, v) = (f, v)`.
    Standard,
    /// Auxiliary `q` vanishing on the inflow boundary.
    InflowAp,
    /// Auxiliary `ξ` without inflow condition, regularised by `σ (ξ, w)`.
    StabilizedAp,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::InflowAp => "inflow",
            Scheme::StabilizedAp => "stabilized",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Some(Scheme::Standard),
            "inflow" | "inflow_ap" => Some(Scheme::InflowAp),
            "stabilized" | "stabilized_ap" => Some(Scheme::StabilizedAp),
            _ => None,
        }
    }

    fn aux_constraints(self) -> Option<&'static [BoundaryTag]> {
        match self {
            Scheme::Standard => None,
            Scheme::InflowAp => Some(&[BoundaryTag::Dirichlet, BoundaryTag::Inflow]),
            Scheme::StabilizedAp => Some(&[BoundaryTag::Dirichlet]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub scheme: Scheme,
    pub eps: f64,
    pub sigma: f64,
    pub field: FieldSpec,
    pub family: Family,
    /// Negate the second block row, `[-Bᵀ, εC + σM]`. Same solution.
    pub flip_second_row: bool,
    pub exec: Exec,
}

impl ProblemSpec {
    pub fn new(scheme: Scheme, eps: f64, sigma: f64, field: FieldSpec, family: Family) -> ProblemSpec {
        ProblemSpec { scheme, eps, sigma, field, family, flip_second_row: false, exec: Exec::default() }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |m: String| Err(SchemeError::InvalidParameter(m));
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps = {} must be >= 0", self.eps));
        }
        if self.scheme == Scheme::Standard && self.eps == 0.0 {
            return bad("the standard scheme needs eps > 0".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma = {} must be >= 0", self.sigma));
        }
        if self.sigma != 0.0 && self.scheme != Scheme::StabilizedAp {
            return bad("sigma only applies to the stabilized scheme".into());
        }
        Ok(())
    }
}

/// Assembled linear system over the free dofs, ordered `(u, aux)`.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub scheme: Scheme,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_u: usize,
    pub n_q: usize,
    pub u_space: FemSpace,
    pub q_space: Option<FemSpace>,
    u_free: Vec<usize>,
    q_free: Vec<usize>,
    /// Dirichlet values on constrained u-dofs, zero elsewhere.
    lift: Vec<f64>,
}

impl BlockSystem {
    pub fn u_free(&self) -> &[usize] {
        &self.u_free
    }

    pub fn q_free(&self) -> &[usize] {
        &self.q_free
    }
}

pub type DirichletFn<'a> = &'a (dyn Fn(f64, f64) -> Result<f64, FieldError> + Sync);

pub fn build_system(
    spec: &ProblemSpec,
    mesh: Arc<Mesh>,
    load: &dyn LoadDensity,
    dirichlet: DirichletFn<'_>,
) -> Result<BlockSystem, SchemeError> {
    spec.validate()?;
    let tags = classify_boundary(&mesh, &spec.field)?;
    let u_space = make_space(mesh.clone(), spec.family, &[BoundaryTag::Dirichlet], &tags)?;
    let q_space = match spec.scheme.aux_constraints() {
        Some(c) => Some(make_space(mesh, spec.family, c, &tags)?),
        None => None,
    };
    let forms: &[Form] = match spec.scheme {
        Scheme::StabilizedAp if spec.sigma > 0.0 => &[Form::Full, Form::Par, Form::Mass],
        _ => &[Form::Full, Form::Par],
    };
    let mats = assemble_forms(forms, &u_space, &spec.field, spec.exec)?;
    let (full, par) = (&mats[0], &mats[1]);
    let f = assemble_rhs(&u_space, load, spec.exec)?;

    let mut lift = vec![0.0; u_space.num_dofs()];
    let g = interpolate(&u_space, dirichlet)?;
    for d in 0..lift.len() {
        if u_space.is_constrained(d) {
            lift[d] = g[d];
        }
    }

    let u_free = u_space.free_dofs();
    let q_free = q_space.as_ref().map_or(Vec::new(), |s| s.free_dofs());
    let (n_u, n_q) = (u_free.len(), q_free.len());
    let mut u_map = vec![usize::MAX; u_space.num_dofs()];
    for (k, &d) in u_free.iter().enumerate() {
        u_map[d] = k;
    }
    let mut q_map = vec![usize::MAX; u_space.num_dofs()];
    for (k, &d) in q_free.iter().enumerate() {
        q_map[d] = n_u + k;
    }

    let eps = spec.eps;
    let mut coo = CooBuilder::with_capacity(n_u + n_q, n_u + n_q, full.nnz() + 3 * par.nnz() + mats.get(2).map_or(0, |m| m.nnz()));
    let mut rhs = vec![0.0; n_u + n_q];
    // penalised standard form: (1-ε)/ε a_par + a
    let par_u_coef = if spec.scheme == Scheme::Standard { (1.0 - eps) / eps } else { 0.0 };
    for (r, &i) in u_free.iter().enumerate() {
        rhs[r] = f[i];
        // (matrix, coefficient, column map, whether eliminated columns feed the lift)
        for (m, coef, cols, lifts) in [(full, 1.0, &u_map, true), (par, par_u_coef, &u_map, true), (par, 1.0 - eps, &q_map, false)] {
            if coef == 0.0 {
                continue;
            }
            let (c, v) = m.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if cols[j] != usize::MAX {
                    coo.push(r, cols[j], coef * a);
                } else if lifts && u_space.is_constrained(j) {
                    rhs[r] -= coef * a * lift[j];
                }
            }
        }
    }
    let sign = if spec.flip_second_row { -1.0 } else { 1.0 };
    for (k, &i) in q_free.iter().enumerate() {
        let r = n_u + k;
        let (c, v) = par.row(i);
        for (&j, &a) in c.iter().zip(v) {
            if u_map[j] != usize::MAX {
                coo.push(r, u_map[j], sign * a);
            } else if u_space.is_constrained(j) {
                rhs[r] -= sign * a * lift[j];
            }
            if q_map[j] != usize::MAX && eps != 0.0 {
                coo.push(r, q_map[j], -sign * eps * a);
            }
        }
        if let Some(mass) = mats.get(2) {
            let (c, v) = mass.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if q_map[j] != usize::MAX {
                    coo.push(r, q_map[j], -sign * spec.sigma * a);
                }
            }
        }
    }
    Ok(BlockSystem { scheme: spec.scheme, matrix: coo.build(), rhs, n_u, n_q, u_space, q_space, u_free, q_free, lift })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Ok,
    /// Factorisation succeeded but the matrix is numerically singular to
    /// working precision; the solution is reported anyway.
    IllConditioned,
    /// No usable solution.
    Singular,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Ok => "OK",
            SolveStatus::IllConditioned => "ILL_CONDITIONED",
            SolveStatus::Singular => "SINGULAR",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchemeSolution {
    pub status: SolveStatus,
    /// u over all dofs of `u_space`, Dirichlet values included; empty when singular.
    pub u: Vec<f64>,
    /// Auxiliary variable over all dofs; `None` for the standard scheme.
    pub aux: Option<Vec<f64>>,
    pub cond1: f64,
}

pub fn solve_scheme(system: &BlockSystem) -> SchemeSolution {
    let singular = SchemeSolution { status: SolveStatus::Singular, u: Vec::new(), aux: None, cond1: f64::INFINITY };
    let Ok(factor) = lu_factor_with(system.matrix.clone(), PivotPolicy::Report) else {
        return singular;
    };
    let Ok(x) = factor.solve(&system.rhs) else {
        return singular;
    };
    let mut u = system.lift.clone();
    for (k, &d) in system.u_free.iter().enumerate() {
        u[d] = x[k];
    }
    let aux = system.q_space.as_ref().map(|s| {
        let mut q = vec![0.0; s.num_dofs()];
        for (k, &d) in system.q_free.iter().enumerate() {
            q[d] = x[system.n_u + k];
        }
        q
    });
    let status = if factor.near_singular() { SolveStatus::IllConditioned } else { SolveStatus::Ok };
    SchemeSolution { status, u, aux, cond1: factor.cond1_estimate() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisofield::{rhs_functional, CaseId, ManufacturedCase};
    use crate::geometry::structured_quad_mesh;

    fn zero(_: f64, _: f64) -> Result<f64, FieldError> {
        Ok(0.0)
    }

    fn system(scheme: Scheme, eps: f64, sigma: f64, n: usize) -> BlockSystem {
        let field = FieldSpec::variable_alpha(2.0).unwrap();
        let case = ManufacturedCase::new(CaseId::Smooth, 2.0, eps).unwrap();
        let mesh = Arc::new(structured_quad_mesh(n, n, 1.0, 1.0).unwrap());
        let spec = ProblemSpec::new(scheme, eps, sigma, field.clone(), Family::Q2);
        build_system(&spec, mesh, &rhs_functional(case, &field), &zero).unwrap()
    }

    #[test]
    fn dof_partition_q2() {
        let s = system(Scheme::InflowAp, 1e-3, 0.0, 10);
        // 21x21 lattice, top and bottom rows Dirichlet, left column inflow
        assert_eq!(s.n_u, 441 - 42);
        assert_eq!(s.n_q, s.n_u - 19);
        let st = system(Scheme::StabilizedAp, 1e-3, 1e-3, 10);
        assert_eq!(st.n_q, st.n_u);
    }

    #[test]
    fn rejects_inconsistent_specs() {
        let f = FieldSpec::variable_alpha(0.0).unwrap();
        assert!(ProblemSpec::new(Scheme::Standard, 0.0, 0.0, f.clone(), Family::Q1).validate().is_err());
        assert!(ProblemSpec::new(Scheme::InflowAp, 0.5, 1e-3, f.clone(), Family::Q1).validate().is_err());
        assert!(ProblemSpec::new(Scheme::StabilizedAp, 1.5, 0.0, f.clone(), Family::Q1).validate().is_ok());
        assert!(ProblemSpec::new(Scheme::StabilizedAp, -1e-3, 0.0, f.clone(), Family::Q1).validate().is_err());
        assert!(ProblemSpec::new(Scheme::StabilizedAp, 0.0, 0.0, f, Family::Q1).validate().is_ok());
    }

    #[test]
    fn lower_rhs_block_is_zero_for_homogeneous_data() {
        let s = system(Scheme::InflowAp, 1e-4, 0.0, 4);
        assert!(s.rhs[s.n_u..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flipped_row_gives_same_solution() {
        let field = FieldSpec::variable_alpha(2.0).unwrap();
        let case = ManufacturedCase::new(CaseId::Smooth, 2.0, 1e-6).unwrap();
        let mesh = Arc::new(structured_quad_mesh(6, 6, 1.0, 1.0).unwrap());
        let mut spec = ProblemSpec::new(Scheme::InflowAp, 1e-6, 0.0, field.clone(), Family::Q2);
        let a = solve_scheme(&build_system(&spec, mesh.clone(), &rhs_functional(case, &field), &zero).unwrap());
        spec.flip_second_row = true;
        let b = solve_scheme(&build_system(&spec, mesh, &rhs_functional(case, &field), &zero).unwrap());
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
