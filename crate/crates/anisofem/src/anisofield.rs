//! The anisotropy direction `b`, the diffusion tensor built from it, and the
//! manufactured solutions used in the convergence studies.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Largest admissible `alpha` for the variable field. Beyond it the field can
/// reverse direction inside the unit square.
pub const ALPHA_MAX: f64 = 1.5 * PI / 2.0;

/// `|B|` below which `b = B/|B|` is considered undefined.
pub const DEGENERATE_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid field parameter: {0}")]
    InvalidParameter(String),
    #[error("field vanishes at ({x}, {y})")]
    DegenerateField { x: f64, y: f64 },
    #[error("point ({x}, {y}) outside the domain of the exact solution")]
    DomainError { x: f64, y: f64 },
}

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>;
pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldKind {
    /// `B = (alpha(2y-1)cos(pi x) + pi, pi alpha (y^2-y) sin(pi x))`.
    VariableAlpha { alpha: f64 },
    /// `b = (0, 1)`.
    AlignedE2,
}

/// Direction field plus the parallel and perpendicular diffusion
/// coefficients. Both default to the identity.
#[derive(Clone)]
pub struct FieldSpec {
    kind: FieldKind,
    a_par: Option<ScalarFn>,
    a_perp: Option<TensorFn>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("kind", &self.kind)
            .field("a_par", &self.a_par.as_ref().map(|_| "fn"))
            .field("a_perp", &self.a_perp.as_ref().map(|_| "fn"))
            .finish()
    }
}

impl FieldSpec {
    pub fn variable_alpha(alpha: f64) -> Result<FieldSpec, FieldError> {
        if !(alpha.is_finite() && (0.0..=ALPHA_MAX).contains(&alpha)) {
            return Err(FieldError::InvalidParameter(format!(
                "alpha = {alpha} outside [0, {ALPHA_MAX}]"
            )));
        }
        Ok(FieldSpec { kind: FieldKind::VariableAlpha { alpha }, a_par: None, a_perp: None })
    }

    pub fn aligned_e2() -> FieldSpec {
        FieldSpec { kind: FieldKind::AlignedE2, a_par: None, a_perp: None }
    }

    pub fn with_a_par(mut self, f: ScalarFn) -> FieldSpec {
        self.a_par = Some(f);
        self
    }

    pub fn with_a_perp(mut self, f: TensorFn) -> FieldSpec {
        self.a_perp = Some(f);
        self
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        match self.kind {
            FieldKind::VariableAlpha { alpha } => alpha,
            FieldKind::AlignedE2 => 0.0,
        }
    }

    /// Unnormalised field `B`.
    pub fn eval_big_b(&self, x: f64, y: f64) -> [f64; 2] {
        match self.kind {
            FieldKind::VariableAlpha { alpha } => [
                alpha * (2.0 * y - 1.0) * (PI * x).cos() + PI,
                PI * alpha * (y * y - y) * (PI * x).sin(),
            ],
            FieldKind::AlignedE2 => [0.0, 1.0],
        }
    }

    pub fn eval_b(&self, x: f64, y: f64) -> Result<[f64; 2], FieldError> {
        let bb = self.eval_big_b(x, y);
        let norm = bb[0].hypot(bb[1]);
        if !(norm >= DEGENERATE_TOL) {
            return Err(FieldError::DegenerateField { x, y });
        }
        Ok([bb[0] / norm, bb[1] / norm])
    }

    pub fn eval_a_par(&self, x: f64, y: f64) -> f64 {
        self.a_par.as_ref().map_or(1.0, |f| f(x, y))
    }

    pub fn eval_a_perp(&self, x: f64, y: f64) -> Mat2 {
        self.a_perp.as_ref().map_or([[1.0, 0.0], [0.0, 1.0]], |f| f(x, y))
    }

    /// `A = (b⊗b) A_par (b⊗b) + (I - b⊗b) A_perp (I - b⊗b)`.
    pub fn eval_a(&self, x: f64, y: f64) -> Result<Mat2, FieldError> {
        let b = self.eval_b(x, y)?;
        Ok(diffusion_tensor(b, self.eval_a_par(x, y), self.eval_a_perp(x, y)))
    }

    /// Whether `A_perp` is left at its identity default.
    pub fn has_identity_perp(&self) -> bool {
        self.a_perp.is_none()
    }
}

pub fn diffusion_tensor(b: [f64; 2], a_par: f64, a_perp: Mat2) -> Mat2 {
    let p = [[b[0] * b[0], b[0] * b[1]], [b[1] * b[0], b[1] * b[1]]];
    let q = [[1.0 - p[0][0], -p[0][1]], [-p[1][0], 1.0 - p[1][1]]];
    let qaq = mul(mul(q, a_perp), q);
    // P a P = a |b|^2 P = a P for a scalar a and unit b
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a_par * p[i][j] + qaq[i][j];
        }
    }
    out
}

fn mul(a: Mat2, b: Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Right-hand side in the generalised form `l(v) = ∫ value·v + flux·∇v`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadPoint {
    pub value: f64,
    pub flux: [f64; 2],
}

pub trait LoadDensity: Sync {
    fn eval(&self, x: f64, y: f64) -> Result<LoadPoint, FieldError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// `u0 = sin(pi y + alpha (y^2-y) cos(pi x))`, perturbed by
    /// `eps cos(2 pi x) u0`.
    Smooth,
    /// `u0 = t^2 ln t - 1.5 + 7.5 t` with `t` the normalised phase, perturbed
    /// by `eps cos(2 pi x) t^2 ln t`. The source lies in `L2` but not in `H1`.
    LowReg,
}

/// Exact values at a point: the limit solution, the solution for the given
/// `eps`, and the auxiliary variable of the inflow formulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactPoint {
    pub u0: f64,
    pub u: f64,
    pub q: f64,
}

/// Manufactured solution `u^eps = u0 + eps w` on the unit square with
/// `b·∇u0 = 0`, so `q = w - w|inflow` is known in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedCase {
    pub id: CaseId,
    pub alpha: f64,
    pub eps: f64,
}

impl ManufacturedCase {
    pub fn new(id: CaseId, alpha: f64, eps: f64) -> Result<ManufacturedCase, FieldError> {
        if !(alpha.is_finite() && (0.0..=ALPHA_MAX).contains(&alpha)) {
            return Err(FieldError::InvalidParameter(format!("alpha = {alpha}")));
        }
        // eps > 1 is allowed: the weak forms stay coercive and the ε-sweep goes up to 10
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(FieldError::InvalidParameter(format!("eps = {eps} must be >= 0")));
        }
        Ok(ManufacturedCase { id, alpha, eps })
    }

    /// Phase `phi = pi y + alpha (y^2-y) cos(pi x)`, constant along field lines.
    fn phase(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let a = self.alpha;
        let (s, c) = (PI * x).sin_cos();
        let phi = PI * y + a * (y * y - y) * c;
        (phi, [-PI * a * (y * y - y) * s, PI + a * (2.0 * y - 1.0) * c])
    }

    /// Limit solution and its gradient.
    pub fn u0(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), FieldError> {
        let (phi, dphi) = self.phase(x, y);
        match self.id {
            CaseId::Smooth => {
                let (s, c) = phi.sin_cos();
                Ok((s, [c * dphi[0], c * dphi[1]]))
            }
            CaseId::LowReg => {
                let t = phi / PI;
                let (g, dg) = low_reg_profile(t).ok_or(FieldError::DomainError { x, y })?;
                Ok((g, [dg * dphi[0] / PI, dg * dphi[1] / PI]))
            }
        }
    }

    /// Perturbation `w` with `u^eps = u0 + eps w`.
    pub fn perturbation(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), FieldError> {
        match self.id {
            CaseId::Smooth => {
                let (phi, dphi) = self.phase(x, y);
                let (s, c) = phi.sin_cos();
                let (s2, c2) = (2.0 * PI * x).sin_cos();
                Ok((c2 * s, [-2.0 * PI * s2 * s + c2 * c * dphi[0], c2 * c * dphi[1]]))
            }
            CaseId::LowReg => {
                let (phi, dphi) = self.phase(x, y);
                let (tl, dtl) = t2_log_t(phi / PI).ok_or(FieldError::DomainError { x, y })?;
                let (s2, c2) = (2.0 * PI * x).sin_cos();
                Ok((c2 * tl, [-2.0 * PI * s2 * tl + c2 * dtl * dphi[0] / PI, c2 * dtl * dphi[1] / PI]))
            }
        }
    }

    /// Part of `u0` carrying the inflow profile of `w`: `w - q` evaluated at
    /// the inflow end of the field line through `(x, y)`.
    fn inflow_profile(&self, x: f64, y: f64) -> Result<f64, FieldError> {
        match self.id {
            CaseId::Smooth => self.u0(x, y).map(|p| p.0),
            CaseId::LowReg => {
                let (phi, _) = self.phase(x, y);
                t2_log_t(phi / PI).map(|p| p.0).ok_or(FieldError::DomainError { x, y })
            }
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<ExactPoint, FieldError> {
        let (u0, _) = self.u0(x, y)?;
        let (w, _) = self.perturbation(x, y)?;
        // w = cos(2 pi x) P(phase), and x = 0 on the inflow side
        let q = w - self.inflow_profile(x, y)?;
        Ok(ExactPoint { u0, u: u0 + self.eps * w, q })
    }

    /// `u^eps` and its gradient.
    pub fn u(&self, x: f64, y: f64) -> Result<(f64, [f64; 2]), FieldError> {
        let (u0, g0) = self.u0(x, y)?;
        let (w, gw) = self.perturbation(x, y)?;
        let e = self.eps;
        Ok((u0 + e * w, [g0[0] + e * gw[0], g0[1] + e * gw[1]]))
    }
}

/// `t^2 ln t` and its derivative, extended continuously to `t = 0`.
fn t2_log_t(t: f64) -> Option<(f64, f64)> {
    if t < 0.0 {
        return None;
    }
    if t == 0.0 {
        return Some((0.0, 0.0));
    }
    let l = t.ln();
    Some((t * t * l, 2.0 * t * l + t))
}

/// `g(t) = t^2 ln t - 1.5 + 7.5 t` and `g'(t)`.
fn low_reg_profile(t: f64) -> Option<(f64, f64)> {
    let (tl, dtl) = t2_log_t(t)?;
    Some((tl - 1.5 + 7.5 * t, dtl + 7.5))
}

/// Closed-form `(u0, u^eps, q)`.
pub fn eval_exact(id: CaseId, alpha: f64, eps: f64, x: f64, y: f64) -> Result<(f64, f64, f64), FieldError> {
    let p = ManufacturedCase::new(id, alpha, eps)?.eval(x, y)?;
    Ok((p.u0, p.u, p.q))
}

/// Source functional for which `u^eps` is the exact weak solution of the
/// anisotropic problem: `l(v) = (1-eps) a_par(w, v) + a(u^eps, v)`.
pub struct CaseLoad {
    pub case: ManufacturedCase,
    pub field: FieldSpec,
}

pub fn rhs_functional(case: ManufacturedCase, field: &FieldSpec) -> CaseLoad {
    CaseLoad { case, field: field.clone() }
}

impl LoadDensity for CaseLoad {
    fn eval(&self, x: f64, y: f64) -> Result<LoadPoint, FieldError> {
        let b = self.field.eval_b(x, y)?;
        let a = diffusion_tensor(b, self.field.eval_a_par(x, y), self.field.eval_a_perp(x, y));
        let (_, gu) = self.case.u(x, y)?;
        let (_, gw) = self.case.perturbation(x, y)?;
        let s = (1.0 - self.case.eps) * self.field.eval_a_par(x, y) * (b[0] * gw[0] + b[1] * gw[1]);
        Ok(LoadPoint {
            value: 0.0,
            flux: [
                s * b[0] + a[0][0] * gu[0] + a[0][1] * gu[1],
                s * b[1] + a[1][0] * gu[0] + a[1][1] * gu[1],
            ],
        })
    }
}
