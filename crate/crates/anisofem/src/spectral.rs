//! Fourier-series solution of the stabilized problem on `(0, π)²` with
//! `b = e2`, `A_par = 1`, `A_perp = I`, in the basis `sin(kx) cos(ly)`.
//!
//! Used as an oracle that shares no code with the finite element path.

use thiserror::Error;

use crate::anisofield::{FieldError, LoadDensity, LoadPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid mode ({k}, {l}): need k >= 1")]
    InvalidMode { k: u32, l: u32 },
    #[error("eps = sigma = 0 leaves mode ({k}, {l}) undefined")]
    Degenerate { k: u32, l: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub k: u32,
    pub l: u32,
    pub coef: f64,
}

impl Mode {
    fn wave2(&self) -> f64 {
        (self.k * self.k + self.l * self.l) as f64
    }
}

/// `f = Σ f_kl sin(kx) cos(ly)` over finitely many modes.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierRhs {
    modes: Vec<Mode>,
}

impl FourierRhs {
    pub fn new(modes: Vec<Mode>) -> Result<FourierRhs, SpectralError> {
        if let Some(m) = modes.iter().find(|m| m.k == 0) {
            return Err(SpectralError::InvalidMode { k: m.k, l: m.l });
        }
        // repeated (k, l) pairs are summed so coefficients are one per mode
        let mut merged: Vec<Mode> = Vec::with_capacity(modes.len());
        for m in modes {
            match merged.iter_mut().find(|x| x.k == m.k && x.l == m.l) {
                Some(x) => x.coef += m.coef,
                None => merged.push(m),
            }
        }
        Ok(FourierRhs { modes: merged })
    }

    pub fn single(k: u32, l: u32, coef: f64) -> Result<FourierRhs, SpectralError> {
        FourierRhs::new(vec![Mode { k, l, coef }])
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
}

impl LoadDensity for FourierRhs {
    fn eval(&self, x: f64, y: f64) -> Result<LoadPoint, FieldError> {
        let value = self.modes.iter().map(|m| m.coef * (m.k as f64 * x).sin() * (m.l as f64 * y).cos()).sum();
        Ok(LoadPoint { value, flux: [0.0, 0.0] })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSolution {
    pub eps: f64,
    pub sigma: f64,
    pub u: Vec<Mode>,
    /// Only `l >= 1` modes; the `l = 0` coefficients vanish.
    pub xi: Vec<Mode>,
}

pub fn spectral_solve(f: &FourierRhs, eps: f64, sigma: f64) -> Result<SpectralSolution, SpectralError> {
    if !(eps.is_finite() && (0.0..=1.0).contains(&eps)) || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SpectralError::InvalidParameter(format!("eps = {eps}, sigma = {sigma}")));
    }
    let mut u = Vec::with_capacity(f.modes.len());
    let mut xi = Vec::new();
    for m in &f.modes {
        let (k2, l2) = ((m.k * m.k) as f64, (m.l * m.l) as f64);
        if m.l == 0 {
            u.push(Mode { coef: m.coef / k2, ..*m });
            continue;
        }
        let damp = eps * l2 + sigma;
        if damp == 0.0 {
            return Err(SpectralError::Degenerate { k: m.k, l: m.l });
        }
        u.push(Mode { coef: m.coef / (k2 + l2 + (1.0 - eps) * l2 * l2 / damp), ..*m });
        xi.push(Mode { coef: l2 * m.coef / (damp * (k2 + l2) + (1.0 - eps) * l2 * l2), ..*m });
    }
    Ok(SpectralSolution { eps, sigma, u, xi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    U,
    Xi,
    /// `q(x, y) = ξ(x, y) - ξ(x, 0)`; only meaningful for `sigma = 0`.
    Q,
}

pub fn eval_series(sol: &SpectralSolution, which: Quantity, x: f64, y: f64) -> Result<f64, SpectralError> {
    eval_series_grad(sol, which, x, y).map(|(v, _)| v)
}

/// Value and gradient of the series.
pub fn eval_series_grad(sol: &SpectralSolution, which: Quantity, x: f64, y: f64) -> Result<(f64, [f64; 2]), SpectralError> {
    let modes = match which {
        Quantity::U => &sol.u,
        Quantity::Xi => &sol.xi,
        Quantity::Q => {
            if sol.sigma != 0.0 || sol.eps <= 0.0 {
                return Err(SpectralError::InvalidParameter("Q needs sigma = 0 and eps > 0".into()));
            }
            &sol.xi
        }
    };
    let shift = if which == Quantity::Q { 1.0 } else { 0.0 };
    let (mut v, mut g) = (0.0, [0.0, 0.0]);
    for m in modes {
        let (k, l) = (m.k as f64, m.l as f64);
        let (sk, ck) = (k * x).sin_cos();
        let (sl, cl) = (l * y).sin_cos();
        v += m.coef * sk * (cl - shift);
        g[0] += m.coef * k * ck * (cl - shift);
        g[1] -= m.coef * l * sk * sl;
    }
    Ok((v, g))
}

/// `(Σ (k²+l²)^s c²)^(1/2)`, the Parseval representative of `|·|_{H^s}`.
pub fn sobolev_seminorm(modes: &[Mode], s: f64) -> f64 {
    modes.iter().map(|m| m.wave2().powf(s) * m.coef * m.coef).sum::<f64>().sqrt()
}

/// Coefficient-wise regularity bounds that hold uniformly in `eps`, `sigma`.
/// Returns the number of violated inequalities.
pub fn regularity_violations(f: &FourierRhs, sol: &SpectralSolution, s: f64) -> usize {
    let tol = 1e-12;
    let mut bad = 0;
    for (m, u) in f.modes.iter().zip(&sol.u) {
        let w = m.wave2();
        if w.powf((s + 2.0) / 2.0) * u.coef.abs() > (1.0 + tol) * w.powf(s / 2.0) * m.coef.abs() {
            bad += 1;
        }
        if sol.sigma == 0.0 && m.l >= 1 {
            let l2 = (m.l * m.l) as f64;
            // ∂_yy damping: l² |u_kl| <= eps |f_kl|
            if l2 * u.coef.abs() > (1.0 + tol) * sol.eps * m.coef.abs() {
                bad += 1;
            }
        }
    }
    for x in &sol.xi {
        let f_kl = f.modes.iter().find(|m| m.k == x.k && m.l == x.l).map_or(0.0, |m| m.coef);
        if x.coef.abs() > (1.0 + tol) * f_kl.abs() {
            bad += 1;
        }
    }
    if sol.sigma == 0.0 {
        // inflow trace: |Σ_l ξ_kl| <= Σ_l |f_kl| / l² for each k
        let mut ks: Vec<u32> = sol.xi.iter().map(|m| m.k).collect();
        ks.sort_unstable();
        ks.dedup();
        for k in ks {
            let lhs: f64 = sol.xi.iter().filter(|m| m.k == k).map(|m| m.coef).sum();
            let rhs: f64 = f.modes.iter().filter(|m| m.k == k && m.l >= 1).map(|m| m.coef.abs() / (m.l * m.l) as f64).sum();
            if lhs.abs() > (1.0 + tol) * rhs {
                bad += 1;
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_limit() {
        let f = FourierRhs::new(vec![Mode { k: 2, l: 3, coef: 1.3 }, Mode { k: 1, l: 0, coef: -0.5 }]).unwrap();
        let s = spectral_solve(&f, 1.0, 0.7).unwrap();
        assert!((s.u[0].coef - 1.3 / 13.0).abs() < 1e-16);
        assert!((s.u[1].coef + 0.5).abs() < 1e-16);
    }

    #[test]
    fn unit_mode_at_eps_zero() {
        let s = spectral_solve(&FourierRhs::single(1, 1, 1.0).unwrap(), 0.0, 1.0).unwrap();
        assert!((s.u[0].coef - 1.0 / 3.0).abs() < 1e-16);
        assert!((s.xi[0].coef - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn degenerate_and_invalid() {
        let f = FourierRhs::single(1, 2, 1.0).unwrap();
        assert!(matches!(spectral_solve(&f, 0.0, 0.0), Err(SpectralError::Degenerate { .. })));
        assert!(spectral_solve(&FourierRhs::single(1, 0, 1.0).unwrap(), 0.0, 0.0).is_ok());
        assert!(FourierRhs::single(0, 1, 1.0).is_err());
        let m = FourierRhs::new(vec![Mode { k: 1, l: 2, coef: 1.0 }, Mode { k: 3, l: 0, coef: 1.0 }, Mode { k: 1, l: 2, coef: 0.5 }]).unwrap();
        assert_eq!(m.modes().len(), 2);
        assert_eq!(m.modes()[0].coef, 1.5);
    }

    #[test]
    fn q_vanishes_on_inflow() {
        let f = FourierRhs::new(vec![Mode { k: 1, l: 1, coef: 1.0 }, Mode { k: 3, l: 2, coef: 0.4 }]).unwrap();
        let s = spectral_solve(&f, 1e-3, 0.0).unwrap();
        for x in [0.1, 1.0, 2.5] {
            assert_eq!(eval_series(&s, Quantity::Q, x, 0.0).unwrap(), 0.0);
        }
        let s1 = spectral_solve(&FourierRhs::single(1, 1, 1.0).unwrap(), 0.5, 0.0).unwrap();
        let u = eval_series(&s1, Quantity::U, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        assert!((u - s1.u[0].coef).abs() < 1e-16);
    }

    #[test]
    fn seminorm_examples() {
        assert_eq!(sobolev_seminorm(&[Mode { k: 1, l: 0, coef: 1.0 }], 0.0), 1.0);
        assert!((sobolev_seminorm(&[Mode { k: 1, l: 1, coef: 1.0 }], 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let f = FourierRhs::new(vec![Mode { k: 2, l: 1, coef: 1.0 }, Mode { k: 1, l: 3, coef: -0.3 }]).unwrap();
        let s = spectral_solve(&f, 1e-2, 0.0).unwrap();
        let h = 1e-6;
        for q in [Quantity::U, Quantity::Xi, Quantity::Q] {
            let (_, g) = eval_series_grad(&s, q, 0.7, 1.1).unwrap();
            let fx = (eval_series(&s, q, 0.7 + h, 1.1).unwrap() - eval_series(&s, q, 0.7 - h, 1.1).unwrap()) / (2.0 * h);
            let fy = (eval_series(&s, q, 0.7, 1.1 + h).unwrap() - eval_series(&s, q, 0.7, 1.1 - h).unwrap()) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-7 && (g[1] - fy).abs() < 1e-7, "{q:?}");
        }
    }
}
