//! Distribution of `ρ = εᵀε` for a standardized mixture vector: given U,
//! `ρ / κ(U)` is chi-square with k degrees of freedom.

use statrs::function::beta::beta_reg;

use super::family::{mixing_log_density, variance_factor, ExtraParam, NoiseFamily};
use super::quadrature::{integrate, integrate_to_infinity};
use super::special::{ln_regularized_gamma, normal_quantile};
use crate::error::{MtarError, Result};

const ABS_TOL: f64 = 1e-12;
const REL_TOL: f64 = 1e-10;
const MAX_SEGMENTS: usize = 400;

/// `(F(x), 1 - F(x))`, each computed directly so the smaller one keeps its
/// relative accuracy in the tails.
pub fn quadform_cdf_pair(
    family: NoiseFamily,
    x: f64,
    k: usize,
    extra: &ExtraParam,
) -> Result<(f64, f64)> {
    if !(x >= 0.0) {
        return Err(MtarError::domain(format!(
            "quadratic form must be nonnegative, got {x}"
        )));
    }
    if k == 0 {
        return Err(MtarError::domain("dimension must be positive"));
    }
    extra.validate(family)?;
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x == f64::INFINITY {
        return Ok((1.0, 0.0));
    }
    let a = 0.5 * k as f64;
    // (P, Q) of the chi-square(k) law at s
    let chi = |s: f64| -> (f64, f64) {
        if s <= 0.0 {
            return (0.0, 1.0);
        }
        if s == f64::INFINITY {
            return (1.0, 0.0);
        }
        match ln_regularized_gamma(a, 0.5 * s) {
            Ok((lp, lq)) => (lp.exp(), lq.exp()),
            Err(_) => (f64::NAN, f64::NAN),
        }
    };
    let pair = match family {
        NoiseFamily::Gaussian => chi(x),
        NoiseFamily::StudentT => {
            // ρ/k ~ F(k, ν)
            let nu = extra.nu();
            let w = x / (x + nu);
            let f = beta_reg(a, 0.5 * nu, w);
            let g = beta_reg(0.5 * nu, a, 1.0 - w);
            (f, g)
        }
        NoiseFamily::ContaminatedNormal => {
            let (nu1, nu2) = (extra.values[0], extra.values[1]);
            let (p1, q1) = chi(nu2 * x);
            let (p2, q2) = chi(x);
            (nu1 * p1 + (1.0 - nu1) * p2, nu1 * q1 + (1.0 - nu1) * q2)
        }
        NoiseFamily::Slash => {
            // U ~ Beta(ν/2, 1); with v = U^{ν/2} uniform, F = ∫₀¹ P(χ²_k ≤ x v^{2/ν}) dv
            let e = 2.0 / extra.nu();
            let f = integrate(
                |v| chi(x * v.powf(e)).0,
                0.0,
                1.0,
                ABS_TOL,
                REL_TOL,
                MAX_SEGMENTS,
            )
            .value;
            let g = integrate(
                |v| chi(x * v.powf(e)).1,
                0.0,
                1.0,
                ABS_TOL,
                REL_TOL,
                MAX_SEGMENTS,
            )
            .value;
            (f, g)
        }
        NoiseFamily::SymmetricHyperbolic | NoiseFamily::Laplace => {
            // κ(u) = u: F = E[P(χ²_k ≤ x / U)]
            let scale = variance_factor(family, extra)?.unwrap_or(1.0);
            // the mixing log density up to its u-dependent part, evaluated once
            let (offset, slope, inv) = match family {
                NoiseFamily::Laplace => (-(8f64.ln()), -0.125, 0.0),
                _ => {
                    let nu = extra.nu();
                    (
                        mixing_log_density(family, 1.0, extra)? + 0.5 * (1.0 + nu * nu),
                        -0.5 * nu * nu,
                        -0.5,
                    )
                }
            };
            let weight = |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                (offset + slope * u + inv / u).exp()
            };
            let f = integrate_to_infinity(
                |u| weight(u) * chi(x / u).0,
                0.0,
                scale,
                ABS_TOL,
                REL_TOL,
                MAX_SEGMENTS,
            )
            .value;
            let g = integrate_to_infinity(
                |u| weight(u) * chi(x / u).1,
                0.0,
                scale,
                ABS_TOL,
                REL_TOL,
                MAX_SEGMENTS,
            )
            .value;
            (f, g)
        }
    };
    if !pair.0.is_finite() || !pair.1.is_finite() {
        return Err(MtarError::numerical(format!(
            "quadratic-form CDF failed at x = {x}"
        )));
    }
    Ok((pair.0.clamp(0.0, 1.0), pair.1.clamp(0.0, 1.0)))
}

/// `F_ρ(x | ν)`.
pub fn quadform_cdf(family: NoiseFamily, x: f64, k: usize, extra: &ExtraParam) -> Result<f64> {
    quadform_cdf_pair(family, x, k, extra).map(|p| p.0)
}

/// `Φ⁻¹(F_ρ(x))`, taken from whichever tail is smaller and clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn quadform_normal_score(
    family: NoiseFamily,
    x: f64,
    k: usize,
    extra: &ExtraParam,
) -> Result<f64> {
    const EPS: f64 = 1e-12;
    let (f, g) = quadform_cdf_pair(family, x, k, extra)?;
    Ok(if f <= g {
        normal_quantile(f.max(EPS))
    } else {
        -normal_quantile(g.max(EPS))
    })
}
