//! The six Gaussian variance mixtures: `Y = μ + √κ(U) Σ^{1/2} ε₀`.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::SymMatrix;
use super::sampling::{open_unit, sample_gamma, sample_gig, standard_normal};
use super::special::{bessel_k, ln_gamma, ln_regularized_gamma, log_bessel_k};
use crate::error::{MtarError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    StudentT,
    Slash,
    ContaminatedNormal,
    SymmetricHyperbolic,
    Laplace,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 6] = [
        NoiseFamily::Gaussian,
        NoiseFamily::StudentT,
        NoiseFamily::Slash,
        NoiseFamily::ContaminatedNormal,
        NoiseFamily::SymmetricHyperbolic,
        NoiseFamily::Laplace,
    ];

    /// Number of extra parameters the family carries.
    pub fn extra_len(self) -> usize {
        match self {
            NoiseFamily::Gaussian | NoiseFamily::Laplace => 0,
            NoiseFamily::ContaminatedNormal => 2,
            _ => 1,
        }
    }

    /// `true` when κ(u) = 1/u, `false` when κ(u) = u.
    pub fn kappa_is_reciprocal(self) -> bool {
        matches!(
            self,
            NoiseFamily::StudentT | NoiseFamily::Slash | NoiseFamily::ContaminatedNormal
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::StudentT => "student_t",
            NoiseFamily::Slash => "slash",
            NoiseFamily::ContaminatedNormal => "contaminated_normal",
            NoiseFamily::SymmetricHyperbolic => "symmetric_hyperbolic",
            NoiseFamily::Laplace => "laplace",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = MtarError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match norm.as_str() {
            "gaussian" | "normal" => NoiseFamily::Gaussian,
            "student_t" | "student" | "t" => NoiseFamily::StudentT,
            "slash" => NoiseFamily::Slash,
            "contaminated_normal" | "contaminated" => NoiseFamily::ContaminatedNormal,
            "symmetric_hyperbolic" | "hyperbolic" => NoiseFamily::SymmetricHyperbolic,
            "laplace" => NoiseFamily::Laplace,
            _ => return Err(MtarError::config(format!("unknown noise family '{s}'"))),
        })
    }
}

/// Family-specific extra parameter ν: empty, a scalar, or (ν₁, ν₂) for the
/// contaminated normal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtraParam {
    pub values: Vec<f64>,
}

impl ExtraParam {
    pub fn none() -> Self {
        ExtraParam { values: Vec::new() }
    }

    pub fn scalar(nu: f64) -> Self {
        ExtraParam { values: vec![nu] }
    }

    pub fn pair(nu1: f64, nu2: f64) -> Self {
        ExtraParam {
            values: vec![nu1, nu2],
        }
    }

    pub fn nu(&self) -> f64 {
        self.values[0]
    }

    pub fn validate(&self, family: NoiseFamily) -> Result<()> {
        if self.values.len() != family.extra_len() {
            return Err(MtarError::domain(format!(
                "{family} takes {} extra parameter(s), got {}",
                family.extra_len(),
                self.values.len()
            )));
        }
        let ok = match family {
            NoiseFamily::Gaussian | NoiseFamily::Laplace => true,
            NoiseFamily::ContaminatedNormal => self.values.iter().all(|&v| v > 0.0 && v < 1.0),
            _ => self.values[0] > 0.0 && self.values[0].is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MtarError::domain(format!(
                "extra parameter {:?} is outside the support of {family}",
                self.values
            )))
        }
    }
}

/// The scale function κ(u).
pub fn kappa(family: NoiseFamily, u: f64) -> f64 {
    if family.kappa_is_reciprocal() {
        1.0 / u
    } else {
        u
    }
}

/// `Var(Y) = factor · Σ`, when the second moment exists.
pub fn variance_factor(family: NoiseFamily, extra: &ExtraParam) -> Result<Option<f64>> {
    extra.validate(family)?;
    Ok(match family {
        NoiseFamily::Gaussian => Some(1.0),
        NoiseFamily::StudentT | NoiseFamily::Slash => {
            let nu = extra.nu();
            (nu > 2.0).then(|| nu / (nu - 2.0))
        }
        NoiseFamily::ContaminatedNormal => {
            Some(extra.values[0] / extra.values[1] + 1.0 - extra.values[0])
        }
        NoiseFamily::SymmetricHyperbolic => {
            let nu = extra.nu();
            Some(bessel_k(2.0, nu)? / (nu * bessel_k(1.0, nu)?))
        }
        NoiseFamily::Laplace => Some(8.0),
    })
}

/// Log density (or log mass for the contaminated normal) of the mixing variable U.
pub fn mixing_log_density(family: NoiseFamily, u: f64, extra: &ExtraParam) -> Result<f64> {
    extra.validate(family)?;
    Ok(match family {
        NoiseFamily::Gaussian => {
            if u == 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        NoiseFamily::StudentT => {
            if !(u > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let h = 0.5 * extra.nu();
            h * h.ln() - ln_gamma(h) + (h - 1.0) * u.ln() - h * u
        }
        NoiseFamily::Slash => {
            if !(u > 0.0 && u <= 1.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let h = 0.5 * extra.nu();
            h.ln() + (h - 1.0) * u.ln()
        }
        NoiseFamily::ContaminatedNormal => {
            let (nu1, nu2) = (extra.values[0], extra.values[1]);
            if u == nu2 {
                nu1.ln()
            } else if u == 1.0 {
                (1.0 - nu1).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        NoiseFamily::SymmetricHyperbolic => {
            if !(u > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let nu = extra.nu();
            nu.ln() - LN_2 - log_bessel_k(1.0, nu)? - 0.5 * (1.0 / u + nu * nu * u)
        }
        NoiseFamily::Laplace => {
            if !(u > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            -(8f64.ln()) - u / 8.0
        }
    })
}

/// Draw the mixing variable U. The Gaussian family consumes no randomness.
pub fn sample_mixing<R: Rng + ?Sized>(
    family: NoiseFamily,
    extra: &ExtraParam,
    rng: &mut R,
) -> Result<f64> {
    Ok(match family {
        NoiseFamily::Gaussian => 1.0,
        // Gamma(ν/2, ν/2), shape–rate
        NoiseFamily::StudentT => sample_gamma(0.5 * extra.nu(), 0.5 * extra.nu(), rng)?,
        // Beta(ν/2, 1) by inversion
        NoiseFamily::Slash => open_unit(rng).powf(2.0 / extra.nu()),
        NoiseFamily::ContaminatedNormal => {
            if rng.random::<f64>() < extra.values[0] {
                extra.values[1]
            } else {
                1.0
            }
        }
        NoiseFamily::SymmetricHyperbolic => sample_gig(1.0, 1.0, extra.nu() * extra.nu(), rng)?,
        // Exponential with mean 8 = Gamma(1, 1/8)
        NoiseFamily::Laplace => sample_gamma(1.0, 0.125, rng)?,
    })
}

/// One noise vector `√κ(U) L z` given the lower Cholesky factor `L` of Σ.
pub fn sample_noise<R: Rng + ?Sized>(
    family: NoiseFamily,
    extra: &ExtraParam,
    sigma_factor: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let u = sample_mixing(family, extra, rng)?;
    let scale = kappa(family, u).sqrt();
    let z = DVector::from_fn(sigma_factor.nrows(), |_, _| standard_normal(rng));
    Ok(sigma_factor * z * scale)
}

/// Precomputed log density of a k-dimensional member of a family, evaluated
/// through the quadratic form `q = (y-μ)ᵀΣ⁻¹(y-μ)` and `log|Σ|`.
#[derive(Debug, Clone)]
pub struct LogDensity {
    family: NoiseFamily,
    k: f64,
    extra: ExtraParam,
    constant: f64,
}

impl LogDensity {
    pub fn new(family: NoiseFamily, extra: &ExtraParam, k: usize) -> Result<Self> {
        extra.validate(family)?;
        if k == 0 {
            return Err(MtarError::domain("dimension must be positive"));
        }
        let kf = k as f64;
        let base = -0.5 * kf * LN_2PI;
        let constant = match family {
            NoiseFamily::Gaussian | NoiseFamily::ContaminatedNormal => base,
            NoiseFamily::StudentT => {
                let nu = extra.nu();
                ln_gamma(0.5 * (nu + kf)) - ln_gamma(0.5 * nu) - 0.5 * kf * (nu * PI).ln()
            }
            NoiseFamily::Slash => base + (0.5 * extra.nu()).ln(),
            NoiseFamily::SymmetricHyperbolic => {
                let nu = extra.nu();
                base + 0.5 * kf * nu.ln() - log_bessel_k(1.0, nu)?
            }
            NoiseFamily::Laplace => -(kf + 1.0) * LN_2 - 0.5 * kf * PI.ln(),
        };
        Ok(LogDensity {
            family,
            k: kf,
            extra: extra.clone(),
            constant,
        })
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.k as usize
    }

    pub fn eval(&self, q: f64, log_det: f64) -> f64 {
        let k = self.k;
        let core = match self.family {
            NoiseFamily::Gaussian => -0.5 * q,
            NoiseFamily::StudentT => {
                let nu = self.extra.nu();
                -0.5 * (nu + k) * (q / nu).ln_1p()
            }
            NoiseFamily::Slash => {
                let a = 0.5 * (k + self.extra.nu());
                if q <= 0.0 {
                    -a.ln()
                } else {
                    let half = 0.5 * q;
                    let lnp = ln_regularized_gamma(a, half)
                        .map(|(p, _)| p)
                        .unwrap_or(f64::NAN);
                    ln_gamma(a) + lnp - a * half.ln()
                }
            }
            NoiseFamily::ContaminatedNormal => {
                let (nu1, nu2) = (self.extra.values[0], self.extra.values[1]);
                let a = nu1.ln() + 0.5 * k * nu2.ln() - 0.5 * nu2 * q;
                let b = (1.0 - nu1).ln() - 0.5 * q;
                log_add_exp(a, b)
            }
            NoiseFamily::SymmetricHyperbolic => {
                let nu = self.extra.nu();
                let lam = 1.0 - 0.5 * k;
                let root = (1.0 + q).sqrt();
                log_bessel_k(lam, nu * root).unwrap_or(f64::NAN) + lam * root.ln()
            }
            NoiseFamily::Laplace => {
                let lam = 1.0 - 0.5 * k;
                if q <= 0.0 {
                    // finite (1/4)|Σ|^{-1/2} for k = 1, divergent for k >= 2
                    return if self.k == 1.0 {
                        0.25f64.ln() - 0.5 * log_det
                    } else {
                        f64::INFINITY
                    };
                }
                let root = q.sqrt();
                lam * root.ln() + log_bessel_k(lam, 0.5 * root).unwrap_or(f64::NAN)
            }
        };
        self.constant - 0.5 * log_det + core
    }
}

/// Log density of `y` under the family with location `mu` and scale `sigma`.
pub fn mixture_log_density(
    family: NoiseFamily,
    y: &[f64],
    mu: &[f64],
    sigma: &SymMatrix,
    extra: &ExtraParam,
) -> Result<f64> {
    let k = sigma.dim();
    if y.len() != k || mu.len() != k {
        return Err(MtarError::domain(format!("expected vectors of length {k}")));
    }
    let chol = sigma.cholesky()?;
    let diff = DVector::from_iterator(k, y.iter().zip(mu).map(|(a, b)| a - b));
    let w = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| MtarError::NotPositiveDefinite("scale matrix".into()))?;
    let q = w.norm_squared();
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    Ok(LogDensity::new(family, extra, k)?.eval(q, log_det))
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Numerically stable `log Σ exp(xᵢ)`, summing left to right.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
