use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::model::ModelSpec;
use crate::stats::matrix::serde_rows;
use crate::stats::{NoiseFamily, SymMatrix};

/// Matrix-normal / inverse-Wishart prior of one regime:
/// `θⱼ | Σⱼ ~ MN(μ₀ⱼ, Δ₀ⱼ, Σⱼ)`, `Σⱼ ~ IW(Ω₀ⱼ, τ₀ⱼ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePrior {
    #[serde(with = "serde_rows")]
    pub mu0: DMatrix<f64>,
    pub delta0: SymMatrix,
    pub omega0: SymMatrix,
    pub tau0: f64,
}

impl RegimePrior {
    /// `μ₀ = 0`, `Δ₀ = 10³ I`, `Ω₀ = I`, `τ₀ = k + 2`.
    pub fn non_informative(s: usize, k: usize) -> Self {
        RegimePrior {
            mu0: DMatrix::zeros(s, k),
            delta0: SymMatrix::scaled_identity(s, 1e3),
            omega0: SymMatrix::identity(k),
            tau0: k as f64 + 2.0,
        }
    }
}

/// Hyperprior of the extra parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtraPrior {
    None,
    /// Uniform on `(lower, upper)`, sampled on a trapezoid grid (Student-t, hyperbolic).
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Gamma(shape, rate) (Slash).
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// `ν₁ ~ Beta(γ₀₁, η₀₁)`, `ν₂ ~ TGamma(γ₀₂, η₀₂; (0,1))` (contaminated normal).
    Contaminated {
        gamma01: f64,
        eta01: f64,
        gamma02: f64,
        eta02: f64,
    },
}

impl ExtraPrior {
    pub fn default_for(family: NoiseFamily) -> Self {
        match family {
            NoiseFamily::Gaussian | NoiseFamily::Laplace => ExtraPrior::None,
            NoiseFamily::StudentT => ExtraPrior::Uniform {
                lower: 2.0,
                upper: 100.0,
            },
            NoiseFamily::SymmetricHyperbolic => ExtraPrior::Uniform {
                lower: 0.01,
                upper: 20.0,
            },
            NoiseFamily::Slash => ExtraPrior::Gamma {
                shape: 1.0,
                rate: 0.1,
            },
            NoiseFamily::ContaminatedNormal => ExtraPrior::Contaminated {
                gamma01: 1.0,
                eta01: 1.0,
                gamma02: 1.0,
                eta02: 1.0,
            },
        }
    }

    fn matches(&self, family: NoiseFamily) -> bool {
        matches!(
            (self, family),
            (
                ExtraPrior::None,
                NoiseFamily::Gaussian | NoiseFamily::Laplace
            ) | (
                ExtraPrior::Uniform { .. },
                NoiseFamily::StudentT | NoiseFamily::SymmetricHyperbolic
            ) | (ExtraPrior::Gamma { .. }, NoiseFamily::Slash)
                | (
                    ExtraPrior::Contaminated { .. },
                    NoiseFamily::ContaminatedNormal
                )
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub regimes: Vec<RegimePrior>,
    pub extra: ExtraPrior,
    /// Number of grid intervals m for the Student-t and hyperbolic ν updates.
    pub grid_size: usize,
}

impl Priors {
    pub fn non_informative(spec: &ModelSpec, k: usize, r: usize) -> Self {
        Priors {
            regimes: (0..spec.l)
                .map(|j| RegimePrior::non_informative(spec.s(j, k, r), k))
                .collect(),
            extra: ExtraPrior::default_for(spec.family),
            grid_size: 1000,
        }
    }

    pub fn validate(&self, spec: &ModelSpec, k: usize, r: usize) -> Result<()> {
        if self.regimes.len() != spec.l {
            return Err(MtarError::config(format!(
                "priors list {} regimes, model has {}",
                self.regimes.len(),
                spec.l
            )));
        }
        for (j, p) in self.regimes.iter().enumerate() {
            let s = spec.s(j, k, r);
            if p.mu0.shape() != (s, k) || p.delta0.dim() != s || p.omega0.dim() != k {
                return Err(MtarError::config(format!(
                    "prior dimensions of regime {} do not match s={s}, k={k}",
                    j + 1
                )));
            }
            if !p.delta0.is_positive_definite() || !p.omega0.is_positive_definite() {
                return Err(MtarError::config(format!(
                    "prior scale matrices of regime {} must be positive definite",
                    j + 1
                )));
            }
            if !(p.tau0 > k as f64 - 1.0) {
                return Err(MtarError::config(format!(
                    "tau0 of regime {} must exceed k - 1",
                    j + 1
                )));
            }
        }
        if !self.extra.matches(spec.family) {
            return Err(MtarError::config(format!(
                "extra-parameter prior {:?} does not fit family {}",
                self.extra, spec.family
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self.extra {
            ExtraPrior::None => true,
            ExtraPrior::Uniform { lower, upper } => {
                positive(lower) && lower < upper && upper.is_finite()
            }
            ExtraPrior::Gamma { shape, rate } => positive(shape) && positive(rate),
            ExtraPrior::Contaminated {
                gamma01,
                eta01,
                gamma02,
                eta02,
            } => positive(gamma01) && positive(eta01) && positive(gamma02) && eta02 >= 0.0,
        };
        if !ok {
            return Err(MtarError::config(format!(
                "invalid extra-parameter hyperparameters {:?}",
                self.extra
            )));
        }
        if self.grid_size < 2 {
            return Err(MtarError::config("grid size m must be at least 2"));
        }
        Ok(())
    }
}
