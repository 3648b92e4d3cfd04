use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::priors::Priors;
use crate::error::{MtarError, Result};
use crate::model::{ModelSpec, Thresholds};
use crate::stats::matrix::serde_rows_vec;
use crate::stats::{ExtraParam, NoiseFamily, SymMatrix};

/// Chain length, storage and proposal settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainControl {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Concentration ζ of the Dirichlet threshold proposal.
    pub zeta: f64,
}

impl ChainControl {
    /// 1500 iterations (2000 for the hyperbolic family), 500 burn-in, no thinning.
    pub fn default_for(family: NoiseFamily, seed: u64) -> Self {
        let iterations = if family == NoiseFamily::SymmetricHyperbolic {
            2000
        } else {
            1500
        };
        ChainControl {
            iterations,
            burn_in: 500,
            thinning: 1,
            seed,
            zeta: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(MtarError::config("iterations must exceed burn_in"));
        }
        if self.thinning == 0 {
            return Err(MtarError::config("thinning must be at least 1"));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(MtarError::config(
                "dirichlet concentration must be positive",
            ));
        }
        Ok(())
    }

    /// Number of stored draws.
    pub fn stored(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }
}

/// One Gibbs state. `u` holds the latent scale of every eligible time point,
/// in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: Vec<SymMatrix>,
    pub c: Thresholds,
    pub h: usize,
    pub extra: ExtraParam,
    pub u: Vec<f64>,
}

impl ChainState {
    pub fn to_draw(&self) -> Draw {
        Draw {
            theta: self.theta.clone(),
            sigma: self.sigma.clone(),
            c: self.c.clone(),
            h: self.h,
            extra: self.extra.clone(),
        }
    }
}

/// A stored state without the latent scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    #[serde(with = "serde_rows_vec")]
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: Vec<SymMatrix>,
    pub c: Thresholds,
    pub h: usize,
    pub extra: ExtraParam,
}

impl Draw {
    /// All parameters flattened in a fixed order; see [`Draw::labels`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for th in &self.theta {
            for i in 0..th.nrows() {
                out.extend(th.row(i).iter());
            }
        }
        for s in &self.sigma {
            let m = s.matrix();
            for i in 0..m.nrows() {
                for j in 0..=i {
                    out.push(m[(i, j)]);
                }
            }
        }
        out.extend(self.c.values());
        out.push(self.h as f64);
        out.extend(&self.extra.values);
        out
    }

    /// Names matching [`Draw::flatten`]: `theta<j>[a,i]`, `sigma<j>[i,m]`
    /// (lower triangle), `c<j>`, `h`, `nu` or `nu1`/`nu2`; indices 1-based.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (j, th) in self.theta.iter().enumerate() {
            for a in 0..th.nrows() {
                for i in 0..th.ncols() {
                    out.push(format!("theta{}[{},{}]", j + 1, a + 1, i + 1));
                }
            }
        }
        for (j, s) in self.sigma.iter().enumerate() {
            for i in 0..s.dim() {
                for m in 0..=i {
                    out.push(format!("sigma{}[{},{}]", j + 1, i + 1, m + 1));
                }
            }
        }
        for j in 0..self.c.values().len() {
            out.push(format!("c{}", j + 1));
        }
        out.push("h".into());
        match self.extra.values.len() {
            0 => {}
            1 => out.push("nu".into()),
            n => out.extend((1..=n).map(|i| format!("nu{i}"))),
        }
        out
    }
}

/// The stored chain and the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<Draw>,
    pub spec: ModelSpec,
    pub priors: Priors,
    pub control: ChainControl,
    /// Output dimension and covariate count of the fitted data.
    pub k: usize,
    pub r: usize,
    /// Fraction of accepted threshold proposals over the whole run.
    pub acceptance_rate: f64,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}
