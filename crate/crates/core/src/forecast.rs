//! m-step-ahead forecasts by joint predictive simulation: one trajectory per
//! posterior draw, the same draw across every step of the horizon.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::gibbs::{Draw, PosteriorDraws};
use crate::model::{fill_design_row, MultivariateSeries};
use crate::rng::{derive_seed, fnv1a64, ChainRng, FORECASTING};
use crate::selection::equal_tailed;
use crate::stats::sample_noise;
use rand::SeedableRng;

/// Known future exogenous paths.
#[derive(Debug, Clone)]
pub struct ForecastInput {
    pub history: MultivariateSeries,
    /// `Z_{T+1..T+m}`. Ignored (may be empty) when `self_exciting` is set.
    pub future_z: Vec<f64>,
    /// m×r.
    pub future_x: DMatrix<f64>,
    pub horizon: usize,
    /// Output coordinate (0-based) that doubles as the threshold series.
    /// Future `Z` values are then taken from each simulated trajectory.
    pub self_exciting: Option<usize>,
}

impl ForecastInput {
    pub fn new(
        history: MultivariateSeries,
        future_z: Vec<f64>,
        future_x: DMatrix<f64>,
        horizon: usize,
    ) -> Self {
        ForecastInput {
            history,
            future_z,
            future_x,
            horizon,
            self_exciting: None,
        }
    }

    fn validate(&self, draws: &PosteriorDraws) -> Result<()> {
        let m = self.horizon;
        if m == 0 {
            return Err(MtarError::config("forecast horizon must be at least 1"));
        }
        if self.self_exciting.is_none() && self.future_z.len() != m {
            return Err(MtarError::config(format!(
                "future_z has {} values but the horizon is {m}",
                self.future_z.len()
            )));
        }
        if let Some(col) = self.self_exciting {
            if col >= self.history.k() {
                return Err(MtarError::config(format!(
                    "self-exciting column {} out of range",
                    col + 1
                )));
            }
            if draws.spec.h_min == 0 {
                return Err(MtarError::config(
                    "self-exciting forecasts need a delay of at least 1",
                ));
            }
        }
        if self.future_x.nrows() != m || self.future_x.ncols() != self.history.r() {
            return Err(MtarError::config(format!(
                "future_x is {}x{} but {m}x{} is required",
                self.future_x.nrows(),
                self.future_x.ncols(),
                self.history.r()
            )));
        }
        if self.history.k() != draws.k || self.history.r() != draws.r {
            return Err(MtarError::config(
                "history dimensions differ from the fitted model",
            ));
        }
        if self.history.len() < draws.spec.max_lag() {
            return Err(MtarError::config(format!(
                "history has {} points but {} lags are needed",
                self.history.len(),
                draws.spec.max_lag()
            )));
        }
        if self
            .future_x
            .iter()
            .chain(&self.future_z)
            .any(|v| !v.is_finite())
        {
            return Err(MtarError::config("future exogenous values must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    pub k: usize,
    pub level: f64,
    /// One m×k trajectory per posterior draw, in draw order.
    #[serde(skip)]
    pub draws: Vec<DMatrix<f64>>,
    /// m×k predictive means.
    #[serde(with = "crate::stats::matrix::serde_rows")]
    pub point: DMatrix<f64>,
    #[serde(with = "crate::stats::matrix::serde_rows")]
    pub lower: DMatrix<f64>,
    #[serde(with = "crate::stats::matrix::serde_rows")]
    pub upper: DMatrix<f64>,
}

impl ForecastResult {
    /// Predictive draws of coordinate `i` at step `step` (both 0-based).
    pub fn samples(&self, step: usize, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[(step, i)]).collect()
    }
}

/// Content hash of a draw; identical draws get distinct seeds through their
/// duplicate index.
fn draw_key(draw: &Draw) -> u64 {
    let bytes: Vec<u8> = draw
        .flatten()
        .iter()
        .flat_map(|v| v.to_bits().to_le_bytes())
        .collect();
    fnv1a64(&bytes)
}

fn draw_seeds(master: u64, draws: &[Draw]) -> Vec<u64> {
    let mut seen: HashMap<u64, u64> = HashMap::new();
    draws
        .iter()
        .map(|d| {
            let key = draw_key(d);
            let dup = seen.entry(key).or_insert(0);
            let seed = derive_seed(
                master,
                FORECASTING,
                key ^ dup.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            *dup += 1;
            seed
        })
        .collect()
}

/// Simulates one trajectory from a single parameter draw.
fn trajectory(
    draws: &PosteriorDraws,
    draw: &Draw,
    input: &ForecastInput,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let spec = &draws.spec;
    let family = spec.family;
    let m = input.horizon;
    let k = draws.k;
    let lags = spec.max_lag();
    let hist = &input.history;
    let t_hist = hist.len();

    // Last `lags` history points followed by m placeholders.
    let mut work = if lags > 0 {
        hist.window(t_hist - lags + 1, t_hist)
    } else {
        hist.head(0)
    };
    for step in 0..m {
        let z = if input.self_exciting.is_some() {
            0.0
        } else {
            input.future_z[step]
        };
        let x: Vec<f64> = input.future_x.row(step).iter().copied().collect();
        work.push(&vec![0.0; k], &x, z);
    }

    let factors: Vec<DMatrix<f64>> = draw
        .sigma
        .iter()
        .map(|s| s.lower_factor())
        .collect::<Result<_>>()?;
    let mut rng = ChainRng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(m, k);
    let mut row = Vec::new();
    for step in 0..m {
        let t = lags + step + 1;
        let j = draw.c.regime_of(work.z_at(t - draw.h)).min(spec.l - 1);
        row.resize(spec.s(j, k, draws.r), 0.0);
        fill_design_row(&work, t, spec.p[j], spec.q[j], spec.d[j], &mut row);
        let theta = &draw.theta[j];
        let noise = sample_noise(family, &draw.extra, &factors[j], &mut rng)?;
        let y: Vec<f64> = (0..k)
            .map(|i| {
                row.iter()
                    .enumerate()
                    .map(|(a, v)| v * theta[(a, i)])
                    .sum::<f64>()
                    + noise[i]
            })
            .collect();
        work.set_y(t, &y);
        if let Some(col) = input.self_exciting {
            work.set_z(t, y[col]);
        }
        out.row_mut(step).copy_from_slice(&y);
    }
    Ok(out)
}

/// Draws one predictive trajectory per stored posterior draw and summarizes
/// them by means and equal-tailed intervals at `level`.
pub fn forecast<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    input: &ForecastInput,
    level: f64,
    rng: &mut R,
) -> Result<ForecastResult> {
    if draws.is_empty() {
        return Err(MtarError::config("no posterior draws to forecast from"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MtarError::config("interval level must lie in (0, 1)"));
    }
    input.validate(draws)?;
    let master = rng.next_u64();
    let seeds = draw_seeds(master, &draws.draws);
    let paths: Vec<DMatrix<f64>> = draws
        .draws
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(d, &s)| trajectory(draws, d, input, s))
        .collect::<Result<_>>()?;
    let (m, k) = (input.horizon, draws.k);
    let mut point = DMatrix::zeros(m, k);
    let mut lower = DMatrix::zeros(m, k);
    let mut upper = DMatrix::zeros(m, k);
    let mut buf = Vec::with_capacity(paths.len());
    for step in 0..m {
        for i in 0..k {
            buf.clear();
            buf.extend(paths.iter().map(|p| p[(step, i)]));
            point[(step, i)] = buf.iter().sum::<f64>() / buf.len() as f64;
            buf.sort_by(f64::total_cmp);
            let (lo, hi) = equal_tailed(&buf, level);
            lower[(step, i)] = lo;
            upper[(step, i)] = hi;
        }
    }
    Ok(ForecastResult {
        horizon: m,
        k,
        level,
        draws: paths,
        point,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{ChainControl, Priors};
    use crate::model::{ModelSpec, Thresholds};
    use crate::stats::{ExtraParam, NoiseFamily, SymMatrix};

    fn ar1_draws(phi0: f64, phi1: f64, var: f64, copies: usize) -> PosteriorDraws {
        let spec = ModelSpec::uniform(1, 1, 0, 0, 0, 0, NoiseFamily::Gaussian);
        let draw = Draw {
            theta: vec![DMatrix::from_row_slice(2, 1, &[phi0, phi1])],
            sigma: vec![SymMatrix::from_diagonal(&[var])],
            c: Thresholds::empty(),
            h: 0,
            extra: ExtraParam::none(),
        };
        PosteriorDraws {
            draws: vec![draw; copies],
            priors: Priors::non_informative(&spec, 1, 0),
            spec,
            control: ChainControl::default_for(NoiseFamily::Gaussian, 0),
            k: 1,
            r: 0,
            acceptance_rate: 0.0,
        }
    }

    fn history(last: f64) -> MultivariateSeries {
        MultivariateSeries::without_covariates(
            DMatrix::from_row_slice(3, 1, &[0.0, 1.0, last]),
            vec![0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn one_step_mean_follows_the_recursion() {
        let draws = ar1_draws(0.5, 0.6, 1e-14, 50);
        let input = ForecastInput::new(history(2.0), vec![0.0; 3], DMatrix::zeros(3, 0), 3);
        let f = forecast(&draws, &input, 0.9, &mut ChainRng::seed_from_u64(1)).unwrap();
        let mut y = 2.0;
        for step in 0..3 {
            y = 0.5 + 0.6 * y;
            assert!((f.point[(step, 0)] - y).abs() < 1e-6);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let draws = ar1_draws(0.0, 0.5, 1.0, 2);
        let input = ForecastInput::new(history(1.0), vec![0.0; 2], DMatrix::zeros(3, 0), 3);
        assert!(matches!(
            forecast(&draws, &input, 0.95, &mut ChainRng::seed_from_u64(1)),
            Err(MtarError::Config(_))
        ));
    }

    #[test]
    fn permuted_draws_give_the_same_summary() {
        let mut draws = ar1_draws(0.0, 0.5, 1.0, 1);
        let base = draws.draws[0].clone();
        draws.draws = (0..40)
            .map(|i| {
                let mut d = base.clone();
                d.theta[0][(0, 0)] = i as f64 * 0.01;
                d
            })
            .collect();
        let input = ForecastInput::new(history(1.0), vec![0.0; 2], DMatrix::zeros(2, 0), 2);
        let a = forecast(&draws, &input, 0.8, &mut ChainRng::seed_from_u64(5)).unwrap();
        draws.draws.reverse();
        let b = forecast(&draws, &input, 0.8, &mut ChainRng::seed_from_u64(5)).unwrap();
        assert!((a.point - b.point).abs().max() < 1e-12);
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.upper, b.upper);
    }
}
