//! Ground-truth generators and Monte-Carlo experiment runners.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::forecast::{forecast, ForecastInput};
use crate::gibbs::{run_chain, ChainControl, Priors};
use crate::model::{fill_design_row, ModelSpec, MultivariateSeries, Thresholds};
use crate::rng::{derive_seed, stream, ESTIMATION, FORECASTING, REPLICATION, SIMULATION};
use crate::selection::{criteria, posterior_summary, DelaySummary};
use crate::stats::matrix::serde_rows;
use crate::stats::sampling::standard_normal;
use crate::stats::{sample_noise, ExtraParam, NoiseFamily, SymMatrix};

/// Generator of the covariates and the threshold series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exogenous {
    /// Zero-mean VAR(1) of `(X_tᵀ, Z_t)ᵀ`; the last coordinate is `Z`.
    Var1 {
        #[serde(with = "serde_rows")]
        coefficients: DMatrix<f64>,
        noise: SymMatrix,
    },
    /// `Z_t = intercept + slope Z_{t−1} + a_t`, `a_t ~ N(0, 1)`, no covariates.
    Ar1 { intercept: f64, slope: f64 },
    /// Fixed paths. Must cover `burn + T` points.
    Series {
        #[serde(with = "serde_rows")]
        x: DMatrix<f64>,
        z: Vec<f64>,
    },
}

impl Exogenous {
    pub fn r(&self) -> usize {
        match self {
            Exogenous::Var1 { coefficients, .. } => coefficients.nrows() - 1,
            Exogenous::Ar1 { .. } => 0,
            Exogenous::Series { x, .. } => x.ncols(),
        }
    }

    /// Stationary mean of `(X, Z)`; for fixed paths, their first point.
    fn start(&self) -> (Vec<f64>, f64) {
        match self {
            Exogenous::Var1 { coefficients, .. } => (vec![0.0; coefficients.nrows() - 1], 0.0),
            Exogenous::Ar1 { intercept, slope } => (Vec::new(), intercept / (1.0 - slope)),
            Exogenous::Series { x, z } => (x.row(0).iter().copied().collect(), z[0]),
        }
    }

    fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, Vec<f64>)> {
        match self {
            Exogenous::Var1 {
                coefficients,
                noise,
            } => {
                let dim = coefficients.nrows();
                let l = noise.lower_factor()?;
                let mut state = nalgebra::DVector::zeros(dim);
                let mut x = DMatrix::zeros(n, dim - 1);
                let mut z = Vec::with_capacity(n);
                for t in 0..n {
                    let a = &l * nalgebra::DVector::from_fn(dim, |_, _| standard_normal(rng));
                    state = coefficients * state + a;
                    for i in 0..dim - 1 {
                        x[(t, i)] = state[i];
                    }
                    z.push(state[dim - 1]);
                }
                Ok((x, z))
            }
            Exogenous::Ar1 { intercept, slope } => {
                let mut prev = intercept / (1.0 - slope);
                let z = (0..n)
                    .map(|_| {
                        prev = intercept + slope * prev + standard_normal(rng);
                        prev
                    })
                    .collect();
                Ok((DMatrix::zeros(n, 0), z))
            }
            Exogenous::Series { x, z } => {
                if z.len() < n || x.nrows() < n {
                    return Err(MtarError::config(format!(
                        "exogenous series has {} points, {n} needed",
                        z.len()
                    )));
                }
                Ok((x.rows(0, n).into_owned(), z[..n].to_vec()))
            }
        }
    }
}

/// Parameters of a data-generating MTAR process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub spec: ModelSpec,
    #[serde(with = "crate::stats::matrix::serde_rows_vec")]
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: Vec<SymMatrix>,
    pub c: Thresholds,
    pub h: usize,
    pub extra: ExtraParam,
    pub exogenous: Exogenous,
}

impl TrueModel {
    pub fn k(&self) -> usize {
        self.sigma[0].dim()
    }

    pub fn r(&self) -> usize {
        self.exogenous.r()
    }

    /// True values keyed by the labels of [`crate::gibbs::Draw::labels`].
    pub fn labelled_values(&self) -> Vec<(String, f64)> {
        let draw = crate::gibbs::Draw {
            theta: self.theta.clone(),
            sigma: self.sigma.clone(),
            c: self.c.clone(),
            h: self.h,
            extra: self.extra.clone(),
        };
        draw.labels().into_iter().zip(draw.flatten()).collect()
    }

    pub fn with_family(mut self, family: NoiseFamily, extra: ExtraParam) -> Self {
        self.spec.family = family;
        self.extra = extra;
        self
    }

    fn validate(&self) -> Result<()> {
        let (k, r) = (self.k(), self.r());
        self.spec.validate(k, r)?;
        self.extra.validate(self.spec.family)?;
        if self.theta.len() != self.spec.l
            || self.sigma.len() != self.spec.l
            || self.c.values().len() + 1 != self.spec.l
        {
            return Err(MtarError::config(
                "true model has inconsistent regime counts",
            ));
        }
        for j in 0..self.spec.l {
            let s = self.spec.s(j, k, r);
            if self.theta[j].shape() != (s, k) || self.sigma[j].dim() != k {
                return Err(MtarError::config(format!(
                    "regime {} has wrong parameter dimensions",
                    j + 1
                )));
            }
        }
        if !self.spec.h_candidates().contains(&self.h) {
            return Err(MtarError::config("true delay outside the delay range"));
        }
        Ok(())
    }
}

/// Stacks `[φ₀ᵀ; φ₁ᵀ; …; φ_pᵀ; β₁ᵀ; …]` from matrices acting on column vectors.
fn stack_theta(phi0: &[f64], blocks: &[&[&[f64]]]) -> DMatrix<f64> {
    let k = phi0.len();
    let rows = 1 + blocks.iter().map(|b| b[0].len()).sum::<usize>();
    let mut theta = DMatrix::zeros(rows, k);
    for (i, v) in phi0.iter().enumerate() {
        theta[(0, i)] = *v;
    }
    let mut at = 1;
    for block in blocks {
        let width = block[0].len();
        for (i, row) in block.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                theta[(at + a, i)] = *v;
            }
        }
        at += width;
    }
    theta
}

fn m1_exogenous() -> Exogenous {
    Exogenous::Var1 {
        coefficients: DMatrix::from_row_slice(
            3,
            3,
            &[0.24, 0.48, -0.12, 0.46, -0.36, 0.10, -0.12, -0.47, 0.58],
        ),
        noise: SymMatrix::scaled_identity(3, 2.0),
    }
}

const M1_PHI1_REGIME1: [&[f64]; 3] = [&[0.1, 0.6, 0.4], &[-0.4, 0.5, -0.7], &[0.2, 0.6, -0.3]];
const M1_BETA_REGIME1: [&[f64]; 3] = [&[0.6, -0.5], &[-0.4, 0.6], &[0.1, 0.3]];
const M1_PHI1_REGIME2: [&[f64]; 3] = [&[0.3, 0.5, -0.5], &[0.2, 0.7, -0.1], &[0.3, -0.4, 0.6]];
const M1_PHI2_REGIME2: [&[f64]; 3] = [&[0.3, 0.0, 0.0], &[0.0, -0.6, 0.0], &[0.0, 0.0, 0.5]];

/// Three-dimensional, two-regime design driven by a stationary VAR(1) of
/// `(X₁, X₂, Z)`, split at `Z_t ≤ 0`.
pub fn make_m1() -> TrueModel {
    let spec = ModelSpec {
        l: 2,
        p: vec![1, 2],
        q: vec![1, 0],
        d: vec![0, 0],
        h_min: 0,
        h_max: 3,
        family: NoiseFamily::Gaussian,
    };
    TrueModel {
        spec,
        theta: vec![
            stack_theta(&[1.0, -2.0, 6.0], &[&M1_PHI1_REGIME1, &M1_BETA_REGIME1]),
            stack_theta(&[0.0, 0.0, 0.0], &[&M1_PHI1_REGIME2, &M1_PHI2_REGIME2]),
        ],
        sigma: vec![
            SymMatrix::identity(3),
            SymMatrix::from_diagonal(&[1.5, 1.0, 2.0]),
        ],
        c: Thresholds::new(vec![0.0]).expect("ordered"),
        h: 0,
        extra: ExtraParam::none(),
        exogenous: m1_exogenous(),
    }
}

/// Two-dimensional, three-regime design with an AR(1) threshold series and delay 1.
pub fn make_m2() -> TrueModel {
    TrueModel {
        spec: ModelSpec::uniform(3, 1, 0, 0, 0, 3, NoiseFamily::Gaussian),
        theta: vec![
            stack_theta(&[2.0, 1.0], &[&[&[0.8, 0.0], &[-0.2, 0.5]]]),
            stack_theta(&[0.4, -0.2], &[&[&[0.3, 0.0], &[0.0, -0.6]]]),
            stack_theta(&[-3.0, 0.0], &[&[&[0.6, 0.0], &[-0.2, 0.8]]]),
        ],
        sigma: vec![
            SymMatrix::from_diagonal(&[1.0, 4.0]),
            SymMatrix::identity(2),
            SymMatrix::from_diagonal(&[2.0, 1.0]),
        ],
        c: Thresholds::new(vec![1.95, 3.02]).expect("ordered"),
        h: 1,
        extra: ExtraParam::none(),
        exogenous: Exogenous::Ar1 {
            intercept: 1.0,
            slope: 0.6,
        },
    }
}

/// The two-regime truth of the selection experiments: M1 with one
/// autoregressive lag per regime, no covariate terms and Student-t(5) noise.
pub fn make_selection_truth() -> TrueModel {
    let spec = ModelSpec::uniform(2, 1, 0, 0, 0, 3, NoiseFamily::StudentT);
    TrueModel {
        spec,
        theta: vec![
            stack_theta(&[1.0, -2.0, 6.0], &[&M1_PHI1_REGIME1]),
            stack_theta(&[0.0, 0.0, 0.0], &[&M1_PHI1_REGIME2]),
        ],
        sigma: vec![
            SymMatrix::identity(3),
            SymMatrix::from_diagonal(&[1.5, 1.0, 2.0]),
        ],
        c: Thresholds::new(vec![0.0]).expect("ordered"),
        h: 0,
        extra: ExtraParam::scalar(5.0),
        exogenous: m1_exogenous(),
    }
}

/// Extra parameters used with each design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    M1,
    M2,
}

impl Design {
    pub fn truth(self) -> TrueModel {
        match self {
            Design::M1 => make_m1(),
            Design::M2 => make_m2(),
        }
    }

    pub fn default_extra(self, family: NoiseFamily) -> ExtraParam {
        use NoiseFamily::*;
        match (self, family) {
            (_, Gaussian | Laplace) => ExtraParam::none(),
            (Design::M1, StudentT) => ExtraParam::scalar(3.0),
            (Design::M1, Slash) => ExtraParam::scalar(6.0),
            (Design::M1, ContaminatedNormal) => ExtraParam::pair(0.05, 0.1),
            (Design::M1, SymmetricHyperbolic) => ExtraParam::scalar(0.11),
            (Design::M2, StudentT) => ExtraParam::scalar(5.0),
            (Design::M2, Slash) => ExtraParam::scalar(4.0),
            (Design::M2, ContaminatedNormal) => ExtraParam::pair(0.08, 0.012),
            (Design::M2, SymmetricHyperbolic) => ExtraParam::scalar(0.12),
        }
    }
}

/// A simulated series together with the regime (0-based) that generated
/// each of its points.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub series: MultivariateSeries,
    pub regimes: Vec<usize>,
}

/// Generates `(X, Z)` first, then `Y` recursively, discarding `burn` warm-up
/// points. Pre-sample `Y` is zero and `(X, Z)` start at their stationary mean.
pub fn simulate_mtar_with_regimes<R: Rng + ?Sized>(
    truth: &TrueModel,
    len: usize,
    family: NoiseFamily,
    extra: &ExtraParam,
    burn: usize,
    rng: &mut R,
) -> Result<Simulated> {
    let truth = truth.clone().with_family(family, extra.clone());
    truth.validate()?;
    let spec = &truth.spec;
    let (k, r) = (truth.k(), truth.r());
    if len < spec.max_lag() + 11 {
        return Err(MtarError::config(format!(
            "series length {len} is too short for the model lags"
        )));
    }
    let pad = spec.max_lag().max(truth.h);
    let total = burn + len;
    let (x0, z0) = truth.exogenous.start();
    let (xs, zs) = truth.exogenous.generate(total, rng)?;

    let y = DMatrix::zeros(pad + total, k);
    let mut x = DMatrix::zeros(pad + total, r);
    let mut z = vec![z0; pad + total];
    for t in 0..pad {
        for i in 0..r {
            x[(t, i)] = x0[i];
        }
    }
    x.rows_mut(pad, total).copy_from(&xs);
    z[pad..].copy_from_slice(&zs);
    let mut work = MultivariateSeries::new(y, x, z)?;

    let factors: Vec<DMatrix<f64>> = truth
        .sigma
        .iter()
        .map(|s| s.lower_factor())
        .collect::<Result<_>>()?;
    let mut regimes = Vec::with_capacity(len);
    let mut row = Vec::new();
    for t in pad + 1..=pad + total {
        let j = truth.c.regime_of(work.z_at(t - truth.h)).min(spec.l - 1);
        row.resize(spec.s(j, k, r), 0.0);
        fill_design_row(&work, t, spec.p[j], spec.q[j], spec.d[j], &mut row);
        let noise = sample_noise(family, &truth.extra, &factors[j], rng)?;
        let th = &truth.theta[j];
        let yt: Vec<f64> = (0..k)
            .map(|i| {
                row.iter()
                    .enumerate()
                    .map(|(a, v)| v * th[(a, i)])
                    .sum::<f64>()
                    + noise[i]
            })
            .collect();
        if yt.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(MtarError::numerical("simulated series diverged"));
        }
        work.set_y(t, &yt);
        if t > pad + burn {
            regimes.push(j);
        }
    }
    Ok(Simulated {
        series: work.window(pad + burn + 1, pad + total),
        regimes,
    })
}

pub fn simulate_mtar<R: Rng + ?Sized>(
    truth: &TrueModel,
    len: usize,
    family: NoiseFamily,
    extra: &ExtraParam,
    burn: usize,
    rng: &mut R,
) -> Result<MultivariateSeries> {
    Ok(simulate_mtar_with_regimes(truth, len, family, extra, burn, rng)?.series)
}

pub const DEFAULT_BURN: usize = 200;

/// Settings shared by the experiment runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub len: usize,
    pub replications: usize,
    /// `seed` is replaced per replication.
    pub control: ChainControl,
    pub grid_size: usize,
    pub burn: usize,
    pub level: f64,
    pub horizon: usize,
}

impl ExperimentSettings {
    pub fn new(len: usize, replications: usize, control: ChainControl) -> Self {
        ExperimentSettings {
            len,
            replications,
            control,
            grid_size: 1000,
            burn: DEFAULT_BURN,
            level: 0.95,
            horizon: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(MtarError::config("replications must be at least 1"));
        }
        self.control.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub name: String,
    pub truth: f64,
    /// Percent of replications whose interval contains the truth.
    pub coverage: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub truth: TrueModel,
    pub family: NoiseFamily,
    pub extra: ExtraParam,
    pub settings: ExperimentSettings,
    pub master_seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub parameters: Vec<CoverageEntry>,
    /// Mean of `ĉ_j − c_j`.
    pub threshold_bias: Vec<f64>,
    /// `100 (mean ν̂ − ν) / ν` per extra parameter.
    pub extra_relative_bias: Vec<f64>,
    /// Percent coverage of the prediction intervals, step × coordinate.
    pub prediction_coverage: Vec<Vec<f64>>,
    /// Percent of replications whose posterior delay mode equals the truth.
    pub delay_hit_rate: f64,
    pub mean_acceptance_rate: f64,
}

impl CoverageReport {
    pub fn coverage(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.coverage)
    }
}

struct ReplicationOutcome {
    covered: Vec<bool>,
    estimates: Vec<f64>,
    predicted: Vec<Vec<bool>>,
    delay_hit: bool,
    acceptance: f64,
}

fn replication_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|i| derive_seed(master, REPLICATION, i))
        .collect()
}

fn coverage_replication(
    truth: &TrueModel,
    labels: &[(String, f64)],
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<ReplicationOutcome> {
    let family = truth.spec.family;
    let m = settings.horizon;
    let mut sim_rng = stream(seed, SIMULATION, 0);
    let data = simulate_mtar(
        truth,
        settings.len + m,
        family,
        &truth.extra,
        settings.burn,
        &mut sim_rng,
    )?;
    let history = data.head(settings.len);
    let spec = truth.spec.clone();
    let mut priors = Priors::non_informative(&spec, truth.k(), truth.r());
    priors.grid_size = settings.grid_size;
    let mut control = settings.control.clone();
    control.seed = derive_seed(seed, ESTIMATION, 0);
    let draws = run_chain(&history, &spec, &priors, &control)?;
    let summary = posterior_summary(&draws, settings.level, DelaySummary::Mode)?;
    let mut covered = Vec::with_capacity(labels.len());
    let mut estimates = Vec::with_capacity(labels.len());
    for (name, value) in labels {
        let p = summary
            .parameter(name)
            .ok_or_else(|| MtarError::numerical(format!("summary lacks parameter {name}")))?;
        covered.push(p.lower <= *value && *value <= p.upper);
        estimates.push(p.mean);
    }
    let tail = data.window(settings.len + 1, settings.len + m);
    let input = ForecastInput::new(history, tail.z().to_vec(), tail.x().clone(), m);
    let fc = forecast(
        &draws,
        &input,
        settings.level,
        &mut stream(seed, FORECASTING, 0),
    )?;
    let predicted = (0..m)
        .map(|s| {
            (0..truth.k())
                .map(|i| {
                    fc.lower[(s, i)] <= tail.y()[(s, i)] && tail.y()[(s, i)] <= fc.upper[(s, i)]
                })
                .collect()
        })
        .collect();
    Ok(ReplicationOutcome {
        covered,
        estimates,
        predicted,
        delay_hit: summary.h_mode == truth.h,
        acceptance: draws.acceptance_rate,
    })
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        100.0 * hits as f64 / n as f64
    }
}

/// Simulates, fits, summarizes and forecasts `replications` independent
/// series; the last `horizon` points of each series are held out.
pub fn coverage_experiment<R: Rng + ?Sized>(
    truth: &TrueModel,
    family: NoiseFamily,
    extra: &ExtraParam,
    settings: &ExperimentSettings,
    rng: &mut R,
) -> Result<CoverageReport> {
    settings.validate()?;
    if settings.horizon == 0 {
        return Err(MtarError::config("forecast horizon must be at least 1"));
    }
    let truth = truth.clone().with_family(family, extra.clone());
    truth.validate()?;
    let labels: Vec<(String, f64)> = truth
        .labelled_values()
        .into_iter()
        .filter(|(n, _)| n != "h")
        .collect();
    let master = rng.next_u64();
    let outcomes: Vec<Result<ReplicationOutcome>> =
        replication_seeds(master, settings.replications)
            .into_par_iter()
            .map(|seed| coverage_replication(&truth, &labels, settings, seed))
            .collect();

    let mut ok = Vec::new();
    let mut failure_messages = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => failure_messages.push(format!("replication {}: {e}", i + 1)),
        }
    }
    let n = ok.len();
    let parameters = labels
        .iter()
        .enumerate()
        .map(|(a, (name, value))| CoverageEntry {
            name: name.clone(),
            truth: *value,
            coverage: percent(ok.iter().filter(|o| o.covered[a]).count(), n),
            mean_estimate: ok.iter().map(|o| o.estimates[a]).sum::<f64>() / n as f64,
        })
        .collect::<Vec<_>>();
    let threshold_bias = parameters
        .iter()
        .filter(|p| p.name.starts_with('c'))
        .map(|p| p.mean_estimate - p.truth)
        .collect();
    let extra_relative_bias = parameters
        .iter()
        .filter(|p| p.name.starts_with("nu"))
        .map(|p| 100.0 * (p.mean_estimate - p.truth) / p.truth)
        .collect();
    let prediction_coverage = (0..settings.horizon)
        .map(|s| {
            (0..truth.k())
                .map(|i| percent(ok.iter().filter(|o| o.predicted[s][i]).count(), n))
                .collect()
        })
        .collect();
    Ok(CoverageReport {
        family,
        extra: extra.clone(),
        settings: settings.clone(),
        master_seed: master,
        replications: settings.replications,
        failures: failure_messages.len(),
        failure_messages,
        parameters,
        threshold_bias,
        extra_relative_bias,
        prediction_coverage,
        delay_hit_rate: percent(ok.iter().filter(|o| o.delay_hit).count(), n),
        mean_acceptance_rate: ok.iter().map(|o| o.acceptance).sum::<f64>() / n as f64,
        truth,
    })
}

/// A candidate structure in a selection experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub spec: ModelSpec,
}

/// How often the true candidate ranks first and second under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRates {
    pub first: f64,
    pub second: f64,
    /// Number of replications in which each candidate attained the minimum.
    pub chosen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub truth: TrueModel,
    pub candidates: Vec<Candidate>,
    pub true_index: usize,
    pub settings: ExperimentSettings,
    pub master_seed: u64,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub dic: RankRates,
    pub waic: RankRates,
}

/// 0-based rank of `target` among `values` (ascending; ties favour earlier candidates).
fn rank_of(values: &[f64], target: usize) -> usize {
    values
        .iter()
        .enumerate()
        .filter(|&(i, v)| *v < values[target] || (*v == values[target] && i < target))
        .count()
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
        )
        .0
}

fn rank_rates(scores: &[Vec<f64>], true_index: usize, n_candidates: usize) -> RankRates {
    let n = scores.len();
    let mut chosen = vec![0; n_candidates];
    let (mut first, mut second) = (0, 0);
    for s in scores {
        chosen[argmin(s)] += 1;
        match rank_of(s, true_index) {
            0 => first += 1,
            1 => second += 1,
            _ => {}
        }
    }
    let frac = |c: usize| {
        if n == 0 {
            f64::NAN
        } else {
            c as f64 / n as f64
        }
    };
    RankRates {
        first: frac(first),
        second: frac(second),
        chosen,
    }
}

/// Fits every candidate to each simulated series and records how often the
/// true candidate attains the lowest (and second lowest) DIC and WAIC.
pub fn selection_experiment<R: Rng + ?Sized>(
    truth: &TrueModel,
    candidates: &[Candidate],
    true_index: usize,
    settings: &ExperimentSettings,
    rng: &mut R,
) -> Result<SelectionReport> {
    settings.validate()?;
    truth.validate()?;
    if candidates.is_empty() || true_index >= candidates.len() {
        return Err(MtarError::config(
            "the candidate set must contain the true model",
        ));
    }
    for c in candidates {
        c.spec.validate(truth.k(), truth.r())?;
    }
    let master = rng.next_u64();
    let outcomes: Vec<Result<(Vec<f64>, Vec<f64>)>> =
        replication_seeds(master, settings.replications)
            .into_par_iter()
            .map(|seed| {
                let data = simulate_mtar(
                    truth,
                    settings.len,
                    truth.spec.family,
                    &truth.extra,
                    settings.burn,
                    &mut stream(seed, SIMULATION, 0),
                )?;
                let mut dic = Vec::with_capacity(candidates.len());
                let mut waic = Vec::with_capacity(candidates.len());
                for (i, cand) in candidates.iter().enumerate() {
                    let mut priors = Priors::non_informative(&cand.spec, truth.k(), truth.r());
                    priors.grid_size = settings.grid_size;
                    let mut control = settings.control.clone();
                    control.seed = derive_seed(seed, ESTIMATION, i as u64);
                    let draws = run_chain(&data, &cand.spec, &priors, &control)?;
                    let cr = criteria(&draws, &data, DelaySummary::Mode)?;
                    dic.push(cr.dic.value);
                    waic.push(cr.waic.value);
                }
                Ok((dic, waic))
            })
            .collect();
    let mut dic = Vec::new();
    let mut waic = Vec::new();
    let mut failure_messages = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok((d, w)) => {
                dic.push(d);
                waic.push(w);
            }
            Err(e) => failure_messages.push(format!("replication {}: {e}", i + 1)),
        }
    }
    Ok(SelectionReport {
        truth: truth.clone(),
        candidates: candidates.to_vec(),
        true_index,
        settings: settings.clone(),
        master_seed: master,
        replications: settings.replications,
        failures: failure_messages.len(),
        failure_messages,
        dic: rank_rates(&dic, true_index, candidates.len()),
        waic: rank_rates(&waic, true_index, candidates.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assign_regimes;
    use crate::rng::ChainRng;
    use rand::SeedableRng;

    #[test]
    fn m1_matches_the_printed_matrices() {
        let m1 = make_m1();
        // second regime, first lag, first equation: (0.3, 0.5, -0.5)
        let row: Vec<f64> = (0..3).map(|a| m1.theta[1][(1 + a, 0)]).collect();
        assert_eq!(row, vec![0.3, 0.5, -0.5]);
        assert_eq!(m1.sigma[1], SymMatrix::from_diagonal(&[1.5, 1.0, 2.0]));
        assert_eq!(m1.theta[0].shape(), (6, 3));
        assert_eq!(m1.theta[1].shape(), (7, 3));
        m1.validate().unwrap();
        make_m2().validate().unwrap();
        make_selection_truth().validate().unwrap();
    }

    #[test]
    fn generator_regimes_match_assignment() {
        let m2 = make_m2();
        let mut rng = ChainRng::seed_from_u64(3);
        let sim = simulate_mtar_with_regimes(
            &m2,
            300,
            NoiseFamily::Gaussian,
            &ExtraParam::none(),
            50,
            &mut rng,
        )
        .unwrap();
        let sets = assign_regimes(&sim.series, &m2.c, m2.h, &m2.spec);
        for (j, set) in sets.iter().enumerate() {
            for &t in set {
                assert_eq!(sim.regimes[t - 1], j);
            }
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let m1 = make_m1();
        let extra = ExtraParam::scalar(3.0);
        let a = simulate_mtar(
            &m1,
            100,
            NoiseFamily::StudentT,
            &extra,
            20,
            &mut ChainRng::seed_from_u64(8),
        )
        .unwrap();
        let b = simulate_mtar(
            &m1,
            100,
            NoiseFamily::StudentT,
            &extra,
            20,
            &mut ChainRng::seed_from_u64(8),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert_eq!(a.r(), 2);
    }

    #[test]
    fn ranks() {
        assert_eq!(rank_of(&[3.0, 1.0, 2.0], 0), 2);
        assert_eq!(rank_of(&[3.0, 1.0, 2.0], 1), 0);
        assert_eq!(argmin(&[3.0, 1.0, 2.0]), 1);
        let r = rank_rates(&[vec![1.0, 2.0], vec![2.0, 1.0]], 0, 2);
        assert_eq!((r.first, r.second), (0.5, 0.5));
    }
}
