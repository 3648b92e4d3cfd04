//! Information criteria, posterior summaries and quantile residuals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::gibbs::{Draw, PosteriorDraws};
use crate::model::{
    effective_start, fill_design_row, quantile, ModelSpec, MultivariateSeries, Thresholds,
};
use crate::stats::matrix::serde_rows_vec;
use crate::stats::special::normal_quantile;
use crate::stats::{quadform_normal_score, ExtraParam, LogDensity, SymMatrix};

/// How the plug-in delay is formed from the stored delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySummary {
    #[default]
    Mode,
    MeanRounded,
}

/// A criterion with its plug-in and averaged components:
/// `value = hat + 2 (bar − hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub value: f64,
    pub hat: f64,
    pub bar: f64,
}

impl Criterion {
    fn new(hat: f64, bar: f64) -> Self {
        Criterion {
            value: hat + 2.0 * (bar - hat),
            hat,
            bar,
        }
    }
}

/// Per-observation log densities of the eligible time points under a
/// parameter set, with regimes reassigned from that set's `(c, h)`.
pub struct PointwiseEvaluator {
    spec: ModelSpec,
    k: usize,
    start: usize,
    designs: Vec<DMatrix<f64>>,
    y: DMatrix<f64>,
    zlag: Vec<Vec<f64>>,
}

impl PointwiseEvaluator {
    pub fn new(series: &MultivariateSeries, spec: &ModelSpec) -> Result<Self> {
        let k = series.k();
        let r = series.r();
        spec.validate(k, r)?;
        let start = effective_start(spec);
        if series.len() < start {
            return Err(MtarError::config("series too short for the model lags"));
        }
        let n = series.len() + 1 - start;
        let mut designs = Vec::with_capacity(spec.l);
        for j in 0..spec.l {
            let s = spec.s(j, k, r);
            let mut m = DMatrix::zeros(n, s);
            let mut row = vec![0.0; s];
            for i in 0..n {
                fill_design_row(series, start + i, spec.p[j], spec.q[j], spec.d[j], &mut row);
                m.row_mut(i).copy_from_slice(&row);
            }
            designs.push(m);
        }
        let zlag = spec
            .h_candidates()
            .map(|h| (start..=series.len()).map(|t| series.z_at(t - h)).collect())
            .collect();
        Ok(PointwiseEvaluator {
            spec: spec.clone(),
            k,
            start,
            designs,
            y: series.y().rows(start - 1, n).into_owned(),
            zlag,
        })
    }

    pub fn eligible(&self) -> usize {
        self.y.nrows()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Regime of every eligible point under `(c, h)`.
    pub fn regimes(&self, c: &Thresholds, h: usize) -> Result<Vec<usize>> {
        if h < self.spec.h_min || h > self.spec.h_max {
            return Err(MtarError::config(format!(
                "delay {h} outside the candidate range"
            )));
        }
        Ok(self.zlag[h - self.spec.h_min]
            .iter()
            .map(|&z| c.regime_of(z).min(self.spec.l - 1))
            .collect())
    }

    /// Quadratic forms `(y_t − M_tθ)Σ⁻¹(y_t − M_tθ)ᵀ` and `log|Σⱼ|` under the
    /// regimes implied by `(c, h)`.
    pub fn quadratic_forms(
        &self,
        theta: &[DMatrix<f64>],
        sigma: &[SymMatrix],
        c: &Thresholds,
        h: usize,
    ) -> Result<(Vec<f64>, Vec<usize>, Vec<f64>)> {
        let regimes = self.regimes(c, h)?;
        let mut q = vec![0.0; self.eligible()];
        let mut log_det = Vec::with_capacity(self.spec.l);
        for j in 0..self.spec.l {
            let l = sigma[j].lower_factor()?;
            log_det.push(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>());
            let rows: Vec<usize> = (0..self.eligible()).filter(|&i| regimes[i] == j).collect();
            if rows.is_empty() {
                continue;
            }
            let resid = (self.y.select_rows(&rows)
                - self.designs[j].select_rows(&rows) * &theta[j])
                .transpose();
            let w = l
                .solve_lower_triangular(&resid)
                .ok_or_else(|| MtarError::numerical("triangular solve failed"))?;
            for (a, &i) in rows.iter().enumerate() {
                q[i] = w.column(a).norm_squared();
            }
        }
        Ok((q, regimes, log_det))
    }

    pub fn log_densities(
        &self,
        theta: &[DMatrix<f64>],
        sigma: &[SymMatrix],
        c: &Thresholds,
        h: usize,
        extra: &ExtraParam,
    ) -> Result<Vec<f64>> {
        let density = LogDensity::new(self.spec.family, extra, self.k)?;
        let (q, regimes, log_det) = self.quadratic_forms(theta, sigma, c, h)?;
        Ok(q.iter()
            .zip(&regimes)
            .map(|(&q, &j)| density.eval(q, log_det[j]))
            .collect())
    }

    pub fn draw_log_densities(&self, draw: &Draw) -> Result<Vec<f64>> {
        self.log_densities(&draw.theta, &draw.sigma, &draw.c, draw.h, &draw.extra)
    }
}

/// Posterior means of the continuous parameters together with a delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugIn {
    #[serde(with = "serde_rows_vec")]
    pub theta: Vec<DMatrix<f64>>,
    pub sigma: Vec<SymMatrix>,
    pub c: Thresholds,
    pub h: usize,
    pub extra: ExtraParam,
}

/// Delay mode, ties broken toward the smaller delay.
pub fn delay_mode(draws: &[Draw]) -> usize {
    let max_h = draws.iter().map(|d| d.h).max().unwrap_or(0);
    let mut counts = vec![0usize; max_h + 1];
    for d in draws {
        counts[d.h] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

pub fn plug_in(draws: &PosteriorDraws, delay: DelaySummary) -> Result<PlugIn> {
    let all = &draws.draws;
    if all.is_empty() {
        return Err(MtarError::config("no stored draws"));
    }
    let g = all.len() as f64;
    let mut theta: Vec<DMatrix<f64>> = all[0]
        .theta
        .iter()
        .map(|t| DMatrix::zeros(t.nrows(), t.ncols()))
        .collect();
    let mut sigma: Vec<DMatrix<f64>> = all[0]
        .sigma
        .iter()
        .map(|s| DMatrix::zeros(s.dim(), s.dim()))
        .collect();
    let mut c = vec![0.0; all[0].c.values().len()];
    let mut extra = vec![0.0; all[0].extra.values.len()];
    let mut h_sum = 0.0;
    for d in all {
        for (acc, t) in theta.iter_mut().zip(&d.theta) {
            *acc += t;
        }
        for (acc, s) in sigma.iter_mut().zip(&d.sigma) {
            *acc += s.matrix();
        }
        for (acc, v) in c.iter_mut().zip(d.c.values()) {
            *acc += v;
        }
        for (acc, v) in extra.iter_mut().zip(&d.extra.values) {
            *acc += v;
        }
        h_sum += d.h as f64;
    }
    let h = match delay {
        DelaySummary::Mode => delay_mode(all),
        DelaySummary::MeanRounded => (h_sum / g).round() as usize,
    };
    Ok(PlugIn {
        theta: theta.into_iter().map(|t| t / g).collect(),
        sigma: sigma
            .into_iter()
            .map(|s| SymMatrix::symmetrized(s / g))
            .collect(),
        c: Thresholds::new(c.into_iter().map(|v| v / g).collect())?,
        h,
        extra: ExtraParam {
            values: extra.into_iter().map(|v| v / g).collect(),
        },
    })
}

/// DIC and WAIC from one pass over the stored draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub dic: Criterion,
    pub waic: Criterion,
}

pub fn criteria(
    draws: &PosteriorDraws,
    series: &MultivariateSeries,
    delay: DelaySummary,
) -> Result<Criteria> {
    let eval = PointwiseEvaluator::new(series, &draws.spec)?;
    let g = draws.len();
    if g == 0 {
        return Err(MtarError::config("no stored draws"));
    }
    let n = eval.eligible();
    let mut run_max = vec![f64::NEG_INFINITY; n];
    let mut run_sum = vec![0.0; n];
    let mut mean_ll = vec![0.0; n];
    let mut d_bar = 0.0;
    for draw in &draws.draws {
        let ll = eval.draw_log_densities(draw)?;
        let mut dev = 0.0;
        for i in 0..n {
            let x = ll[i];
            dev += -2.0 * x;
            mean_ll[i] += x;
            if x > run_max[i] {
                run_sum[i] = run_sum[i] * (run_max[i] - x).exp() + 1.0;
                run_max[i] = x;
            } else {
                run_sum[i] += (x - run_max[i]).exp();
            }
        }
        d_bar += dev;
    }
    let gf = g as f64;
    d_bar /= gf;
    let p = plug_in(draws, delay)?;
    let d_hat = -2.0
        * eval
            .log_densities(&p.theta, &p.sigma, &p.c, p.h, &p.extra)?
            .iter()
            .sum::<f64>();
    let mut w_hat = 0.0;
    let mut w_bar = 0.0;
    for i in 0..n {
        let lse = run_max[i] + run_sum[i].ln();
        w_hat += -2.0 * (lse - gf.ln());
        w_bar += -2.0 * mean_ll[i] / gf;
    }
    Ok(Criteria {
        dic: Criterion::new(d_hat, d_bar),
        waic: Criterion::new(w_hat, w_bar),
    })
}

pub fn dic(
    draws: &PosteriorDraws,
    series: &MultivariateSeries,
    delay: DelaySummary,
) -> Result<Criterion> {
    Ok(criteria(draws, series, delay)?.dic)
}

pub fn waic(draws: &PosteriorDraws, series: &MultivariateSeries) -> Result<Criterion> {
    Ok(criteria(draws, series, DelaySummary::Mode)?.waic)
}

/// Posterior mean and equal-tailed interval of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub spec: ModelSpec,
    pub k: usize,
    pub r: usize,
    pub draws: usize,
    pub level: f64,
    pub plug_in: PlugIn,
    pub delay_summary: DelaySummary,
    pub h_mode: usize,
    /// Posterior probability of each candidate delay, from `h_min` up.
    pub h_probabilities: Vec<f64>,
    pub parameters: Vec<ParameterSummary>,
    pub acceptance_rate: f64,
    pub dic: Option<Criterion>,
    pub waic: Option<Criterion>,
}

impl FitSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Equal-tailed interval at `level` from the sorted sample.
pub fn equal_tailed(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (quantile(sorted, tail), quantile(sorted, 1.0 - tail))
}

pub fn posterior_summary(
    draws: &PosteriorDraws,
    level: f64,
    delay: DelaySummary,
) -> Result<FitSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MtarError::config(format!(
            "interval level must lie in (0,1), got {level}"
        )));
    }
    let all = &draws.draws;
    if all.is_empty() {
        return Err(MtarError::config("no stored draws"));
    }
    let labels = all[0].labels();
    let flat: Vec<Vec<f64>> = all.iter().map(Draw::flatten).collect();
    let g = all.len() as f64;
    let mut parameters = Vec::with_capacity(labels.len());
    for (a, name) in labels.into_iter().enumerate() {
        let mut column: Vec<f64> = flat.iter().map(|f| f[a]).collect();
        let mean = column.iter().sum::<f64>() / g;
        column.sort_by(f64::total_cmp);
        let (lower, upper) = equal_tailed(&column, level);
        parameters.push(ParameterSummary {
            name,
            mean,
            lower,
            upper,
        });
    }
    let spec = &draws.spec;
    let mut h_probabilities = vec![0.0; spec.h_max - spec.h_min + 1];
    for d in all {
        h_probabilities[d.h - spec.h_min] += 1.0 / g;
    }
    Ok(FitSummary {
        spec: spec.clone(),
        k: draws.k,
        r: draws.r,
        draws: all.len(),
        level,
        plug_in: plug_in(draws, delay)?,
        delay_summary: delay,
        h_mode: delay_mode(all),
        h_probabilities,
        parameters,
        acceptance_rate: draws.acceptance_rate,
        dic: None,
        waic: None,
    })
}

/// Quantile residuals `r_t = Φ⁻¹(F_ρ(q_t | ν̄))` at the plug-in estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub time_points: Vec<usize>,
    pub r: Vec<f64>,
}

impl ResidualSeries {
    /// `(theoretical normal quantile, sorted residual)` pairs for a QQ plot,
    /// with plotting positions `(i − a)/(n + 1 − 2a)`, `a = 3/8` for n ≤ 10
    /// and `1/2` otherwise.
    pub fn qq_pairs(&self) -> Vec<(f64, f64)> {
        let mut sorted = self.r.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let a = if n <= 10 { 0.375 } else { 0.5 };
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    normal_quantile((i as f64 + 1.0 - a) / (n as f64 + 1.0 - 2.0 * a)),
                    r,
                )
            })
            .collect()
    }
}

pub fn residual_transform(
    summary: &FitSummary,
    series: &MultivariateSeries,
) -> Result<ResidualSeries> {
    let eval = PointwiseEvaluator::new(series, &summary.spec)?;
    let p = &summary.plug_in;
    let (q, _, _) = eval.quadratic_forms(&p.theta, &p.sigma, &p.c, p.h)?;
    let k = series.k();
    let r = q
        .iter()
        .map(|&x| quadform_normal_score(summary.spec.family, x, k, &p.extra))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ResidualSeries {
        time_points: (eval.start()..=series.len()).collect(),
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_identity() {
        let c = Criterion::new(10.0, 12.5);
        assert_eq!(c.value, 15.0);
    }

    #[test]
    fn interval_endpoints_are_tail_quantiles() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        let (lo, hi) = equal_tailed(&v, 0.95);
        assert!((lo - quantile(&v, 0.025)).abs() < 1e-12);
        assert!((hi - quantile(&v, 0.975)).abs() < 1e-12);
        let (a, b) = equal_tailed(&[2.0; 5], 0.9);
        assert_eq!((a, b), (2.0, 2.0));
    }

    #[test]
    fn qq_positions_are_symmetric() {
        let res = ResidualSeries {
            time_points: (1..=5).collect(),
            r: vec![0.3, -1.0, 0.0, 2.0, -0.5],
        };
        let qq = res.qq_pairs();
        assert!((qq[0].0 + qq[4].0).abs() < 1e-12);
        assert!(qq[2].0.abs() < 1e-12);
        assert_eq!(qq[0].1, -1.0);
    }
}
