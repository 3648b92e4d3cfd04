//! Acceptance suite. Runs without the libtest harness so every check prints
//! its PASS/FAIL line. Failures are reported, not fatal, unless
//! `MTAR_ACCEPTANCE_STRICT` is set.

use std::f64::consts::PI;
use std::time::Instant;

use mtar_core::forecast::{forecast, ForecastInput};
use mtar_core::gibbs::{run_chain, ChainControl, Draw, PosteriorDraws, Priors};
use mtar_core::model::{ModelSpec, MultivariateSeries, Thresholds};
use mtar_core::rng::{derive_seed, stream, ChainRng, REPLICATION, SIMULATION};
use mtar_core::selection::{criteria, posterior_summary, residual_transform, DelaySummary};
use mtar_core::sim::{
    coverage_experiment, make_m1, make_selection_truth, selection_experiment, simulate_mtar,
    Candidate, CoverageReport, Design, ExperimentSettings,
};
use mtar_core::stats::{sample_noise, ExtraParam, LogDensity, NoiseFamily, SymMatrix};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- helpers

/// Composite Simpson rule on [a, b] with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// K_a(x) = ∫₀^∞ exp(−x cosh t) cosh(a t) dt.
fn bessel_k_integral(a: f64, x: f64) -> f64 {
    simpson(
        |t| (-x * t.cosh()).exp() * (a * t).cosh(),
        0.0,
        25.0,
        200_000,
    )
}

fn ks_normal(sample: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sided 99% binomial acceptance region for the number of hits, as percent.
fn binomial_band(reference_percent: f64, n: u64) -> (f64, f64) {
    let b = Binomial::new(reference_percent / 100.0, n).expect("valid binomial");
    let lo = b.inverse_cdf(0.005) as f64;
    let hi = b.inverse_cdf(0.995) as f64;
    (100.0 * lo / n as f64, 100.0 * hi / n as f64)
}

/// Mean and batch-means standard error.
fn mean_and_mcse(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// A stationary bivariate VAR(1) without covariates; z is independent noise.
fn var1_series(len: usize, seed: u64) -> MultivariateSeries {
    let mut rng = ChainRng::seed_from_u64(seed);
    let phi0 = [0.5, -1.0];
    let phi1 = [[0.5, 0.2], [-0.3, 0.4]];
    let chol = [[1.0, 0.0], [0.4, 0.8]];
    let mut y = DMatrix::zeros(len, 2);
    let mut prev = [0.0, 0.0];
    for t in 0..len + 100 {
        let e: [f64; 2] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let cur = [
            phi0[0] + phi1[0][0] * prev[0] + phi1[0][1] * prev[1] + chol[0][0] * e[0],
            phi0[1]
                + phi1[1][0] * prev[0]
                + phi1[1][1] * prev[1]
                + chol[1][0] * e[0]
                + chol[1][1] * e[1],
        ];
        if t >= 100 {
            y[(t - 100, 0)] = cur[0];
            y[(t - 100, 1)] = cur[1];
        }
        prev = cur;
    }
    let z = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    MultivariateSeries::without_covariates(y, z).expect("valid series")
}

fn var1_spec() -> ModelSpec {
    ModelSpec::uniform(1, 1, 0, 0, 0, 0, NoiseFamily::Gaussian)
}

// ---------------------------------------------------------------- checks

fn density_normalization() -> Outcome {
    let cases: Vec<(NoiseFamily, ExtraParam)> = vec![
        (NoiseFamily::Gaussian, ExtraParam::none()),
        (NoiseFamily::StudentT, ExtraParam::scalar(3.0)),
        (NoiseFamily::StudentT, ExtraParam::scalar(30.0)),
        (NoiseFamily::Slash, ExtraParam::scalar(1.5)),
        (NoiseFamily::Slash, ExtraParam::scalar(6.0)),
        (NoiseFamily::ContaminatedNormal, ExtraParam::pair(0.05, 0.1)),
        (NoiseFamily::ContaminatedNormal, ExtraParam::pair(0.3, 0.5)),
        (NoiseFamily::SymmetricHyperbolic, ExtraParam::scalar(0.11)),
        (NoiseFamily::SymmetricHyperbolic, ExtraParam::scalar(1.5)),
        (NoiseFamily::Laplace, ExtraParam::none()),
    ];
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    for (family, extra) in &cases {
        for k in [1usize, 2] {
            let d = LogDensity::new(*family, extra, k).expect("density");
            // radial integral over r = tan φ; the sphere area is 2 (k=1) or 2πr (k=2)
            let g = |phi: f64| {
                let r = phi.tan().max(1e-10);
                let f = d.eval(r * r, 0.0).exp();
                let shell = if k == 1 { 2.0 } else { 2.0 * PI * r };
                let v = shell * f * (1.0 + r * r);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            let total = simpson(g, 0.0, 0.5 * PI, 400_000);
            let err = (total - 1.0).abs();
            if err > worst {
                worst = err;
                where_ = format!("{} {:?} k={k}", family.name(), extra.values);
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("worst |integral - 1| = {worst:.2e} ({where_})"),
    )
}

fn variance_factors() -> Outcome {
    let n = 1_000_000;
    let nu_h = [0.11, 1.0];
    let cases: Vec<(NoiseFamily, ExtraParam, f64)> = vec![
        (NoiseFamily::Gaussian, ExtraParam::none(), 1.0),
        (NoiseFamily::StudentT, ExtraParam::scalar(5.0), 5.0 / 3.0),
        (NoiseFamily::Slash, ExtraParam::scalar(6.0), 1.5),
        (
            NoiseFamily::ContaminatedNormal,
            ExtraParam::pair(0.05, 0.1),
            0.05 / 0.1 + 1.0 - 0.05,
        ),
        (
            NoiseFamily::SymmetricHyperbolic,
            ExtraParam::scalar(nu_h[0]),
            bessel_k_integral(2.0, nu_h[0]) / (nu_h[0] * bessel_k_integral(1.0, nu_h[0])),
        ),
        (
            NoiseFamily::SymmetricHyperbolic,
            ExtraParam::scalar(nu_h[1]),
            bessel_k_integral(2.0, nu_h[1]) / (nu_h[1] * bessel_k_integral(1.0, nu_h[1])),
        ),
        (NoiseFamily::Laplace, ExtraParam::none(), 8.0),
    ];
    let one = DMatrix::identity(1, 1);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (i, (family, extra, target)) in cases.iter().enumerate() {
        let mut rng = stream(2024, "variance", i as u64);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e = sample_noise(*family, extra, &one, &mut rng).expect("draw")[0];
            s1 += e;
            s2 += e * e;
        }
        let mean = s1 / n as f64;
        let var = (s2 - n as f64 * mean * mean) / (n as f64 - 1.0);
        let rel = (var / target - 1.0).abs();
        worst = worst.max(rel);
        lines.push(format!("{}={var:.4}/{target:.4}", family.name()));
    }
    outcome(
        worst < 0.02,
        format!(
            "worst relative error {:.3}% [{}]",
            100.0 * worst,
            lines.join(", ")
        ),
    )
}

fn conjugate_oracle() -> Outcome {
    let seeds = 20;
    let mut passed = 0;
    let mut worst_z: f64 = 0.0;
    for seed in 0..seeds {
        let series = var1_series(200, 100 + seed);
        let spec = var1_spec();
        let priors = Priors::non_informative(&spec, 2, 0);
        let control = ChainControl {
            iterations: 5500,
            burn_in: 500,
            thinning: 1,
            seed: 7 + seed,
            zeta: 100.0,
        };
        let draws = run_chain(&series, &spec, &priors, &control).expect("chain");

        // closed form over rows t = 2..T, design [1, y_{t-1}]
        let n = series.len() - 1;
        let x = DMatrix::from_fn(
            n,
            3,
            |i, a| if a == 0 { 1.0 } else { series.y()[(i, a - 1)] },
        );
        let y = series.y().rows(1, n).into_owned();
        let rp = &priors.regimes[0];
        let d0_inv = rp
            .delta0
            .matrix()
            .clone()
            .try_inverse()
            .expect("invertible");
        let a = &d0_inv + x.transpose() * &x;
        let a_inv = a.clone().try_inverse().expect("invertible");
        let m = &a_inv * (&d0_inv * &rp.mu0 + x.transpose() * &y);
        let psi = rp.omega0.matrix() + y.transpose() * &y + rp.mu0.transpose() * &d0_inv * &rp.mu0
            - m.transpose() * &a * &m;
        let dof = rp.tau0 + n as f64;
        let sigma_mean = psi / (dof - 2.0 - 1.0);

        let mut ok = true;
        let mut check = |samples: Vec<f64>, exact: f64| {
            let (mean, se) = mean_and_mcse(&samples, 50);
            let z = (mean - exact).abs() / se;
            worst_z = worst_z.max(z);
            ok &= z <= 3.0;
        };
        for a in 0..3 {
            for i in 0..2 {
                check(
                    draws.draws.iter().map(|d| d.theta[0][(a, i)]).collect(),
                    m[(a, i)],
                );
            }
        }
        for i in 0..2 {
            for j in 0..=i {
                check(
                    draws
                        .draws
                        .iter()
                        .map(|d| d.sigma[0].matrix()[(i, j)])
                        .collect(),
                    sigma_mean[(i, j)],
                );
            }
        }
        if ok {
            passed += 1;
        }
    }
    outcome(
        passed == seeds,
        format!("{passed}/{seeds} seeds within 3 MCSE, largest |z| = {worst_z:.2}"),
    )
}

const REF_GAUSSIAN: [&[&[f64]]; 6] = [
    &[&[93.4], &[95.7], &[94.4]],
    &[
        &[94.5, 94.7, 95.0],
        &[94.3, 94.3, 94.8],
        &[94.6, 94.1, 94.6],
    ],
    &[&[95.0, 94.5], &[94.6, 94.2], &[94.1, 94.2]],
    &[&[93.5], &[94.5], &[94.9]],
    &[
        &[94.0, 94.9, 94.7],
        &[95.0, 95.5, 95.0],
        &[94.5, 93.7, 93.4],
    ],
    &[
        &[94.2, 93.4, 95.8],
        &[95.0, 95.3, 94.8],
        &[94.4, 94.6, 94.1],
    ],
];
const REF_STUDENT: [&[&[f64]]; 6] = [
    &[&[94.0], &[94.7], &[93.1]],
    &[
        &[93.7, 93.8, 95.8],
        &[94.7, 95.2, 92.9],
        &[95.3, 93.7, 94.4],
    ],
    &[&[94.6, 94.4], &[93.6, 94.7], &[95.6, 93.8]],
    &[&[93.9], &[94.0], &[94.4]],
    &[
        &[93.7, 93.1, 93.9],
        &[93.8, 94.6, 94.4],
        &[94.0, 94.8, 94.4],
    ],
    &[
        &[94.5, 93.4, 93.3],
        &[93.5, 94.5, 94.4],
        &[94.7, 95.2, 94.9],
    ],
];
const REF_PREDICTION_GAUSSIAN: [f64; 3] = [94.7, 95.1, 94.1];
const REF_PREDICTION_STUDENT: [f64; 3] = [95.2, 94.8, 94.6];

/// `(label, reference percent)` for every coefficient of the first design.
/// Blocks are (regime, first design row) pairs; entry (i, m) of a printed
/// block acts on output i.
fn coefficient_references(reference: &[&[&[f64]]; 6]) -> Vec<(String, f64)> {
    let layout = [(1, 1), (1, 2), (1, 5), (2, 1), (2, 2), (2, 5)];
    let mut out = Vec::new();
    for (block, &(regime, row0)) in reference.iter().zip(&layout) {
        for (i, row) in block.iter().enumerate() {
            for (m, &v) in row.iter().enumerate() {
                out.push((format!("theta{regime}[{},{}]", row0 + m, i + 1), v));
            }
        }
    }
    out
}

fn coverage_run(family: NoiseFamily, extra: ExtraParam, seed: u64) -> CoverageReport {
    let settings = ExperimentSettings::new(1000, 100, ChainControl::default_for(family, 0));
    coverage_experiment(
        &make_m1(),
        family,
        &extra,
        &settings,
        &mut ChainRng::seed_from_u64(seed),
    )
    .expect("experiment")
}

fn judge_coverage(
    report: &CoverageReport,
    reference: &[&[&[f64]]; 6],
    prediction: &[f64; 3],
) -> (bool, String) {
    let n = (report.replications - report.failures) as u64;
    let mut misses = Vec::new();
    let refs = coefficient_references(reference);
    for (name, r) in &refs {
        let got = report.coverage(name).expect("coefficient present");
        let (lo, hi) = binomial_band(*r, n);
        if got < lo || got > hi {
            misses.push(format!("{name}={got:.0} not in [{lo:.0},{hi:.0}]"));
        }
    }
    for (i, r) in prediction.iter().enumerate() {
        let got = report.prediction_coverage[0][i];
        let (lo, hi) = binomial_band(*r, n);
        if got < lo || got > hi {
            misses.push(format!(
                "y{} 1-step={got:.0} not in [{lo:.0},{hi:.0}]",
                i + 1
            ));
        }
    }
    let cov: Vec<f64> = refs
        .iter()
        .map(|(name, _)| report.coverage(name).unwrap())
        .collect();
    let lo = cov.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cov.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass = misses.is_empty() && report.failures == 0 && report.delay_hit_rate >= 95.0;
    let detail = format!(
        "{}: {} coefficients in [{lo:.0},{hi:.0}], 1-step {:?}, delay hits {:.0}%, failures {}{}",
        report.family.name(),
        refs.len(),
        report.prediction_coverage[0],
        report.delay_hit_rate,
        report.failures,
        if misses.is_empty() {
            String::new()
        } else {
            format!(", outside band: {}", misses.join("; "))
        }
    );
    (pass, detail)
}

fn selection_settings(replications: usize) -> ExperimentSettings {
    ExperimentSettings::new(
        1000,
        replications,
        ChainControl::default_for(NoiseFamily::StudentT, 0),
    )
}

fn regime_count_selection() -> Outcome {
    let candidates: Vec<Candidate> = (1..=4)
        .map(|l| Candidate {
            label: format!("l={l}"),
            spec: ModelSpec::uniform(l, 1, 0, 0, 0, 3, NoiseFamily::StudentT),
        })
        .collect();
    let report = selection_experiment(
        &make_selection_truth(),
        &candidates,
        1,
        &selection_settings(50),
        &mut ChainRng::seed_from_u64(61),
    )
    .expect("experiment");
    outcome(
        report.failures == 0 && report.dic.first >= 0.85 && report.waic.first >= 0.85,
        format!(
            "DIC {:.2} (choices {:?}), WAIC {:.2} (choices {:?}), failures {}",
            report.dic.first,
            report.dic.chosen,
            report.waic.first,
            report.waic.chosen,
            report.failures
        ),
    )
}

fn order_selection() -> Outcome {
    let candidates: Vec<Candidate> = (1..=3)
        .map(|p| Candidate {
            label: format!("p={p}"),
            spec: ModelSpec::uniform(2, p, 0, 0, 0, 3, NoiseFamily::StudentT),
        })
        .collect();
    let report = selection_experiment(
        &make_selection_truth(),
        &candidates,
        0,
        &selection_settings(50),
        &mut ChainRng::seed_from_u64(71),
    )
    .expect("experiment");
    outcome(
        report.failures == 0 && report.dic.first >= 0.75,
        format!(
            "DIC {:.2} (choices {:?}), WAIC {:.2}, failures {}",
            report.dic.first, report.dic.chosen, report.waic.first, report.failures
        ),
    )
}

/// Gaussian log density of a 2-vector written out by hand.
fn gaussian2_log_density(e: [f64; 2], s: &DMatrix<f64>) -> f64 {
    let (a, b, d) = (s[(0, 0)], s[(1, 0)], s[(1, 1)]);
    let det = a * d - b * b;
    let q = (d * e[0] * e[0] - 2.0 * b * e[0] * e[1] + a * e[1] * e[1]) / det;
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * q
}

fn point_log_densities(
    series: &MultivariateSeries,
    theta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Vec<f64> {
    let y = series.y();
    (1..series.len())
        .map(|t| {
            let mut e = [0.0; 2];
            for (i, ei) in e.iter_mut().enumerate() {
                let fit =
                    theta[(0, i)] + theta[(1, i)] * y[(t - 1, 0)] + theta[(2, i)] * y[(t - 1, 1)];
                *ei = y[(t, i)] - fit;
            }
            gaussian2_log_density(e, sigma)
        })
        .collect()
}

fn criteria_oracle() -> Outcome {
    let series = var1_series(50, 8);
    let spec = var1_spec();
    let priors = Priors::non_informative(&spec, 2, 0);
    let draws = run_chain(
        &series,
        &spec,
        &priors,
        &ChainControl::default_for(NoiseFamily::Gaussian, 3),
    )
    .expect("chain");
    let got = criteria(&draws, &series, DelaySummary::Mode).expect("criteria");

    let g = draws.len() as f64;
    let mut theta_bar = DMatrix::zeros(3, 2);
    let mut sigma_bar = DMatrix::zeros(2, 2);
    let mut d_bar = 0.0;
    let per_draw: Vec<Vec<f64>> = draws
        .draws
        .iter()
        .map(|d| {
            theta_bar += &d.theta[0] / g;
            sigma_bar += d.sigma[0].matrix() / g;
            point_log_densities(&series, &d.theta[0], d.sigma[0].matrix())
        })
        .collect();
    for ll in &per_draw {
        d_bar += -2.0 * ll.iter().sum::<f64>() / g;
    }
    let d_hat = -2.0
        * point_log_densities(&series, &theta_bar, &sigma_bar)
            .iter()
            .sum::<f64>();
    let dic = d_hat + 2.0 * (d_bar - d_hat);
    let n = per_draw[0].len();
    let (mut w_hat, mut w_bar) = (0.0, 0.0);
    for t in 0..n {
        let top = per_draw
            .iter()
            .map(|ll| ll[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let mean_density = per_draw.iter().map(|ll| (ll[t] - top).exp()).sum::<f64>() / g;
        w_hat += -2.0 * (top + mean_density.ln());
        w_bar += per_draw.iter().map(|ll| -2.0 * ll[t]).sum::<f64>() / g;
    }
    let waic = w_hat + 2.0 * (w_bar - w_hat);
    let diffs = [
        (got.dic.value - dic).abs(),
        (got.dic.hat - d_hat).abs(),
        (got.dic.bar - d_bar).abs(),
        (got.waic.value - waic).abs(),
        (got.waic.hat - w_hat).abs(),
        (got.waic.bar - w_bar).abs(),
    ];
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-8,
        format!(
            "DIC {:.6} vs {dic:.6}, WAIC {:.6} vs {waic:.6}, max diff {worst:.1e}",
            got.dic.value, got.waic.value
        ),
    )
}

fn residual_calibration() -> Outcome {
    let reps = 20;
    let mut lines = Vec::new();
    let mut pass = true;
    for (fi, family) in NoiseFamily::ALL.iter().copied().enumerate() {
        let extra = Design::M1.default_extra(family);
        let truth = make_m1().with_family(family, extra.clone());
        let results: Vec<Result<f64, String>> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(900 + fi as u64, REPLICATION, i as u64);
                let data = simulate_mtar(
                    &truth,
                    1000,
                    family,
                    &extra,
                    200,
                    &mut stream(seed, SIMULATION, 0),
                )
                .map_err(|e| e.to_string())?;
                let priors = Priors::non_informative(&truth.spec, 3, 2);
                let draws = run_chain(
                    &data,
                    &truth.spec,
                    &priors,
                    &ChainControl::default_for(family, seed),
                )
                .map_err(|e| e.to_string())?;
                let summary = posterior_summary(&draws, 0.95, DelaySummary::Mode)
                    .map_err(|e| e.to_string())?;
                let res = residual_transform(&summary, &data).map_err(|e| e.to_string())?;
                Ok(ks_normal(&res.r))
            })
            .collect();
        let ks: Vec<f64> = results
            .iter()
            .filter_map(|r| r.as_ref().ok().copied())
            .collect();
        let good = ks.iter().filter(|&&d| d < 0.05).count();
        let ok = ks.len() == reps && good * 10 >= reps * 9;
        pass &= ok;
        let max = ks.iter().copied().fold(0.0, f64::max);
        lines.push(format!("{} {good}/{reps} (max KS {max:.3})", family.name()));
    }
    outcome(pass, lines.join(", "))
}

fn predictive_identity() -> Outcome {
    let (phi0, phi1, var, last) = (0.5, 0.7, 2.0, 1.5);
    let spec = ModelSpec::uniform(1, 1, 0, 0, 0, 0, NoiseFamily::Gaussian);
    let draw = Draw {
        theta: vec![DMatrix::from_row_slice(2, 1, &[phi0, phi1])],
        sigma: vec![SymMatrix::from_diagonal(&[var])],
        c: Thresholds::empty(),
        h: 0,
        extra: ExtraParam::none(),
    };
    let g = 100_000;
    let draws = PosteriorDraws {
        draws: vec![draw; g],
        priors: Priors::non_informative(&spec, 1, 0),
        spec,
        control: ChainControl::default_for(NoiseFamily::Gaussian, 0),
        k: 1,
        r: 0,
        acceptance_rate: 0.0,
    };
    let history = MultivariateSeries::without_covariates(
        DMatrix::from_row_slice(3, 1, &[0.2, -0.4, last]),
        vec![0.0; 3],
    )
    .unwrap();
    let input = ForecastInput::new(history, vec![0.0], DMatrix::zeros(1, 0), 1);
    let fc = forecast(&draws, &input, 0.95, &mut ChainRng::seed_from_u64(10)).expect("forecast");
    let s = fc.samples(0, 0);
    let mean = s.iter().sum::<f64>() / g as f64;
    let v = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g as f64 - 1.0);
    let (m_exact, v_exact) = (phi0 + phi1 * last, var);
    let z_mean = (mean - m_exact).abs() / (v_exact / g as f64).sqrt();
    let z_var = (v - v_exact).abs() / (v_exact * (2.0 / g as f64).sqrt());
    outcome(
        z_mean < 4.0 && z_var < 4.0,
        format!("mean {mean:.4} vs {m_exact:.4} ({z_mean:.2} se), variance {v:.4} vs {v_exact:.4} ({z_var:.2} se)"),
    )
}

fn grid_stability() -> Outcome {
    let truth = make_selection_truth();
    let data = simulate_mtar(
        &truth,
        1000,
        NoiseFamily::StudentT,
        &truth.extra,
        200,
        &mut stream(11, SIMULATION, 0),
    )
    .expect("simulation");
    let nu_mean = |m: usize| {
        let mut priors = Priors::non_informative(&truth.spec, 3, truth.r());
        priors.grid_size = m;
        let draws = run_chain(
            &data,
            &truth.spec,
            &priors,
            &ChainControl::default_for(NoiseFamily::StudentT, 5),
        )
        .expect("chain");
        draws.draws.iter().map(|d| d.extra.nu()).sum::<f64>() / draws.len() as f64
    };
    let (a, b) = (nu_mean(500), nu_mean(1000));
    let rel = (a - b).abs() / b;
    outcome(
        rel < 0.01,
        format!(
            "posterior mean nu {a:.4} (m=500) vs {b:.4} (m=1000), relative difference {:.3}%",
            100.0 * rel
        ),
    )
}

fn main() {
    // libtest flags such as --list must not trigger the full run
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed: Vec<String> = Vec::new();
    let mut report = |id: &str, name: &str, start: Instant, o: Outcome| {
        if !o.pass {
            failed.push(id.to_string());
        }
        println!(
            "[{id}] {name}: {} ({:.0}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    };

    let t = Instant::now();
    report("1", "density normalization", t, density_normalization());
    let t = Instant::now();
    report("2", "variance factors", t, variance_factors());
    let t = Instant::now();
    report("3", "conjugate posterior oracle", t, conjugate_oracle());

    let t = Instant::now();
    let gaussian = coverage_run(NoiseFamily::Gaussian, ExtraParam::none(), 41);
    let student = coverage_run(NoiseFamily::StudentT, ExtraParam::scalar(3.0), 43);
    let (pg, dg) = judge_coverage(&gaussian, &REF_GAUSSIAN, &REF_PREDICTION_GAUSSIAN);
    let (ps, ds) = judge_coverage(&student, &REF_STUDENT, &REF_PREDICTION_STUDENT);
    report(
        "4",
        "coverage of coefficients, 1-step predictions and delay",
        t,
        outcome(pg && ps, format!("{dg} | {ds}")),
    );
    let t = Instant::now();
    let bias = gaussian.threshold_bias[0];
    report(
        "5",
        "threshold bias",
        t,
        outcome(
            bias.abs() < 0.02 && gaussian.failures == 0,
            format!("mean bias of c1 = {bias:.5}"),
        ),
    );

    let t = Instant::now();
    report("6", "regime-count selection", t, regime_count_selection());
    let t = Instant::now();
    report("7", "order selection", t, order_selection());
    let t = Instant::now();
    report("8", "DIC/WAIC oracle", t, criteria_oracle());
    let t = Instant::now();
    report("9", "residual calibration", t, residual_calibration());
    let t = Instant::now();
    report("10", "predictive identity", t, predictive_identity());
    let t = Instant::now();
    report("11", "grid resolution stability", t, grid_stability());

    if failed.is_empty() {
        println!("acceptance: 11/11 criteria passed");
    } else {
        println!(
            "acceptance: {}/11 criteria passed; failed: {}",
            11 - failed.len(),
            failed.join(", ")
        );
        if std::env::var_os("MTAR_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
