//! Executes one configured mode and writes its outputs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentKind, Mode, RunConfig, SelectionTarget};
use super::table::{parse_data_csv, parse_future_csv, read_json, series_table, write_json, Table};
use crate::error::{MtarError, Result};
use crate::forecast::{forecast, ForecastInput, ForecastResult};
use crate::gibbs::{run_chain, ChainControl, Draw, PosteriorDraws};
use crate::model::{ModelSpec, MultivariateSeries};
use crate::rng::{derive_seed, stream, ChainRng, ESTIMATION, FORECASTING, SIMULATION};
use crate::selection::{
    criteria, posterior_summary, residual_transform, FitSummary, ResidualSeries,
};
use crate::sim::{
    coverage_experiment, make_selection_truth, selection_experiment, simulate_mtar, Candidate,
    CoverageReport, ExperimentSettings, SelectionReport,
};
use crate::stats::NoiseFamily;

/// One row of the `compare` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub l: usize,
    pub p: usize,
    pub family: NoiseFamily,
    pub dic: f64,
    pub waic: f64,
    pub dic_rank: usize,
    pub waic_rank: usize,
}

/// What a run produced, besides the files it wrote.
#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub summary: Option<FitSummary>,
    pub draws: Option<PosteriorDraws>,
    pub forecast: Option<ForecastResult>,
    pub residuals: Option<ResidualSeries>,
    pub comparison: Option<Vec<ComparisonRow>>,
    pub simulated: Option<MultivariateSeries>,
    pub coverage: Option<CoverageReport>,
    pub selection: Option<SelectionReport>,
    pub files: Vec<PathBuf>,
}

/// Exit status for an error: 1 for configuration and data problems, 2 for
/// numerical failures.
pub fn exit_code(err: &MtarError) -> i32 {
    match err {
        MtarError::Numerical(_) | MtarError::NotPositiveDefinite(_) => 2,
        _ => 1,
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    report: &'a T,
}

#[derive(Serialize)]
struct ForecastDocument<'a> {
    samples: usize,
    #[serde(flatten)]
    result: &'a ForecastResult,
}

pub fn run(config: &RunConfig) -> Result<ResultBundle> {
    config.check_paths()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| MtarError::config(format!("cannot start worker pool: {e}")))?;
    std::fs::create_dir_all(&config.out_dir)?;
    pool.install(|| match config.mode {
        Mode::Fit => fit_mode(config),
        Mode::Forecast => forecast_mode(config),
        Mode::Residuals => residuals_mode(config),
        Mode::Simulate => simulate_mode(config),
        Mode::Compare => compare_mode(config),
        Mode::Experiment => experiment_mode(config),
    })
}

fn out(config: &RunConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

fn load_data(config: &RunConfig) -> Result<MultivariateSeries> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| MtarError::config("no data file configured"))?;
    parse_data_csv(path)
}

fn draws_table(draws: &[Draw]) -> Table {
    Table {
        columns: draws.first().map(Draw::labels).unwrap_or_default(),
        rows: draws.iter().map(Draw::flatten).collect(),
    }
}

fn fit(
    config: &RunConfig,
    series: &MultivariateSeries,
    spec: &ModelSpec,
    seed: u64,
) -> Result<(PosteriorDraws, FitSummary)> {
    spec.validate(series.k(), series.r())?;
    let priors = config.priors_for(spec, series.k(), series.r())?;
    let mut control = config.control.clone();
    control.seed = seed;
    // compared families keep their own default chain length unless one was configured
    if spec.family != config.spec.family
        && control.iterations == ChainControl::default_for(config.spec.family, 0).iterations
    {
        control.iterations = ChainControl::default_for(spec.family, 0).iterations;
    }
    let draws = run_chain(series, spec, &priors, &control)?;
    let mut summary = posterior_summary(&draws, config.level, config.delay_summary)?;
    let cr = criteria(&draws, series, config.delay_summary)?;
    summary.dic = Some(cr.dic);
    summary.waic = Some(cr.waic);
    Ok((draws, summary))
}

fn fit_and_write(
    config: &RunConfig,
    series: &MultivariateSeries,
    bundle: &mut ResultBundle,
) -> Result<PosteriorDraws> {
    let (draws, summary) = fit(config, series, &config.spec, config.control.seed)?;
    let path = out(config, "summary.json");
    write_json(&path, &summary)?;
    bundle.files.push(path);
    if config.write_draws {
        let path = out(config, "draws.csv");
        draws_table(&draws.draws).write(&path)?;
        bundle.files.push(path);
    }
    bundle.summary = Some(summary);
    Ok(draws)
}

fn fit_mode(config: &RunConfig) -> Result<ResultBundle> {
    let series = load_data(config)?;
    let mut bundle = ResultBundle::default();
    let draws = fit_and_write(config, &series, &mut bundle)?;
    bundle.draws = Some(draws);
    Ok(bundle)
}

fn forecast_mode(config: &RunConfig) -> Result<ResultBundle> {
    let series = load_data(config)?;
    let m = config.horizon;
    let future = config.future.as_deref().map(parse_future_csv).transpose()?;
    let future_x = match &future {
        Some(f) => f.x.clone(),
        None if series.r() == 0 => DMatrix::zeros(m, 0),
        None => {
            return Err(MtarError::config(
                "covariates need their future values: set 'future'",
            ))
        }
    };
    let future_z = match (&future, config.self_exciting) {
        (_, Some(_)) => Vec::new(),
        (Some(f), None) => {
            f.z.clone()
                .ok_or_else(|| MtarError::config("the future file has no z column"))?
        }
        (None, None) => {
            return Err(MtarError::config(
                "forecasts need future z values or self_exciting",
            ))
        }
    };
    let truth = future.as_ref().and_then(|f| f.y.clone());
    if let Some(y) = &truth {
        if y.nrows() != m || y.ncols() != series.k() {
            return Err(MtarError::config("true future values must be horizon × k"));
        }
    }

    let mut bundle = ResultBundle::default();
    let draws = fit_and_write(config, &series, &mut bundle)?;
    let mut input = ForecastInput::new(series.clone(), future_z, future_x, m);
    input.self_exciting = config.self_exciting;
    let mut rng = stream(config.control.seed, FORECASTING, 0);
    let result = forecast(&draws, &input, config.level, &mut rng)?;

    let mut columns: Vec<String> = vec!["step".into(), "coordinate".into()];
    if truth.is_some() {
        columns.push("truth".into());
    }
    columns.extend(["mean", "lower", "upper"].map(String::from));
    let mut rows = Vec::new();
    for s in 0..m {
        for i in 0..series.k() {
            let mut row = vec![(s + 1) as f64, (i + 1) as f64];
            if let Some(y) = &truth {
                row.push(y[(s, i)]);
            }
            row.extend([
                result.point[(s, i)],
                result.lower[(s, i)],
                result.upper[(s, i)],
            ]);
            rows.push(row);
        }
    }
    let path = out(config, "forecast.csv");
    Table { columns, rows }.write(&path)?;
    bundle.files.push(path);
    let path = out(config, "forecast.json");
    write_json(
        &path,
        &ForecastDocument {
            samples: result.draws.len(),
            result: &result,
        },
    )?;
    bundle.files.push(path);
    bundle.draws = Some(draws);
    bundle.forecast = Some(result);
    Ok(bundle)
}

fn residuals_mode(config: &RunConfig) -> Result<ResultBundle> {
    let series = load_data(config)?;
    let summary_path = config
        .summary
        .clone()
        .unwrap_or_else(|| out(config, "summary.json"));
    if !summary_path.is_file() {
        return Err(MtarError::config(format!(
            "summary {} not found; run the fit mode first",
            summary_path.display()
        )));
    }
    let summary: FitSummary = read_json(&summary_path)?;
    let res = residual_transform(&summary, &series)?;
    let mut bundle = ResultBundle::default();
    let path = out(config, "residuals.csv");
    let rows = res
        .time_points
        .iter()
        .zip(&res.r)
        .map(|(t, r)| vec![*t as f64, *r])
        .collect();
    Table {
        columns: vec!["t".into(), "residual".into()],
        rows,
    }
    .write(&path)?;
    bundle.files.push(path);
    let path = out(config, "qq.csv");
    let rows = res
        .qq_pairs()
        .into_iter()
        .map(|(a, b)| vec![a, b])
        .collect();
    Table {
        columns: vec!["theoretical".into(), "sample".into()],
        rows,
    }
    .write(&path)?;
    bundle.files.push(path);
    bundle.residuals = Some(res);
    Ok(bundle)
}

fn simulate_mode(config: &RunConfig) -> Result<ResultBundle> {
    let sim = &config.simulation;
    let family = config.spec.family;
    let truth = sim.design.truth();
    let extra = sim
        .extra
        .clone()
        .unwrap_or_else(|| sim.design.default_extra(family));
    let mut rng = stream(config.control.seed, SIMULATION, 0);
    let series = simulate_mtar(&truth, sim.length, family, &extra, sim.burn, &mut rng)?;
    let mut bundle = ResultBundle::default();
    let path = out(config, "data.csv");
    series_table(&series).write(&path)?;
    bundle.files.push(path);
    let path = out(config, "truth.json");
    write_json(&path, &truth.with_family(family, extra))?;
    bundle.files.push(path);
    bundle.simulated = Some(series);
    Ok(bundle)
}

fn candidate_label(spec: &ModelSpec) -> String {
    if spec.l == 1 {
        format!("VAR({}) {}", spec.p[0], spec.family)
    } else {
        format!("MTAR({};{}) {}", spec.l, spec.p[0], spec.family)
    }
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

fn compare_mode(config: &RunConfig) -> Result<ResultBundle> {
    let series = load_data(config)?;
    let mut specs = Vec::new();
    for &l in &config.compare.l {
        for &p in &config.compare.p {
            for &family in &config.compare.families {
                specs.push(ModelSpec::uniform(
                    l,
                    p,
                    config.spec.q[0],
                    config.spec.d[0],
                    config.spec.h_min,
                    config.spec.h_max,
                    family,
                ));
            }
        }
    }
    let fits: Vec<(f64, f64)> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (_, s) = fit(
                config,
                &series,
                spec,
                derive_seed(config.control.seed, ESTIMATION, i as u64),
            )?;
            Ok((
                s.dic.expect("criteria computed").value,
                s.waic.expect("criteria computed").value,
            ))
        })
        .collect::<Result<_>>()?;
    let dic: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let waic: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let (dr, wr) = (ranks(&dic), ranks(&waic));
    let mut rows: Vec<ComparisonRow> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| ComparisonRow {
            label: candidate_label(s),
            l: s.l,
            p: s.p[0],
            family: s.family,
            dic: super::table::round_sig(dic[i]),
            waic: super::table::round_sig(waic[i]),
            dic_rank: dr[i],
            waic_rank: wr[i],
        })
        .collect();
    rows.sort_by_key(|r| (r.dic_rank, r.waic_rank));
    let mut bundle = ResultBundle::default();
    let path = out(config, "compare.csv");
    write_comparison(&path, &rows)?;
    bundle.files.push(path);
    let path = out(config, "report.json");
    write_json(
        &path,
        &Report {
            config,
            report: &rows,
        },
    )?;
    bundle.files.push(path);
    bundle.comparison = Some(rows);
    Ok(bundle)
}

fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| MtarError::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| MtarError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by the `compare` mode.
pub fn read_comparison(path: &Path) -> Result<Vec<ComparisonRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| MtarError::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| MtarError::Parse(format!("{}: {e}", path.display()))))
        .collect()
}

/// Candidate sets of the selection experiments, with the index of the truth.
pub fn selection_candidates(target: SelectionTarget, h_max: usize) -> (Vec<Candidate>, usize) {
    let cand = |l: usize, p: usize, family: NoiseFamily| {
        let spec = ModelSpec::uniform(l, p, 0, 0, 0, h_max, family);
        Candidate {
            label: candidate_label(&spec),
            spec,
        }
    };
    match target {
        SelectionTarget::Regimes => (
            (1..=4).map(|l| cand(l, 1, NoiseFamily::StudentT)).collect(),
            1,
        ),
        SelectionTarget::Orders => (
            (1..=3).map(|p| cand(2, p, NoiseFamily::StudentT)).collect(),
            0,
        ),
        SelectionTarget::Distributions => {
            let all: Vec<Candidate> = NoiseFamily::ALL.iter().map(|&f| cand(2, 1, f)).collect();
            let idx = NoiseFamily::ALL
                .iter()
                .position(|&f| f == NoiseFamily::StudentT)
                .expect("listed");
            (all, idx)
        }
    }
}

fn experiment_mode(config: &RunConfig) -> Result<ResultBundle> {
    let sim = &config.simulation;
    let settings = ExperimentSettings {
        len: sim.length,
        replications: config.experiment.replications,
        control: config.control.clone(),
        grid_size: config.grid_size,
        burn: sim.burn,
        level: config.level,
        horizon: config.horizon,
    };
    let mut rng = ChainRng::seed_from_u64(config.control.seed);
    let mut bundle = ResultBundle::default();
    let path = out(config, "report.json");
    match config.experiment.kind {
        ExperimentKind::Coverage => {
            let family = config.spec.family;
            let extra = sim
                .extra
                .clone()
                .unwrap_or_else(|| sim.design.default_extra(family));
            let report =
                coverage_experiment(&sim.design.truth(), family, &extra, &settings, &mut rng)?;
            write_json(
                &path,
                &Report {
                    config,
                    report: &report,
                },
            )?;
            bundle.coverage = Some(report);
        }
        ExperimentKind::Selection => {
            let mut truth = make_selection_truth();
            if let Some(e) = &sim.extra {
                e.validate(NoiseFamily::StudentT)?;
                truth.extra = e.clone();
            }
            let (candidates, true_index) =
                selection_candidates(config.experiment.selection, truth.spec.h_max);
            let report =
                selection_experiment(&truth, &candidates, true_index, &settings, &mut rng)?;
            write_json(
                &path,
                &Report {
                    config,
                    report: &report,
                },
            )?;
            bundle.selection = Some(report);
        }
    }
    bundle.files.push(path);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_order() {
        assert_eq!(ranks(&[3.0, 1.0, 2.0]), vec![3, 1, 2]);
        assert_eq!(ranks(&[1.0, 1.0]), vec![1, 2]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&MtarError::Config("x".into())), 1);
        assert_eq!(exit_code(&MtarError::Parse("x".into())), 1);
        assert_eq!(exit_code(&MtarError::Numerical("x".into())), 2);
    }

    #[test]
    fn selection_sets_contain_the_truth() {
        let (c, i) = selection_candidates(SelectionTarget::Regimes, 3);
        assert_eq!((c.len(), c[i].spec.l), (4, 2));
        let (c, i) = selection_candidates(SelectionTarget::Distributions, 3);
        assert_eq!(c[i].spec.family, NoiseFamily::StudentT);
    }
}
