//! Python bindings: simulation, fitting, criteria, forecasts and residuals.

use std::path::PathBuf;

use mtar_core::cli::table::to_json;
use mtar_core::cli::{self, Mode, RunConfig};
use mtar_core::forecast::{forecast, ForecastInput};
use mtar_core::gibbs::{run_chain, ChainControl, Draw, PosteriorDraws, Priors};
use mtar_core::model::{ModelSpec, MultivariateSeries};
use mtar_core::rng::{stream, FORECASTING, SIMULATION};
use mtar_core::selection::{
    criteria, posterior_summary, residual_transform, DelaySummary, FitSummary,
};
use mtar_core::sim::{simulate_mtar, Design, DEFAULT_BURN};
use mtar_core::stats::{ExtraParam, NoiseFamily};
use mtar_core::MtarError;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: MtarError) -> PyErr {
    match cli::exit_code(&e) {
        2 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Per-regime orders: one int for every regime or a list of length l.
#[derive(FromPyObject)]
enum Orders {
    One(usize),
    Many(Vec<usize>),
}

impl Orders {
    fn expand(self, l: usize) -> Vec<usize> {
        match self {
            Orders::One(v) => vec![v; l],
            Orders::Many(v) => v,
        }
    }
}

fn family(name: &str) -> PyResult<NoiseFamily> {
    name.parse().map_err(py_err)
}

fn extra(values: Option<Vec<f64>>) -> PyResult<ExtraParam> {
    Ok(match values.as_deref() {
        None | Some([]) => ExtraParam::none(),
        Some([nu]) => ExtraParam::scalar(*nu),
        Some([a, b]) => ExtraParam::pair(*a, *b),
        Some(_) => return Err(PyValueError::new_err("extra takes at most two values")),
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(values: Vec<Vec<f64>>, nrows: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if values.is_empty() {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    let ncols = values[0].len();
    if values.len() != nrows || values.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what} must be a {nrows}-row rectangular list"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| values[i][j]))
}

/// Accepts y as a list of rows, or a flat list for a single output.
#[derive(FromPyObject)]
enum Outputs {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

fn series(y: Outputs, z: Vec<f64>, x: Option<Vec<Vec<f64>>>) -> PyResult<MultivariateSeries> {
    let t = z.len();
    let y = match y {
        Outputs::Rows(r) => matrix(r, t, "y")?,
        Outputs::Flat(v) => {
            if v.len() != t {
                return Err(PyValueError::new_err("y and z lengths differ"));
            }
            DMatrix::from_column_slice(t, 1, &v)
        }
    };
    let x = matrix(x.unwrap_or_default(), t, "x")?;
    MultivariateSeries::new(y, x, z).map_err(py_err)
}

/// Simulates one of the built-in designs ("m1" or "m2"); returns a dict
/// with keys y (rows), x (rows) and z.
#[pyfunction]
#[pyo3(signature = (design, length, family="gaussian", extra=None, seed=0, burn=DEFAULT_BURN))]
fn simulate<'py>(
    py: Python<'py>,
    design: &str,
    length: usize,
    family: &str,
    extra: Option<Vec<f64>>,
    seed: u64,
    burn: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let design = match design.to_ascii_lowercase().as_str() {
        "m1" => Design::M1,
        "m2" => Design::M2,
        other => return Err(PyValueError::new_err(format!("unknown design '{other}'"))),
    };
    let fam = self::family(family)?;
    let extra = match extra {
        Some(v) => self::extra(Some(v))?,
        None => design.default_extra(fam),
    };
    let truth = design.truth().with_family(fam, extra.clone());
    let s = simulate_mtar(
        &truth,
        length,
        fam,
        &extra,
        burn,
        &mut stream(seed, SIMULATION, 0),
    )
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("y", rows(s.y()))?;
    out.set_item("x", rows(s.x()))?;
    out.set_item("z", s.z().to_vec())?;
    Ok(out)
}

/// A fitted model: posterior draws plus the data they came from.
#[pyclass(module = "pymtar")]
struct Fit {
    draws: PosteriorDraws,
    series: MultivariateSeries,
    summary: FitSummary,
}

#[pymethods]
impl Fit {
    /// Posterior summary as a JSON string (same document as summary.json).
    fn summary_json(&self) -> PyResult<String> {
        to_json(&self.summary).map_err(py_err)
    }

    /// Posterior summary as a dict.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("json")?
            .call_method1("loads", (self.summary_json()?,))
    }

    /// `{"dic": {...}, "waic": {...}}`.
    fn criteria<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for (name, c) in [("dic", &self.summary.dic), ("waic", &self.summary.waic)] {
            let Some(c) = c else { continue };
            let d = PyDict::new(py);
            d.set_item("value", c.value)?;
            d.set_item("hat", c.hat)?;
            d.set_item("bar", c.bar)?;
            d.set_item("penalty", c.bar - c.hat)?;
            out.set_item(name, d)?;
        }
        Ok(out)
    }

    /// Column labels of `draws()`.
    fn labels(&self) -> Vec<String> {
        self.draws
            .draws
            .first()
            .map(Draw::labels)
            .unwrap_or_default()
    }

    /// One row per stored draw, in `labels()` order.
    fn draws(&self) -> Vec<Vec<f64>> {
        self.draws.draws.iter().map(Draw::flatten).collect()
    }

    fn acceptance_rate(&self) -> f64 {
        self.draws.acceptance_rate
    }

    /// `(time_points, residuals)`; time points are 1-based.
    fn residuals(&self) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let r = residual_transform(&self.summary, &self.series).map_err(py_err)?;
        Ok((r.time_points, r.r))
    }

    /// Predictive means and equal-tailed intervals, each horizon × k.
    #[pyo3(signature = (future_z, future_x=None, level=0.95, seed=0))]
    fn forecast<'py>(
        &self,
        py: Python<'py>,
        future_z: Vec<f64>,
        future_x: Option<Vec<Vec<f64>>>,
        level: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = future_z.len();
        let x = matrix(future_x.unwrap_or_default(), m, "future_x")?;
        let input = ForecastInput::new(self.series.clone(), future_z, x, m);
        let result = forecast(
            &self.draws,
            &input,
            level,
            &mut stream(seed, FORECASTING, 0),
        )
        .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("mean", rows(&result.point))?;
        out.set_item("lower", rows(&result.lower))?;
        out.set_item("upper", rows(&result.upper))?;
        Ok(out)
    }
}

/// Runs the Gibbs sampler and summarizes the chain.
#[pyfunction]
#[pyo3(signature = (
    y, z, x=None, l=2, p=Orders::One(1), q=Orders::One(0), d=Orders::One(0), h_min=0, h_max=3,
    family="gaussian", iterations=None, burn_in=500, thinning=1, seed=0, level=0.95,
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    y: Outputs,
    z: Vec<f64>,
    x: Option<Vec<Vec<f64>>>,
    l: usize,
    p: Orders,
    q: Orders,
    d: Orders,
    h_min: usize,
    h_max: usize,
    family: &str,
    iterations: Option<usize>,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    level: f64,
) -> PyResult<Fit> {
    let series = series(y, z, x)?;
    let fam = self::family(family)?;
    let spec = ModelSpec {
        l,
        p: p.expand(l),
        q: q.expand(l),
        d: d.expand(l),
        h_min,
        h_max,
        family: fam,
    };
    spec.validate(series.k(), series.r()).map_err(py_err)?;
    let mut control = ChainControl::default_for(fam, seed);
    if let Some(n) = iterations {
        control.iterations = n;
    }
    control.burn_in = burn_in;
    control.thinning = thinning;
    let priors = Priors::non_informative(&spec, series.k(), series.r());
    py.detach(|| {
        let draws = run_chain(&series, &spec, &priors, &control)?;
        let mut summary = posterior_summary(&draws, level, DelaySummary::Mode)?;
        let cr = criteria(&draws, &series, DelaySummary::Mode)?;
        summary.dic = Some(cr.dic);
        summary.waic = Some(cr.waic);
        Ok(Fit {
            draws,
            series,
            summary,
        })
    })
    .map_err(py_err)
}

/// Runs a configuration file as the command-line tool would; returns the
/// written paths.
#[pyfunction]
#[pyo3(signature = (path, mode=None))]
fn run_config(py: Python<'_>, path: PathBuf, mode: Option<&str>) -> PyResult<Vec<String>> {
    let mode: Option<Mode> = mode.map(str::parse).transpose().map_err(py_err)?;
    let config = RunConfig::from_file(&path, mode).map_err(py_err)?;
    let bundle = py.detach(|| cli::run(&config)).map_err(py_err)?;
    Ok(bundle
        .files
        .iter()
        .map(|p| p.display().to_string())
        .collect())
}

#[pymodule]
fn pymtar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add(
        "FAMILIES",
        NoiseFamily::ALL
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
