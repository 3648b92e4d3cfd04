//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::gibbs::{ChainControl, ExtraPrior, Priors};
use crate::model::ModelSpec;
use crate::selection::DelaySummary;
use crate::sim::Design;
use crate::stats::{ExtraParam, NoiseFamily, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fit,
    Forecast,
    Simulate,
    Compare,
    Residuals,
    Experiment,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Fit,
        Mode::Forecast,
        Mode::Simulate,
        Mode::Compare,
        Mode::Residuals,
        Mode::Experiment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fit => "fit",
            Mode::Forecast => "forecast",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::Residuals => "residuals",
            Mode::Experiment => "experiment",
        }
    }

    fn reads_data(self) -> bool {
        matches!(
            self,
            Mode::Fit | Mode::Forecast | Mode::Compare | Mode::Residuals
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = MtarError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| MtarError::config(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Coverage,
    Selection,
}

/// Which structural choice a selection experiment varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionTarget {
    Regimes,
    Orders,
    Distributions,
}

/// Optional replacements for the non-informative regime priors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorOverrides {
    /// Every entry of μ₀ⱼ.
    pub mu0: Option<f64>,
    /// Δ₀ⱼ = value · I.
    pub delta0_scale: Option<f64>,
    /// Ω₀ⱼ = value · I.
    pub omega0_scale: Option<f64>,
    pub tau0: Option<f64>,
}

/// Candidate grid of the `compare` mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareGrid {
    pub l: Vec<usize>,
    pub p: Vec<usize>,
    pub families: Vec<NoiseFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: Design,
    pub length: usize,
    pub burn: usize,
    /// True extra parameter; `None` uses the design default for the family.
    pub extra: Option<ExtraParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub replications: usize,
    pub selection: SelectionTarget,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub spec: ModelSpec,
    pub extra_prior: ExtraPrior,
    pub control: ChainControl,
    pub grid_size: usize,
    pub prior: PriorOverrides,
    pub level: f64,
    pub horizon: usize,
    pub future: Option<PathBuf>,
    /// 0-based output column used as the threshold series in forecasts.
    pub self_exciting: Option<usize>,
    pub write_draws: bool,
    pub delay_summary: DelaySummary,
    /// Worker threads for `compare` and `experiment`; 0 picks the core count.
    pub threads: usize,
    pub summary: Option<PathBuf>,
    pub compare: CompareGrid,
    pub simulation: SimulationConfig,
    pub experiment: ExperimentConfig,
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "mode",
    "data",
    "out_dir",
    "l",
    "p",
    "q",
    "d",
    "h_min",
    "h_max",
    "family",
    "nu_lower",
    "nu_upper",
    "slash_shape",
    "slash_rate",
    "cn_gamma01",
    "cn_eta01",
    "cn_gamma02",
    "cn_eta02",
    "iterations",
    "burn_in",
    "thinning",
    "seed",
    "zeta",
    "grid_size",
    "prior_mu0",
    "prior_delta0",
    "prior_omega0",
    "prior_tau0",
    "level",
    "horizon",
    "future",
    "self_exciting",
    "write_draws",
    "dic_h",
    "threads",
    "summary",
    "compare_l",
    "compare_p",
    "compare_families",
    "design",
    "length",
    "burn",
    "extra",
    "experiment",
    "replications",
    "selection",
];

fn parse_err(key: &str, value: &str, what: &str) -> MtarError {
    MtarError::Parse(format!("key '{key}': cannot read '{value}' as {what}"))
}

fn number<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| parse_err(key, value, what))
}

fn list<T: FromStr>(key: &str, value: &str, what: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| number(key, v, what)).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(parse_err(key, value, "a boolean")),
    }
}

fn enum_value<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_string()))
        .map_err(|_| MtarError::config(format!("key '{key}': unknown value '{value}'")))
}

/// Splits the text into key/value pairs, rejecting unknown and repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| MtarError::Parse(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(MtarError::config(format!(
                "line {}: unknown key '{key}'",
                n + 1
            )));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(MtarError::config(format!(
                "line {}: key '{key}' given twice",
                n + 1
            )));
        }
    }
    Ok(out)
}

fn per_regime(key: &str, value: Option<&String>, l: usize, default: usize) -> Result<Vec<usize>> {
    match value {
        None => Ok(vec![default; l]),
        Some(v) => {
            let vals: Vec<usize> = list(key, v, "non-negative integers")?;
            match vals.len() {
                1 => Ok(vec![vals[0]; l]),
                n if n == l => Ok(vals),
                n => Err(MtarError::config(format!(
                    "key '{key}': {n} values given for {l} regimes"
                ))),
            }
        }
    }
}

impl RunConfig {
    /// Reads a configuration file; `mode` may be supplied by the caller instead.
    pub fn from_file(path: &Path, mode: Option<Mode>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            MtarError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str_with_mode(&text, mode)
    }

    pub fn from_str_with_mode(text: &str, mode: Option<Mode>) -> Result<Self> {
        let kv = parse_pairs(text)?;
        let get = |k: &str| kv.get(k);
        let file_mode = get("mode").map(|m| m.parse::<Mode>()).transpose()?;
        let mode = match (mode, file_mode) {
            (Some(a), Some(b)) if a != b => {
                return Err(MtarError::config(format!(
                    "command-line mode '{a}' differs from config mode '{b}'"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(MtarError::config("no mode given")),
        };

        let family: NoiseFamily = match get("family") {
            Some(v) => v.parse()?,
            None => NoiseFamily::Gaussian,
        };
        let l: usize = get("l")
            .map(|v| number("l", v, "an integer"))
            .transpose()?
            .unwrap_or(2);
        let spec = ModelSpec {
            l,
            p: per_regime("p", get("p"), l, 1)?,
            q: per_regime("q", get("q"), l, 0)?,
            d: per_regime("d", get("d"), l, 0)?,
            h_min: get("h_min")
                .map(|v| number("h_min", v, "an integer"))
                .transpose()?
                .unwrap_or(0),
            h_max: get("h_max")
                .map(|v| number("h_max", v, "an integer"))
                .transpose()?
                .unwrap_or(3),
            family,
        };

        let extra_prior = Self::extra_prior(&kv, family)?;

        let seed = get("seed")
            .map(|v| number("seed", v, "an unsigned integer"))
            .transpose()?
            .unwrap_or(1);
        let mut control = ChainControl::default_for(family, seed);
        if let Some(v) = get("iterations") {
            control.iterations = number("iterations", v, "an integer")?;
        }
        if let Some(v) = get("burn_in") {
            control.burn_in = number("burn_in", v, "an integer")?;
        }
        if let Some(v) = get("thinning") {
            control.thinning = number("thinning", v, "an integer")?;
        }
        if let Some(v) = get("zeta") {
            control.zeta = number("zeta", v, "a number")?;
        }

        let opt_f64 = |k: &str| get(k).map(|v| number::<f64>(k, v, "a number")).transpose();
        let prior = PriorOverrides {
            mu0: opt_f64("prior_mu0")?,
            delta0_scale: opt_f64("prior_delta0")?,
            omega0_scale: opt_f64("prior_omega0")?,
            tau0: opt_f64("prior_tau0")?,
        };

        let compare = CompareGrid {
            l: get("compare_l")
                .map(|v| list("compare_l", v, "integers"))
                .transpose()?
                .unwrap_or_else(|| vec![l]),
            p: get("compare_p")
                .map(|v| list("compare_p", v, "integers"))
                .transpose()?
                .unwrap_or_else(|| vec![spec.p[0]]),
            families: match get("compare_families") {
                Some(v) => v.split(',').map(str::parse).collect::<Result<_>>()?,
                None => vec![family],
            },
        };

        let extra = match get("extra") {
            Some(v) => {
                let values: Vec<f64> = list("extra", v, "numbers")?;
                let e = ExtraParam { values };
                e.validate(family)?;
                Some(e)
            }
            None => None,
        };
        let simulation = SimulationConfig {
            design: get("design")
                .map(|v| enum_value("design", v))
                .transpose()?
                .unwrap_or(Design::M1),
            length: get("length")
                .map(|v| number("length", v, "an integer"))
                .transpose()?
                .unwrap_or(1000),
            burn: get("burn")
                .map(|v| number("burn", v, "an integer"))
                .transpose()?
                .unwrap_or(crate::sim::DEFAULT_BURN),
            extra,
        };
        let experiment = ExperimentConfig {
            kind: get("experiment")
                .map(|v| enum_value("experiment", v))
                .transpose()?
                .unwrap_or(ExperimentKind::Coverage),
            replications: get("replications")
                .map(|v| number("replications", v, "an integer"))
                .transpose()?
                .unwrap_or(100),
            selection: get("selection")
                .map(|v| enum_value("selection", v))
                .transpose()?
                .unwrap_or(SelectionTarget::Regimes),
        };

        let config = RunConfig {
            mode,
            data: get("data").map(PathBuf::from),
            out_dir: get("out_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("mtar_out")),
            spec,
            extra_prior,
            control,
            grid_size: get("grid_size")
                .map(|v| number("grid_size", v, "an integer"))
                .transpose()?
                .unwrap_or(1000),
            prior,
            level: opt_f64("level")?.unwrap_or(0.95),
            horizon: get("horizon")
                .map(|v| number("horizon", v, "an integer"))
                .transpose()?
                .unwrap_or(1),
            future: get("future").map(PathBuf::from),
            self_exciting: get("self_exciting")
                .map(|v| number::<usize>("self_exciting", v, "a column number"))
                .transpose()?
                .map(|c| {
                    c.checked_sub(1)
                        .ok_or_else(|| MtarError::config("self_exciting columns count from 1"))
                })
                .transpose()?,
            write_draws: get("write_draws")
                .map(|v| boolean("write_draws", v))
                .transpose()?
                .unwrap_or(false),
            delay_summary: match get("dic_h").map(|s| s.as_str()) {
                None | Some("mode") => DelaySummary::Mode,
                Some("mean") => DelaySummary::MeanRounded,
                Some(v) => {
                    return Err(MtarError::config(format!(
                        "key 'dic_h': expected mode or mean, got '{v}'"
                    )))
                }
            },
            threads: get("threads")
                .map(|v| number("threads", v, "an integer"))
                .transpose()?
                .unwrap_or(0),
            summary: get("summary").map(PathBuf::from),
            compare,
            simulation,
            experiment,
        };
        config.check_ranges()?;
        Ok(config)
    }

    fn extra_prior(kv: &BTreeMap<String, String>, family: NoiseFamily) -> Result<ExtraPrior> {
        let groups: [(&[&str], &[NoiseFamily]); 3] = [
            (
                &["nu_lower", "nu_upper"],
                &[NoiseFamily::StudentT, NoiseFamily::SymmetricHyperbolic],
            ),
            (&["slash_shape", "slash_rate"], &[NoiseFamily::Slash]),
            (
                &["cn_gamma01", "cn_eta01", "cn_gamma02", "cn_eta02"],
                &[NoiseFamily::ContaminatedNormal],
            ),
        ];
        for (keys, families) in groups {
            if let Some(k) = keys.iter().find(|k| kv.contains_key(**k)) {
                if !families.contains(&family) {
                    return Err(MtarError::config(format!(
                        "key '{k}' does not apply to family {family}"
                    )));
                }
            }
        }
        let f = |k: &str| {
            kv.get(k)
                .map(|v| number::<f64>(k, v, "a number"))
                .transpose()
        };
        let mut prior = ExtraPrior::default_for(family);
        match &mut prior {
            ExtraPrior::None => {}
            ExtraPrior::Uniform { lower, upper } => {
                *lower = f("nu_lower")?.unwrap_or(*lower);
                *upper = f("nu_upper")?.unwrap_or(*upper);
            }
            ExtraPrior::Gamma { shape, rate } => {
                *shape = f("slash_shape")?.unwrap_or(*shape);
                *rate = f("slash_rate")?.unwrap_or(*rate);
            }
            ExtraPrior::Contaminated {
                gamma01,
                eta01,
                gamma02,
                eta02,
            } => {
                *gamma01 = f("cn_gamma01")?.unwrap_or(*gamma01);
                *eta01 = f("cn_eta01")?.unwrap_or(*eta01);
                *gamma02 = f("cn_gamma02")?.unwrap_or(*gamma02);
                *eta02 = f("cn_eta02")?.unwrap_or(*eta02);
            }
        }
        Ok(prior)
    }

    fn check_ranges(&self) -> Result<()> {
        self.control.validate()?;
        if self.spec.l == 0 || self.compare.l.contains(&0) {
            return Err(MtarError::config("regime counts must be at least 1"));
        }
        if self.spec.h_min > self.spec.h_max {
            return Err(MtarError::config("h_min exceeds h_max"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(MtarError::config("level must lie in (0, 1)"));
        }
        if self.horizon == 0 {
            return Err(MtarError::config("horizon must be at least 1"));
        }
        if self.grid_size < 2 {
            return Err(MtarError::config("grid_size must be at least 2"));
        }
        if self.experiment.replications == 0 {
            return Err(MtarError::config("replications must be at least 1"));
        }
        if self.compare.l.is_empty()
            || self.compare.p.is_empty()
            || self.compare.families.is_empty()
        {
            return Err(MtarError::config("compare lists must not be empty"));
        }
        let p = &self.prior;
        let pos = |v: Option<f64>| v.is_none_or(|v| v > 0.0 && v.is_finite());
        if !pos(p.delta0_scale) || !pos(p.omega0_scale) || p.mu0.is_some_and(|v| !v.is_finite()) {
            return Err(MtarError::config(
                "prior scales must be positive and finite",
            ));
        }
        // validated against the real data dimension later; this catches nonsense early
        if p.tau0.is_some_and(|t| !(t > 0.0)) {
            return Err(MtarError::config("prior_tau0 must be positive"));
        }
        Ok(())
    }

    /// Checks that input files exist for the modes that read them.
    pub fn check_paths(&self) -> Result<()> {
        if self.mode.reads_data() {
            let data = self.data.as_ref().ok_or_else(|| {
                MtarError::config(format!("mode {} needs a data file", self.mode))
            })?;
            if !data.is_file() {
                return Err(MtarError::config(format!(
                    "data file {} does not exist",
                    data.display()
                )));
            }
        }
        if let Some(f) = &self.future {
            if self.mode == Mode::Forecast && !f.is_file() {
                return Err(MtarError::config(format!(
                    "future file {} does not exist",
                    f.display()
                )));
            }
        }
        Ok(())
    }

    /// Non-informative priors for `spec`, with the configured overrides.
    pub fn priors_for(&self, spec: &ModelSpec, k: usize, r: usize) -> Result<Priors> {
        let mut priors = Priors::non_informative(spec, k, r);
        if spec.family == self.spec.family {
            priors.extra = self.extra_prior.clone();
        }
        priors.grid_size = self.grid_size;
        for rp in &mut priors.regimes {
            if let Some(v) = self.prior.mu0 {
                rp.mu0.fill(v);
            }
            if let Some(v) = self.prior.delta0_scale {
                rp.delta0 = SymMatrix::scaled_identity(rp.delta0.dim(), v);
            }
            if let Some(v) = self.prior.omega0_scale {
                rp.omega0 = SymMatrix::scaled_identity(k, v);
            }
            if let Some(v) = self.prior.tau0 {
                rp.tau0 = v;
            }
        }
        priors.validate(spec, k, r)?;
        Ok(priors)
    }
}
