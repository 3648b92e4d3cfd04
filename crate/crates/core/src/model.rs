//! Series containers, model structure, regime assignment and design matrices.
//!
//! Time points are 1-based, `t ∈ 1..=T`, as in the model equations; row
//! `t - 1` of each matrix holds time `t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MtarError, Result};
use crate::stats::{NoiseFamily, SymMatrix};

/// Output series Y (T×k), covariates X (T×r) and threshold series Z (T).
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSeries {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    z: Vec<f64>,
}

impl MultivariateSeries {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, z: Vec<f64>) -> Result<Self> {
        let t = y.nrows();
        if y.ncols() == 0 {
            return Err(MtarError::config(
                "the output series needs at least one column",
            ));
        }
        if x.nrows() != t || z.len() != t {
            return Err(MtarError::config(format!(
                "series lengths differ: y has {t} rows, x has {}, z has {}",
                x.nrows(),
                z.len()
            )));
        }
        if y.iter()
            .chain(x.iter())
            .chain(z.iter())
            .any(|v| !v.is_finite())
        {
            return Err(MtarError::config("series contain non-finite values"));
        }
        Ok(MultivariateSeries { y, x, z })
    }

    /// Series without covariates.
    pub fn without_covariates(y: DMatrix<f64>, z: Vec<f64>) -> Result<Self> {
        let t = y.nrows();
        Self::new(y, DMatrix::zeros(t, 0), z)
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `Z_t` for 1-based `t`.
    pub fn z_at(&self, t: usize) -> f64 {
        self.z[t - 1]
    }

    /// The first `len` time points.
    pub fn head(&self, len: usize) -> MultivariateSeries {
        MultivariateSeries {
            y: self.y.rows(0, len).into_owned(),
            x: self.x.rows(0, len).into_owned(),
            z: self.z[..len].to_vec(),
        }
    }

    /// Overwrites `Y_t` (1-based `t`).
    pub fn set_y(&mut self, t: usize, y: &[f64]) {
        self.y.row_mut(t - 1).copy_from_slice(y);
    }

    /// Overwrites `Z_t` (1-based `t`).
    pub fn set_z(&mut self, t: usize, z: f64) {
        self.z[t - 1] = z;
    }

    /// Time points `from..=to` (1-based) as a new series.
    pub fn window(&self, from: usize, to: usize) -> MultivariateSeries {
        let len = to + 1 - from;
        MultivariateSeries {
            y: self.y.rows(from - 1, len).into_owned(),
            x: self.x.rows(from - 1, len).into_owned(),
            z: self.z[from - 1..to].to_vec(),
        }
    }

    /// Appends one time point.
    pub fn push(&mut self, y: &[f64], x: &[f64], z: f64) {
        let t = self.len();
        let k = self.k();
        let r = self.r();
        let mut ny =
            std::mem::replace(&mut self.y, DMatrix::zeros(0, 0)).resize_vertically(t + 1, 0.0);
        ny.row_mut(t).copy_from_slice(y);
        self.y = ny;
        let mut nx =
            std::mem::replace(&mut self.x, DMatrix::zeros(0, 0)).resize_vertically(t + 1, 0.0);
        if r > 0 {
            nx.row_mut(t).copy_from_slice(x);
        }
        self.x = nx;
        self.z.push(z);
        debug_assert_eq!(self.k(), k);
    }
}

/// Structural parameters of an MTAR(l; p, q, d) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub l: usize,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub d: Vec<usize>,
    pub h_min: usize,
    pub h_max: usize,
    pub family: NoiseFamily,
}

impl ModelSpec {
    /// Same orders in every regime.
    pub fn uniform(
        l: usize,
        p: usize,
        q: usize,
        d: usize,
        h_min: usize,
        h_max: usize,
        family: NoiseFamily,
    ) -> Self {
        ModelSpec {
            l,
            p: vec![p; l],
            q: vec![q; l],
            d: vec![d; l],
            h_min,
            h_max,
            family,
        }
    }

    pub fn validate(&self, k: usize, r: usize) -> Result<()> {
        if self.l == 0 {
            return Err(MtarError::config("regime count l must be at least 1"));
        }
        if self.p.len() != self.l || self.q.len() != self.l || self.d.len() != self.l {
            return Err(MtarError::config(format!(
                "p, q and d must each list {} orders",
                self.l
            )));
        }
        if self.h_min > self.h_max {
            return Err(MtarError::config("h_min exceeds h_max"));
        }
        if r == 0 && self.q.iter().any(|&q| q > 0) {
            return Err(MtarError::config(
                "covariate lags requested but the data have no covariates",
            ));
        }
        if k == 0 {
            return Err(MtarError::config("k must be positive"));
        }
        Ok(())
    }

    /// Number of regression rows `s_j = 1 + p_j k + q_j r + d_j`.
    pub fn s(&self, j: usize, k: usize, r: usize) -> usize {
        1 + self.p[j] * k + self.q[j] * r + self.d[j]
    }

    /// Minimum regime occupancy `s_j + k + 1`.
    pub fn n_min(&self, j: usize, k: usize, r: usize) -> usize {
        self.s(j, k, r) + k + 1
    }

    pub fn max_lag(&self) -> usize {
        self.p
            .iter()
            .chain(&self.q)
            .chain(&self.d)
            .copied()
            .chain(std::iter::once(self.h_max))
            .max()
            .unwrap_or(0)
    }

    pub fn h_candidates(&self) -> std::ops::RangeInclusive<usize> {
        self.h_min..=self.h_max
    }
}

/// Smallest usable 1-based time point: every lag and every candidate delay is available.
pub fn effective_start(spec: &ModelSpec) -> usize {
    spec.max_lag() + 1
}

/// Ordered threshold values c₁ < … < c_{l−1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(MtarError::config("thresholds must be finite"));
        }
        if c.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MtarError::config(format!(
                "thresholds must be strictly increasing, got {c:?}"
            )));
        }
        Ok(Thresholds(c))
    }

    pub fn empty() -> Self {
        Thresholds(Vec::new())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// 0-based regime of a threshold-variable value: the number of thresholds
    /// strictly below it, so `z == c_j` falls in the lower regime.
    pub fn regime_of(&self, z: f64) -> usize {
        self.0.iter().take_while(|&&c| c < z).count()
    }
}

impl From<Thresholds> for Vec<f64> {
    fn from(t: Thresholds) -> Self {
        t.0
    }
}

impl TryFrom<Vec<f64>> for Thresholds {
    type Error = MtarError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Thresholds::new(v)
    }
}

/// Partition of the eligible time points `effective_start..=T` by regime.
pub fn assign_regimes(
    series: &MultivariateSeries,
    c: &Thresholds,
    h: usize,
    spec: &ModelSpec,
) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); spec.l];
    for t in effective_start(spec)..=series.len() {
        let j = c.regime_of(series.z_at(t - h)).min(spec.l - 1);
        sets[j].push(t);
    }
    sets
}

/// Response and design of one regime; row `i` of both refers to `time_points[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeData {
    pub design: DMatrix<f64>,
    pub response: DMatrix<f64>,
    pub time_points: Vec<usize>,
}

/// Writes `[1, y_{t-1}ᵀ…y_{t-p}ᵀ, x_{t-1}ᵀ…x_{t-q}ᵀ, z_{t-1}…z_{t-d}]` into `out`.
pub fn fill_design_row(
    series: &MultivariateSeries,
    t: usize,
    p: usize,
    q: usize,
    d: usize,
    out: &mut [f64],
) {
    let k = series.k();
    let r = series.r();
    out[0] = 1.0;
    let mut at = 1;
    for lag in 1..=p {
        for i in 0..k {
            out[at] = series.y[(t - 1 - lag, i)];
            at += 1;
        }
    }
    for lag in 1..=q {
        for i in 0..r {
            out[at] = series.x[(t - 1 - lag, i)];
            at += 1;
        }
    }
    for lag in 1..=d {
        out[at] = series.z[t - 1 - lag];
        at += 1;
    }
}

pub fn build_design(
    series: &MultivariateSeries,
    time_points: &[usize],
    spec: &ModelSpec,
    j: usize,
) -> Result<RegimeData> {
    let start = effective_start(spec);
    let s = spec.s(j, series.k(), series.r());
    let mut design = DMatrix::zeros(time_points.len(), s);
    let mut response = DMatrix::zeros(time_points.len(), series.k());
    let mut row = vec![0.0; s];
    for (i, &t) in time_points.iter().enumerate() {
        if t < start || t > series.len() {
            return Err(MtarError::config(format!(
                "time point {t} outside the usable range {start}..={}",
                series.len()
            )));
        }
        fill_design_row(series, t, spec.p[j], spec.q[j], spec.d[j], &mut row);
        design.row_mut(i).copy_from_slice(&row);
        response.row_mut(i).copy_from(&series.y.row(t - 1));
    }
    Ok(RegimeData {
        design,
        response,
        time_points: time_points.to_vec(),
    })
}

/// Gaussian maximum likelihood fit of one regime.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub theta: DMatrix<f64>,
    pub sigma: SymMatrix,
    /// The normal equations were singular and a ridge term was added.
    pub ridge: bool,
    /// Σ̂ was singular and inflated by a small multiple of the identity.
    pub inflated: bool,
}

/// `θ̂ = (MᵀM)⁻¹MᵀY`, `Σ̂ = (Y−Mθ̂)ᵀ(Y−Mθ̂)/n`.
pub fn mle_init(reg: &RegimeData) -> Result<MleFit> {
    let m = &reg.design;
    let y = &reg.response;
    let n = m.nrows();
    let k = y.ncols();
    if n == 0 {
        return Err(MtarError::config(
            "cannot fit a regime without observations",
        ));
    }
    let mtm = m.transpose() * m;
    let mty = m.transpose() * y;
    let (theta, ridge) = match mtm
        .clone()
        .cholesky()
        .filter(|c| well_conditioned(c.l_dirty()))
    {
        Some(ch) => (ch.solve(&mty), false),
        None => {
            let s = mtm.nrows();
            let lambda = 1e-8 * (mtm.trace() / s as f64).max(1e-12);
            let ch = (mtm + DMatrix::identity(s, s) * lambda)
                .cholesky()
                .ok_or_else(|| MtarError::numerical("ridge-regularized normal equations failed"))?;
            (ch.solve(&mty), true)
        }
    };
    let resid = y - m * &theta;
    let mut sigma = (resid.transpose() * &resid) / n as f64;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let y_scale = y.iter().map(|v| v * v).sum::<f64>() / (n * k) as f64;
    let inflated = match sigma.clone().cholesky() {
        Some(ch) => !well_conditioned(ch.l_dirty()) || sigma.diagonal().min() <= 1e-10 * y_scale,
        None => true,
    };
    if inflated {
        let eps = (1e-6 * sigma.trace() / k as f64)
            .max(1e-8 * y_scale)
            .max(1e-12);
        sigma += DMatrix::identity(k, k) * eps;
    }
    Ok(MleFit {
        theta,
        sigma: SymMatrix::symmetrized(sigma),
        ridge,
        inflated,
    })
}

fn well_conditioned(l: &DMatrix<f64>) -> bool {
    let d = l.diagonal();
    let max = d.amax();
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > 1e-7 * max
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Residual vector `y_tᵀ − M_t θ` as a column.
pub fn residual(row: &[f64], y: &[f64], theta: &DMatrix<f64>) -> DVector<f64> {
    let k = theta.ncols();
    DVector::from_fn(k, |i, _| {
        let mut v = y[i];
        for (a, m) in row.iter().enumerate() {
            v -= m * theta[(a, i)];
        }
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(p: Vec<usize>, h_max: usize) -> ModelSpec {
        let l = p.len();
        ModelSpec {
            l,
            p,
            q: vec![0; l],
            d: vec![0; l],
            h_min: 0,
            h_max,
            family: NoiseFamily::Gaussian,
        }
    }

    #[test]
    fn effective_start_examples() {
        assert_eq!(effective_start(&spec2(vec![1, 2], 0)), 3);
        assert_eq!(effective_start(&spec2(vec![1], 3)), 4);
        assert_eq!(effective_start(&spec2(vec![5, 5, 5], 1)), 6);
    }

    #[test]
    fn regime_assignment_rule() {
        let series = MultivariateSeries::without_covariates(
            DMatrix::from_column_slice(4, 1, &[0.0; 4]),
            vec![-1.0, 2.0, 0.5, -0.3],
        )
        .unwrap();
        let spec = spec2(vec![1, 1], 1);
        let sets = assign_regimes(&series, &Thresholds::new(vec![0.0]).unwrap(), 1, &spec);
        assert_eq!(sets, vec![vec![2], vec![3, 4]]);
        let tie =
            MultivariateSeries::without_covariates(DMatrix::zeros(4, 1), vec![0.0; 4]).unwrap();
        let sets = assign_regimes(&tie, &Thresholds::new(vec![0.0]).unwrap(), 1, &spec);
        assert_eq!(sets[1].len(), 0);
    }

    #[test]
    fn design_rows() {
        let series = MultivariateSeries::without_covariates(
            DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            vec![0.0; 3],
        )
        .unwrap();
        let spec = spec2(vec![1], 0);
        let reg = build_design(&series, &[3], &spec, 0).unwrap();
        assert_eq!(
            reg.design.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 2.0]
        );
        assert_eq!(reg.response[(0, 0)], 3.0);
        assert!(build_design(&series, &[1], &spec, 0).is_err());
    }

    #[test]
    fn exact_fit_inflates_sigma() {
        let m = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let theta = DMatrix::from_row_slice(2, 1, &[0.5, 2.0]);
        let reg = RegimeData {
            response: &m * &theta,
            design: m,
            time_points: (1..=20).collect(),
        };
        let fit = mle_init(&reg).unwrap();
        assert!((fit.theta[(1, 0)] - 2.0).abs() < 1e-10);
        assert!(fit.inflated);
        assert!(fit.sigma.is_positive_definite());
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
