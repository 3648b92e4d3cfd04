use nalgebra::DMatrix;
use rand::Rng;

use super::priors::{ExtraPrior, Priors};
use super::state::{ChainControl, ChainState, PosteriorDraws};
use super::thresholds::threshold_mh_step;
use crate::error::{MtarError, Result};
use crate::model::{
    effective_start, fill_design_row, mle_init, quantile, ModelSpec, MultivariateSeries,
    RegimeData, Thresholds,
};
use crate::rng::{stream, ESTIMATION};
use crate::stats::family::kappa;
use crate::stats::sampling::{
    sample_beta, sample_gamma, sample_gig, sample_inverse_wishart_factor, sample_log_categorical,
    sample_truncated_gamma, standard_normal,
};
use crate::stats::special::{ln_gamma, log_bessel_k};
use crate::stats::{ExtraParam, NoiseFamily, SymMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Discretized uniform prior for ν: `log π̃(ν_i) = n·a_i + b_i·S`, where `S` is
/// the sufficient statistic of the latent scales.
#[derive(Debug, Clone)]
struct NuGrid {
    nodes: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl NuGrid {
    fn new(family: NoiseFamily, lower: f64, upper: f64, m: usize) -> Result<Self> {
        let nodes: Vec<f64> = (0..=m)
            .map(|i| lower + (upper - lower) * i as f64 / m as f64)
            .collect();
        let mut a = Vec::with_capacity(m + 1);
        let mut b = Vec::with_capacity(m + 1);
        for &nu in &nodes {
            match family {
                NoiseFamily::StudentT => {
                    let h = 0.5 * nu;
                    a.push(h * h.ln() - ln_gamma(h));
                    b.push(h);
                }
                _ => {
                    a.push(nu.ln() - log_bessel_k(1.0, nu)?);
                    b.push(-0.5 * nu * nu);
                }
            }
        }
        Ok(NuGrid { nodes, a, b })
    }

    /// Picks a trapezoid with probability proportional to its area and
    /// returns its midpoint.
    fn sample<R: Rng + ?Sized>(&self, n: f64, stat: f64, rng: &mut R) -> Result<f64> {
        let log_pi: Vec<f64> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| n * a + b * stat)
            .collect();
        let areas: Vec<f64> = log_pi
            .windows(2)
            .map(|w| crate::stats::log_add_exp(w[0], w[1]))
            .collect();
        let i = sample_log_categorical(&areas, rng)?;
        Ok(0.5 * (self.nodes[i] + self.nodes[i + 1]))
    }
}

/// Gibbs sampler over a fixed data set and model structure. Caches every
/// regime's design rows for all eligible time points, the quadratic forms
/// `q[t, j]` and the conditional log densities `ℓ[t, j]`.
pub struct GibbsSampler<'a> {
    spec: &'a ModelSpec,
    priors: &'a Priors,
    zeta: f64,
    k: usize,
    start: usize,
    n: usize,
    designs: Vec<DMatrix<f64>>,
    y: DMatrix<f64>,
    zlag: Vec<Vec<f64>>,
    delta0_inv: Vec<DMatrix<f64>>,
    delta0_inv_mu0: Vec<DMatrix<f64>>,
    n_min: Vec<usize>,
    grid: Option<NuGrid>,
    assign: Vec<usize>,
    q: DMatrix<f64>,
    log_det: Vec<f64>,
    sigma_factor: Vec<DMatrix<f64>>,
    ell: DMatrix<f64>,
    accepted: usize,
    proposed: usize,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(
        series: &'a MultivariateSeries,
        spec: &'a ModelSpec,
        priors: &'a Priors,
        zeta: f64,
    ) -> Result<Self> {
        let k = series.k();
        let r = series.r();
        spec.validate(k, r)?;
        priors.validate(spec, k, r)?;
        let start = effective_start(spec);
        if series.len() < start {
            return Err(MtarError::config(format!(
                "series of length {} is shorter than the first usable time point {start}",
                series.len()
            )));
        }
        let n = series.len() + 1 - start;
        let times: Vec<usize> = (start..=series.len()).collect();
        let mut designs = Vec::with_capacity(spec.l);
        for j in 0..spec.l {
            let s = spec.s(j, k, r);
            let mut m = DMatrix::zeros(n, s);
            let mut row = vec![0.0; s];
            for (i, &t) in times.iter().enumerate() {
                fill_design_row(series, t, spec.p[j], spec.q[j], spec.d[j], &mut row);
                m.row_mut(i).copy_from_slice(&row);
            }
            designs.push(m);
        }
        let y = series.y().rows(start - 1, n).into_owned();
        let zlag = spec
            .h_candidates()
            .map(|h| times.iter().map(|&t| series.z_at(t - h)).collect())
            .collect();
        let mut delta0_inv = Vec::new();
        let mut delta0_inv_mu0 = Vec::new();
        for p in &priors.regimes {
            let inv = p.delta0.inverse()?.into_inner();
            delta0_inv_mu0.push(&inv * &p.mu0);
            delta0_inv.push(inv);
        }
        let grid = match priors.extra {
            ExtraPrior::Uniform { lower, upper } => {
                Some(NuGrid::new(spec.family, lower, upper, priors.grid_size)?)
            }
            _ => None,
        };
        Ok(GibbsSampler {
            spec,
            priors,
            zeta,
            k,
            start,
            n,
            designs,
            y,
            zlag,
            delta0_inv,
            delta0_inv_mu0,
            n_min: (0..spec.l).map(|j| spec.n_min(j, k, r)).collect(),
            grid,
            assign: vec![0; n],
            q: DMatrix::zeros(n, spec.l),
            log_det: vec![0.0; spec.l],
            sigma_factor: vec![DMatrix::zeros(0, 0); spec.l],
            ell: DMatrix::zeros(n, spec.l),
            accepted: 0,
            proposed: 0,
        })
    }

    /// Number of eligible time points.
    pub fn eligible(&self) -> usize {
        self.n
    }

    /// First eligible (1-based) time point.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Current regime (0-based) of each eligible time point.
    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn zlag(&self, h: usize) -> &[f64] {
        &self.zlag[h - self.spec.h_min]
    }

    fn assignment_for(&self, c: &[f64], h: usize) -> Vec<usize> {
        let l = self.spec.l;
        self.zlag(h)
            .iter()
            .map(|&z| c.iter().take_while(|&&v| v < z).count().min(l - 1))
            .collect()
    }

    fn counts(&self, assign: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.spec.l];
        for &j in assign {
            counts[j] += 1;
        }
        counts
    }

    fn populated(&self, assign: &[usize]) -> bool {
        self.counts(assign)
            .iter()
            .zip(&self.n_min)
            .all(|(n, m)| n >= m)
    }

    fn regime_data(&self, assign: &[usize], j: usize) -> RegimeData {
        let rows: Vec<usize> = (0..self.n).filter(|&i| assign[i] == j).collect();
        RegimeData {
            design: self.designs[j].select_rows(&rows),
            response: self.y.select_rows(&rows),
            time_points: rows.iter().map(|i| i + self.start).collect(),
        }
    }

    /// Step 0: thresholds at the empirical quantiles `j/l` of `Z_{t−h}`,
    /// the delay with the best Gaussian profile likelihood among the
    /// candidates, Gaussian MLE for θ and Σ, a near-Gaussian ν and u ≡ 1.
    pub fn init_state<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> Result<ChainState> {
        let l = self.spec.l;
        let mut best: Option<(f64, usize, Vec<f64>, Vec<usize>)> = None;
        let mut failure = String::new();
        for h in self.spec.h_candidates() {
            let mut sorted = self.zlag(h).to_vec();
            sorted.sort_by(f64::total_cmp);
            let c: Vec<f64> = (1..l)
                .map(|j| quantile(&sorted, j as f64 / l as f64))
                .collect();
            if c.windows(2).any(|w| !(w[0] < w[1])) {
                failure = format!("tied initial thresholds {c:?} at delay {h}");
                continue;
            }
            let assign = self.assignment_for(&c, h);
            let counts = self.counts(&assign);
            if let Some(j) = (0..l).find(|&j| counts[j] < self.n_min[j]) {
                failure = format!(
                    "regime {} holds {} points at delay {h}, fewer than the required {}",
                    j + 1,
                    counts[j],
                    self.n_min[j]
                );
                continue;
            }
            let mut profile = 0.0;
            for j in 0..l {
                let fit = mle_init(&self.regime_data(&assign, j))?;
                profile -= 0.5 * counts[j] as f64 * fit.sigma.log_det()?;
            }
            if best.as_ref().is_none_or(|b| profile > b.0) {
                best = Some((profile, h, c, assign));
            }
        }
        let (_, h, c, assign) = best
            .ok_or_else(|| MtarError::config(format!("cannot initialize the chain: {failure}")))?;
        let mut theta = Vec::with_capacity(l);
        let mut sigma = Vec::with_capacity(l);
        for j in 0..l {
            let fit = mle_init(&self.regime_data(&assign, j))?;
            theta.push(fit.theta);
            sigma.push(fit.sigma);
        }
        let extra = self.initial_extra();
        self.assign = assign;
        let state = ChainState {
            theta,
            sigma,
            c: Thresholds::new(c)?,
            h,
            extra,
            u: vec![1.0; self.n],
        };
        self.refresh_quadforms(&state)?;
        self.refresh_loglik(&state);
        Ok(state)
    }

    fn initial_extra(&self) -> ExtraParam {
        let clamp = |v: f64| match self.priors.extra {
            ExtraPrior::Uniform { lower, upper } => {
                let step = (upper - lower) / self.priors.grid_size as f64;
                v.clamp(lower + 0.5 * step, upper - 0.5 * step)
            }
            _ => v,
        };
        match self.spec.family {
            NoiseFamily::Gaussian | NoiseFamily::Laplace => ExtraParam::none(),
            NoiseFamily::StudentT | NoiseFamily::Slash => ExtraParam::scalar(clamp(100.0)),
            NoiseFamily::ContaminatedNormal => ExtraParam::pair(0.01, 0.99),
            NoiseFamily::SymmetricHyperbolic => ExtraParam::scalar(clamp(1.85)),
        }
    }

    /// Recomputes `q[t, j]` and `log|Σⱼ|` for every eligible t and regime.
    fn refresh_quadforms(&mut self, state: &ChainState) -> Result<()> {
        for j in 0..self.spec.l {
            let l = state.sigma[j].lower_factor().map_err(|_| {
                MtarError::numerical(format!("Σ of regime {} lost positive definiteness", j + 1))
            })?;
            let resid = (&self.y - &self.designs[j] * &state.theta[j]).transpose();
            let w = l
                .solve_lower_triangular(&resid)
                .ok_or_else(|| MtarError::numerical("triangular solve failed"))?;
            for i in 0..self.n {
                self.q[(i, j)] = w.column(i).norm_squared();
            }
            self.log_det[j] = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            self.sigma_factor[j] = l;
        }
        Ok(())
    }

    /// Recomputes `ℓ[t, j] = log N(y_t | M_t θⱼ, κ(u_t) Σⱼ)`.
    fn refresh_loglik(&mut self, state: &ChainState) {
        let k = self.k as f64;
        let family = self.spec.family;
        for i in 0..self.n {
            let kap = kappa(family, state.u[i]);
            let ln_kap = kap.ln();
            for j in 0..self.spec.l {
                self.ell[(i, j)] = -0.5 * k * LN_2PI
                    - 0.5 * self.log_det[j]
                    - 0.5 * k * ln_kap
                    - 0.5 * self.q[(i, j)] / kap;
            }
        }
    }

    fn log_target(&self, assign: &[usize]) -> f64 {
        assign
            .iter()
            .enumerate()
            .map(|(i, &j)| self.ell[(i, j)])
            .sum()
    }

    /// Step 1: latent scales from their full conditionals.
    pub fn sample_latent_u<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<()> {
        let k = self.k as f64;
        let family = self.spec.family;
        for i in 0..self.n {
            let q = self.q[(i, self.assign[i])];
            state.u[i] = match family {
                NoiseFamily::Gaussian => 1.0,
                // Gamma((ν+k)/2, (ν+q)/2), shape–rate
                NoiseFamily::StudentT => {
                    let nu = state.extra.nu();
                    sample_gamma(0.5 * (nu + k), 0.5 * (nu + q), rng)?
                }
                // TGamma((ν+k)/2, q/2; (0,1)), shape–rate
                NoiseFamily::Slash => {
                    sample_truncated_gamma(0.5 * (state.extra.nu() + k), 0.5 * q, 0.0, 1.0, rng)?
                }
                NoiseFamily::ContaminatedNormal => {
                    let (nu1, nu2) = (state.extra.values[0], state.extra.values[1]);
                    let a = nu1.ln() + 0.5 * k * nu2.ln() - 0.5 * nu2 * q;
                    let b = (1.0 - nu1).ln() - 0.5 * q;
                    let p = 1.0 / (1.0 + (b - a).exp());
                    if rng.random::<f64>() < p {
                        nu2
                    } else {
                        1.0
                    }
                }
                NoiseFamily::SymmetricHyperbolic => {
                    let nu = state.extra.nu();
                    sample_gig(1.0 - 0.5 * k, 1.0 + q, nu * nu, rng)?
                }
                NoiseFamily::Laplace => sample_gig(1.0 - 0.5 * k, q.max(1e-12), 0.25, rng)?,
            };
        }
        Ok(())
    }

    /// Weighted design and response of regime j: rows scaled by `κ(u_t)^{-1/2}`.
    fn weighted(&self, state: &ChainState, j: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows: Vec<usize> = (0..self.n).filter(|&i| self.assign[i] == j).collect();
        let mut m = self.designs[j].select_rows(&rows);
        let mut y = self.y.select_rows(&rows);
        if self.spec.family != NoiseFamily::Gaussian {
            for (a, &i) in rows.iter().enumerate() {
                let w = kappa(self.spec.family, state.u[i]).recip().sqrt();
                m.row_mut(a).scale_mut(w);
                y.row_mut(a).scale_mut(w);
            }
        }
        (m, y)
    }

    /// Step 2: θⱼ ~ MN(μⱼ, Δⱼ, Σⱼ).
    pub fn sample_theta<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<()> {
        for j in 0..self.spec.l {
            let (m, y) = self.weighted(state, j);
            let a = m.tr_mul(&m) + &self.delta0_inv[j];
            let b = m.tr_mul(&y) + &self.delta0_inv_mu0[j];
            let chol = a.cholesky().ok_or_else(|| {
                MtarError::numerical(format!(
                    "posterior precision of θ in regime {} is singular",
                    j + 1
                ))
            })?;
            let mean = chol.solve(&b);
            let z = DMatrix::from_fn(mean.nrows(), mean.ncols(), |_, _| standard_normal(rng));
            // L_A⁻ᵀ Z has row covariance A⁻¹
            let left = chol
                .l_dirty()
                .tr_solve_lower_triangular(&z)
                .ok_or_else(|| MtarError::numerical("triangular solve failed"))?;
            state.theta[j] = mean + left * self.sigma_factor[j].transpose();
        }
        Ok(())
    }

    /// Step 3: Σⱼ ~ IW(Ωⱼ, τ₀ⱼ + nⱼ + sⱼ).
    pub fn sample_sigma<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<()> {
        let counts = self.counts(&self.assign);
        for j in 0..self.spec.l {
            let prior = &self.priors.regimes[j];
            let (m, y) = self.weighted(state, j);
            let resid = y - m * &state.theta[j];
            let dev = &state.theta[j] - &prior.mu0;
            let omega = prior.omega0.matrix()
                + resid.tr_mul(&resid)
                + dev.transpose() * &self.delta0_inv[j] * &dev;
            let omega = SymMatrix::symmetrized(omega);
            let factor = omega.lower_factor().map_err(|_| {
                MtarError::numerical(format!(
                    "inverse-Wishart scale of regime {} is not positive definite",
                    j + 1
                ))
            })?;
            let tau = prior.tau0 + counts[j] as f64 + state.theta[j].nrows() as f64;
            state.sigma[j] = sample_inverse_wishart_factor(&factor, tau, rng)?;
        }
        self.refresh_quadforms(state)
    }

    /// Step 4: the extra parameter.
    pub fn sample_extra<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<()> {
        let n = self.n as f64;
        let k = self.k as f64;
        match (&self.priors.extra, self.spec.family) {
            (ExtraPrior::Uniform { .. }, NoiseFamily::StudentT) => {
                let stat: f64 = state.u.iter().map(|u| u.ln() - u).sum();
                let grid = self.grid.as_ref().expect("grid for uniform prior");
                state.extra = ExtraParam::scalar(grid.sample(n, stat, rng)?);
            }
            (ExtraPrior::Uniform { .. }, NoiseFamily::SymmetricHyperbolic) => {
                let stat: f64 = state.u.iter().sum();
                let grid = self.grid.as_ref().expect("grid for uniform prior");
                state.extra = ExtraParam::scalar(grid.sample(n, stat, rng)?);
            }
            (ExtraPrior::Gamma { shape, rate }, NoiseFamily::Slash) => {
                let sum_log: f64 = state.u.iter().map(|u| u.ln()).sum();
                // Gamma(γ₀ + n, η₀ − ½ Σ log u), shape–rate
                state.extra =
                    ExtraParam::scalar(sample_gamma(shape + n, rate - 0.5 * sum_log, rng)?);
            }
            (
                &ExtraPrior::Contaminated {
                    gamma01,
                    eta01,
                    gamma02,
                    eta02,
                },
                NoiseFamily::ContaminatedNormal,
            ) => {
                let mut contaminated = 0usize;
                let mut q_sum = 0.0;
                for i in 0..self.n {
                    if state.u[i] != 1.0 {
                        contaminated += 1;
                        q_sum += self.q[(i, self.assign[i])];
                    }
                }
                let clean = self.n - contaminated;
                let nu1 = sample_beta(gamma01 + contaminated as f64, eta01 + clean as f64, rng)?;
                // TGamma(γ₀₂ + (k/2)·#cont, η₀₂ + ½ Σ_cont q; (0,1)), shape–rate
                let nu2 = sample_truncated_gamma(
                    gamma02 + 0.5 * k * contaminated as f64,
                    eta02 + 0.5 * q_sum,
                    0.0,
                    1.0,
                    rng,
                )?;
                let nu1 = nu1.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                let nu2 = nu2.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                for u in state.u.iter_mut() {
                    if *u != 1.0 {
                        *u = nu2;
                    }
                }
                state.extra = ExtraParam::pair(nu1, nu2);
            }
            _ => {}
        }
        self.refresh_loglik(state);
        Ok(())
    }

    /// Step 5: Metropolis–Hastings move of the thresholds. Returns whether
    /// the proposal was accepted.
    pub fn sample_thresholds<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<bool> {
        if self.spec.l < 2 {
            return Ok(false);
        }
        let zl = self.zlag(state.h);
        let z0 = zl.iter().copied().fold(f64::INFINITY, f64::min);
        let z1 = zl.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let current = self.log_target(&self.assign);
        let mut proposal_assign = Vec::new();
        let (c, _, accepted) = threshold_mh_step(
            state.c.values(),
            current,
            z0,
            z1,
            self.zeta,
            |c| {
                let assign = self.assignment_for(c, state.h);
                if !self.populated(&assign) {
                    return None;
                }
                let target = self.log_target(&assign);
                proposal_assign = assign;
                Some(target)
            },
            rng,
        )?;
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
            state.c = Thresholds::new(c)?;
            self.assign = proposal_assign;
        }
        Ok(accepted)
    }

    /// Step 6: the delay from its discrete full conditional.
    pub fn sample_delay<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<()> {
        if self.spec.h_min == self.spec.h_max {
            return Ok(());
        }
        let mut assigns = Vec::new();
        let mut weights = Vec::new();
        for h in self.spec.h_candidates() {
            let assign = self.assignment_for(state.c.values(), h);
            weights.push(if self.populated(&assign) {
                self.log_target(&assign)
            } else {
                f64::NEG_INFINITY
            });
            assigns.push(assign);
        }
        let pick = sample_log_categorical(&weights, rng)?;
        state.h = self.spec.h_min + pick;
        self.assign = assigns.swap_remove(pick);
        Ok(())
    }

    /// One full sweep in the order u, θ, Σ, ν, c, h.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        self.sample_latent_u(state, rng)?;
        self.sample_theta(state, rng)?;
        self.sample_sigma(state, rng)?;
        self.sample_extra(state, rng)?;
        self.sample_thresholds(state, rng)?;
        self.sample_delay(state, rng)
    }
}

/// Runs the sampler and keeps every `thinning`-th state after burn-in.
pub fn run_chain(
    series: &MultivariateSeries,
    spec: &ModelSpec,
    priors: &Priors,
    control: &ChainControl,
) -> Result<PosteriorDraws> {
    control.validate()?;
    let mut rng = stream(control.seed, ESTIMATION, 0);
    let mut sampler = GibbsSampler::new(series, spec, priors, control.zeta)?;
    let mut state = sampler.init_state(&mut rng)?;
    let mut draws = Vec::with_capacity(control.stored());
    for it in 0..control.iterations {
        sampler.sweep(&mut state, &mut rng)?;
        if it >= control.burn_in && (it - control.burn_in) % control.thinning == 0 {
            draws.push(state.to_draw());
        }
    }
    Ok(PosteriorDraws {
        draws,
        spec: spec.clone(),
        priors: priors.clone(),
        control: control.clone(),
        k: series.k(),
        r: series.r(),
        acceptance_rate: sampler.acceptance_rate(),
    })
}
