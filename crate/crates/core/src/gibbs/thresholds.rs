//! Metropolis–Hastings update of the threshold vector through a Dirichlet
//! proposal on the gap fractions of `(z₀, c₁, …, c_{l−1}, z₁)`.

use rand::Rng;

use crate::error::Result;
use crate::stats::sampling::{log_dirichlet_density, open_unit, sample_dirichlet};

const MIN_FRACTION: f64 = 1e-12;

/// `((c₁−z₀), (c₂−c₁), …, (z₁−c_{l−1})) / (z₁−z₀)`, floored away from zero
/// and renormalized.
pub fn gap_fractions(c: &[f64], z0: f64, z1: f64) -> Vec<f64> {
    let width = z1 - z0;
    let mut out = Vec::with_capacity(c.len() + 1);
    let mut prev = z0;
    for &v in c.iter().chain(std::iter::once(&z1)) {
        out.push(((v - prev) / width).max(MIN_FRACTION));
        prev = v;
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Thresholds from gap fractions: `c = z₀ + cumsum(r)[..l−1] (z₁ − z₀)`.
pub fn thresholds_from_fractions(r: &[f64], z0: f64, z1: f64) -> Vec<f64> {
    let mut acc = 0.0;
    r[..r.len() - 1]
        .iter()
        .map(|v| {
            acc += v;
            z0 + acc * (z1 - z0)
        })
        .collect()
}

/// Draws a proposal and returns it with `log q(c | c') − log q(c' | c)`.
pub fn propose_thresholds<R: Rng + ?Sized>(
    c: &[f64],
    z0: f64,
    z1: f64,
    zeta: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let kappa = gap_fractions(c, z0, z1);
    let alpha: Vec<f64> = kappa.iter().map(|v| zeta * v).collect();
    let r = sample_dirichlet(&alpha, rng)?;
    let proposal = thresholds_from_fractions(&r, z0, z1);
    let kappa_new = gap_fractions(&proposal, z0, z1);
    let alpha_new: Vec<f64> = kappa_new.iter().map(|v| zeta * v).collect();
    let correction =
        log_dirichlet_density(&kappa, &alpha_new) - log_dirichlet_density(&kappa_new, &alpha);
    Ok((proposal, correction))
}

/// One MH step. `log_target` returns `None` for proposals to reject outright
/// (for example under-populated regimes). Returns the new thresholds, the
/// new target value and whether the proposal was accepted.
pub fn threshold_mh_step<R, F>(
    c: &[f64],
    current_log_target: f64,
    z0: f64,
    z1: f64,
    zeta: f64,
    mut log_target: F,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, bool)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Option<f64>,
{
    let (proposal, correction) = propose_thresholds(c, z0, z1, zeta, rng)?;
    let u = open_unit(rng);
    let ordered = proposal.windows(2).all(|w| w[0] < w[1])
        && proposal.first().is_none_or(|&v| v > z0)
        && proposal.last().is_none_or(|&v| v < z1);
    if !ordered {
        return Ok((c.to_vec(), current_log_target, false));
    }
    match log_target(&proposal) {
        Some(new_target) if u.ln() < new_target - current_log_target + correction => {
            Ok((proposal, new_target, true))
        }
        _ => Ok((c.to_vec(), current_log_target, false)),
    }
}
