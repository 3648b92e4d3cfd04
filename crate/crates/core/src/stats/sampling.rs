//! Random variate generators. Gamma laws use the shape–rate
//! parameterization (density ∝ u^(shape-1) e^(-rate·u)) throughout.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};

use super::matrix::SymMatrix;
use super::special::{ln_gamma, ln_regularized_gamma};
use crate::error::{MtarError, Result};

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MtarError::domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Draw from Gamma(shape, rate), mean `shape / rate`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| MtarError::domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// `log X` for `X ~ Gamma(shape, 1)`, without underflow for tiny shapes.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    if shape >= 1.0 {
        Ok(sample_gamma(shape, 1.0, rng)?.ln())
    } else {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let g = sample_gamma(shape + 1.0, 1.0, rng)?;
        Ok(g.ln() + open_unit(rng).ln() / shape)
    }
}

/// Draw from Gamma(shape, rate) restricted to `(lo, hi]`, by inversion of the
/// regularized incomplete gamma function. `rate = 0` with finite `hi` gives
/// the power law with density ∝ u^(shape-1).
pub fn sample_truncated_gamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    positive("truncated gamma shape", shape)?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(MtarError::domain(format!(
            "truncated gamma rate must be nonnegative, got {rate}"
        )));
    }
    if !(lo >= 0.0) || !(hi > lo) {
        return Err(MtarError::domain(format!(
            "truncated gamma support ({lo}, {hi}) is empty or negative"
        )));
    }
    let u = open_unit(rng);
    if rate == 0.0 {
        if !hi.is_finite() {
            return Err(MtarError::domain(
                "truncated gamma with zero rate needs a bounded support",
            ));
        }
        if lo == 0.0 {
            return Ok(hi * (u.ln() / shape).exp());
        }
        let rho = (shape * (lo.ln() - hi.ln())).exp();
        return Ok(hi * ((rho + u * (1.0 - rho)).ln() / shape).exp());
    }

    let ylo = rate * lo;
    let yhi = rate * hi;
    let (lp_lo, lq_lo) = ln_regularized_gamma(shape, ylo)?;
    let (lp_hi, lq_hi) = ln_regularized_gamma(shape, yhi)?;

    let y = if yhi <= shape {
        // lower tail: work with log P
        let rho = (lp_lo - lp_hi).exp();
        let target = lp_hi + (rho + u * (1.0 - rho)).ln();
        invert_log_gamma_cdf(shape, ylo, yhi, target, Tail::Lower)
    } else if ylo >= shape {
        // upper tail: work with log Q
        let sigma = (lq_hi - lq_lo).exp();
        let target = lq_lo + (1.0 - u * (1.0 - sigma)).ln();
        invert_log_gamma_cdf(shape, ylo, yhi, target, Tail::Upper)
    } else {
        let p_lo = lp_lo.exp();
        let mass = lp_hi.exp() - p_lo;
        let p = p_lo + u * mass;
        if p <= 0.5 {
            invert_log_gamma_cdf(shape, ylo, yhi, p.ln(), Tail::Lower)
        } else {
            let q = lq_lo.exp() - u * mass;
            invert_log_gamma_cdf(shape, ylo, yhi, q.ln(), Tail::Upper)
        }
    };
    let draw = y / rate;
    if !draw.is_finite() {
        return Err(MtarError::numerical("truncated gamma inversion diverged"));
    }
    Ok(draw.clamp(lo, hi))
}

#[derive(Clone, Copy)]
enum Tail {
    Lower,
    Upper,
}

/// Solves `log P(a, y) = target` (or `log Q`) for `y ∈ [ylo, yhi]` by Newton
/// steps in `log y`, falling back to bisection whenever a step leaves the bracket.
fn invert_log_gamma_cdf(a: f64, ylo: f64, yhi: f64, target: f64, tail: Tail) -> f64 {
    let lga = ln_gamma(a);
    let mut w_lo = ylo.ln();
    let mut w_hi = yhi.ln();
    let mut w = match tail {
        Tail::Lower => (target + ln_gamma(a + 1.0)) / a,
        Tail::Upper => ylo.max(a).ln(),
    };
    if !(w > w_lo) || !(w < w_hi) {
        w = if w_lo.is_finite() && w_hi.is_finite() {
            0.5 * (w_lo + w_hi)
        } else if w_hi.is_finite() {
            w_hi - 1.0
        } else {
            w_lo + 1.0
        };
    }
    for _ in 0..300 {
        let y = w.exp();
        let (lp, lq) = match ln_regularized_gamma(a, y) {
            Ok(v) => v,
            Err(_) => break,
        };
        let ln_density = (a - 1.0) * w - y - lga;
        // g is increasing in w in both tails after the sign flip
        let (g, dg) = match tail {
            Tail::Lower => (lp - target, (ln_density + w - lp).exp()),
            Tail::Upper => (target - lq, (ln_density + w - lq).exp()),
        };
        if g == 0.0 {
            return y;
        }
        if g > 0.0 {
            w_hi = w;
        } else {
            w_lo = w;
        }
        let mut next = w - g / dg;
        if !next.is_finite() || next <= w_lo || next >= w_hi {
            next = if w_lo.is_finite() && w_hi.is_finite() {
                0.5 * (w_lo + w_hi)
            } else if w_hi.is_finite() {
                w - 2.0
            } else {
                w + 1.0
            };
        }
        if (next - w).abs() <= 1e-13 * w.abs().max(1.0) {
            return next.exp();
        }
        w = next;
    }
    w.exp()
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Draw from GIG(lambda, chi, psi), density ∝ u^(lambda-1) exp(-(chi/u + psi·u)/2).
///
/// Ratio-of-uniforms (with or without mode shift) and the hat-function
/// method of Hörmann & Leydold for the standardized two-parameter form,
/// after reducing to `lambda >= 0` through `1/GIG(λ,χ,ψ) ~ GIG(-λ,ψ,χ)`.
pub fn sample_gig<R: Rng + ?Sized>(lambda: f64, chi: f64, psi: f64, rng: &mut R) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(MtarError::domain(format!(
            "GIG lambda must be finite, got {lambda}"
        )));
    }
    positive("GIG chi", chi)?;
    positive("GIG psi", psi)?;
    let flip = lambda < 0.0;
    let lam = lambda.abs();
    let omega = (chi * psi).sqrt();
    let alpha = (chi / psi).sqrt();

    let x = if omega < 1e-12 {
        // degenerate limits: Gamma when lambda > 0
        if lam > 0.0 {
            // standardized variable ~ Gamma(lam, omega/2) when omega -> 0
            let g = sample_gamma(lam, 0.5 * omega, rng)?;
            return Ok(if flip { alpha / g } else { alpha * g });
        }
        return Err(MtarError::domain(
            "GIG with lambda = 0 and vanishing chi*psi is improper",
        ));
    } else if lam > 2.0 || omega > 3.0 {
        gig_rou_shift(lam, omega, rng)
    } else if lam >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        gig_rou_noshift(lam, omega, rng)
    } else {
        gig_concave_hat(lam, omega, rng)
    };
    Ok(if flip { alpha / x } else { alpha * x })
}

fn gig_rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = open_unit(rng);
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn gig_rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // roots of the cubic y^3 + a y^2 + b y + c via Cardano
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt()))
        .clamp(-1.0, 1.0)
        .acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;

    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = open_unit(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Hat-function method for `0 <= lambda < 1` and small `omega`.
fn gig_concave_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        let u = rng.random::<f64>() * hx;
        if x > 0.0 && u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Draw from Beta(a, b) as a two-component Dirichlet.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    Ok(sample_dirichlet(&[a, b], rng)?[0])
}

/// Index drawn with probabilities proportional to `exp(log_weights)`;
/// `-inf` entries are never chosen.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(MtarError::numerical("all categorical weights vanish"));
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last = i;
            if target < p {
                return Ok(i);
            }
            target -= p;
        }
    }
    Ok(last)
}

/// Draw from Dirichlet(alphas); components are formed in log space so tiny
/// concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.len() < 2 {
        return Err(MtarError::domain("Dirichlet needs at least two components"));
    }
    let mut logs = Vec::with_capacity(alphas.len());
    for &a in alphas {
        positive("Dirichlet concentration", a)?;
        logs.push(sample_log_gamma(a, rng)?);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Log density of Dirichlet(alphas) at the probability vector `x`.
pub fn log_dirichlet_density(x: &[f64], alphas: &[f64]) -> f64 {
    let total: f64 = alphas.iter().sum();
    let mut v = ln_gamma(total);
    for (&xi, &a) in x.iter().zip(alphas) {
        if !(xi > 0.0) {
            return f64::NEG_INFINITY;
        }
        v += (a - 1.0) * xi.ln() - ln_gamma(a);
    }
    v
}

/// Draw from the inverse Wishart law W⁻¹(scale, dof), whose mean is
/// `scale / (dof - k - 1)` when `dof > k + 1`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    scale: &SymMatrix,
    dof: f64,
    rng: &mut R,
) -> Result<SymMatrix> {
    let k = scale.dim();
    if !(dof > k as f64 - 1.0) {
        return Err(MtarError::domain(format!(
            "inverse Wishart needs dof > k - 1 = {}, got {dof}",
            k - 1
        )));
    }
    let l = scale.lower_factor()?;
    sample_inverse_wishart_factor(&l, dof, rng)
}

/// Same as [`sample_inverse_wishart`] given the lower Cholesky factor of the scale.
pub fn sample_inverse_wishart_factor<R: Rng + ?Sized>(
    scale_factor: &DMatrix<f64>,
    dof: f64,
    rng: &mut R,
) -> Result<SymMatrix> {
    let k = scale_factor.nrows();
    // Bartlett factor B of a Wishart(I, dof) draw, W = B Bᵀ
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi2 = 2.0 * sample_gamma(0.5 * (dof - i as f64), 1.0, rng)?;
        b[(i, i)] = chi2.sqrt();
        for j in 0..i {
            b[(i, j)] = standard_normal(rng);
        }
    }
    // Σ = (L B⁻ᵀ)(L B⁻ᵀ)ᵀ inverts the Wishart draw L⁻ᵀ B Bᵀ L⁻¹ for the precision
    let b_inv = b
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| MtarError::numerical("singular Bartlett factor"))?;
    let c = scale_factor * b_inv.transpose();
    Ok(SymMatrix::symmetrized(&c * c.transpose()))
}

/// Draw from the matrix normal MN(mean, row_cov, col_cov): `vec(X)` has
/// covariance `col_cov ⊗ row_cov`.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    row_cov: &SymMatrix,
    col_cov: &SymMatrix,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if row_cov.dim() != mean.nrows() || col_cov.dim() != mean.ncols() {
        return Err(MtarError::domain(
            "matrix normal covariance dimensions do not match the mean",
        ));
    }
    let lr = row_cov.lower_factor()?;
    let lc = col_cov.lower_factor()?;
    Ok(sample_matrix_normal_factors(mean, &lr, &lc, rng))
}

/// Matrix normal draw `mean + A Z Bᵀ` from arbitrary square-root factors.
pub fn sample_matrix_normal_factors<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    row_factor: &DMatrix<f64>,
    col_factor: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let z = DMatrix::from_fn(mean.nrows(), mean.ncols(), |_, _| standard_normal(rng));
    mean + row_factor * z * col_factor.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ChainRng;
    use rand::SeedableRng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_moments() {
        let mut rng = ChainRng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(1.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.02);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(3.0, 3.0, &mut rng).unwrap())
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 1.0).abs() < 0.01);
        assert!((v - 1.0 / 3.0).abs() < 0.01);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_gamma(1.0, -2.0, &mut rng).is_err());
    }

    #[test]
    fn truncated_gamma_power_law_cases() {
        let mut rng = ChainRng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_truncated_gamma(1.0, 0.0, 0.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 0.5).abs() < 0.005);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_truncated_gamma(2.0, 0.0, 0.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 2.0 / 3.0).abs() < 0.005);
        assert!(sample_truncated_gamma(1.0, 1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_gamma(0.0, 1.0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn truncated_gamma_stays_in_support_for_extreme_parameters() {
        let mut rng = ChainRng::seed_from_u64(3);
        for &(a, b) in &[
            (51.5, 0.3),
            (0.6, 400.0),
            (80.0, 900.0),
            (2.0, 1e-9),
            (300.0, 1.0),
        ] {
            for _ in 0..200 {
                let x = sample_truncated_gamma(a, b, 0.0, 1.0, &mut rng).unwrap();
                assert!(x > 0.0 && x <= 1.0, "a={a} b={b} x={x}");
            }
        }
    }

    #[test]
    fn gig_symmetric_case_has_unit_mean() {
        let mut rng = ChainRng::seed_from_u64(4);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_gig(-0.5, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.02);
        assert!(sample_gig(1.0, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dirichlet_moments() {
        let mut rng = ChainRng::seed_from_u64(5);
        let draws: Vec<Vec<f64>> = (0..50_000)
            .map(|_| sample_dirichlet(&[5.0, 1.0], &mut rng).unwrap())
            .collect();
        let first: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let (m, v) = mean_var(&first);
        assert!((m - 5.0 / 6.0).abs() < 0.005);
        assert!((v - 5.0 / 36.0 / 7.0).abs() < 0.001);
        for d in &draws[..100] {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
        assert!(sample_dirichlet(&[1.0], &mut rng).is_err());
    }

    #[test]
    fn tiny_dirichlet_concentrations_still_normalize() {
        let mut rng = ChainRng::seed_from_u64(6);
        for _ in 0..1000 {
            let d = sample_dirichlet(&[1e-3, 2e-3, 1e-3], &mut rng).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_wishart_scalar_reduction() {
        let mut rng = ChainRng::seed_from_u64(7);
        let scale = SymMatrix::from_diagonal(&[2.0]);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                sample_inverse_wishart(&scale, 4.0, &mut rng)
                    .unwrap()
                    .matrix()[(0, 0)]
            })
            .collect();
        // inverse gamma(2, 1) has infinite variance; a loose band on the mean
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.05);
        assert!(sample_inverse_wishart(&SymMatrix::identity(3), 1.5, &mut rng).is_err());
    }
}
