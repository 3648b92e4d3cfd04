//! Special functions: modified Bessel function of the second kind, incomplete
//! gamma functions and a few normal/chi-square helpers.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MtarError, Result};

pub use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// Taylor coefficients of `1/Γ(1+z)` around zero.
const RECIP_GAMMA_SERIES: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns `(gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu))` for `|mu| <= 1/2`, where
/// `gam1 = (1/Γ(1-mu) - 1/Γ(1+mu)) / (2 mu)` and
/// `gam2 = (1/Γ(1-mu) + 1/Γ(1+mu)) / 2`, evaluated without cancellation.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, c) in RECIP_GAMMA_SERIES.iter().enumerate().rev() {
        if i % 2 == 0 {
            even = even * mu2 + c;
        } else {
            odd = odd * mu2 + c;
        }
    }
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// Natural logarithm of the modified Bessel function of the second kind,
/// `K_order(x) = 1/2 ∫_0^∞ t^(order-1) exp(-(x/2)(t + 1/t)) dt`.
///
/// Uses Temme's series for `x < 2`, Steed's continued fraction otherwise,
/// and upward recurrence in the order with running rescaling, so the result
/// is finite for large `x` and large orders.
pub fn log_bessel_k(order: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(MtarError::domain(format!(
            "log_bessel_k: argument must be positive and finite, got {x}"
        )));
    }
    if !order.is_finite() {
        return Err(MtarError::domain(format!(
            "log_bessel_k: order must be finite, got {order}"
        )));
    }
    let nu = order.abs();
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let mu2 = mu * mu;
    let xi2 = 2.0 / x;

    // log K_mu and the ratio K_{mu+1}/K_mu
    let (log_kmu, ratio) = if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        let mut converged = false;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(MtarError::numerical(
                "log_bessel_k: series failed to converge",
            ));
        }
        (sum.ln(), sum1 * xi2 / sum)
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut converged = false;
        for i in 2..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(MtarError::numerical(
                "log_bessel_k: continued fraction failed to converge",
            ));
        }
        h *= a1;
        let log_kmu = 0.5 * (PI / (2.0 * x)).ln() - x - s.ln();
        (log_kmu, (mu + x + 0.5 - h) / x)
    };

    // Upward recurrence K_{v+1} = (2v/x) K_v + K_{v-1}, kept rescaled.
    let mut log_scale = log_kmu;
    let mut k_prev = 1.0;
    let mut k_cur = ratio;
    let steps = nl as usize;
    for i in 1..=steps {
        let next = (mu + i as f64) * xi2 * k_cur + k_prev;
        k_prev = k_cur;
        k_cur = next;
        if k_cur > 1e200 {
            log_scale += k_cur.ln();
            k_prev /= k_cur;
            k_cur = 1.0;
        }
    }
    let value = log_scale + k_prev.ln();
    if value.is_nan() {
        return Err(MtarError::numerical(format!(
            "log_bessel_k({order}, {x}) produced NaN"
        )));
    }
    Ok(value)
}

/// `K_order(x)`; may underflow to zero or overflow for extreme arguments,
/// use [`log_bessel_k`] there.
pub fn bessel_k(order: f64, x: f64) -> Result<f64> {
    log_bessel_k(order, x).map(f64::exp)
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(MtarError::domain(format!(
            "incomplete gamma: shape must be positive, got {a}"
        )));
    }
    if !(x >= 0.0) {
        return Err(MtarError::domain(format!(
            "incomplete gamma: argument must be nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// log P(a, x) by its power series; accurate for `x < a + 1`.
fn ln_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum.ln() - x + a * x.ln() - ln_gamma(a)
}

/// log Q(a, x) by the modified Lentz continued fraction; accurate for `x >= a + 1`.
fn ln_q_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let an = -fi * (fi - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln() - x + a * x.ln() - ln_gamma(a)
}

/// Returns `(log P(a,x), log Q(a,x))` for the regularized incomplete gamma
/// functions `P = γ(a,x)/Γ(a)` and `Q = 1 - P`.
pub fn ln_regularized_gamma(a: f64, x: f64) -> Result<(f64, f64)> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    if x.is_infinite() {
        return Ok((0.0, f64::NEG_INFINITY));
    }
    if x < a + 1.0 {
        let lp = ln_p_series(a, x);
        Ok((lp, (-lp.exp()).ln_1p()))
    } else {
        let lq = ln_q_continued_fraction(a, x);
        Ok(((-lq.exp()).ln_1p(), lq))
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    ln_regularized_gamma(a, x).map(|(lp, _)| lp.exp())
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    ln_regularized_gamma(a, x).map(|(_, lq)| lq.exp())
}

/// Lower incomplete gamma function `γ(a, b) = ∫_0^b t^(a-1) e^(-t) dt`.
pub fn lower_incomplete_gamma(a: f64, b: f64) -> Result<f64> {
    ln_lower_incomplete_gamma(a, b).map(f64::exp)
}

/// `log γ(a, b)`; `-∞` at `b = 0`.
pub fn ln_lower_incomplete_gamma(a: f64, b: f64) -> Result<f64> {
    let (lp, _) = ln_regularized_gamma(a, b)?;
    Ok(ln_gamma(a) + lp)
}

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    regularized_gamma_p(0.5 * dof, 0.5 * x).unwrap_or(f64::NAN)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
