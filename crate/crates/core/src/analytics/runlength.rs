//! Probability that `T` Bernoulli(`p`) trials contain a run of at least `nu`
//! consecutive successes.

use statrs::function::factorial::ln_binomial;

use super::AnalyticsError;

/// Largest `T` whose CCDF polynomial is expanded exactly.
pub const MAX_POLYNOMIAL_LEN: u32 = 64;

/// Binomial coefficients are exact integers up to this `n`.
const EXACT_BINOMIAL_MAX: u64 = 40;

/// Largest tolerated rounding bound of the alternating sum.
const DEMOIVRE_MAX_ROUNDING: f64 = 1e-12;

fn check_run_args(p: f64, block_len: u32, track_len: u32) -> Result<(), AnalyticsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalyticsError::InvalidParameter {
            name: "p",
            value: p,
        });
    }
    check_lengths(block_len, track_len)
}

fn check_lengths(block_len: u32, track_len: u32) -> Result<(), AnalyticsError> {
    if track_len == 0 || track_len > block_len {
        return Err(AnalyticsError::InvalidParameter {
            name: "track_len",
            value: track_len as f64,
        });
    }
    Ok(())
}

/// `C(n, k)` as a float; exact for `n <= 40`.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_MAX {
        let k = k.min(n - k);
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        c as f64
    } else {
        ln_binomial(n, k).exp()
    }
}

fn ln_binom(n: u64, k: u64) -> f64 {
    if n <= EXACT_BINOMIAL_MAX {
        binomial(n, k).ln()
    } else {
        ln_binomial(n, k)
    }
}

/// de Moivre's alternating sum for `P(max run >= nu)`.
///
/// Fails with [`AnalyticsError::Unstable`] when the cancellation in the sum
/// could cost more than `1e-12` absolute accuracy; [`run_ccdf_dp`] is the
/// stable alternative.
pub fn run_ccdf_demoivre(p: f64, block_len: u32, track_len: u32) -> Result<f64, AnalyticsError> {
    check_run_args(p, block_len, track_len)?;
    let t = block_len as u64;
    let nu = track_len as u64;
    let q = 1.0 - p;
    let terms = (t + 1) / (nu + 1);
    let log_space = t > EXACT_BINOMIAL_MAX;
    let mut sum = 0.0;
    let mut compensation = 0.0;
    let mut magnitude = 0.0;
    for l in 1..=terms {
        let lf = l as f64;
        let rest = t - l * nu;
        let lead = p + (rest + 1) as f64 / lf * q;
        let term = if log_space {
            if p == 0.0 || (q == 0.0 && l > 1) {
                0.0
            } else {
                let ln_q = if l == 1 { 0.0 } else { (l - 1) as f64 * q.ln() };
                (ln_binom(rest, l - 1) + (l * nu) as f64 * p.ln() + ln_q + lead.ln()).exp()
            }
        } else {
            lead * binomial(rest, l - 1) * p.powi((l * nu) as i32) * q.powi((l - 1) as i32)
        };
        let signed = if l % 2 == 1 { term } else { -term };
        magnitude += term;
        // Neumaier summation
        let s = sum + signed;
        if sum.abs() >= signed.abs() {
            compensation += (sum - s) + signed;
        } else {
            compensation += (signed - s) + sum;
        }
        sum = s;
    }
    let value = sum + compensation;
    let bound = 8.0 * f64::EPSILON * magnitude;
    if bound > DEMOIVRE_MAX_ROUNDING {
        return Err(AnalyticsError::Unstable {
            what: "de Moivre run-length sum",
            error_bound: bound,
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `P(max run >= nu)` by the first-completion recurrence
/// `F_t = F_{t-1} + (1 - p) p^nu (1 - F_{t-nu-1})`, with `F_nu = p^nu`.
pub fn run_ccdf_dp(p: f64, block_len: u32, track_len: u32) -> Result<f64, AnalyticsError> {
    check_run_args(p, block_len, track_len)?;
    let t = block_len as usize;
    let nu = track_len as usize;
    let p_nu = p.powi(track_len as i32);
    let step = (1.0 - p) * p_nu;
    let mut f = vec![0.0; t + 1];
    f[nu] = p_nu;
    for i in nu + 1..=t {
        f[i] = f[i - 1] + step * (1.0 - f[i - nu - 1]);
    }
    Ok(f[t].clamp(0.0, 1.0))
}

/// Exact integer coefficients `c_0..=c_T` with `P(max run >= nu) = sum c_k p^k`.
pub fn run_ccdf_polynomial(block_len: u32, track_len: u32) -> Result<Vec<i128>, AnalyticsError> {
    check_lengths(block_len, track_len)?;
    if block_len > MAX_POLYNOMIAL_LEN {
        return Err(AnalyticsError::InvalidParameter {
            name: "block_len",
            value: block_len as f64,
        });
    }
    let overflow = || AnalyticsError::Unstable {
        what: "run-length polynomial coefficients",
        error_bound: f64::INFINITY,
    };
    let t = block_len as usize;
    let nu = track_len as usize;
    let mut f: Vec<Vec<i128>> = vec![vec![0; t + 1]; t + 1];
    f[nu][nu] = 1;
    for i in nu + 1..=t {
        // 1 - F_{i-nu-1}, as a polynomial
        let mut rest = vec![0i128; t + 1];
        rest[0] = 1;
        for (r, c) in rest.iter_mut().zip(&f[i - nu - 1]) {
            *r = r.checked_sub(*c).ok_or_else(overflow)?;
        }
        let mut next = f[i - 1].clone();
        // + (p^nu - p^(nu+1)) * rest
        for (k, &c) in rest.iter().enumerate() {
            if c == 0 {
                continue;
            }
            if k + nu <= t {
                next[k + nu] = next[k + nu].checked_add(c).ok_or_else(overflow)?;
            }
            if k + nu < t {
                next[k + nu + 1] = next[k + nu + 1].checked_sub(c).ok_or_else(overflow)?;
            }
        }
        f[i] = next;
    }
    Ok(f.swap_remove(t))
}

/// Horner evaluation of integer coefficients at `p`.
pub fn eval_polynomial(coeffs: &[i128], p: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * p + c as f64)
}
