//! Detection, burst and tracking statistics from the moment table.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use super::quadrature::{integrate, QuadratureConfig};
use super::runlength::{binomial, run_ccdf_dp, run_ccdf_polynomial, MAX_POLYNOMIAL_LEN};
use super::{AnalyticsError, MomentTable, RadarParams};

/// Largest accepted error bound on a tracking probability before the exact
/// routes are declared unstable.
pub const DEFAULT_MAX_TRACKING_ERROR: f64 = 1e-6;

/// Detection probability of one slot given the interferer distances and which
/// of them are active: `exp(-n) * prod 1 / (1 + c d^-alpha)` over active ones.
///
/// Panics if the two slices differ in length.
pub fn detection_prob_conditional(radar: &RadarParams, distances: &[f64], active: &[bool]) -> f64 {
    assert_eq!(
        distances.len(),
        active.len(),
        "one activation flag per interferer"
    );
    let c = radar.interference_coeff();
    let alpha = radar.pathloss_exp;
    let loss: f64 = distances
        .iter()
        .zip(active)
        .filter(|(_, &on)| on)
        .map(|(&d, _)| (c * d.powf(-alpha)).ln_1p())
        .sum();
    (-radar.noise_exponent() - loss).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMethod {
    /// de Moivre's sum with each `E[p^i (1-p)^j]` expanded into moments.
    Demoivre,
    /// Exact CCDF polynomial coefficients applied to the moments.
    Polynomial,
    /// Beta law matched to the first two moments; no error bound.
    BetaApprox,
}

impl TrackingMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackingMethod::Demoivre => "demoivre",
            TrackingMethod::Polynomial => "polynomial",
            TrackingMethod::BetaApprox => "beta_approx",
        }
    }
}

/// A tracking probability with a bound on its numerical error (rounding plus
/// the propagated moment errors); infinite for approximations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingValue {
    pub value: f64,
    pub error_bound: f64,
    pub method: TrackingMethod,
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

#[derive(Default)]
struct Accumulator {
    sum: f64,
    compensation: f64,
    magnitude: f64,
    propagated: f64,
}

impl Accumulator {
    fn add(&mut self, x: f64, weight: f64, moment_err: f64) {
        let s = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - s) + x;
        } else {
            self.compensation += (x - s) + self.sum;
        }
        self.sum = s;
        self.magnitude += x.abs();
        self.propagated += weight.abs() * moment_err;
    }

    fn finish(self, method: TrackingMethod) -> TrackingValue {
        TrackingValue {
            value: (self.sum + self.compensation).clamp(0.0, 1.0),
            error_bound: self.propagated + 16.0 * f64::EPSILON * self.magnitude,
            method,
        }
    }
}

/// Tracking probability by de Moivre's sum with moments substituted for the
/// powers of `P_d`. Needs moments up to order `l (nu + 1)` for the largest
/// term index `l`, at most `T + 1`.
pub fn tracking_prob_demoivre(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
) -> Result<TrackingValue, AnalyticsError> {
    check_lengths(block_len, track_len)?;
    let t = block_len as u64;
    let nu = track_len as u64;
    let terms = (t + 1) / (nu + 1);
    moments.require((terms * (nu + 1)) as usize)?;
    let mut acc = Accumulator::default();
    for l in 1..=terms {
        let outer = binomial(t - l * nu, l - 1);
        let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
        let k = (t - l * nu + 1) as f64 / l as f64;
        // E[p^(l nu + 1) q^(l-1)]
        for i in 0..l {
            let w = sign * outer * binomial(l - 1, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
            let order = (l * nu + 1 + i) as usize;
            acc.add(w * moments.zeta(order)?, w, moments.error(order)?);
        }
        // k E[p^(l nu) q^l]
        for i in 0..=l {
            let w = sign * outer * k * binomial(l, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
            let order = (l * nu + i) as usize;
            acc.add(w * moments.zeta(order)?, w, moments.error(order)?);
        }
    }
    Ok(acc.finish(TrackingMethod::Demoivre))
}

/// Tracking probability as `sum_k c_k zeta(k)` with the exact CCDF
/// polynomial; limited to `T <= 64`.
pub fn tracking_prob_polynomial(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
) -> Result<TrackingValue, AnalyticsError> {
    let coeffs = run_ccdf_polynomial(block_len, track_len)?;
    moments.require(block_len as usize)?;
    let mut acc = Accumulator::default();
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0 {
            let c = c as f64;
            acc.add(c * moments.zeta(k)?, c, moments.error(k)?);
        }
    }
    Ok(acc.finish(TrackingMethod::Polynomial))
}

/// Tracking probability `P_t = E[P(L >= nu | Phi)]` of a block of `T` slots.
///
/// Fails with [`AnalyticsError::Unstable`] when the error bound exceeds
/// [`DEFAULT_MAX_TRACKING_ERROR`]; see [`tracking_prob_robust`].
pub fn tracking_prob(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
) -> Result<f64, AnalyticsError> {
    let v = tracking_prob_demoivre(moments, block_len, track_len)?;
    if v.error_bound > DEFAULT_MAX_TRACKING_ERROR {
        return Err(AnalyticsError::Unstable {
            what: "tracking probability",
            error_bound: v.error_bound,
        });
    }
    Ok(v.value)
}

/// Beta law with the mean and variance of `P_d`, averaged through the exact
/// run-length CCDF.
pub fn tracking_prob_beta(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
) -> Result<TrackingValue, AnalyticsError> {
    check_lengths(block_len, track_len)?;
    let m1 = moments.zeta(1)?;
    let m2 = moments.zeta(2)?;
    let var = m2 - m1 * m1;
    let spread = m1 * (1.0 - m1);
    let value = if var <= 1e-12 * spread.max(f64::MIN_POSITIVE) || spread <= 0.0 {
        run_ccdf_dp(m1.clamp(0.0, 1.0), block_len, track_len)?
    } else {
        let common = (spread / var.min(spread * (1.0 - 1e-12)) - 1.0).max(f64::MIN_POSITIVE);
        let (a, b) = (m1 * common, (1.0 - m1) * common);
        let ln_norm = ln_beta(a, b);
        let cfg = QuadratureConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            ..QuadratureConfig::default()
        };
        let f = |p: f64| run_ccdf_dp(p.clamp(0.0, 1.0), block_len, track_len).unwrap_or(0.0);
        // p = v^(1/a) below the mean and p = 1 - u^(1/b) above it remove the
        // endpoint singularities of the density
        let (lower, _) = integrate(
            |v| {
                let p = v.powf(1.0 / a);
                f(p) * ((b - 1.0) * (-p).ln_1p() - ln_norm - a.ln()).exp()
            },
            0.0,
            m1.powf(a),
            &[],
            &cfg,
        )?;
        let (upper, _) = integrate(
            |u| {
                let p = 1.0 - u.powf(1.0 / b);
                let fp = f(p);
                if fp == 0.0 {
                    return 0.0;
                }
                fp * ((a - 1.0) * p.ln() - ln_norm - b.ln()).exp()
            },
            0.0,
            (1.0 - m1).powf(b),
            &[],
            &cfg,
        )?;
        let v = lower + upper;
        v.clamp(0.0, 1.0)
    };
    Ok(TrackingValue {
        value,
        error_bound: f64::INFINITY,
        method: TrackingMethod::BetaApprox,
    })
}

/// The exact route with the smaller error bound if it is within `max_error`,
/// otherwise the Beta approximation.
pub fn tracking_prob_robust(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
    max_error: f64,
) -> Result<TrackingValue, AnalyticsError> {
    check_lengths(block_len, track_len)?;
    let mut best: Option<TrackingValue> = None;
    let needed = ((block_len + 1) / (track_len + 1) * (track_len + 1)) as usize;
    if needed <= moments.max_order() {
        best = Some(tracking_prob_demoivre(moments, block_len, track_len)?);
    }
    if block_len <= MAX_POLYNOMIAL_LEN && block_len as usize <= moments.max_order() {
        let p = tracking_prob_polynomial(moments, block_len, track_len)?;
        if best.is_none_or(|b| p.error_bound < b.error_bound) {
            best = Some(p);
        }
    }
    match best {
        Some(v) if v.error_bound <= max_error => Ok(v),
        _ => tracking_prob_beta(moments, block_len, track_len),
    }
}

/// Expected number of `nu`-slot detection windows in a block,
/// `(T - nu + 1) zeta(nu)`.
pub fn expected_burst_count(
    moments: &MomentTable,
    block_len: u32,
    track_len: u32,
) -> Result<f64, AnalyticsError> {
    check_lengths(block_len, track_len)?;
    Ok((block_len - track_len + 1) as f64 * moments.zeta(track_len as usize)?)
}

/// `sum_{l=1}^T zeta(l) - T zeta(T+1)`: the mean length of the first run of
/// detections that a failure ends within the block, counting 0 otherwise.
pub fn expected_tracking_length(
    moments: &MomentTable,
    block_len: u32,
) -> Result<f64, AnalyticsError> {
    let t = block_len as usize;
    moments.require(t + 1)?;
    let mut sum = 0.0;
    for l in 1..=t {
        sum += moments.zeta(l)?;
    }
    Ok(sum - t as f64 * moments.zeta(t + 1)?)
}

/// Limit of [`expected_tracking_length`] for an unbounded block, `sum zeta(l)`,
/// summed until the moments drop below `1e-12`.
pub fn expected_tracking_length_infinite(moments: &MomentTable) -> Result<f64, AnalyticsError> {
    let mut sum = 0.0;
    for &z in moments.values() {
        if z < 1e-12 {
            return Ok(sum);
        }
        sum += z;
    }
    Err(AnalyticsError::InsufficientMoments {
        needed: moments.max_order() + 1,
        available: moments.max_order(),
    })
}

/// Mean of the longest run of detections in a block, `sum_nu P_t(nu)`.
pub fn expected_max_run(
    moments: &MomentTable,
    block_len: u32,
    max_error: f64,
) -> Result<TrackingValue, AnalyticsError> {
    let mut value = 0.0;
    let mut error_bound = 0.0;
    let mut method = TrackingMethod::Demoivre;
    for nu in 1..=block_len {
        let v = tracking_prob_robust(moments, block_len, nu, max_error)?;
        value += v.value;
        error_bound += v.error_bound;
        if v.method != TrackingMethod::Demoivre {
            method = v.method;
        }
    }
    Ok(TrackingValue {
        value,
        error_bound,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radar_with_noise_exponent(n: f64) -> RadarParams {
        let mut r = RadarParams::reference();
        r.noise_density_w_per_hz *= n / r.noise_exponent();
        r
    }

    #[test]
    fn conditional_detection_examples() {
        let r = radar_with_noise_exponent(std::f64::consts::LN_2);
        assert!((detection_prob_conditional(&r, &[], &[]) - 0.5).abs() < 1e-14);
        // c d^-alpha = 1
        let d = r.interference_coeff().powf(1.0 / r.pathloss_exp);
        assert!((detection_prob_conditional(&r, &[d], &[true]) - 0.25).abs() < 1e-14);
        assert!((detection_prob_conditional(&r, &[d, d], &[false, true]) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn demoivre_and_polynomial_agree_with_point_mass() {
        let m = MomentTable::point_mass(0.63, 65).unwrap();
        for t in [1, 2, 5, 20, 25] {
            for nu in 1..=t {
                let dp = run_ccdf_dp(0.63, t, nu).unwrap();
                let a = tracking_prob_demoivre(&m, t, nu).unwrap();
                let b = tracking_prob_polynomial(&m, t, nu).unwrap();
                assert!((a.value - dp).abs() < 1e-9, "T={t} nu={nu}");
                assert!((b.value - dp).abs() < 1e-9, "T={t} nu={nu}");
            }
        }
    }

    #[test]
    fn collapses_when_block_equals_run() {
        let m = MomentTable::from_values(vec![0.9, 0.8, 0.75, 0.7, 0.66], vec![0.0; 5]).unwrap();
        for t in 1..=4 {
            let v = tracking_prob(&m, t, t).unwrap();
            assert!((v - m.zeta(t as usize).unwrap()).abs() < 1e-15);
        }
        assert!((tracking_prob(&m, 1, 1).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(
            tracking_prob(&m, 8, 1),
            Err(AnalyticsError::InsufficientMoments { .. })
        ));
    }

    #[test]
    fn burst_and_length_examples() {
        let m = MomentTable::point_mass(0.5, 80).unwrap();
        assert!((expected_burst_count(&m, 10, 2).unwrap() - 2.25).abs() < 1e-15);
        assert!((expected_tracking_length(&m, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((expected_tracking_length_infinite(&m).unwrap() - 1.0).abs() < 1e-11);
        let zero = MomentTable::from_values(vec![0.0; 5], vec![0.0; 5]).unwrap();
        assert_eq!(expected_tracking_length(&zero, 4).unwrap(), 0.0);
        let one = MomentTable::point_mass(1.0, 8).unwrap();
        assert_eq!(expected_burst_count(&one, 8, 3).unwrap(), 6.0);
        assert!(expected_tracking_length_infinite(&one).is_err());
    }

    #[test]
    fn first_run_formula_matches_enumeration() {
        // X = first run if a failure ends it within T + 1 slots, else 0
        let p: f64 = 0.7;
        let t = 6u32;
        let mut expect = 0.0;
        for k in 0..t {
            expect += k as f64 * p.powi(k as i32) * (1.0 - p);
        }
        expect += t as f64 * p.powi(t as i32) * (1.0 - p);
        let m = MomentTable::point_mass(p, 10).unwrap();
        assert!((expected_tracking_length(&m, t).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn max_run_mean_matches_enumeration() {
        let p: f64 = 0.4;
        let t = 8u32;
        let mut expect = 0.0;
        for mask in 0u32..(1 << t) {
            let (mut run, mut best, mut prob) = (0, 0, 1.0);
            for i in 0..t {
                if mask >> i & 1 == 1 {
                    run += 1;
                    best = best.max(run);
                    prob *= p;
                } else {
                    run = 0;
                    prob *= 1.0 - p;
                }
            }
            expect += best as f64 * prob;
        }
        let m = MomentTable::point_mass(p, 10).unwrap();
        let v = expected_max_run(&m, t, 1e-9).unwrap();
        assert!((v.value - expect).abs() < 1e-12);
    }

    #[test]
    fn beta_route_is_exact_for_beta_moments() {
        // moments of Beta(2, 3): prod_{i<l} (2 + i) / (5 + i)
        let (a, b) = (2.0, 3.0);
        let mut z = 1.0;
        let values: Vec<f64> = (0..70)
            .map(|i| {
                z *= (a + i as f64) / (a + b + i as f64);
                z
            })
            .collect();
        let m = MomentTable::from_values(values, vec![0.0; 70]).unwrap();
        let exact = tracking_prob_demoivre(&m, 12, 3).unwrap();
        let beta = tracking_prob_beta(&m, 12, 3).unwrap();
        assert!((exact.value - beta.value).abs() < 1e-9);
        // long blocks fall back to it
        let v = tracking_prob_robust(&m, 60, 1, 1e-9).unwrap();
        assert_eq!(v.method, TrackingMethod::BetaApprox);
    }
}
