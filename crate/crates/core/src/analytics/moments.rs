//! Moments `zeta(l) = E[P_d^l]` of the conditional detection probability.
//!
//! With `c` the interference coefficient of [`RadarParams`], an active radar at
//! distance `x` keeps the detection probability with factor
//! `T(x) = 1 / (1 + c x^-alpha)`. Averaging `P_d^l` over the ego-street PPP and
//! the PLCP gives
//!
//! ```text
//! zeta(l) = exp(-l n) * exp(-lambda delta J_l) * exp(-2 lambda_L S_l(lambda delta))
//! J_l     = int_0^rho (1 - T(z)^l) dz
//! S_l(mu) = int_0^{min(Omega, pi/2)} sin(theta) int_0^rho (1 - exp(-mu I_l(theta, d))) dd dtheta
//! I_l     = int_{a(theta, d)}^{b(theta, d)} (1 - T(w)^l) dz,  w^2 = d^2 + z^2 + 2 d z cos(theta)
//! ```
//!
//! where `n` is the noise exponent, `(a, b)` the interferer interval of a
//! street crossing the ego street at distance `d` and angle `theta`, `rho`
//! the truncation radius and `sin(theta)` the Jacobian from the line
//! parameters `(theta, r)` to `(theta, d)`. The factor 2 counts the streets
//! crossing at `theta` and at `pi - theta`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::quadrature::{integrate_vec, integrate_vec_aux, QuadratureConfig, QuadratureError};
use super::{AnalyticsError, Densities, RadarParams};
use crate::geometry::interferer_span;

/// `zeta(1..=l_max)` with error estimates for one `(densities, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub densities: Densities,
    pub access_prob: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
    fingerprint: String,
}

impl MomentTable {
    /// A table from given moments, e.g. of a known distribution.
    pub fn from_values(values: Vec<f64>, errors: Vec<f64>) -> Result<Self, AnalyticsError> {
        if values.len() != errors.len() {
            return Err(AnalyticsError::InvalidParameter {
                name: "moment errors",
                value: errors.len() as f64,
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AnalyticsError::InvalidParameter {
                name: "moment",
                value: bad,
            });
        }
        Ok(Self {
            densities: Densities {
                vehicle: 0.0,
                street: 0.0,
            },
            access_prob: 0.0,
            values,
            errors,
            fingerprint: "given".to_string(),
        })
    }

    /// Moments `p^l` of a detection probability that is constant `p`.
    pub fn point_mass(p: f64, max_order: usize) -> Result<Self, AnalyticsError> {
        let values = (1..=max_order).map(|l| p.powi(l as i32)).collect();
        Self::from_values(values, vec![0.0; max_order])
    }

    pub fn max_order(&self) -> usize {
        self.values.len()
    }

    /// `zeta(l)`; `zeta(0) = 1`.
    pub fn zeta(&self, l: usize) -> Result<f64, AnalyticsError> {
        if l == 0 {
            return Ok(1.0);
        }
        self.values
            .get(l - 1)
            .copied()
            .ok_or(AnalyticsError::InsufficientMoments {
                needed: l,
                available: self.values.len(),
            })
    }

    pub fn error(&self, l: usize) -> Result<f64, AnalyticsError> {
        if l == 0 {
            return Ok(0.0);
        }
        self.errors
            .get(l - 1)
            .copied()
            .ok_or(AnalyticsError::InsufficientMoments {
                needed: l,
                available: self.errors.len(),
            })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub(crate) fn require(&self, order: usize) -> Result<(), AnalyticsError> {
        if order > self.values.len() {
            Err(AnalyticsError::InsufficientMoments {
                needed: order,
                available: self.values.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Inner integrals are shared between access probabilities; cap the memo.
const INNER_CACHE_LIMIT: usize = 200_000;

/// Inner integrals keyed by the bits of `(theta, d)`.
type InnerCache = HashMap<(u64, u64), Arc<[f64]>>;

/// Density-independent part of the moment computation for one radar model,
/// quadrature setting and maximum order.
///
/// The ego-street integrals `J_l` are computed once; the street integrals
/// depend on `mu = lambda delta` and are evaluated per table, reusing the
/// innermost integrals `I_l(theta, d)` across calls.
#[derive(Debug)]
pub struct MomentKernel {
    radar: RadarParams,
    quad: QuadratureConfig,
    max_order: usize,
    coeff: f64,
    scale: f64,
    ego_line: Vec<f64>,
    ego_line_err: Vec<f64>,
    inner_cache: RwLock<InnerCache>,
}

impl MomentKernel {
    pub fn new(
        radar: RadarParams,
        quad: QuadratureConfig,
        max_order: usize,
    ) -> Result<Self, AnalyticsError> {
        radar.validate()?;
        quad.validate()?;
        if max_order == 0 {
            return Err(AnalyticsError::InvalidParameter {
                name: "max_order",
                value: 0.0,
            });
        }
        let rho = quad.truncation_radius;
        if rho.is_infinite() && radar.pathloss_exp <= 1.0 {
            return Err(QuadratureError::Divergent(
                "ego-street interference needs a path-loss exponent above 1",
            )
            .into());
        }
        let coeff = radar.interference_coeff();
        let alpha = radar.pathloss_exp;
        let scale = if coeff > 0.0 {
            coeff.powf(1.0 / alpha)
        } else {
            1.0
        };
        let mut kernel = Self {
            radar,
            quad,
            max_order,
            coeff,
            scale,
            ego_line: vec![0.0; max_order],
            ego_line_err: vec![0.0; max_order],
            inner_cache: RwLock::new(HashMap::new()),
        };
        if coeff > 0.0 {
            let bp = kernel.breakpoints(0.0, rho);
            let r = integrate_vec(
                |z, out| kernel.fill_loss(z, out),
                0.0,
                rho,
                &bp,
                max_order,
                &quad,
            )?;
            kernel.ego_line = r.value;
            kernel.ego_line_err = r.error;
        }
        Ok(kernel)
    }

    pub fn radar(&self) -> &RadarParams {
        &self.radar
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `J_l` for `l = 1..=max_order` with error estimates.
    pub fn ego_line_integrals(&self) -> (&[f64], &[f64]) {
        (&self.ego_line, &self.ego_line_err)
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        [0.1, 1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|k| from + k * self.scale)
            .filter(|x| *x < to)
            .collect()
    }

    /// `1 - T(x)^l` for every order.
    fn fill_loss(&self, x: f64, out: &mut [f64]) {
        let ln_keep = -(self.coeff * x.powf(-self.radar.pathloss_exp)).ln_1p();
        for (l, o) in out.iter_mut().enumerate() {
            *o = -((l + 1) as f64 * ln_keep).exp_m1();
        }
    }

    /// `I_l(theta, d)` for every order, followed by the largest error estimate.
    fn inner(&self, theta: f64, d: f64) -> Result<Arc<[f64]>, QuadratureError> {
        let key = (theta.to_bits(), d.to_bits());
        if let Some(v) = self.inner_cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let l_max = self.max_order;
        let mut values = vec![0.0; l_max + 1];
        if let Some((lo, hi)) = interferer_span(theta, d, self.radar.half_beamwidth_rad) {
            let rho = self.quad.truncation_radius;
            let (sin_t, cos_t) = theta.sin_cos();
            let z_max = if rho.is_finite() {
                let disc = rho * rho - (d * sin_t).powi(2);
                if disc > 0.0 {
                    -d * cos_t + disc.sqrt()
                } else {
                    0.0
                }
            } else {
                f64::INFINITY
            };
            let hi = hi.min(z_max);
            if hi > lo {
                let bp = self.breakpoints(lo, hi);
                let cfg = self.quad.tightened(10.0);
                let r = integrate_vec(
                    |z, out| {
                        let w = (d * d + z * z + 2.0 * d * z * cos_t).max(0.0).sqrt();
                        self.fill_loss(w, out)
                    },
                    lo,
                    hi,
                    &bp,
                    l_max,
                    &cfg,
                )?;
                let err = r.max_error();
                values[..l_max].copy_from_slice(&r.value);
                values[l_max] = err;
            }
        }
        let values: Arc<[f64]> = values.into();
        let mut cache = self.inner_cache.write().expect("cache lock");
        if cache.len() < INNER_CACHE_LIMIT {
            cache.insert(key, Arc::clone(&values));
        }
        Ok(values)
    }

    /// `S_l(mu)` for every order with error estimates that include the
    /// propagated error of the inner integrals.
    pub fn street_integrals(&self, mu: f64) -> Result<(Vec<f64>, Vec<f64>), AnalyticsError> {
        let l_max = self.max_order;
        if mu <= 0.0 || self.coeff == 0.0 {
            return Ok((vec![0.0; l_max], vec![0.0; l_max]));
        }
        let rho = self.quad.truncation_radius;
        if rho.is_infinite() && self.radar.pathloss_exp <= 2.0 {
            return Err(QuadratureError::Divergent(
                "street interference needs a path-loss exponent above 2",
            )
            .into());
        }
        let half = self.radar.half_beamwidth_rad;
        let theta_max = (2.0 * half).min(FRAC_PI_2);
        let failure: std::cell::RefCell<Option<QuadratureError>> = std::cell::RefCell::new(None);
        let d_breaks = self.breakpoints(0.0, rho);
        let middle_cfg = self.quad.tightened(3.0);

        // middle integral over d, returning values and its own error (last slot)
        let middle = |theta: f64, out: &mut [f64]| {
            let r = integrate_vec_aux(
                |d, o| match self.inner(theta, d) {
                    Ok(inner) => {
                        let inner_err = inner[l_max];
                        for l in 0..l_max {
                            o[l] = -(-mu * inner[l]).exp_m1();
                        }
                        o[l_max] = mu * inner_err;
                    }
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        o.iter_mut().for_each(|v| *v = 0.0);
                    }
                },
                0.0,
                rho,
                &d_breaks,
                l_max + 1,
                l_max,
                &middle_cfg,
            );
            let sin_t = theta.sin();
            match r {
                Ok(r) => {
                    let err = r.error[..l_max].iter().copied().fold(0.0, f64::max);
                    for (o, v) in out.iter_mut().zip(&r.value[..l_max]) {
                        *o = sin_t * v;
                    }
                    out[l_max] = sin_t * (r.value[l_max] + err);
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    out.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        };

        let mut values = vec![0.0; l_max];
        let mut errors = vec![0.0; l_max];
        let pieces = [(0.0, half.min(theta_max)), (half.min(theta_max), theta_max)];
        for (lo, hi) in pieces {
            let r = integrate_vec_aux(middle, lo, hi, &[], l_max + 1, l_max, &self.quad);
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e.into());
            }
            let r = r?;
            for l in 0..l_max {
                values[l] += r.value[l];
                errors[l] += r.error[l] + r.value[l_max];
            }
        }
        Ok((values, errors))
    }

    /// Moment table for given densities and access probability.
    pub fn table(
        &self,
        densities: Densities,
        access_prob: f64,
    ) -> Result<MomentTable, AnalyticsError> {
        if !(0.0..=1.0).contains(&access_prob) {
            return Err(AnalyticsError::InvalidParameter {
                name: "access_prob",
                value: access_prob,
            });
        }
        let densities = Densities::new(densities.vehicle, densities.street)?;
        let noise = self.radar.noise_exponent();
        let mu = densities.vehicle * access_prob;
        let (street, street_err) = if densities.street > 0.0 {
            self.street_integrals(mu)?
        } else {
            (vec![0.0; self.max_order], vec![0.0; self.max_order])
        };
        let mut values = Vec::with_capacity(self.max_order);
        let mut errors = Vec::with_capacity(self.max_order);
        for l in 0..self.max_order {
            let exponent =
                (l + 1) as f64 * noise + mu * self.ego_line[l] + 2.0 * densities.street * street[l];
            let zeta = (-exponent).exp();
            let exp_err = mu * self.ego_line_err[l] + 2.0 * densities.street * street_err[l];
            values.push(zeta);
            errors.push(zeta * (exp_err + 4.0 * f64::EPSILON * (1.0 + exponent)));
        }
        Ok(MomentTable {
            densities,
            access_prob,
            values,
            errors,
            fingerprint: format!("{};orders={}", self.quad.fingerprint(), self.max_order),
        })
    }
}

/// `zeta(1..=max_order)` for one configuration.
pub fn moment_table(
    radar: &RadarParams,
    densities: Densities,
    access_prob: f64,
    max_order: usize,
    quad: &QuadratureConfig,
) -> Result<MomentTable, AnalyticsError> {
    MomentKernel::new(*radar, *quad, max_order)?.table(densities, access_prob)
}

/// `zeta(l)` and its error estimate.
pub fn moment_zeta(
    radar: &RadarParams,
    densities: Densities,
    access_prob: f64,
    l: usize,
    quad: &QuadratureConfig,
) -> Result<(f64, f64), AnalyticsError> {
    let table = moment_table(radar, densities, access_prob, l, quad)?;
    Ok((table.zeta(l)?, table.error(l)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radar() -> RadarParams {
        RadarParams::reference()
    }

    #[test]
    fn noise_only_limits() {
        let quad = QuadratureConfig::default();
        let r = radar();
        let n = r.noise_exponent();
        for densities in [
            Densities::new(0.0, 0.0).unwrap(),
            Densities::new(0.05, 5e-4).unwrap(),
        ] {
            let delta = if densities.vehicle == 0.0 { 0.7 } else { 0.0 };
            let t = moment_table(&r, densities, delta, 5, &quad).unwrap();
            for l in 1..=5 {
                let expect = (-(l as f64) * n).exp();
                assert!((t.zeta(l).unwrap() - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ego_line_matches_closed_form() {
        // alpha = 2, l = 1: int_0^rho c / (z^2 + c) dz = sqrt(c) atan(rho / sqrt(c))
        let r = radar();
        let quad = QuadratureConfig::default();
        let k = MomentKernel::new(r, quad, 2).unwrap();
        let c = r.interference_coeff();
        let s = c.sqrt();
        let rho = quad.truncation_radius;
        let exact1 = s * (rho / s).atan();
        let (j, e) = k.ego_line_integrals();
        assert!(
            (j[0] - exact1).abs() < 1e-9 * exact1,
            "{} vs {}",
            j[0],
            exact1
        );
        assert!(e[0] < 1e-8 * exact1);
        // l = 2: 1 - T^2 = 2c / (z^2 + c) - c^2 / (z^2 + c)^2
        let exact2 = {
            let a = |z: f64| 2.0 * c * (z / s).atan() / s;
            let b = |z: f64| c * c * (z / (2.0 * c * (z * z + c)) + (z / s).atan() / (2.0 * c * s));
            (a(rho) - b(rho)) - (a(0.0) - b(0.0))
        };
        assert!(
            (j[1] - exact2).abs() < 1e-9 * exact2,
            "{} vs {}",
            j[1],
            exact2
        );
    }

    #[test]
    fn infinite_plane_requires_fast_decay() {
        let quad = QuadratureConfig {
            truncation_radius: f64::INFINITY,
            ..QuadratureConfig::default()
        };
        let k = MomentKernel::new(radar(), quad, 3).unwrap();
        let err = k
            .table(Densities::new(0.05, 5e-4).unwrap(), 0.5)
            .unwrap_err();
        assert!(matches!(
            err,
            AnalyticsError::Quadrature(QuadratureError::Divergent(_))
        ));
        // the ego street alone converges: sqrt(c) pi / 2 for l = 1
        let c = radar().interference_coeff();
        let j = k.ego_line_integrals().0[0];
        assert!((j - c.sqrt() * FRAC_PI_2).abs() < 1e-8 * j);
        let mut r = radar();
        r.pathloss_exp = 3.0;
        let k = MomentKernel::new(r, quad, 3).unwrap();
        let t = k.table(Densities::new(0.05, 5e-3).unwrap(), 0.5).unwrap();
        assert!(t.zeta(1).unwrap() > 0.0 && t.zeta(1).unwrap() < 1.0);
    }

    #[test]
    fn table_is_ordered_and_consistent() {
        let r = radar().with_half_beamwidth(25f64.to_radians());
        let quad = QuadratureConfig::default();
        let k = MomentKernel::new(r, quad, 6).unwrap();
        let t = k.table(Densities::new(0.05, 4e-3).unwrap(), 0.5).unwrap();
        let v = t.values();
        for l in 1..v.len() {
            assert!(v[l] <= v[l - 1]);
        }
        assert!(v[1] >= v[0] * v[0]);
        for (z, e) in v.iter().zip(t.errors()) {
            assert!(*e <= 1e-6 * z);
        }
        // the direct wrapper agrees with the kernel
        let (z3, e3) = moment_zeta(&r, t.densities, 0.5, 3, &quad).unwrap();
        assert!((z3 - v[2]).abs() <= e3 + t.errors()[2], "{z3} vs {}", v[2]);
    }
}
