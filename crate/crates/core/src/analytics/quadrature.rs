//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature for vector-valued
//! integrands, with the semi-infinite map `x = a + t / (1 - t)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerances and limits for every quadrature in the analytics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections applied to any initial interval.
    pub max_depth: u32,
    /// Radius of the disc around the ego radar beyond which vehicles are not
    /// counted. `f64::INFINITY` integrates the unbounded plane, which only
    /// converges for path-loss exponents above 2.
    pub truncation_radius: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            max_depth: 40,
            truncation_radius: 2000.0,
        }
    }
}

impl QuadratureConfig {
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }

    /// Stable textual identity of the configuration.
    pub fn fingerprint(&self) -> String {
        format!(
            "gk21;rel={:e};abs={:e};depth={};radius={}",
            self.rel_tol, self.abs_tol, self.max_depth, self.truncation_radius
        )
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(QuadratureError::InvalidConfig(
                "tolerances must be positive",
            ));
        }
        if self.max_depth == 0 {
            return Err(QuadratureError::InvalidConfig("max_depth must be positive"));
        }
        if !(self.truncation_radius > 0.0) {
            return Err(QuadratureError::InvalidConfig(
                "truncation radius must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error(
        "quadrature did not converge: error {error:e} above tolerance after {intervals} intervals"
    )]
    NonConvergence { error: f64, intervals: usize },
    #[error("integrand is not finite at x = {0}")]
    NonFinite(f64),
    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("integral diverges: {0}")]
    Divergent(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
}

impl Integral {
    pub fn max_error(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

struct Segment {
    lo: f64,
    hi: f64,
    depth: u32,
    value: Vec<f64>,
    error: Vec<f64>,
    key: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

/// Integrand in the (possibly mapped) integration variable.
struct Mapped<'a, F> {
    f: &'a mut F,
    base: f64,
    infinite: bool,
}

impl<F: FnMut(f64, &mut [f64])> Mapped<'_, F> {
    fn eval(&mut self, t: f64, out: &mut [f64]) -> Result<(), QuadratureError> {
        if self.infinite {
            let s = 1.0 - t;
            let x = self.base + t / s;
            (self.f)(x, out);
            let jac = 1.0 / (s * s);
            for v in out.iter_mut() {
                *v *= jac;
            }
        } else {
            (self.f)(t, out);
        }
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            let _ = bad;
            return Err(QuadratureError::NonFinite(t));
        }
        Ok(())
    }
}

fn gk21<F: FnMut(f64, &mut [f64])>(
    f: &mut Mapped<'_, F>,
    lo: f64,
    hi: f64,
    dim: usize,
    buf: &mut [f64],
) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f.eval(center, buf)?;
    for i in 0..dim {
        kronrod[i] = WGK[10] * buf[i];
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        for x in [center - dx, center + dx] {
            f.eval(x, buf)?;
            for i in 0..dim {
                kronrod[i] += WGK[j] * buf[i];
                if j % 2 == 1 {
                    gauss[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let mut error = vec![0.0; dim];
    for i in 0..dim {
        kronrod[i] *= half;
        gauss[i] *= half;
        error[i] = (kronrod[i] - gauss[i]).abs();
    }
    Ok((kronrod, error))
}

fn converged(value: &[f64], error: &[f64], cfg: &QuadratureConfig) -> bool {
    value
        .iter()
        .zip(error)
        .all(|(v, e)| *e <= cfg.abs_tol.max(cfg.rel_tol * v.abs()))
}

/// Integrate a vector-valued `f` over `[a, b]` (`b` may be `+inf`), starting
/// from the given interior breakpoints.
pub fn integrate_vec<F>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    dim: usize,
    cfg: &QuadratureConfig,
) -> Result<Integral, QuadratureError>
where
    F: FnMut(f64, &mut [f64]),
{
    integrate_vec_aux(f, a, b, breakpoints, dim, dim, cfg)
}

/// Like [`integrate_vec`], but only the first `checked` components steer the
/// refinement; the rest are integrated along (e.g. propagated error terms).
pub fn integrate_vec_aux<F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    dim: usize,
    checked: usize,
    cfg: &QuadratureConfig,
) -> Result<Integral, QuadratureError>
where
    F: FnMut(f64, &mut [f64]),
{
    cfg.validate()?;
    let checked = checked.min(dim);
    if !(b > a) {
        return Ok(Integral {
            value: vec![0.0; dim],
            error: vec![0.0; dim],
            evaluations: 0,
        });
    }
    let infinite = b.is_infinite();
    let map = |x: f64| if infinite { (x - a) / (1.0 + x - a) } else { x };
    let (lo, hi) = if infinite { (0.0, 1.0) } else { (a, b) };
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| *x > a && *x < b)
        .map(map)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(hi);

    let mut mapped = Mapped {
        f: &mut f,
        base: a,
        infinite,
    };
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; dim];
    let mut total_err = vec![0.0; dim];
    let mut evaluations = 0usize;
    for w in edges.windows(2) {
        let (value, error) = gk21(&mut mapped, w[0], w[1], dim, &mut buf)?;
        evaluations += 21;
        for i in 0..dim {
            total[i] += value[i];
            total_err[i] += error[i];
        }
        let key = error[..checked].iter().copied().fold(0.0, f64::max);
        heap.push(Segment {
            lo: w[0],
            hi: w[1],
            depth: 0,
            value,
            error,
            key,
        });
    }

    let max_segments = 64 * cfg.max_depth as usize + edges.len();
    while !converged(&total[..checked], &total_err[..checked], cfg) {
        let Some(seg) = heap.pop() else { break };
        if seg.depth >= cfg.max_depth || heap.len() >= max_segments {
            heap.push(seg);
            let error = total_err[..checked].iter().copied().fold(0.0, f64::max);
            return Err(QuadratureError::NonConvergence {
                error,
                intervals: heap.len(),
            });
        }
        let mid = 0.5 * (seg.lo + seg.hi);
        for i in 0..dim {
            total[i] -= seg.value[i];
            total_err[i] -= seg.error[i];
        }
        for (lo, hi) in [(seg.lo, mid), (mid, seg.hi)] {
            let (value, error) = gk21(&mut mapped, lo, hi, dim, &mut buf)?;
            evaluations += 21;
            for i in 0..dim {
                total[i] += value[i];
                total_err[i] += error[i];
            }
            let key = error[..checked].iter().copied().fold(0.0, f64::max);
            heap.push(Segment {
                lo,
                hi,
                depth: seg.depth + 1,
                value,
                error,
                key,
            });
        }
    }
    // re-sum to shed the cancellation accumulated by the running totals
    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    for s in &segs {
        for i in 0..dim {
            value[i] += s.value[i];
            error[i] += s.error[i];
        }
    }
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

/// Scalar convenience wrapper, returns `(value, error)`.
pub fn integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<(f64, f64), QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out| out[0] = f(x), a, b, breakpoints, 1, cfg)?;
    Ok((r.value[0], r.error[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn polynomials_are_exact() {
        for k in 0..=19 {
            let (v, _) = integrate(|x| x.powi(k), 0.0, 1.0, &[], &cfg()).unwrap();
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "x^{k}: {v}");
        }
    }

    #[test]
    fn smooth_and_peaked() {
        let (v, e) = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, &[], &cfg()).unwrap();
        assert!((v - 2.0).abs() < 1e-13 && e < 1e-8);
        // 1 / (1 + x^2) over [0, inf) = pi/2
        let (v, e) = integrate(|x| 1.0 / (1.0 + x * x), 0.0, f64::INFINITY, &[], &cfg()).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-10, "{v} {e}");
        // narrow Lorentzian needing refinement
        let w = 1e-3;
        let (v, _) = integrate(|x| w / (w * w + (x - 0.3).powi(2)), 0.0, 1.0, &[], &cfg()).unwrap();
        let exact = (0.7f64 / w).atan() + (0.3f64 / w).atan();
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn vector_components_converge_together() {
        let r = integrate_vec(
            |x, out| {
                out[0] = x;
                out[1] = (-x).exp();
            },
            0.0,
            f64::INFINITY,
            &[1.0, 10.0],
            2,
            &QuadratureConfig::default(),
        );
        // x over [0, inf) diverges: the map leaves a non-integrable endpoint
        assert!(r.is_err());
        let r = integrate_vec(
            |x, out| {
                out[0] = (-x).exp();
                out[1] = (-2.0 * x).exp();
            },
            0.0,
            f64::INFINITY,
            &[1.0],
            2,
            &cfg(),
        )
        .unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-10);
        assert!((r.value[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn error_estimate_brackets_truth() {
        let loose = QuadratureConfig {
            rel_tol: 1e-5,
            ..cfg()
        };
        let (v, e) = integrate(|x| (3.0 * x).cos() * (-x).exp(), 0.0, 5.0, &[], &loose).unwrap();
        let exact = {
            // integral of e^{-x} cos 3x = e^{-x}(3 sin 3x - cos 3x)/10
            let g = |x: f64| (-x).exp() * (3.0 * (3.0 * x).sin() - (3.0 * x).cos()) / 10.0;
            g(5.0) - g(0.0)
        };
        assert!((v - exact).abs() <= e.max(1e-15));
    }

    #[test]
    fn empty_and_invalid() {
        let (v, e) = integrate(|x| x, 1.0, 1.0, &[], &cfg()).unwrap();
        assert_eq!((v, e), (0.0, 0.0));
        let bad = QuadratureConfig {
            rel_tol: 0.0,
            ..cfg()
        };
        assert!(integrate(|x| x, 0.0, 1.0, &[], &bad).is_err());
        assert!(matches!(
            integrate(|x| 1.0 / x, 0.0, 1.0, &[], &cfg()),
            Err(QuadratureError::NonConvergence { .. }) | Err(QuadratureError::NonFinite(_))
        ));
    }
}
