//! Monte Carlo oracle: network realizations, block-ALOHA activation and
//! slot-by-slot SINR with Swerling-I target and Rayleigh interference fading.
//!
//! Every realization `i` draws from its own ChaCha8 stream `(master_seed, i)`.
//! Activation uses one uniform per candidate interferer and block and fading is
//! drawn for every candidate in every slot, active or not, so runs that differ
//! only in `delta` share their random numbers.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::analytics::{
    binomial, detection_prob_conditional, run_ccdf_demoivre, run_ccdf_dp, AnalyticsError,
    Densities, MacParams, RadarParams,
};
use crate::geometry::{
    interferer_set, sample_network, GeometryError, InterferenceMode, Interferer,
    NetworkRealization, SeedRecord,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub sinr: f64,
    pub detected: bool,
}

/// One block of `T` slots of the ego radar, which is active by conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub active: bool,
    pub slots: Vec<SlotOutcome>,
    /// Slot `T + 1` under the same activation, used to tell whether the first
    /// run of detections ends inside the block.
    pub lookahead: SlotOutcome,
    pub max_run: u32,
    /// Number of detections before the first missed slot.
    pub first_run: u32,
    /// Windows of `nu` consecutive detections, `<= T - nu + 1`.
    pub burst_count_at_nu: u32,
    /// Detection probability given this block's activation set.
    pub conditional_pd: f64,
    pub active_interferers: usize,
}

impl BlockTrace {
    pub fn detections(&self) -> u32 {
        self.slots.iter().filter(|s| s.detected).count() as u32
    }

    /// Realization of the first-run length counted by the expected tracking
    /// length: the leading run if a missed slot ends it within `T + 1` slots,
    /// and 0 otherwise.
    pub fn terminated_first_run(&self) -> u32 {
        let t = self.slots.len() as u32;
        if self.first_run < t || !self.lookahead.detected {
            self.first_run
        } else {
            0
        }
    }
}

/// `(max_run, first_run, windows of nu detections)` of a detection sequence.
pub fn run_statistics(detected: &[bool], nu: u32) -> (u32, u32, u32) {
    let mut run = 0u32;
    let mut max_run = 0;
    let mut bursts = 0;
    for &d in detected {
        if d {
            run += 1;
            max_run = max_run.max(run);
            if run >= nu {
                bursts += 1;
            }
        } else {
            run = 0;
        }
    }
    let first_run = detected.iter().take_while(|d| **d).count() as u32;
    (max_run, first_run, bursts)
}

/// Precomputed powers of a fixed interferer geometry.
struct SlotModel {
    mean_signal: f64,
    noise: f64,
    threshold: f64,
    interference: Vec<f64>,
}

impl SlotModel {
    fn new(radar: &RadarParams, distances: &[f64]) -> Self {
        Self {
            mean_signal: radar.mean_signal_w(),
            noise: radar.noise_power_w(),
            threshold: radar.detect_threshold,
            interference: distances.iter().map(|&d| radar.interference_w(d)).collect(),
        }
    }

    fn slot<R: Rng + ?Sized>(&self, active: &[bool], rng: &mut R) -> SlotOutcome {
        let rcs: f64 = Exp1.sample(rng);
        let signal = self.mean_signal * rcs;
        let mut interference = 0.0;
        for (&p, &on) in self.interference.iter().zip(active) {
            let h: f64 = Exp1.sample(rng);
            if on {
                interference += p * h;
            }
        }
        let sinr = signal / (self.noise + interference);
        SlotOutcome {
            sinr,
            detected: sinr >= self.threshold,
        }
    }
}

/// One slot with fresh target and interference fading.
pub fn simulate_slot<R: Rng + ?Sized>(
    radar: &RadarParams,
    distances: &[f64],
    active: &[bool],
    rng: &mut R,
) -> SlotOutcome {
    SlotModel::new(radar, distances).slot(active, rng)
}

fn block_for<R: Rng + ?Sized>(
    model: &SlotModel,
    radar: &RadarParams,
    distances: &[f64],
    mac: &MacParams,
    active: &mut Vec<bool>,
    rng: &mut R,
) -> BlockTrace {
    active.clear();
    active.extend(
        distances
            .iter()
            .map(|_| rng.random::<f64>() < mac.access_prob),
    );
    let slots: Vec<SlotOutcome> = (0..mac.block_len)
        .map(|_| model.slot(active, rng))
        .collect();
    let lookahead = model.slot(active, rng);
    let detected: Vec<bool> = slots.iter().map(|s| s.detected).collect();
    let (max_run, first_run, burst_count_at_nu) = run_statistics(&detected, mac.track_len);
    BlockTrace {
        active: true,
        slots,
        lookahead,
        max_run,
        first_run,
        burst_count_at_nu,
        conditional_pd: detection_prob_conditional(radar, distances, active),
        active_interferers: active.iter().filter(|a| **a).count(),
    }
}

/// One block on a fixed realization: activation drawn once for the block,
/// fading drawn per slot.
pub fn simulate_block<R: Rng + ?Sized>(
    net: &NetworkRealization,
    radar: &RadarParams,
    mac: &MacParams,
    mode: InterferenceMode,
    rng: &mut R,
) -> BlockTrace {
    let distances: Vec<f64> = interferer_set(net, radar, mode)
        .iter()
        .map(|i| i.distance)
        .collect();
    let model = SlotModel::new(radar, &distances);
    block_for(&model, radar, &distances, mac, &mut Vec::new(), rng)
}

/// Settings of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub radar: RadarParams,
    pub densities: Densities,
    pub mac: MacParams,
    pub mode: InterferenceMode,
    pub num_realizations: usize,
    pub blocks_per_realization: usize,
    pub window_radius: f64,
    /// Highest moment order estimated.
    pub max_order: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Two-sided confidence level of the reported intervals.
    pub confidence: f64,
    /// Levels at which the meta-distribution is tabulated.
    pub beta_grid: Vec<f64>,
}

impl SimConfig {
    pub fn new(
        radar: RadarParams,
        densities: Densities,
        mac: MacParams,
        mode: InterferenceMode,
    ) -> Self {
        Self {
            radar,
            densities,
            mac,
            mode,
            num_realizations: 1000,
            blocks_per_realization: 10,
            window_radius: 2000.0,
            max_order: 6,
            master_seed: 0,
            threads: None,
            confidence: 0.95,
            beta_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        self.radar.validate()?;
        let bad = |name, value: f64| Err(SimError::InvalidConfig { name, value });
        if self.num_realizations == 0 {
            return bad("num_realizations", 0.0);
        }
        if self.blocks_per_realization == 0 {
            return bad("blocks_per_realization", 0.0);
        }
        if self.max_order == 0 {
            return bad("max_order", 0.0);
        }
        if !(self.window_radius.is_finite() && self.window_radius > 0.0) {
            return bad("window_radius", self.window_radius);
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence", self.confidence);
        }
        if let Some(&b) = self.beta_grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return bad("beta", b);
        }
        if self.threads == Some(0) {
            return bad("threads", 0.0);
        }
        Ok(())
    }
}

/// Mean with a confidence interval; `n` counts the underlying blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Estimate {
    /// Whether `x` is within `k` standard errors.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (x - self.value).abs() <= k * self.std_error
    }
}

/// Result of [`estimate_statistics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub num_realizations: usize,
    /// Moments from the detection frequency `k / T` of each block, `(k/T)^l`.
    pub zeta_plugin: Vec<Estimate>,
    /// Unbiased moments `C(k, l) / C(T, l)`, for `l <= T`.
    pub zeta_ustat: Vec<Estimate>,
    /// Moments of the exact per-block detection probability.
    pub zeta_conditional: Vec<Estimate>,
    /// `P(max_run >= nu)` for `nu = 1..=T`.
    pub max_run_ccdf: Vec<Estimate>,
    pub tracking_prob: Estimate,
    pub burst_count: Estimate,
    /// Mean of [`BlockTrace::terminated_first_run`].
    pub first_run_length: Estimate,
    pub max_run_mean: Estimate,
    pub mean_interferers: Estimate,
    /// Per-block detection probability, in realization-major order.
    pub pd_samples: Vec<f64>,
    pub meta_distribution: Vec<(f64, Estimate)>,
    pub warnings: Vec<String>,
}

struct Layout {
    orders: usize,
    ustat: usize,
    block_len: usize,
}

impl Layout {
    fn plugin(&self, l: usize) -> usize {
        l - 1
    }
    fn ustat(&self, l: usize) -> usize {
        self.orders + l - 1
    }
    fn conditional(&self, l: usize) -> usize {
        self.orders + self.ustat + l - 1
    }
    fn ccdf(&self, nu: usize) -> usize {
        2 * self.orders + self.ustat + nu - 1
    }
    fn scalar(&self, k: usize) -> usize {
        2 * self.orders + self.ustat + self.block_len + k
    }
    fn len(&self) -> usize {
        self.scalar(SCALARS)
    }
}

const BURST: usize = 0;
const FIRST_RUN: usize = 1;
const MAX_RUN: usize = 2;
const INTERFERERS: usize = 3;
const SCALARS: usize = 4;

struct RealizationResult {
    means: Vec<f64>,
    pd: Vec<f64>,
}

fn simulate_realization(
    cfg: &SimConfig,
    layout: &Layout,
    index: usize,
) -> Result<RealizationResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(index as u64);
    let seed = SeedRecord {
        master_seed: cfg.master_seed,
        stream: index as u64,
    };
    let net = sample_network(cfg.densities, cfg.window_radius, seed, &mut rng)?;
    let distances: Vec<f64> = interferer_set(&net, &cfg.radar, cfg.mode)
        .iter()
        .map(|i: &Interferer| i.distance)
        .collect();
    let model = SlotModel::new(&cfg.radar, &distances);
    let t = cfg.mac.block_len as usize;
    let mut sums = vec![0.0; layout.len()];
    let mut pd = Vec::with_capacity(cfg.blocks_per_realization);
    let mut active = Vec::with_capacity(distances.len());
    let ustat_norm: Vec<f64> = (1..=layout.ustat)
        .map(|l| binomial(t as u64, l as u64))
        .collect();
    for _ in 0..cfg.blocks_per_realization {
        let block = block_for(
            &model,
            &cfg.radar,
            &distances,
            &cfg.mac,
            &mut active,
            &mut rng,
        );
        let k = block.detections() as usize;
        let freq = k as f64 / t as f64;
        for l in 1..=layout.orders {
            sums[layout.plugin(l)] += freq.powi(l as i32);
            sums[layout.conditional(l)] += block.conditional_pd.powi(l as i32);
        }
        for l in 1..=layout.ustat {
            sums[layout.ustat(l)] += binomial(k as u64, l as u64) / ustat_norm[l - 1];
        }
        for nu in 1..=(block.max_run as usize).min(t) {
            sums[layout.ccdf(nu)] += 1.0;
        }
        sums[layout.scalar(BURST)] += block.burst_count_at_nu as f64;
        sums[layout.scalar(FIRST_RUN)] += block.terminated_first_run() as f64;
        sums[layout.scalar(MAX_RUN)] += block.max_run as f64;
        sums[layout.scalar(INTERFERERS)] += block.active_interferers as f64;
        pd.push(block.conditional_pd);
    }
    let b = cfg.blocks_per_realization as f64;
    Ok(RealizationResult {
        means: sums.into_iter().map(|s| s / b).collect(),
        pd,
    })
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean over realizations with a realization-clustered standard error.
fn cluster_estimate(
    results: &[RealizationResult],
    index: usize,
    z: f64,
    blocks: usize,
) -> Estimate {
    let r = results.len() as f64;
    let mean = compensated_sum(results.iter().map(|x| x.means[index])) / r;
    let var = if results.len() > 1 {
        compensated_sum(results.iter().map(|x| (x.means[index] - mean).powi(2))) / (r - 1.0)
    } else {
        f64::INFINITY
    };
    let std_error = (var / r).sqrt();
    Estimate {
        value: mean,
        std_error,
        ci_low: mean - z * std_error,
        ci_high: mean + z * std_error,
        n: results.len() * blocks,
    }
}

fn ccdf_value(p: f64, block_len: u32, track_len: u32) -> f64 {
    run_ccdf_demoivre(p, block_len, track_len)
        .or_else(|_| run_ccdf_dp(p, block_len, track_len))
        .unwrap_or(0.0)
}

/// Fraction of per-block detection probabilities whose run-length CCDF at
/// `nu` is at least `beta`, for every `beta` in `beta_grid`, with normal
/// intervals at the summary's confidence level.
pub fn empirical_meta_distribution(
    summary: &SimSummary,
    nu: u32,
    beta_grid: &[f64],
) -> Result<Vec<(f64, Estimate)>, SimError> {
    let t = summary.config.mac.block_len;
    if nu == 0 || nu > t {
        return Err(SimError::InvalidConfig {
            name: "track_len",
            value: nu as f64,
        });
    }
    let mut f: Vec<f64> = summary
        .pd_samples
        .iter()
        .map(|&p| ccdf_value(p, t, nu))
        .collect();
    f.sort_by(f64::total_cmp);
    let n = f.len();
    let z = normal_quantile(summary.config.confidence);
    Ok(beta_grid
        .iter()
        .map(|&beta| {
            let below = f.partition_point(|&x| x < beta);
            let m = if n == 0 {
                0.0
            } else {
                (n - below) as f64 / n as f64
            };
            let se = if n == 0 {
                0.0
            } else {
                (m * (1.0 - m) / n as f64).sqrt()
            };
            (
                beta,
                Estimate {
                    value: m,
                    std_error: se,
                    ci_low: (m - z * se).max(0.0),
                    ci_high: (m + z * se).min(1.0),
                    n,
                },
            )
        })
        .collect())
}

fn normal_quantile(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + confidence / 2.0)
}

/// Run the Monte Carlo estimation. Results are bit-identical for a given
/// `master_seed` whatever the number of threads.
pub fn estimate_statistics(cfg: &SimConfig) -> Result<SimSummary, SimError> {
    cfg.validate()?;
    let t = cfg.mac.block_len as usize;
    let layout = Layout {
        orders: cfg.max_order,
        ustat: cfg.max_order.min(t),
        block_len: t,
    };
    let run = || -> Result<Vec<RealizationResult>, SimError> {
        (0..cfg.num_realizations)
            .into_par_iter()
            .map(|i| simulate_realization(cfg, &layout, i))
            .collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let z = normal_quantile(cfg.confidence);
    let b = cfg.blocks_per_realization;
    let est = |i| cluster_estimate(&results, i, z, b);
    let nu = cfg.mac.track_len as usize;
    let mut warnings = Vec::new();
    if cfg.num_realizations < 30 {
        warnings.push(format!(
            "only {} realizations: intervals rely on a normal approximation that needs more",
            cfg.num_realizations
        ));
    }
    let pd_samples: Vec<f64> = results.iter().flat_map(|r| r.pd.iter().copied()).collect();
    let mut summary = SimSummary {
        config: cfg.clone(),
        num_realizations: cfg.num_realizations,
        zeta_plugin: (1..=layout.orders).map(|l| est(layout.plugin(l))).collect(),
        zeta_ustat: (1..=layout.ustat).map(|l| est(layout.ustat(l))).collect(),
        zeta_conditional: (1..=layout.orders)
            .map(|l| est(layout.conditional(l)))
            .collect(),
        max_run_ccdf: (1..=t).map(|v| est(layout.ccdf(v))).collect(),
        tracking_prob: est(layout.ccdf(nu)),
        burst_count: est(layout.scalar(BURST)),
        first_run_length: est(layout.scalar(FIRST_RUN)),
        max_run_mean: est(layout.scalar(MAX_RUN)),
        mean_interferers: est(layout.scalar(INTERFERERS)),
        pd_samples,
        meta_distribution: Vec::new(),
        warnings,
    };
    summary.meta_distribution =
        empirical_meta_distribution(&summary, cfg.mac.track_len, &cfg.beta_grid)?;
    Ok(summary)
}

fn write_row<W: Write>(w: &mut W, metric: &str, e: &Estimate) -> std::io::Result<()> {
    writeln!(w, "{metric},{},{},{},{}", e.value, e.ci_low, e.ci_high, e.n)
}

/// CSV with columns `metric,value,ci_low,ci_high,n`.
pub fn write_summary_csv<W: Write>(summary: &SimSummary, mut w: W) -> Result<(), SimError> {
    writeln!(w, "metric,value,ci_low,ci_high,n")?;
    for (l, e) in summary.zeta_plugin.iter().enumerate() {
        write_row(&mut w, &format!("zeta_plugin_{}", l + 1), e)?;
    }
    for (l, e) in summary.zeta_ustat.iter().enumerate() {
        write_row(&mut w, &format!("zeta_ustat_{}", l + 1), e)?;
    }
    for (l, e) in summary.zeta_conditional.iter().enumerate() {
        write_row(&mut w, &format!("zeta_conditional_{}", l + 1), e)?;
    }
    for (nu, e) in summary.max_run_ccdf.iter().enumerate() {
        write_row(&mut w, &format!("max_run_ccdf_{}", nu + 1), e)?;
    }
    write_row(&mut w, "tracking_prob", &summary.tracking_prob)?;
    write_row(&mut w, "burst_count", &summary.burst_count)?;
    write_row(&mut w, "first_run_length", &summary.first_run_length)?;
    write_row(&mut w, "max_run_mean", &summary.max_run_mean)?;
    write_row(&mut w, "mean_active_interferers", &summary.mean_interferers)?;
    for (beta, e) in &summary.meta_distribution {
        write_row(&mut w, &format!("meta_distribution_{beta}"), e)?;
    }
    Ok(())
}

/// Mean interference from radars between `window_radius` and twice that
/// distance, which a simulation in the smaller window leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCheck {
    pub annulus_interference_w: f64,
    pub total_interference_w: f64,
    pub noise_power_w: f64,
    /// Annulus interference relative to noise.
    pub noise_ratio: f64,
    /// Mean change of `ln P_d` caused by the annulus interferers.
    pub ln_pd_effect: f64,
}

impl AnnulusCheck {
    /// Whether the omitted interference is below `1e-3` of the noise power.
    pub fn within_noise_budget(&self) -> bool {
        self.noise_ratio < 1e-3
    }
}

/// Sample `realizations` networks in a window of twice the radius and measure
/// what the outer annulus contributes, averaging over the activation.
pub fn annulus_check(
    radar: &RadarParams,
    densities: Densities,
    access_prob: f64,
    mode: InterferenceMode,
    window_radius: f64,
    realizations: usize,
    master_seed: u64,
) -> Result<AnnulusCheck, SimError> {
    radar.validate()?;
    if realizations == 0 {
        return Err(SimError::InvalidConfig {
            name: "realizations",
            value: 0.0,
        });
    }
    let c = radar.interference_coeff();
    let parts: Vec<(f64, f64, f64)> = (0..realizations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(i as u64);
            let seed = SeedRecord {
                master_seed,
                stream: i as u64,
            };
            let net = sample_network(densities, 2.0 * window_radius, seed, &mut rng)?;
            let (mut outer, mut total, mut ln_effect) = (0.0, 0.0, 0.0);
            for w in interferer_set(&net, radar, mode) {
                let p = access_prob * radar.interference_w(w.distance);
                total += p;
                if w.distance > window_radius {
                    outer += p;
                    ln_effect += access_prob * (c * w.distance.powf(-radar.pathloss_exp)).ln_1p();
                }
            }
            Ok((outer, total, ln_effect))
        })
        .collect::<Result<_, SimError>>()?;
    let r = realizations as f64;
    let annulus = compensated_sum(parts.iter().map(|p| p.0)) / r;
    let total = compensated_sum(parts.iter().map(|p| p.1)) / r;
    let ln_pd_effect = compensated_sum(parts.iter().map(|p| p.2)) / r;
    let noise = radar.noise_power_w();
    Ok(AnnulusCheck {
        annulus_interference_w: annulus,
        total_interference_w: total,
        noise_power_w: noise,
        noise_ratio: annulus / noise,
        ln_pd_effect,
    })
}
