//! Frame design: choose the access probability `delta` and the number of
//! blocks `N` that maximize `(1 - (1 - delta)^N) P_t` within a latency
//! deadline.
//!
//! A deadline of `T_L` seconds holds `S = floor(T_L / W)` slots. With `N`
//! blocks each block gets `T = floor(S / N)` slots, so the blocks always tile
//! the deadline. For every candidate `N` the objective is scanned on a
//! uniform `delta` grid and, if the scan is unimodal, polished by a
//! golden-section search around the grid maximizer.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    total_slots, tracking_prob_robust, AnalyticsError, Densities, MomentKernel, MomentTable,
    QuadratureConfig, RadarParams, TrackingMethod, DEFAULT_MAX_TRACKING_ERROR, MAX_POLYNOMIAL_LEN,
};

/// Default slot duration, seconds.
pub const DEFAULT_PULSE_WIDTH_S: f64 = 200e-6;

/// Objective values closer than this are treated as equal when checking the
/// shape of a scan.
const SHAPE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("infeasible frame: {reason}")]
    Infeasible { reason: String },
    #[error("invalid search setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// A service with a latency deadline and a required run of detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseSpec {
    pub name: String,
    /// Deadline `T_L` over the radio link, seconds.
    pub latency_deadline_s: f64,
    /// Consecutive detections required, `nu`.
    pub track_len: u32,
}

impl UseCaseSpec {
    pub fn new(name: impl Into<String>, latency_deadline_s: f64, track_len: u32) -> Self {
        Self {
            name: name.into(),
            latency_deadline_s,
            track_len,
        }
    }

    /// Slots in the deadline.
    pub fn total_slots(&self, pulse_width_s: f64) -> u32 {
        total_slots(self.latency_deadline_s, pulse_width_s)
    }

    /// Largest number of blocks that still leaves `nu` slots per block.
    pub fn max_blocks(&self, pulse_width_s: f64) -> u32 {
        if self.track_len == 0 {
            return 0;
        }
        self.total_slots(pulse_width_s) / self.track_len
    }

    fn check(&self, pulse_width_s: f64) -> Result<(), OptimizeError> {
        if !(self.latency_deadline_s.is_finite() && self.latency_deadline_s > 0.0) {
            return Err(OptimizeError::Infeasible {
                reason: format!("latency deadline {} s", self.latency_deadline_s),
            });
        }
        if self.track_len == 0 {
            return Err(OptimizeError::Infeasible {
                reason: "reliability of 0 slots".to_string(),
            });
        }
        if self.max_blocks(pulse_width_s) == 0 {
            return Err(OptimizeError::Infeasible {
                reason: format!(
                    "{} s holds {} slots but nu = {}",
                    self.latency_deadline_s,
                    self.total_slots(pulse_width_s),
                    self.track_len
                ),
            });
        }
        Ok(())
    }
}

/// The use cases of the indicative automotive service table.
pub fn automotive_use_cases() -> Vec<UseCaseSpec> {
    vec![
        UseCaseSpec::new("Adaptive Cruise Control", 0.100, 10),
        UseCaseSpec::new("Automatic Emergency Braking", 0.050, 15),
        UseCaseSpec::new("Blind Spot Detection", 0.200, 5),
        UseCaseSpec::new("Lane Change Assistance", 0.100, 15),
        UseCaseSpec::new("Pedestrian Detection", 0.050, 15),
        UseCaseSpec::new("Park Assist", 0.100, 1),
        UseCaseSpec::new("Intersection Management", 0.050, 15),
    ]
}

/// Candidate numbers of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSchedule {
    /// Every `N` in `1..=floor(S / nu)`.
    Full,
    /// Powers of two, each halving the block length.
    Halving,
    /// One block spanning the whole deadline.
    Single,
}

impl BlockSchedule {
    pub fn candidates(&self, max_blocks: u32) -> Vec<u32> {
        match self {
            Self::Full => (1..=max_blocks).collect(),
            Self::Halving => std::iter::successors(Some(1u32), |n| n.checked_mul(2))
                .take_while(|n| *n <= max_blocks)
                .collect(),
            Self::Single => (1..=max_blocks.min(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub schedule: BlockSchedule,
    /// Spacing of the `delta` grid on `[0, 1]`.
    pub delta_step: f64,
    /// Polish unimodal scans with golden-section search.
    pub refine: bool,
    /// Width of the final golden-section bracket.
    pub refine_tol: f64,
    pub pulse_width_s: f64,
    /// Largest error bound accepted from the exact tracking routes before
    /// the Beta approximation is used.
    pub max_tracking_error: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            schedule: BlockSchedule::Full,
            delta_step: 0.01,
            refine: true,
            refine_tol: 1e-4,
            pulse_width_s: DEFAULT_PULSE_WIDTH_S,
            max_tracking_error: DEFAULT_MAX_TRACKING_ERROR,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let checks = [
            (
                "delta_step",
                self.delta_step,
                self.delta_step > 0.0 && self.delta_step <= 1.0,
            ),
            ("refine_tol", self.refine_tol, self.refine_tol > 0.0),
            (
                "pulse_width_s",
                self.pulse_width_s,
                self.pulse_width_s > 0.0,
            ),
            (
                "max_tracking_error",
                self.max_tracking_error,
                self.max_tracking_error >= 0.0,
            ),
        ];
        for (name, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(OptimizeError::InvalidConfig { name, value });
            }
        }
        Ok(())
    }

    /// `0, h, 2h, ..., 1` with `h` the step rounded so that 1 is on the grid.
    pub fn delta_grid(&self) -> Vec<f64> {
        let n = (1.0 / self.delta_step).round().max(1.0) as u32;
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }
}

/// Moment order needed to evaluate blocks of the given lengths: `T + 1` for
/// blocks the exact routes can handle, 2 for the Beta approximation beyond.
pub fn required_order(block_lens: impl IntoIterator<Item = u32>) -> usize {
    block_lens
        .into_iter()
        .map(|t| {
            if t <= MAX_POLYNOMIAL_LEN {
                t as usize + 1
            } else {
                2
            }
        })
        .max()
        .unwrap_or(1)
}

/// Block lengths the search visits for a use case.
pub fn candidate_block_lens(use_case: &UseCaseSpec, search: &SearchConfig) -> Vec<u32> {
    let slots = use_case.total_slots(search.pulse_width_s);
    search
        .schedule
        .candidates(use_case.max_blocks(search.pulse_width_s))
        .into_iter()
        .map(|n| slots / n)
        .collect()
}

/// Moment tables shared across block counts, keyed by `(delta, densities)`.
///
/// Safe for concurrent use; two threads computing the same key insert
/// identical tables.
#[derive(Debug)]
pub struct MomentCache {
    kernel: MomentKernel,
    tables: RwLock<HashMap<[u64; 3], Arc<MomentTable>>>,
}

impl MomentCache {
    pub fn new(
        radar: RadarParams,
        quad: QuadratureConfig,
        max_order: usize,
    ) -> Result<Self, AnalyticsError> {
        Ok(Self::from_kernel(MomentKernel::new(
            radar, quad, max_order,
        )?))
    }

    /// A cache whose tables serve blocks of up to `max_block_len` slots
    /// with the exact routes where those are available.
    pub fn for_block_len(
        radar: RadarParams,
        quad: QuadratureConfig,
        max_block_len: u32,
    ) -> Result<Self, AnalyticsError> {
        let order = max_block_len.min(MAX_POLYNOMIAL_LEN) as usize + 1;
        Self::new(radar, quad, order)
    }

    pub fn from_kernel(kernel: MomentKernel) -> Self {
        Self {
            kernel,
            tables: RwLock::new(HashMap::new()),
        }
    }

    pub fn kernel(&self) -> &MomentKernel {
        &self.kernel
    }

    pub fn radar(&self) -> &RadarParams {
        self.kernel.radar()
    }

    pub fn len(&self) -> usize {
        self.tables.read().expect("table cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn table(
        &self,
        densities: Densities,
        delta: f64,
    ) -> Result<Arc<MomentTable>, AnalyticsError> {
        // +0.0 folds -0.0 onto the same key
        let key = [
            (delta + 0.0).to_bits(),
            densities.vehicle.to_bits(),
            densities.street.to_bits(),
        ];
        if let Some(t) = self.tables.read().expect("table cache lock").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(self.kernel.table(densities, delta)?);
        self.tables
            .write()
            .expect("table cache lock")
            .insert(key, Arc::clone(&table));
        Ok(table)
    }
}

/// One evaluated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub delta: f64,
    pub num_blocks: u32,
    pub block_len: u32,
    pub objective: f64,
}

/// Objective and the tracking probability behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub tracking_prob: f64,
    pub error_bound: f64,
    pub method: TrackingMethod,
}

/// `(1 - (1 - delta)^N) P_t(delta, T, nu)`.
pub fn objective(
    cache: &MomentCache,
    densities: Densities,
    delta: f64,
    num_blocks: u32,
    block_len: u32,
    track_len: u32,
    max_tracking_error: f64,
) -> Result<Evaluation, OptimizeError> {
    if track_len == 0 || block_len < track_len {
        return Err(OptimizeError::Infeasible {
            reason: format!("block of {block_len} slots cannot hold a run of {track_len}"),
        });
    }
    if num_blocks == 0 {
        return Err(OptimizeError::Infeasible {
            reason: "no access blocks".to_string(),
        });
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(AnalyticsError::InvalidParameter {
            name: "access_prob",
            value: delta,
        }
        .into());
    }
    let table = cache.table(densities, delta)?;
    let pt = tracking_prob_robust(&table, block_len, track_len, max_tracking_error)?;
    let access = -(num_blocks as f64 * (-delta).ln_1p()).exp_m1();
    let access = if delta == 1.0 { 1.0 } else { access };
    Ok(Evaluation {
        objective: (access * pt.value).clamp(0.0, 1.0),
        tracking_prob: pt.value,
        error_bound: pt.error_bound,
        method: pt.method,
    })
}

/// Best `delta` for a fixed frame `(N, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSearch {
    pub delta: f64,
    pub objective: f64,
    pub method: TrackingMethod,
    /// Grid points followed by the refined point, if any.
    pub trace: Vec<(f64, f64)>,
    pub unimodal: bool,
    pub refined: bool,
}

/// Unimodal up to ties: non-decreasing up to the first maximum and
/// non-increasing after it.
pub fn is_unimodal(values: &[f64]) -> bool {
    let Some(peak) = argmax(values) else {
        return true;
    };
    values[..=peak]
        .windows(2)
        .all(|w| w[1] >= w[0] - SHAPE_TOLERANCE)
        && values[peak..]
            .windows(2)
            .all(|w| w[1] <= w[0] + SHAPE_TOLERANCE)
}

/// Index of the largest value; the last one on exact ties, which favours
/// larger access probabilities.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v >= values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Grid scan over `delta` followed by golden-section refinement when the
/// scan is unimodal. A non-unimodal scan keeps the grid maximizer and is
/// logged.
pub fn optimize_delta(
    cache: &MomentCache,
    densities: Densities,
    num_blocks: u32,
    block_len: u32,
    track_len: u32,
    search: &SearchConfig,
) -> Result<DeltaSearch, OptimizeError> {
    search.validate()?;
    let grid = search.delta_grid();
    let eval = |d: f64| {
        objective(
            cache,
            densities,
            d,
            num_blocks,
            block_len,
            track_len,
            search.max_tracking_error,
        )
    };
    let evals = grid
        .par_iter()
        .map(|&d| eval(d))
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = evals.iter().map(|e| e.objective).collect();
    let mut trace: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    let peak = argmax(&values).expect("grid is never empty");
    let unimodal = is_unimodal(&values);
    let mut best = (grid[peak], evals[peak]);
    let mut refined = false;
    if !unimodal {
        log::warn!(
            "objective over delta is not unimodal (N = {num_blocks}, T = {block_len}, nu = {track_len}); keeping the grid maximizer"
        );
    } else if search.refine && grid.len() > 1 {
        let lo = grid[peak.saturating_sub(1)];
        let hi = grid[(peak + 1).min(grid.len() - 1)];
        let (d, e) = golden_section(lo, hi, search.refine_tol, eval)?;
        trace.push((d, e.objective));
        refined = true;
        if e.objective > best.1.objective {
            best = (d, e);
        }
    }
    Ok(DeltaSearch {
        delta: best.0,
        objective: best.1.objective,
        method: best.1.method,
        trace,
        unimodal,
        refined,
    })
}

/// Maximizer of `f` on `[lo, hi]`, bracketed to width `tol`; the
/// endpoints are candidates too so a boundary maximum is found exactly.
fn golden_section<F>(lo: f64, hi: f64, tol: f64, f: F) -> Result<(f64, Evaluation), OptimizeError>
where
    F: Fn(f64) -> Result<Evaluation, OptimizeError>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc.objective >= fd.objective {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc.objective >= fd.objective {
        (c, fc)
    } else {
        (d, fd)
    };
    for x in [lo, hi] {
        let fx = f(x)?;
        if fx.objective > best.1.objective {
            best = (x, fx);
        }
    }
    Ok(best)
}

/// Jointly optimal `(delta, N)` with the full search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDesign {
    pub delta: f64,
    pub num_blocks: u32,
    pub block_len: u32,
    pub objective: f64,
    pub method: TrackingMethod,
    /// Every scan over `delta` was unimodal.
    pub unimodal: bool,
    pub trace: Vec<TracePoint>,
}

impl FrameDesign {
    /// Slots used by the frame, `N T`.
    pub fn used_slots(&self) -> u64 {
        self.num_blocks as u64 * self.block_len as u64
    }
}

/// Maximizes `(1 - (1 - delta)^N) P_t` over the block schedule and `delta`.
pub fn optimize(
    use_case: &UseCaseSpec,
    cache: &MomentCache,
    densities: Densities,
    search: &SearchConfig,
) -> Result<FrameDesign, OptimizeError> {
    search.validate()?;
    use_case.check(search.pulse_width_s)?;
    let slots = use_case.total_slots(search.pulse_width_s);
    let mut best: Option<FrameDesign> = None;
    let mut trace = Vec::new();
    let mut unimodal = true;
    for n in search
        .schedule
        .candidates(use_case.max_blocks(search.pulse_width_s))
    {
        let t = slots / n;
        let r = optimize_delta(cache, densities, n, t, use_case.track_len, search)?;
        unimodal &= r.unimodal;
        trace.extend(r.trace.iter().map(|&(delta, objective)| TracePoint {
            delta,
            num_blocks: n,
            block_len: t,
            objective,
        }));
        // strict improvement keeps the smallest N on ties
        if best.as_ref().is_none_or(|b| r.objective > b.objective) {
            best = Some(FrameDesign {
                delta: r.delta,
                num_blocks: n,
                block_len: t,
                objective: r.objective,
                method: r.method,
                unimodal: true,
                trace: Vec::new(),
            });
        }
    }
    let mut design = best.expect("feasible use case has at least one block count");
    design.unimodal = unimodal;
    design.trace = trace;
    Ok(design)
}

/// One row of a use-case lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub use_case: String,
    pub densities: Densities,
    /// `None` for an infeasible use case.
    pub design: Option<FrameDesign>,
    /// `ok`, or the reason the row has no design.
    pub status: String,
}

/// Optimal frame per use case and density pair. Infeasible use cases yield
/// a flagged row rather than an error.
pub fn lookup_table(
    use_cases: &[UseCaseSpec],
    cache: &MomentCache,
    density_grid: &[Densities],
    search: &SearchConfig,
) -> Result<Vec<TableRow>, OptimizeError> {
    search.validate()?;
    let mut rows = Vec::with_capacity(use_cases.len() * density_grid.len());
    for uc in use_cases {
        for &densities in density_grid {
            let row = match optimize(uc, cache, densities, search) {
                Ok(design) => TableRow {
                    use_case: uc.name.clone(),
                    densities,
                    design: Some(design),
                    status: "ok".to_string(),
                },
                Err(OptimizeError::Infeasible { reason }) => TableRow {
                    use_case: uc.name.clone(),
                    densities,
                    design: None,
                    status: format!("infeasible: {reason}"),
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub const TABLE_HEADER: &str =
    "use_case,lambda,lambda_L,delta_star,N_star,T,objective,method,unimodal,status";

/// Writes the table as CSV; infeasible rows leave the design columns empty.
pub fn write_table_csv<W: Write>(rows: &[TableRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for row in rows {
        let name = csv_field(&row.use_case);
        let status = csv_field(&row.status);
        let (lambda, lambda_l) = (row.densities.vehicle, row.densities.street);
        match &row.design {
            Some(d) => writeln!(
                w,
                "{name},{lambda},{lambda_l},{},{},{},{},{},{},{status}",
                d.delta,
                d.num_blocks,
                d.block_len,
                d.objective,
                d.method.as_str(),
                d.unimodal
            )?,
            None => writeln!(w, "{name},{lambda},{lambda_l},,,,,,,{status}")?,
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_only_cache(max_block_len: u32) -> MomentCache {
        MomentCache::for_block_len(
            RadarParams::reference(),
            QuadratureConfig::default(),
            max_block_len,
        )
        .unwrap()
    }

    fn empty() -> Densities {
        Densities::new(0.0, 0.0).unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(BlockSchedule::Full.candidates(4), vec![1, 2, 3, 4]);
        assert_eq!(BlockSchedule::Halving.candidates(20), vec![1, 2, 4, 8, 16]);
        assert!(BlockSchedule::Halving.candidates(0).is_empty());
        assert_eq!(BlockSchedule::Single.candidates(9), vec![1]);
        assert!(BlockSchedule::Single.candidates(0).is_empty());
    }

    #[test]
    fn orders_follow_the_tracking_route() {
        assert_eq!(required_order([20, 5]), 21);
        assert_eq!(required_order([250]), 2);
        assert_eq!(required_order([250, 64]), 65);
        assert_eq!(required_order([]), 1);
        let uc = UseCaseSpec::new("x", 0.05, 15);
        let search = SearchConfig {
            schedule: BlockSchedule::Halving,
            ..Default::default()
        };
        assert_eq!(
            candidate_block_lens(&uc, &search),
            vec![250, 125, 62, 31, 15]
        );
    }

    #[test]
    fn grid_hits_both_ends() {
        let g = SearchConfig::default().delta_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 1.0);
        let coarse = SearchConfig {
            delta_step: 0.3,
            ..Default::default()
        };
        assert_eq!(coarse.delta_grid(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn objective_edges() {
        let cache = noise_only_cache(20);
        let dens = Densities::new(0.05, 0.0).unwrap();
        let zero = objective(&cache, dens, 0.0, 3, 20, 6, 1e-6).unwrap();
        assert_eq!(zero.objective, 0.0);
        for n in [1, 2, 5] {
            let full = objective(&cache, dens, 1.0, n, 20, 6, 1e-6).unwrap();
            assert_eq!(full.objective, full.tracking_prob);
        }
        assert!(matches!(
            objective(&cache, dens, 0.5, 1, 5, 6, 1e-6),
            Err(OptimizeError::Infeasible { .. })
        ));
    }

    #[test]
    fn access_factor() {
        let cache = noise_only_cache(10);
        let e = objective(&cache, empty(), 0.3, 4, 10, 2, 1e-6).unwrap();
        let expected = (1.0 - 0.7f64.powi(4)) * e.tracking_prob;
        assert!((e.objective - expected).abs() < 1e-15);
    }

    #[test]
    fn unimodality() {
        assert!(is_unimodal(&[0.0, 0.1, 0.3, 0.3, 0.2]));
        assert!(is_unimodal(&[0.0, 0.1, 0.2]));
        assert!(is_unimodal(&[]));
        assert!(!is_unimodal(&[0.0, 0.3, 0.1, 0.2]));
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), Some(2));
    }

    fn eval_of(objective: f64) -> Result<Evaluation, OptimizeError> {
        Ok(Evaluation {
            objective,
            tracking_prob: 1.0,
            error_bound: 0.0,
            method: TrackingMethod::Demoivre,
        })
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, _) =
            golden_section(0.5, 0.6, 1e-6, |x| eval_of(1.0 - (x - 0.537).powi(2))).unwrap();
        assert!((x - 0.537).abs() < 1e-6);
        let (x, _) = golden_section(0.9, 1.0, 1e-6, eval_of).unwrap();
        assert_eq!(x, 1.0);
    }

    #[test]
    fn no_interference_gives_full_access() {
        let cache = noise_only_cache(64);
        let uc = UseCaseSpec::new("test", 0.004, 4);
        let d = optimize(&uc, &cache, empty(), &SearchConfig::default()).unwrap();
        assert_eq!(d.delta, 1.0);
        assert_eq!(d.num_blocks, 1);
        assert_eq!(d.block_len, 20);
        assert!(d.unimodal);
    }

    #[test]
    fn design_is_consistent_with_trace() {
        let cache = noise_only_cache(30);
        let dens = Densities::new(0.05, 0.0).unwrap();
        let uc = UseCaseSpec::new("test", 0.006, 6);
        let search = SearchConfig {
            delta_step: 0.05,
            ..Default::default()
        };
        let d = optimize(&uc, &cache, dens, &search).unwrap();
        let max = d
            .trace
            .iter()
            .map(|p| p.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(d.objective, max);
        let slots = uc.total_slots(search.pulse_width_s) as u64;
        for p in &d.trace {
            assert!(p.block_len >= uc.track_len);
            assert!(p.num_blocks as u64 * p.block_len as u64 <= slots);
            assert!((0.0..=1.0).contains(&p.objective));
        }
        assert!(d.used_slots() <= slots);
        // tables are reused across block counts
        assert!(cache.len() <= search.delta_grid().len() + 2 * 5 * 12);
    }

    #[test]
    fn infeasible_rows_are_flagged() {
        let cache = noise_only_cache(10);
        let uc = [
            UseCaseSpec::new("too short", 0.0005, 4),
            UseCaseSpec::new("fine", 0.002, 2),
        ];
        let search = SearchConfig {
            delta_step: 0.25,
            ..Default::default()
        };
        let rows = lookup_table(&uc, &cache, &[empty()], &search).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].design.is_none());
        assert!(rows[0].status.starts_with("infeasible"));
        assert_eq!(rows[1].status, "ok");
        assert!(lookup_table(&[], &cache, &[empty()], &search)
            .unwrap()
            .is_empty());

        let mut csv = Vec::new();
        write_table_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines[1].split(',').count(), lines[0].split(',').count());
        assert!(lines[1].starts_with("too short,0,0,,,,"));
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
