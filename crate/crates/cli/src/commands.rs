//! The four subcommands. Each writes its CSV files through [`Run`] so that
//! every output is checksummed in the manifest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use radar_tracking::analytics::{
    expected_burst_count, expected_max_run, expected_tracking_length, tracking_prob_robust,
    Densities, MomentTable, MAX_POLYNOMIAL_LEN,
};
use radar_tracking::optimizer::{
    candidate_block_lens, lookup_table, objective, required_order, write_table_csv, MomentCache,
};
use radar_tracking::simulator::{estimate_statistics, write_summary_csv, SimSummary};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::manifest::{manifest_name, Manifest, Run};
use crate::CliError;

pub const MOMENTS_FILE: &str = "moments.csv";
pub const TRACKING_FILE: &str = "tracking.csv";
pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const SIMULATION_FILE: &str = "simulation.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TABLE_FILE: &str = "lookup_table.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Moment order that serves blocks of `max_block_len` slots by the exact
/// routes where those exist, and at least `min_order`.
fn order_for(max_block_len: u32, min_order: usize) -> usize {
    (max_block_len.min(MAX_POLYNOMIAL_LEN) as usize + 1).max(min_order)
}

pub fn analyze(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let mac = cfg.mac()?;
    let densities = cfg.densities()?;
    let t = mac.block_len;
    let cache = MomentCache::new(cfg.radar()?, cfg.quadrature(), order_for(t, cfg.max_order))?;
    let table = cache.table(densities, mac.access_prob)?;

    let mut moments = String::from("order,zeta,error\n");
    for (l, (z, e)) in table.values().iter().zip(table.errors()).enumerate() {
        writeln!(moments, "{},{z},{e}", l + 1).unwrap();
    }
    run.write(MOMENTS_FILE, moments.as_bytes())?;

    let mut tracking = String::from(
        "track_len,tracking_prob,error_bound,method,expected_bursts,expected_bursts_error\n",
    );
    for nu in 1..=t {
        let pt = tracking_prob_robust(&table, t, nu, cfg.max_tracking_error)?;
        let bursts = match (
            expected_burst_count(&table, t, nu),
            table.error(nu as usize),
        ) {
            (Ok(b), Ok(e)) => format!("{b},{}", (t - nu + 1) as f64 * e),
            _ => ",".to_string(),
        };
        writeln!(
            tracking,
            "{nu},{},{},{},{bursts}",
            pt.value,
            pt.error_bound,
            pt.method.as_str()
        )
        .unwrap();
    }
    run.write(TRACKING_FILE, tracking.as_bytes())?;

    let mut analysis = String::from("metric,value,error\n");
    writeln!(
        analysis,
        "detection_prob,{},{}",
        table.zeta(1)?,
        table.error(1)?
    )
    .unwrap();
    let nu = mac.track_len;
    let obj = objective(
        &cache,
        densities,
        mac.access_prob,
        mac.num_blocks,
        t,
        nu,
        cfg.max_tracking_error,
    )?;
    writeln!(
        analysis,
        "tracking_prob,{},{}",
        obj.tracking_prob, obj.error_bound
    )
    .unwrap();
    writeln!(
        analysis,
        "frame_objective,{},{}",
        obj.objective, obj.error_bound
    )
    .unwrap();
    if let Ok(b) = expected_burst_count(&table, t, nu) {
        writeln!(
            analysis,
            "expected_bursts,{b},{}",
            (t - nu + 1) as f64 * table.error(nu as usize)?
        )
        .unwrap();
    }
    match expected_tracking_length(&table, t) {
        Ok(len) => {
            let err: f64 = table.errors()[..t as usize].iter().sum::<f64>()
                + t as f64 * table.error(t as usize + 1)?;
            writeln!(analysis, "expected_tracking_length,{len},{err}").unwrap();
        }
        Err(e) => log::warn!("expected tracking length skipped: {e}"),
    }
    let max_run = expected_max_run(&table, t, cfg.max_tracking_error)?;
    writeln!(
        analysis,
        "expected_max_run,{},{}",
        max_run.value, max_run.error_bound
    )
    .unwrap();
    run.write(ANALYSIS_FILE, analysis.as_bytes())?;
    Ok(())
}

fn summary_csv(summary: &SimSummary) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    write_summary_csv(summary, &mut bytes)?;
    Ok(bytes)
}

/// `name -> (value, error)` rows of an analysis CSV.
fn read_metric_csv(text: &str) -> HashMap<String, (f64, f64)> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let mut it = line.split(',');
            let name = it.next()?.to_string();
            let value = it.next()?.parse().ok()?;
            let error = it.next()?.parse().ok()?;
            Some((name, (value, error)))
        })
        .collect()
}

pub fn simulate(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let sim = cfg.sim_config()?;
    let summary = estimate_statistics(&sim)?;
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    run.write(SIMULATION_FILE, &summary_csv(&summary)?)?;

    let dir = run.dir().to_path_buf();
    let (Ok(moments), Ok(analysis)) = (
        std::fs::read_to_string(dir.join(MOMENTS_FILE)),
        std::fs::read_to_string(dir.join(ANALYSIS_FILE)),
    ) else {
        return Ok(());
    };
    if let Ok(text) = std::fs::read_to_string(dir.join(manifest_name("analyze"))) {
        let same = serde_json::from_str::<Manifest>(&text)
            .ok()
            .and_then(|m| RunConfig::from_toml(&m.config).ok())
            .is_some_and(|a| same_model(&a, cfg));
        if !same {
            log::warn!(
                "the analysis in {} was run with a different model; comparing anyway",
                dir.display()
            );
        }
    }
    let zeta = read_metric_csv(&moments);
    let scalars = read_metric_csv(&analysis);
    let mut out = String::from("metric,analytic,analytic_error,empirical,std_error,z_score\n");
    let mut row =
        |name: &str, analytic: Option<&(f64, f64)>, emp: &radar_tracking::simulator::Estimate| {
            if let Some(&(a, ae)) = analytic {
                let z = (emp.value - a) / emp.std_error;
                writeln!(out, "{name},{a},{ae},{},{},{z}", emp.value, emp.std_error).unwrap();
            }
        };
    for (i, e) in summary.zeta_ustat.iter().enumerate() {
        row(
            &format!("zeta_ustat_{}", i + 1),
            zeta.get(&(i + 1).to_string()),
            e,
        );
    }
    for (i, e) in summary.zeta_conditional.iter().enumerate() {
        row(
            &format!("zeta_conditional_{}", i + 1),
            zeta.get(&(i + 1).to_string()),
            e,
        );
    }
    row(
        "tracking_prob",
        scalars.get("tracking_prob"),
        &summary.tracking_prob,
    );
    row(
        "burst_count",
        scalars.get("expected_bursts"),
        &summary.burst_count,
    );
    row(
        "first_run_length",
        scalars.get("expected_tracking_length"),
        &summary.first_run_length,
    );
    row(
        "max_run_mean",
        scalars.get("expected_max_run"),
        &summary.max_run_mean,
    );
    run.write(COMPARISON_FILE, out.as_bytes())?;
    Ok(())
}

/// Same radar, densities and MAC; run settings may differ.
fn same_model(a: &RunConfig, b: &RunConfig) -> bool {
    let model = |c: &RunConfig| (c.radar().ok(), c.densities().ok(), c.mac().ok());
    model(a) == model(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Delta,
    Lambda,
    LambdaL,
    Omega,
    Nu,
    BlockLen,
    Blocks,
}

impl Axis {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "delta" => Axis::Delta,
            "lambda" => Axis::Lambda,
            "lambda_L" => Axis::LambdaL,
            "omega" => Axis::Omega,
            "nu" => Axis::Nu,
            "T" => Axis::BlockLen,
            "N" => Axis::Blocks,
            other => {
                return Err(CliError::Config(format!(
                    "unknown sweep axis `{other}` (expected delta, lambda, lambda_L, omega, nu, T or N)"
                )))
            }
        })
    }

    fn is_integer(&self) -> bool {
        matches!(self, Axis::Nu | Axis::BlockLen | Axis::Blocks)
    }
}

/// One sweep point.
#[derive(Debug, Clone, Copy)]
struct Point {
    delta: f64,
    densities: Densities,
    beamwidth_deg: f64,
    nu: u32,
    block_len: u32,
    blocks: u32,
}

fn sweep_points(cfg: &RunConfig) -> Result<Vec<Point>, CliError> {
    if cfg.sweep_axes.len() > 2 {
        return Err(CliError::Config(format!(
            "at most two sweep axes are supported, got {}",
            cfg.sweep_axes.len()
        )));
    }
    let axes: Vec<Axis> = cfg
        .sweep_axes
        .iter()
        .map(|a| Axis::parse(a))
        .collect::<Result<_, _>>()?;
    if axes.len() == 2 && axes[0] == axes[1] {
        return Err(CliError::Config("the two sweep axes must differ".into()));
    }
    if axes.contains(&Axis::Blocks)
        && axes.contains(&Axis::BlockLen)
        && cfg.latency_deadline_s.is_some()
    {
        return Err(CliError::Config(
            "with latency_deadline_s set, T follows from N; sweep one of them".into(),
        ));
    }
    for (axis, values) in axes.iter().zip(&cfg.sweep_values) {
        for &v in values {
            if axis.is_integer() && !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                return Err(CliError::Config(format!(
                    "sweep value {v} is not a positive integer"
                )));
            }
        }
    }
    let mac = cfg.mac()?;
    let base = Point {
        delta: cfg.access_prob,
        densities: cfg.densities()?,
        beamwidth_deg: cfg.beamwidth_deg,
        nu: mac.track_len,
        block_len: mac.block_len,
        blocks: mac.num_blocks,
    };
    let slots = radar_tracking::analytics::total_slots(cfg.latency_deadline(), cfg.pulse_width_s);
    let apply = |mut p: Point, axis: Axis, v: f64| -> Point {
        match axis {
            Axis::Delta => p.delta = v,
            Axis::Lambda => p.densities.vehicle = v,
            Axis::LambdaL => p.densities.street = v,
            Axis::Omega => p.beamwidth_deg = v,
            Axis::Nu => p.nu = v as u32,
            Axis::BlockLen => p.block_len = v as u32,
            Axis::Blocks => {
                p.blocks = v as u32;
                if cfg.latency_deadline_s.is_some() {
                    p.block_len = slots / p.blocks;
                }
            }
        }
        p
    };
    let mut points = vec![base];
    for (&axis, values) in axes.iter().zip(&cfg.sweep_values) {
        points = points
            .iter()
            .flat_map(|&p| values.iter().map(move |&v| apply(p, axis, v)))
            .collect();
    }
    for p in &points {
        Densities::new(p.densities.vehicle, p.densities.street)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&p.delta) {
            return Err(CliError::Config(format!(
                "sweep delta {} is outside [0, 1]",
                p.delta
            )));
        }
        if !(p.beamwidth_deg > 0.0 && p.beamwidth_deg < 180.0) {
            return Err(CliError::Config(format!(
                "sweep beamwidth {} deg",
                p.beamwidth_deg
            )));
        }
    }
    Ok(points)
}

const SWEEP_HEADER: &str = "delta,lambda,lambda_L,beamwidth_deg,nu,T,N,zeta_1,zeta_1_error,tracking_prob,error_bound,method,objective,sim_tracking_prob,sim_ci_low,sim_ci_high,status";

pub fn sweep(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let points = sweep_points(cfg)?;
    let mut caches: HashMap<u64, Arc<MomentCache>> = HashMap::new();
    let order = required_order(points.iter().map(|p| p.block_len));
    for p in &points {
        if let std::collections::hash_map::Entry::Vacant(slot) =
            caches.entry(p.beamwidth_deg.to_bits())
        {
            let mut c = cfg.clone();
            c.beamwidth_deg = p.beamwidth_deg;
            let cache = MomentCache::new(c.radar()?, cfg.quadrature(), order)?;
            slot.insert(Arc::new(cache));
        }
    }
    let stride = if cfg.spot_check_fraction > 0.0 {
        Some((1.0 / cfg.spot_check_fraction).ceil() as usize)
    } else {
        None
    };
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<String, CliError> {
            let cache = &caches[&p.beamwidth_deg.to_bits()];
            let mut line = format!(
                "{},{},{},{},{},{},{},",
                p.delta,
                p.densities.vehicle,
                p.densities.street,
                p.beamwidth_deg,
                p.nu,
                p.block_len,
                p.blocks
            );
            if p.block_len < p.nu || p.blocks == 0 {
                line.push_str(",,,,,,,,,infeasible: T < nu");
                return Ok(line);
            }
            let table: Arc<MomentTable> = cache.table(p.densities, p.delta)?;
            let obj = objective(
                cache,
                p.densities,
                p.delta,
                p.blocks,
                p.block_len,
                p.nu,
                cfg.max_tracking_error,
            )?;
            write!(
                line,
                "{},{},{},{},{},{},",
                table.zeta(1)?,
                table.error(1)?,
                obj.tracking_prob,
                obj.error_bound,
                obj.method.as_str(),
                obj.objective
            )
            .unwrap();
            match stride {
                Some(s) if i % s == 0 => {
                    let mut c = cfg.clone();
                    c.access_prob = p.delta;
                    c.vehicle_density_per_m = p.densities.vehicle;
                    c.street_density_per_m = p.densities.street;
                    c.beamwidth_deg = p.beamwidth_deg;
                    c.track_len_slots = p.nu;
                    c.block_len_slots = p.block_len;
                    c.latency_deadline_s = None;
                    let mut sim = c.sim_config()?;
                    sim.max_order = sim.max_order.min(p.block_len as usize);
                    let s = estimate_statistics(&sim)?;
                    write!(
                        line,
                        "{},{},{},ok",
                        s.tracking_prob.value, s.tracking_prob.ci_low, s.tracking_prob.ci_high
                    )
                    .unwrap();
                }
                _ => line.push_str(",,,ok"),
            }
            Ok(line)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    run.write(SWEEP_FILE, csv.as_bytes())?;
    Ok(())
}

pub fn optimize(cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let search = cfg.search()?;
    let use_cases = cfg.use_cases();
    let grid = cfg.density_grid()?;
    let order = required_order(
        use_cases
            .iter()
            .flat_map(|u| candidate_block_lens(u, &search)),
    );
    let cache = MomentCache::new(cfg.radar()?, cfg.quadrature(), order)?;
    let rows = lookup_table(&use_cases, &cache, &grid, &search)?;
    let mut table = Vec::new();
    write_table_csv(&rows, &mut table)?;
    run.write(TABLE_FILE, &table)?;

    let mut trace = String::from("use_case,lambda,lambda_L,delta,N,T,objective\n");
    for row in &rows {
        let Some(design) = &row.design else { continue };
        for p in &design.trace {
            writeln!(
                trace,
                "{},{},{},{},{},{},{}",
                row.use_case.replace(',', ";"),
                row.densities.vehicle,
                row.densities.street,
                p.delta,
                p.num_blocks,
                p.block_len,
                p.objective
            )
            .unwrap();
        }
    }
    run.write(TRACE_FILE, trace.as_bytes())?;
    Ok(())
}
