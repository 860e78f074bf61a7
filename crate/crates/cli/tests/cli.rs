use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radar_tracking::analytics::{run_ccdf_dp, RadarParams};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const BASE: &str = r#"
tx_power_dbm = 10.0
antenna_gain_dbi = 10.0
carrier_freq_ghz = 76.5
mean_rcs_dbsm = 30.0
pathloss_exp = 2.0
noise_psd_dbm_per_hz = -174.0
target_range_m = 15.0
beamwidth_deg = 10.0
vehicle_density_per_m = 0.05
street_density_per_m = 0.0005
access_prob = 0.5
block_len_slots = 20
track_len_slots = 6
realizations = 10
blocks_per_realization = 2
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str) -> Output {
        Command::new(env!("CARGO_BIN_EXE_radartrack"))
            .args(args)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str], out: &str) -> PathBuf {
        let o = self.run(args, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        self.out(out)
    }
}

fn with(extra: &str) -> String {
    format!("{BASE}{extra}\n")
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

fn manifest(dir: &Path, command: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, &format!("{command}.manifest.json"))).unwrap()
}

#[test]
fn missing_key_is_a_config_error_naming_the_key() {
    let config = BASE.replace("target_range_m = 15.0\n", "");
    let ws = Workspace::new(&config);
    let o = ws.run(&["analyze"], "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target_range_m"));
}

#[test]
fn three_sweep_axes_are_rejected() {
    let ws = Workspace::new(&with(
        "sweep_axes = [\"delta\", \"nu\", \"T\"]\nsweep_values = [[0.5], [4.0], [20.0]]",
    ));
    assert_eq!(ws.run(&["sweep"], "out").status.code(), Some(2));
}

#[test]
fn unknown_mode_is_rejected() {
    let ws = Workspace::new(BASE);
    assert_eq!(
        ws.run(&["analyze", "--mode", "nearest"], "out")
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn empty_sweep_axis_gives_header_only() {
    let ws = Workspace::new(&with("sweep_axes = [\"delta\"]\nsweep_values = [[]]"));
    let dir = ws.ok(&["sweep"], "out");
    let text = read(&dir, "sweep.csv");
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("delta,"));
}

#[test]
fn sweep_covers_the_cross_product() {
    let ws = Workspace::new(&with(
        "sweep_axes = [\"delta\", \"nu\"]\nsweep_values = [[0.2, 0.6, 1.0], [4.0, 6.0]]",
    ));
    let dir = ws.ok(&["sweep"], "out");
    let text = read(&dir, "sweep.csv");
    assert_eq!(text.lines().count(), 1 + 6);
    for line in text.lines().skip(1) {
        let p: f64 = line.split(',').nth(9).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn noise_only_analysis_matches_bernoulli_runs() {
    let config = BASE
        .replace(
            "vehicle_density_per_m = 0.05",
            "vehicle_density_per_m = 0.0",
        )
        .replace(
            "street_density_per_m = 0.0005",
            "street_density_per_m = 0.0",
        );
    let ws = Workspace::new(&config);
    let dir = ws.ok(&["analyze"], "out");
    let p = (-RadarParams::reference().noise_exponent()).exp();
    let text = read(&dir, "tracking.csv");
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 20);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let nu: u32 = cols[0].parse().unwrap();
        let pt: f64 = cols[1].parse().unwrap();
        assert!(
            (pt - run_ccdf_dp(p, 20, nu).unwrap()).abs() < 1e-9,
            "nu={nu}"
        );
    }
}

#[test]
fn reruns_are_byte_identical_and_checksummed() {
    let ws = Workspace::new(BASE);
    let a = ws.ok(&["analyze", "--seed", "4"], "a");
    ws.ok(&["simulate", "--seed", "4"], "a");
    let b = ws.ok(&["analyze", "--seed", "4"], "b");
    ws.ok(&["simulate", "--seed", "4", "--threads", "2"], "b");
    for file in [
        "moments.csv",
        "tracking.csv",
        "analysis.csv",
        "simulation.csv",
        "comparison.csv",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    for command in ["analyze", "simulate"] {
        let m = manifest(&a, command);
        assert_eq!(m["seed"], 4);
        let outputs = m["outputs"].as_array().unwrap();
        assert!(!outputs.is_empty());
        for o in outputs {
            let bytes = fs::read(a.join(o["file"].as_str().unwrap())).unwrap();
            assert_eq!(o["bytes"], bytes.len());
            assert_eq!(
                o["sha256"].as_str().unwrap(),
                hex::encode(Sha256::digest(&bytes))
            );
        }
    }
}

#[test]
fn both_interferer_modes_run_and_are_recorded() {
    let ws = Workspace::new(BASE);
    for mode in ["lemma1", "def1"] {
        let dir = ws.ok(&["simulate", "--mode", mode], mode);
        assert_eq!(manifest(&dir, "simulate")["mode"], mode);
    }
}

#[test]
fn small_simulation_reports_intervals() {
    let ws = Workspace::new(BASE);
    let dir = ws.ok(&["simulate"], "out");
    let text = read(&dir, "simulation.csv");
    assert_eq!(
        text.lines().next().unwrap(),
        "metric,value,ci_low,ci_high,n"
    );
    let row = text
        .lines()
        .find(|l| l.starts_with("tracking_prob,"))
        .unwrap();
    let cols: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert!(cols[1] <= cols[0] && cols[0] <= cols[2]);
    assert_eq!(cols[3], 20.0);
}

#[test]
fn optimize_regenerates_the_same_table() {
    let ws = Workspace::new(&with(
        "delta_step = 0.1\nblock_schedule = \"single\"\n\
         use_case_names = [\"Park Assist\", \"impossible\"]\n\
         use_case_deadlines_s = [0.1, 0.0002]\n\
         use_case_track_lens_slots = [1, 3]",
    ));
    let a = ws.ok(&["optimize"], "a");
    let b = ws.ok(&["optimize"], "b");
    let table = fs::read(a.join("lookup_table.csv")).unwrap();
    assert_eq!(table, fs::read(b.join("lookup_table.csv")).unwrap());
    let text = String::from_utf8(table).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text
        .lines()
        .any(|l| l.starts_with("Park Assist,") && l.contains(",1,")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("impossible,") && l.contains("infeasible")));
}

#[test]
fn shipped_reference_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let ws = Workspace::new(&fs::read_to_string(path).unwrap());
    let dir = ws.ok(&["analyze"], "out");
    let text = read(&dir, "analysis.csv");
    assert!(text.lines().any(|l| l.starts_with("tracking_prob,")));
}
