//! Run configuration: a flat TOML table whose keys carry their unit.
//!
//! Decibel quantities are converted to linear SI values in
//! [`RunConfig::radar`] and nowhere else.

use std::path::Path;

use radar_tracking::analytics::{
    Densities, MacParams, QuadratureConfig, RadarParams, DEFAULT_THRESHOLD_DB,
};
use radar_tracking::geometry::InterferenceMode;
use radar_tracking::optimizer::{automotive_use_cases, BlockSchedule, SearchConfig, UseCaseSpec};
use radar_tracking::simulator::SimConfig;
use radar_tracking::units::{db_to_linear, dbm_to_watts};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_threshold_db() -> f64 {
    DEFAULT_THRESHOLD_DB
}
fn default_one() -> f64 {
    1.0
}
fn default_pulse_width() -> f64 {
    200e-6
}
fn default_mode() -> String {
    "lemma1".to_string()
}
fn default_max_order() -> usize {
    6
}
fn default_realizations() -> usize {
    1000
}
fn default_blocks() -> usize {
    10
}
fn default_window() -> f64 {
    2000.0
}
fn default_confidence() -> f64 {
    0.95
}
fn default_delta_step() -> f64 {
    0.01
}
fn default_schedule() -> String {
    "full".to_string()
}
fn default_true() -> bool {
    true
}
fn default_tracking_error() -> f64 {
    radar_tracking::analytics::DEFAULT_MAX_TRACKING_ERROR
}

/// Every setting of a run. Keys without a default are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // radar
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
    pub carrier_freq_ghz: f64,
    pub mean_rcs_dbsm: f64,
    pub pathloss_exp: f64,
    pub noise_psd_dbm_per_hz: f64,
    /// Defaults to the inverse pulse width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bandwidth_hz: Option<f64>,
    pub target_range_m: f64,
    pub beamwidth_deg: f64,
    #[serde(default = "default_threshold_db")]
    pub detect_threshold_db: f64,
    #[serde(default = "default_one")]
    pub interference_scale: f64,

    // network
    pub vehicle_density_per_m: f64,
    pub street_density_per_m: f64,

    // MAC
    pub access_prob: f64,
    pub block_len_slots: u32,
    pub track_len_slots: u32,
    #[serde(default = "default_pulse_width")]
    pub pulse_width_s: f64,
    /// Defaults to one block, `T W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_deadline_s: Option<f64>,

    // run
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_max_order")]
    pub max_order: usize,

    // quadrature
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius_m: Option<f64>,
    #[serde(default = "default_tracking_error")]
    pub max_tracking_error: f64,

    // simulation
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_blocks")]
    pub blocks_per_realization: usize,
    #[serde(default = "default_window")]
    pub window_radius_m: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,

    // sweep
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_axes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_values: Vec<Vec<f64>>,
    /// Share of sweep points that are also simulated.
    #[serde(default)]
    pub spot_check_fraction: f64,

    // optimize
    #[serde(default = "default_delta_step")]
    pub delta_step: f64,
    #[serde(default = "default_schedule")]
    pub block_schedule: String,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub use_case_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub use_case_deadlines_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub use_case_track_lens_slots: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_vehicle_density_per_m: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_street_density_per_m: Vec<f64>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.radar()?.validate().map_err(config_err)?;
        self.densities()?;
        self.mac()?;
        self.interference_mode()?;
        self.schedule()?;
        if self.max_order == 0 {
            return Err(CliError::Config("max_order must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.spot_check_fraction) {
            return Err(CliError::Config(format!(
                "spot_check_fraction = {} is outside [0, 1]",
                self.spot_check_fraction
            )));
        }
        let n = self.use_case_names.len();
        if self.use_case_deadlines_s.len() != n || self.use_case_track_lens_slots.len() != n {
            return Err(CliError::Config(
                "use_case_names, use_case_deadlines_s and use_case_track_lens_slots need equal lengths".into(),
            ));
        }
        if self.sweep_axes.len() != self.sweep_values.len() {
            return Err(CliError::Config(
                "sweep_axes and sweep_values need equal lengths".into(),
            ));
        }
        self.search()?;
        self.quadrature().validate().map_err(config_err)?;
        Ok(())
    }

    pub fn radar(&self) -> Result<RadarParams, CliError> {
        let radar = RadarParams {
            tx_power_w: dbm_to_watts(self.tx_power_dbm),
            antenna_gain: db_to_linear(self.antenna_gain_dbi),
            carrier_freq_hz: self.carrier_freq_ghz * 1e9,
            mean_rcs_m2: db_to_linear(self.mean_rcs_dbsm),
            pathloss_exp: self.pathloss_exp,
            // dBm/Hz to W/Hz
            noise_density_w_per_hz: dbm_to_watts(self.noise_psd_dbm_per_hz),
            noise_bandwidth_hz: self.noise_bandwidth_hz.unwrap_or(1.0 / self.pulse_width_s),
            half_beamwidth_rad: (self.beamwidth_deg / 2.0).to_radians(),
            target_range_m: self.target_range_m,
            detect_threshold: db_to_linear(self.detect_threshold_db),
            interference_scale: self.interference_scale,
        };
        radar.validate().map_err(config_err)?;
        Ok(radar)
    }

    pub fn densities(&self) -> Result<Densities, CliError> {
        Densities::new(self.vehicle_density_per_m, self.street_density_per_m).map_err(config_err)
    }

    pub fn latency_deadline(&self) -> f64 {
        self.latency_deadline_s
            .unwrap_or(self.block_len_slots as f64 * self.pulse_width_s)
    }

    pub fn mac(&self) -> Result<MacParams, CliError> {
        MacParams::new(
            self.access_prob,
            self.block_len_slots,
            self.track_len_slots,
            self.latency_deadline(),
            self.pulse_width_s,
        )
        .map_err(config_err)
    }

    pub fn interference_mode(&self) -> Result<InterferenceMode, CliError> {
        self.mode.parse().map_err(CliError::Config)
    }

    pub fn schedule(&self) -> Result<BlockSchedule, CliError> {
        match self.block_schedule.as_str() {
            "full" => Ok(BlockSchedule::Full),
            "halving" => Ok(BlockSchedule::Halving),
            "single" => Ok(BlockSchedule::Single),
            other => Err(CliError::Config(format!(
                "block_schedule = `{other}` (expected full, halving or single)"
            ))),
        }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        let d = QuadratureConfig::default();
        QuadratureConfig {
            rel_tol: self.quad_rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.quad_abs_tol.unwrap_or(d.abs_tol),
            truncation_radius: self.truncation_radius_m.unwrap_or(d.truncation_radius),
            ..d
        }
    }

    pub fn search(&self) -> Result<SearchConfig, CliError> {
        let s = SearchConfig {
            schedule: self.schedule()?,
            delta_step: self.delta_step,
            refine: self.refine,
            pulse_width_s: self.pulse_width_s,
            max_tracking_error: self.max_tracking_error,
            ..SearchConfig::default()
        };
        s.validate().map_err(config_err)?;
        Ok(s)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let mut sim = SimConfig::new(
            self.radar()?,
            self.densities()?,
            self.mac()?,
            self.interference_mode()?,
        );
        sim.num_realizations = self.realizations;
        sim.blocks_per_realization = self.blocks_per_realization;
        sim.window_radius = self.window_radius_m;
        sim.max_order = self.max_order;
        sim.master_seed = self.seed;
        sim.threads = self.threads;
        sim.confidence = self.confidence;
        Ok(sim)
    }

    /// Configured use cases, or the built-in automotive set when none are given.
    pub fn use_cases(&self) -> Vec<UseCaseSpec> {
        if self.use_case_names.is_empty() {
            return automotive_use_cases();
        }
        self.use_case_names
            .iter()
            .zip(&self.use_case_deadlines_s)
            .zip(&self.use_case_track_lens_slots)
            .map(|((name, &deadline), &nu)| UseCaseSpec::new(name.clone(), deadline, nu))
            .collect()
    }

    /// Cross product of the density grids; each defaults to the single
    /// configured density.
    pub fn density_grid(&self) -> Result<Vec<Densities>, CliError> {
        let vehicles = if self.grid_vehicle_density_per_m.is_empty() {
            vec![self.vehicle_density_per_m]
        } else {
            self.grid_vehicle_density_per_m.clone()
        };
        let streets = if self.grid_street_density_per_m.is_empty() {
            vec![self.street_density_per_m]
        } else {
            self.grid_street_density_per_m.clone()
        };
        let mut grid = Vec::with_capacity(vehicles.len() * streets.len());
        for &l in &vehicles {
            for &ll in &streets {
                grid.push(Densities::new(l, ll).map_err(config_err)?);
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REFERENCE: &str = r#"
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
"#;

    #[test]
    fn reference_matches_library_defaults() {
        let cfg = RunConfig::from_toml(REFERENCE).unwrap();
        let radar = cfg.radar().unwrap();
        let lib = RadarParams::reference();
        for (a, b) in [
            (radar.tx_power_w, lib.tx_power_w),
            (radar.antenna_gain, lib.antenna_gain),
            (radar.mean_rcs_m2, lib.mean_rcs_m2),
            (radar.noise_density_w_per_hz, lib.noise_density_w_per_hz),
            (radar.noise_bandwidth_hz, lib.noise_bandwidth_hz),
            (radar.half_beamwidth_rad, lib.half_beamwidth_rad),
            (radar.detect_threshold, lib.detect_threshold),
        ] {
            assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
        }
        assert_eq!(cfg.mac().unwrap().num_blocks, 1);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::from_toml(REFERENCE).unwrap();
        cfg.sweep_axes = vec!["delta".into()];
        cfg.sweep_values = vec![vec![0.1, 0.30000000000000004]];
        cfg.threads = Some(3);
        cfg.latency_deadline_s = Some(0.05);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let extra = format!("{REFERENCE}\ntx_power_w = 0.01\n");
        let err = RunConfig::from_toml(&extra).unwrap_err().to_string();
        assert!(err.contains("tx_power_w"), "{err}");
        let missing = REFERENCE.replace("target_range_m = 15.0\n", "");
        let err = RunConfig::from_toml(&missing).unwrap_err().to_string();
        assert!(err.contains("target_range_m"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("access_prob = 0.5", "access_prob = 1.5"),
            ("track_len_slots = 6", "track_len_slots = 30"),
            ("beamwidth_deg = 10.0", "beamwidth_deg = 190.0"),
        ] {
            let text = REFERENCE.replace(from, to);
            assert!(
                matches!(RunConfig::from_toml(&text), Err(CliError::Config(_))),
                "{to}"
            );
        }
        let text = format!("{REFERENCE}\nmode = \"exact\"\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn density_grid_is_a_cross_product() {
        let mut cfg = RunConfig::from_toml(REFERENCE).unwrap();
        cfg.grid_vehicle_density_per_m = vec![0.01, 0.02, 0.03];
        cfg.grid_street_density_per_m = vec![0.004, 0.006];
        let grid = cfg.density_grid().unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[1], Densities::new(0.01, 0.006).unwrap());
        assert_eq!(cfg.use_cases().len(), 7);
    }
}
