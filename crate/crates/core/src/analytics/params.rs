use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::units::{db_to_linear, dbm_to_watts, SPEED_OF_LIGHT};

/// Physical-layer constants of every radar in the network, in linear SI units.
///
/// The same radar model is shared by the quadrature analytics and the Monte
/// Carlo simulator. Reflected power is `radar_const * rcs * P * R^(-2 alpha)`;
/// interference from a radar at distance `d` is
/// `interference_scale * radar_const * P * h * d^(-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    /// Transmit power P, watts.
    pub tx_power_w: f64,
    /// Transmit antenna gain G_t, linear.
    pub antenna_gain: f64,
    /// Carrier frequency f_c, Hz.
    pub carrier_freq_hz: f64,
    /// Mean target RCS, m^2 (Swerling-I mean).
    pub mean_rcs_m2: f64,
    /// Path-loss exponent alpha.
    pub pathloss_exp: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_density_w_per_hz: f64,
    /// Noise bandwidth, Hz.
    pub noise_bandwidth_hz: f64,
    /// Half of the beamwidth Omega, radians.
    pub half_beamwidth_rad: f64,
    /// Target range R, meters.
    pub target_range_m: f64,
    /// Detection threshold on the linear SINR.
    pub detect_threshold: f64,
    /// Multiplier on the interference term (1 for the canonical model).
    pub interference_scale: f64,
}

impl RadarParams {
    /// 76.5 GHz automotive radar: 10 dBm, 10 dBi, 30 dBsm mean RCS, alpha = 2,
    /// -174 dBm/Hz over 5 kHz (1 / 200 us), 10 degree beam, R = 15 m,
    /// 2.5 dB detection threshold.
    pub fn reference() -> Self {
        Self {
            tx_power_w: dbm_to_watts(10.0),
            antenna_gain: db_to_linear(10.0),
            carrier_freq_hz: 76.5e9,
            mean_rcs_m2: db_to_linear(30.0),
            pathloss_exp: 2.0,
            noise_density_w_per_hz: dbm_to_watts(-174.0),
            noise_bandwidth_hz: 1.0 / 200e-6,
            half_beamwidth_rad: 5f64.to_radians(),
            target_range_m: 15.0,
            detect_threshold: db_to_linear(DEFAULT_THRESHOLD_DB),
            interference_scale: 1.0,
        }
    }

    pub fn with_half_beamwidth(mut self, half_beamwidth_rad: f64) -> Self {
        self.half_beamwidth_rad = half_beamwidth_rad;
        self
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let positive = [
            ("tx_power", self.tx_power_w),
            ("antenna_gain", self.antenna_gain),
            ("carrier_freq", self.carrier_freq_hz),
            ("mean_rcs", self.mean_rcs_m2),
            ("noise_bandwidth", self.noise_bandwidth_hz),
            ("target_range", self.target_range_m),
            ("detect_threshold", self.detect_threshold),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(AnalyticsError::InvalidParameter { name, value });
            }
        }
        let non_negative = [
            ("noise_density", self.noise_density_w_per_hz),
            ("interference_scale", self.interference_scale),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AnalyticsError::InvalidParameter { name, value });
            }
        }
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp >= 1.0) {
            return Err(AnalyticsError::InvalidParameter {
                name: "pathloss_exp",
                value: self.pathloss_exp,
            });
        }
        let h = self.half_beamwidth_rad;
        if !(h > 0.0 && h < PI / 2.0) {
            return Err(AnalyticsError::InvalidParameter {
                name: "half_beamwidth",
                value: h,
            });
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Effective receive aperture from reciprocity, `G lambda^2 / (4 pi)`.
    pub fn effective_aperture_m2(&self) -> f64 {
        self.antenna_gain * self.wavelength_m().powi(2) / (4.0 * PI)
    }

    /// Antenna constant `G_t A_e / (4 pi)^2`.
    pub fn radar_const(&self) -> f64 {
        self.antenna_gain * self.effective_aperture_m2() / (4.0 * PI).powi(2)
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_density_w_per_hz * self.noise_bandwidth_hz
    }

    /// Mean reflected target power at the ego radar, watts.
    pub fn mean_signal_w(&self) -> f64 {
        self.radar_const()
            * self.mean_rcs_m2
            * self.tx_power_w
            * self.target_range_m.powf(-2.0 * self.pathloss_exp)
    }

    /// Mean received power from one interferer at distance `d` (unit fading).
    pub fn interference_w(&self, d: f64) -> f64 {
        self.interference_scale * self.radar_const() * self.tx_power_w * d.powf(-self.pathloss_exp)
    }

    /// Noise-only exponent: detection probability without interference is
    /// `exp(-noise_exponent())`.
    pub fn noise_exponent(&self) -> f64 {
        self.detect_threshold * self.noise_power_w() / self.mean_signal_w()
    }

    /// Coefficient `c` such that an active interferer at distance `d` scales
    /// the detection probability by `1 / (1 + c d^-alpha)`.
    pub fn interference_coeff(&self) -> f64 {
        self.detect_threshold
            * self.interference_scale
            * self.target_range_m.powf(2.0 * self.pathloss_exp)
            / self.mean_rcs_m2
    }

    /// Per-interferer attenuation of the detection probability, in `(0, 1]`.
    pub fn interferer_factor(&self, d: f64) -> f64 {
        let da = d.powf(self.pathloss_exp);
        da / (da + self.interference_coeff())
    }
}

/// Default detection threshold, dB.
pub const DEFAULT_THRESHOLD_DB: f64 = 2.5;

/// Vehicle and street intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Densities {
    /// Vehicles per meter of street, lambda.
    pub vehicle: f64,
    /// Street (line process) intensity lambda_L, per meter.
    pub street: f64,
}

impl Densities {
    pub fn new(vehicle: f64, street: f64) -> Result<Self, AnalyticsError> {
        for (name, value) in [("vehicle_density", vehicle), ("street_density", street)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AnalyticsError::InvalidParameter { name, value });
            }
        }
        Ok(Self { vehicle, street })
    }
}

/// Block-ALOHA and QoS parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    /// Block access probability delta.
    pub access_prob: f64,
    /// Slots per block, T.
    pub block_len: u32,
    /// Required run of consecutive detections, nu.
    pub track_len: u32,
    /// Latency deadline T_L, seconds.
    pub latency_deadline_s: f64,
    /// Pulse width (slot duration) W, seconds.
    pub pulse_width_s: f64,
    /// Number of access blocks, `floor(T_L / (T W))`.
    pub num_blocks: u32,
}

impl MacParams {
    pub fn new(
        access_prob: f64,
        block_len: u32,
        track_len: u32,
        latency_deadline_s: f64,
        pulse_width_s: f64,
    ) -> Result<Self, AnalyticsError> {
        if !(0.0..=1.0).contains(&access_prob) {
            return Err(AnalyticsError::InvalidParameter {
                name: "access_prob",
                value: access_prob,
            });
        }
        if track_len == 0 || track_len > block_len {
            return Err(AnalyticsError::InvalidParameter {
                name: "track_len",
                value: track_len as f64,
            });
        }
        if !(pulse_width_s.is_finite() && pulse_width_s > 0.0) {
            return Err(AnalyticsError::InvalidParameter {
                name: "pulse_width",
                value: pulse_width_s,
            });
        }
        if !(latency_deadline_s.is_finite() && latency_deadline_s > 0.0) {
            return Err(AnalyticsError::InvalidParameter {
                name: "latency_deadline",
                value: latency_deadline_s,
            });
        }
        let num_blocks = total_slots(latency_deadline_s, pulse_width_s) / block_len;
        if num_blocks == 0 {
            return Err(AnalyticsError::InvalidParameter {
                name: "num_blocks",
                value: 0.0,
            });
        }
        Ok(Self {
            access_prob,
            block_len,
            track_len,
            latency_deadline_s,
            pulse_width_s,
            num_blocks,
        })
    }

    /// A single block that exactly fills the deadline.
    pub fn single_block(
        access_prob: f64,
        block_len: u32,
        track_len: u32,
    ) -> Result<Self, AnalyticsError> {
        let w = 200e-6;
        Self::new(access_prob, block_len, track_len, w * block_len as f64, w)
    }
}

/// `floor(T_L / W)`, tolerant to the rounding of the division.
pub fn total_slots(latency_deadline_s: f64, pulse_width_s: f64) -> u32 {
    let ratio = latency_deadline_s / pulse_width_s;
    (ratio * (1.0 + 1e-12)).floor().min(u32::MAX as f64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_radar_is_noise_negligible() {
        let r = RadarParams::reference();
        r.validate().unwrap();
        // ~69 dB SNR at 15 m
        let snr_db = 10.0 * (r.mean_signal_w() / r.noise_power_w()).log10();
        assert!((snr_db - 68.8).abs() < 0.5, "snr {snr_db}");
        assert!(r.noise_exponent() < 1e-6);
        // c = thr * R^4 / sigma
        let c = r.detect_threshold * 15f64.powi(4) / 1000.0;
        assert!((r.interference_coeff() - c).abs() < 1e-12 * c);
    }

    #[test]
    fn num_blocks_tiles_deadline() {
        let m = MacParams::new(0.5, 40, 6, 8e-3, 200e-6).unwrap();
        assert_eq!(m.num_blocks, 1);
        let m = MacParams::new(0.5, 20, 6, 8e-3, 200e-6).unwrap();
        assert_eq!(m.num_blocks, 2);
        let m = MacParams::new(0.5, 20, 15, 50e-3, 200e-6).unwrap();
        assert_eq!(m.num_blocks, 12);
        assert!(MacParams::new(0.5, 20, 21, 50e-3, 200e-6).is_err());
        assert!(MacParams::new(0.5, 41, 6, 8e-3, 200e-6).is_err());
        assert!(MacParams::new(1.5, 20, 6, 8e-3, 200e-6).is_err());
    }

    #[test]
    fn invalid_radar_rejected() {
        let mut r = RadarParams::reference();
        r.pathloss_exp = 0.5;
        assert!(r.validate().is_err());
        let mut r = RadarParams::reference();
        r.half_beamwidth_rad = 2.0;
        assert!(r.validate().is_err());
        let mut r = RadarParams::reference();
        r.tx_power_w = f64::NAN;
        assert!(r.validate().is_err());
    }
}
