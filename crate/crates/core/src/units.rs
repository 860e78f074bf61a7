//! Decibel conversions. Every dB-scale input is converted here exactly once;
//! the rest of the crate works in linear SI units.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Power ratio in dB to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    linear_to_db(watts * 1e3)
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert!((dbm_to_watts(10.0) - 0.01).abs() < 1e-15);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn db_round_trip(db in -200.0f64..200.0) {
            let back = linear_to_db(db_to_linear(db));
            prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
            let back = watts_to_dbm(dbm_to_watts(db));
            prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
        }
    }
}
