//! Two-hop backscatter link budget.

use crate::error::ParamError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Received backscatter power used to calibrate the environment loss.
pub const ANCHOR_RSSI_DBM: f64 = -134.0;
/// Source-to-tag and tag-to-receiver distance of the calibration anchor.
pub const ANCHOR_DISTANCE_M: f64 = 200.0;

/// Free-space path loss in dB, `20 log10(4 pi d f / c)`.
pub fn free_space_path_loss(d_m: f64, f_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d_m * f_hz / SPEED_OF_LIGHT).log10()
}

/// Powers in dBm, gains in dBi, losses in dB, distances in metres.
///
/// The tag antenna is crossed twice (receive, then re-radiate), so its gain
/// counts on both legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub src_antenna_gain_dbi: f64,
    pub tag_antenna_gain_dbi: f64,
    pub rx_antenna_gain_dbi: f64,
    pub switch_loss_db: f64,
    pub excess_loss_db: f64,
    pub carrier_freq_hz: f64,
    pub d1_m: f64,
    pub d2_m: f64,
}

impl Default for LinkBudget {
    /// 30 dBm into a 6 dBi patch, 2 dBi dipoles on the tag and receiver,
    /// 4 dB switch loss, free space.
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            src_antenna_gain_dbi: 6.0,
            tag_antenna_gain_dbi: 2.0,
            rx_antenna_gain_dbi: 2.0,
            switch_loss_db: 4.0,
            excess_loss_db: 0.0,
            carrier_freq_hz: 915e6,
            d1_m: ANCHOR_DISTANCE_M,
            d2_m: ANCHOR_DISTANCE_M,
        }
    }
}

impl LinkBudget {
    pub fn free_space(d1_m: f64, d2_m: f64) -> Self {
        Self::default().with_distances(d1_m, d2_m)
    }

    /// Default gains with the environment loss fitted to the anchor.
    pub fn calibrated(d1_m: f64, d2_m: f64) -> Self {
        let mut b = Self::free_space(d1_m, d2_m);
        b.excess_loss_db = b.calibrate_excess_loss();
        b
    }

    pub fn with_distances(mut self, d1_m: f64, d2_m: f64) -> Self {
        self.d1_m = d1_m;
        self.d2_m = d2_m;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.d1_m > 0.0 && self.d1_m.is_finite()) {
            return Err(ParamError::invalid("budget.d1_m", "distance must be positive"));
        }
        if !(self.d2_m > 0.0 && self.d2_m.is_finite()) {
            return Err(ParamError::invalid("budget.d2_m", "distance must be positive"));
        }
        if !(self.switch_loss_db >= 0.0) {
            return Err(ParamError::invalid("budget.switch_loss_db", "loss must be >= 0"));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz.is_finite()) {
            return Err(ParamError::invalid("budget.carrier_freq_hz", "must be positive"));
        }
        let all = [
            self.tx_power_dbm,
            self.src_antenna_gain_dbi,
            self.tag_antenna_gain_dbi,
            self.rx_antenna_gain_dbi,
            self.excess_loss_db,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ParamError::invalid("budget", "non-finite power or gain"));
        }
        Ok(())
    }

    /// Excess loss that puts this budget's gains on the anchor at
    /// `d1 = d2 = 200 m`.
    pub fn calibrate_excess_loss(&self) -> f64 {
        let anchor = Self {
            excess_loss_db: 0.0,
            ..self.with_distances(ANCHOR_DISTANCE_M, ANCHOR_DISTANCE_M)
        };
        backscatter_rssi(&anchor) - ANCHOR_RSSI_DBM
    }

    /// Single-tone power arriving at the tag, before the switch.
    pub fn power_at_tag_dbm(&self) -> f64 {
        self.tx_power_dbm + self.src_antenna_gain_dbi + self.tag_antenna_gain_dbi
            - free_space_path_loss(self.d1_m, self.carrier_freq_hz)
            - self.excess_loss_db / 2.0
    }

    pub fn rssi_dbm(&self) -> f64 {
        backscatter_rssi(self)
    }
}

/// Backscatter power at the receiver in dBm.
pub fn backscatter_rssi(b: &LinkBudget) -> f64 {
    b.tx_power_dbm + b.src_antenna_gain_dbi + 2.0 * b.tag_antenna_gain_dbi + b.rx_antenna_gain_dbi
        - free_space_path_loss(b.d1_m, b.carrier_freq_hz)
        - free_space_path_loss(b.d2_m, b.carrier_freq_hz)
        - b.switch_loss_db
        - b.excess_loss_db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_metre_at_915() {
        assert!((free_space_path_loss(1.0, 915e6) - 31.67).abs() < 0.01);
        let d = free_space_path_loss(200.0, 915e6) - free_space_path_loss(100.0, 915e6);
        assert!((d - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn anchor_is_exact() {
        let b = LinkBudget::calibrated(200.0, 200.0);
        assert!((b.rssi_dbm() - ANCHOR_RSSI_DBM).abs() < 1e-9);
        assert!((b.excess_loss_db - 16.606).abs() < 1e-3);
    }

    #[test]
    fn legs_are_symmetric() {
        let a = LinkBudget::calibrated(50.0, 300.0).rssi_dbm();
        let b = LinkBudget::calibrated(300.0, 50.0).rssi_dbm();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn validation_names_field() {
        let err = LinkBudget::free_space(0.0, 10.0).validate().unwrap_err();
        assert!(err.to_string().starts_with("budget.d1_m"));
        let b = LinkBudget {
            switch_loss_db: -1.0,
            ..Default::default()
        };
        assert!(b.validate().is_err());
    }
}
