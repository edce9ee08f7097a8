use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{load_manifest, LayerManifest, UniformRange, BYTES_PER_PARAM};

/// PFC thresholds, scaled by port speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfcParams {
    pub enabled: bool,
    #[serde(alias = "X_off")]
    pub xoff_bytes_per_gbps: f64,
    #[serde(alias = "X_on")]
    pub xon_bytes_per_gbps: f64,
}

impl Default for PfcParams {
    fn default() -> Self {
        Self {
            enabled: true,
            xoff_bytes_per_gbps: 9_500.0,
            xon_bytes_per_gbps: 9_250.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcqcnParams {
    pub enabled: bool,
    #[serde(alias = "K_min")]
    pub kmin_bytes: u64,
    #[serde(alias = "K_max")]
    pub kmax_bytes: u64,
    #[serde(alias = "P_max")]
    pub pmax: f64,
    pub g: f64,
    #[serde(alias = "I_CNP")]
    pub cnp_interval_ns: u64,
    /// `K`: alpha decays once per this period without congestion feedback.
    #[serde(alias = "K")]
    pub alpha_timer_ns: u64,
    /// `T`: rate-increase timer.
    #[serde(alias = "T")]
    pub rate_timer_ns: u64,
    /// `B`: rate-increase byte counter.
    #[serde(alias = "B")]
    pub byte_counter_bytes: u64,
    #[serde(alias = "R_AI")]
    pub r_ai_bps: f64,
    #[serde(alias = "R_HI")]
    pub r_hi_bps: f64,
    pub fast_recovery_stages: u32,
    /// Alpha held by a sender that has been idle at line rate.
    pub initial_alpha: f64,
    pub min_rate_bps: f64,
}

impl Default for DcqcnParams {
    fn default() -> Self {
        Self {
            enabled: true,
            kmin_bytes: 7_000,
            kmax_bytes: 488_000,
            pmax: 0.30,
            g: 1.0 / 256.0,
            cnp_interval_ns: 50_000,
            alpha_timer_ns: 55_000,
            rate_timer_ns: 55_000,
            byte_counter_bytes: 10_000_000,
            r_ai_bps: 5e6,
            r_hi_bps: 50e6,
            fast_recovery_stages: 5,
            initial_alpha: 0.5,
            min_rate_bps: 100e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurstSchedule {
    /// Only the gradients of the last layer, all workers starting together.
    LastLayer,
    /// A whole backward pass, last layer first, with layer gaps.
    FullRound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimWorkload {
    pub bursts: BurstSchedule,
    /// Application sending rate, drawn per burst.
    pub offered_rate_bps: UniformRange,
    pub layer_gap_s: UniformRange,
    pub manifest_path: Option<PathBuf>,
    pub layers: Option<Vec<u64>>,
}

impl Default for SimWorkload {
    fn default() -> Self {
        Self {
            bursts: BurstSchedule::LastLayer,
            offered_rate_bps: UniformRange::new(20e9, 35e9),
            layer_gap_s: UniformRange::new(0.020, 0.030),
            manifest_path: None,
            layers: None,
        }
    }
}

impl SimWorkload {
    pub fn manifest(&self) -> Result<LayerManifest> {
        match (&self.manifest_path, &self.layers) {
            (Some(_), Some(_)) => Err(Error::config(
                "workload.layers",
                "give either `manifest_path` or `layers`, not both",
            )),
            (Some(path), None) => load_manifest(path),
            (None, Some(layers)) => LayerManifest::new(layers.clone(), BYTES_PER_PARAM),
            (None, None) => Ok(LayerManifest::resnet50()),
        }
    }
}

/// Senders drop to a fixed rate shortly after the first congestion mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastReaction {
    pub delay_ns: u64,
    /// Rate every sender is clamped to; the line rate shared evenly when
    /// absent.
    pub rate_bps: Option<f64>,
}

impl Default for FastReaction {
    fn default() -> Self {
        Self {
            delay_ns: 10_000,
            rate_bps: None,
        }
    }
}

/// Fan-in of many workers through one switch egress port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_workers: usize,
    pub switch_ports: usize,
    pub line_rate_bps: f64,
    pub prop_delay_ns: u64,
    pub mtu: u64,
    pub buffer_bytes: u64,
    pub sim_duration_ns: u64,
    pub sample_interval_ns: u64,
    pub seed: u64,
    pub pfc: PfcParams,
    pub dcqcn: DcqcnParams,
    pub workload: SimWorkload,
    pub fast_reaction: Option<FastReaction>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_workers: 30,
            switch_ports: 32,
            line_rate_bps: 100e9,
            prop_delay_ns: 1_000,
            mtu: 1_500,
            buffer_bytes: 32_000_000,
            sim_duration_ns: 10_000_000,
            sample_interval_ns: 10_000,
            seed: 1,
            pfc: PfcParams::default(),
            dcqcn: DcqcnParams::default(),
            workload: SimWorkload::default(),
            fast_reaction: None,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} is not positive")))
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn line_rate_gbps(&self) -> f64 {
        self.line_rate_bps / 1e9
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_workers + 1 > self.switch_ports {
            return Err(Error::config(
                "n_workers",
                format!(
                    "{} workers and the destination need more than {} switch ports",
                    self.n_workers, self.switch_ports
                ),
            ));
        }
        positive("line_rate_bps", self.line_rate_bps)?;
        if self.mtu == 0 {
            return Err(Error::config("mtu", "must be positive"));
        }
        if self.sample_interval_ns == 0 {
            return Err(Error::config("sample_interval_ns", "must be positive"));
        }
        if self.buffer_bytes < self.mtu {
            return Err(Error::config("buffer_bytes", "must hold at least one packet"));
        }
        let p = &self.pfc;
        positive("pfc.xoff_bytes_per_gbps", p.xoff_bytes_per_gbps)?;
        positive("pfc.xon_bytes_per_gbps", p.xon_bytes_per_gbps)?;
        if p.xon_bytes_per_gbps >= p.xoff_bytes_per_gbps {
            return Err(Error::config("pfc.xon_bytes_per_gbps", "must be below xoff"));
        }
        let d = &self.dcqcn;
        if d.kmin_bytes >= d.kmax_bytes {
            return Err(Error::config("dcqcn.kmin_bytes", "must be below kmax"));
        }
        if !(d.pmax > 0.0 && d.pmax <= 1.0) {
            return Err(Error::config("dcqcn.pmax", "must lie in (0, 1]"));
        }
        if !(d.g > 0.0 && d.g < 1.0) {
            return Err(Error::config("dcqcn.g", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&d.initial_alpha) {
            return Err(Error::config("dcqcn.initial_alpha", "must lie in [0, 1]"));
        }
        for (field, v) in [
            ("dcqcn.cnp_interval_ns", d.cnp_interval_ns),
            ("dcqcn.alpha_timer_ns", d.alpha_timer_ns),
            ("dcqcn.rate_timer_ns", d.rate_timer_ns),
            ("dcqcn.byte_counter_bytes", d.byte_counter_bytes),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        positive("dcqcn.r_ai_bps", d.r_ai_bps)?;
        positive("dcqcn.r_hi_bps", d.r_hi_bps)?;
        positive("dcqcn.min_rate_bps", d.min_rate_bps)?;
        if d.min_rate_bps > self.line_rate_bps {
            return Err(Error::config("dcqcn.min_rate_bps", "exceeds the line rate"));
        }
        let w = &self.workload;
        let r = w.offered_rate_bps;
        if !(r.low.is_finite() && r.high.is_finite() && r.low > 0.0 && r.low <= r.high && r.high <= self.line_rate_bps) {
            return Err(Error::config(
                "workload.offered_rate_bps",
                format!("[{}, {}] must lie within (0, line rate]", r.low, r.high),
            ));
        }
        let gap = w.layer_gap_s;
        if !(gap.low.is_finite() && gap.high.is_finite() && gap.low >= 0.0 && gap.low <= gap.high) {
            return Err(Error::config("workload.layer_gap_s", "is not a valid range"));
        }
        if let Some(fr) = &self.fast_reaction {
            if let Some(rate) = fr.rate_bps {
                positive("fast_reaction.rate_bps", rate)?;
            }
        }
        w.manifest()?;
        Ok(())
    }
}

/// PFC pause and resume thresholds in bytes for a port of the given speed.
pub fn pfc_thresholds(pfc: &PfcParams, port_speed_gbps: f64) -> Result<(f64, f64)> {
    positive("port speed", port_speed_gbps)?;
    Ok((pfc.xoff_bytes_per_gbps * port_speed_gbps, pfc.xon_bytes_per_gbps * port_speed_gbps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_scale_with_speed() {
        let p = PfcParams::default();
        assert_eq!(pfc_thresholds(&p, 100.0).unwrap(), (950_000.0, 925_000.0));
        assert_eq!(pfc_thresholds(&p, 1.0).unwrap(), (9_500.0, 9_250.0));
        assert_eq!(pfc_thresholds(&p, 50.0).unwrap(), (475_000.0, 462_500.0));
        assert!(pfc_thresholds(&p, 0.0).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = SimConfig {
            n_workers: 32,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        c.n_workers = 31;
        c.validate().unwrap();
        c.dcqcn.kmin_bytes = 500_000;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.pfc.xon_bytes_per_gbps = 10_000.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.workload.offered_rate_bps = UniformRange::new(20e9, 200e9);
        assert!(c.validate().is_err());
    }

    #[test]
    fn table_keys_are_accepted() {
        let c = SimConfig::from_json(
            r#"{"dcqcn": {"K_min": 7000, "K_max": 488000, "P_max": 0.3, "I_CNP": 50000,
                "K": 55000, "T": 55000, "B": 10000000, "R_AI": 5e6, "R_HI": 5e7},
                "pfc": {"X_off": 9500, "X_on": 9250}}"#,
        )
        .unwrap();
        assert_eq!(c, SimConfig::default());
        assert!(SimConfig::from_json(r#"{"unknown": 1}"#).is_err());
    }
}
