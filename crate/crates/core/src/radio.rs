//! WiFi link model: indoor log-distance path loss and a capped Shannon rate.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assign::Assignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    /// Path loss at 1 m.
    pub path_loss_ref_db: f64,
    pub path_loss_exponent: f64,
    /// Fraction of the Shannon bound achieved by the PHY/MAC.
    pub efficiency: f64,
    pub max_rate_bps: f64,
    pub max_distance_m: f64,
    /// Additive wall attenuation.
    pub wall_loss_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 40e6,
            tx_power_dbm: 20.0,
            noise_figure_db: 7.0,
            path_loss_ref_db: 46.7,
            path_loss_exponent: 3.5,
            efficiency: 0.6,
            max_rate_bps: 300e6,
            max_distance_m: 70.0,
            wall_loss_db: 0.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bandwidth_hz > 0.0
            && self.efficiency > 0.0
            && self.max_rate_bps > 0.0
            && self.max_distance_m > 0.0
            && self.path_loss_exponent >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("radio parameters must be positive".into()))
        }
    }

    pub fn path_loss_db(&self, distance_m: f64) -> f64 {
        self.path_loss_ref_db
            + 10.0 * self.path_loss_exponent * distance_m.max(1.0).log10()
            + self.wall_loss_db
    }

    pub fn noise_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Downlink PHY capacity of a client at `distance_m`.
    pub fn link_capacity(&self, distance_m: f64) -> f64 {
        let snr_db = self.tx_power_dbm - self.path_loss_db(distance_m) - self.noise_dbm();
        let snr = 10f64.powf(snr_db / 10.0);
        (self.efficiency * self.bandwidth_hz * (1.0 + snr).log2()).min(self.max_rate_bps)
    }

    /// Uniform placement over the coverage disc.
    pub fn place_clients<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| self.max_distance_m * rng.gen::<f64>().sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub client_id: u32,
    pub distance_m: f64,
    pub phy_capacity_bps: f64,
}

/// One chunk waiting in a client's downlink queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlItem {
    pub id: u64,
    pub assignment: Assignment,
    pub bitrate_bps: f64,
    pub size_bits: f64,
    pub remaining_bits: f64,
    pub media_s: f64,
    pub dispatched_s: f64,
    /// When the bits are at the AP; infinite while the backhaul fetch is pending.
    pub ready_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub client: usize,
    pub item: DlItem,
    pub completion_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DownlinkReport {
    pub delivered_bits: Vec<f64>,
    pub completions: Vec<Completion>,
}

/// Serve each queue head-of-line for one interval starting at `start_s`,
/// at `rates_bps[i]` (capacity times airtime share). A head that is not yet
/// ready blocks the queue until it is.
pub fn serve_downlink(
    queues: &mut [VecDeque<DlItem>],
    rates_bps: &[f64],
    start_s: f64,
    t_ap_s: f64,
) -> DownlinkReport {
    let mut report = DownlinkReport {
        delivered_bits: vec![0.0; queues.len()],
        completions: Vec::new(),
    };
    for (i, q) in queues.iter_mut().enumerate() {
        let rate = rates_bps[i];
        if rate <= 0.0 {
            continue;
        }
        let budget = rate * t_ap_s;
        // bit-time consumed so far, waiting included
        let mut used = 0.0;
        while let Some(head) = q.front_mut() {
            let now = start_s + used / rate;
            if head.ready_s > now {
                used += (head.ready_s - now) * rate;
                if used >= budget {
                    break;
                }
            }
            let avail = budget - used;
            if head.remaining_bits <= avail {
                used += head.remaining_bits;
                report.delivered_bits[i] += head.remaining_bits;
                head.remaining_bits = 0.0;
                let item = q.pop_front().unwrap();
                report.completions.push(Completion {
                    client: i,
                    item,
                    completion_s: start_s + used / rate,
                });
            } else {
                head.remaining_bits -= avail;
                report.delivered_bits[i] += avail;
                break;
            }
        }
    }
    report
}
