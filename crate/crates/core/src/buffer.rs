//! Post-delivery buffer estimates and the stall-aware downlink airtime allocator.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferEstimateInput {
    /// Current client buffer `B_i` in seconds.
    pub current_buffer_s: f64,
    /// Backhaul latency `T_b`, including FIFO queueing.
    pub backhaul_delay_s: f64,
    /// Downlink transmission time `T_dl` of the chunk itself.
    pub dl_transmit_s: f64,
    /// Bits already waiting in the client's downlink queue.
    pub dl_queue_bits: f64,
    /// Playable seconds of the whole chunks waiting in the downlink queue.
    pub dl_queue_media_s: f64,
    pub effective_rate_bps: f64,
    pub from_cache: bool,
}

/// Buffer level once the chunk reaches the client. Negative values are the
/// expected stall duration and are kept as such.
pub fn estimate_buffer(input: &BufferEstimateInput) -> f64 {
    let b = input.current_buffer_s;
    let t_dl = input.dl_transmit_s;
    if input.dl_queue_bits <= 0.0 {
        if input.from_cache {
            b - t_dl
        } else {
            b - (input.backhaul_delay_s + t_dl)
        }
    } else {
        let drain = input.dl_queue_bits / input.effective_rate_bps;
        let wait = if input.from_cache {
            drain
        } else {
            drain.max(input.backhaul_delay_s)
        };
        b - wait - t_dl + input.dl_queue_media_s
    }
}

/// One client's state as seen by the allocator at the start of an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirtimeClient {
    pub client_id: u32,
    pub dl_queue_bits: f64,
    pub buffer_s: f64,
    /// Mean nominal bitrate of the chunks in the downlink queue (0 if empty).
    pub avg_queued_bitrate_bps: f64,
    pub link_capacity_bps: f64,
    pub buffered_chunks: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AirtimeAllocation {
    /// `(client_id, share)` in input order.
    pub shares: Vec<(u32, f64)>,
    pub risky_set: Vec<u32>,
}

impl AirtimeAllocation {
    pub fn total(&self) -> f64 {
        self.shares.iter().map(|s| s.1).sum()
    }

    pub fn share(&self, client_id: u32) -> f64 {
        self.shares
            .iter()
            .find(|s| s.0 == client_id)
            .map_or(0.0, |s| s.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirtimeParams {
    pub b_min_s: f64,
    pub t_ap_s: f64,
    /// Clients holding at least this many chunks are not topped up from the residual.
    pub sufficient_chunks: u32,
}

/// Airtime needed in this interval to lift the client toward `B_min`, capped
/// by what is actually queued for it.
pub fn required_airtime(c: &AirtimeClient, b_min_s: f64, t_ap_s: f64) -> f64 {
    if c.dl_queue_bits <= 0.0 || c.avg_queued_bitrate_bps <= 0.0 {
        return 0.0;
    }
    c.dl_queue_bits
        .min((b_min_s - c.buffer_s) * c.avg_queued_bitrate_bps)
        / (c.link_capacity_bps * t_ap_s)
}

/// Buffer-aware allocation: risky clients first, the rest share the residual.
pub fn allocate_airtime(clients: &[AirtimeClient], params: &AirtimeParams) -> AirtimeAllocation {
    let need: Vec<f64> = clients
        .iter()
        .map(|c| required_airtime(c, params.b_min_s, params.t_ap_s).max(0.0))
        .collect();
    let risky: Vec<bool> = need.iter().map(|n| *n > 0.0).collect();
    let total_need: f64 = need.iter().sum();

    let mut shares: Vec<f64> = vec![0.0; clients.len()];
    if total_need > 1.0 {
        for (s, n) in shares.iter_mut().zip(&need) {
            *s = n / total_need;
        }
    } else {
        shares.copy_from_slice(&need);
        let residual = 1.0 - total_need;
        let queued = |i: usize| !risky[i] && clients[i].dl_queue_bits > 0.0;
        let mut eligible: Vec<usize> = (0..clients.len())
            .filter(|&i| queued(i) && clients[i].buffered_chunks < params.sufficient_chunks)
            .collect();
        if eligible.is_empty() {
            // nobody short of media: keep the link busy rather than idle
            eligible = (0..clients.len()).filter(|&i| queued(i)).collect();
        }
        if !eligible.is_empty() {
            let each = residual / eligible.len() as f64;
            for i in eligible {
                shares[i] = each;
            }
        }
    }

    AirtimeAllocation {
        shares: clients
            .iter()
            .zip(shares)
            .map(|(c, s)| (c.client_id, s))
            .collect(),
        risky_set: clients
            .iter()
            .zip(&risky)
            .filter(|(_, r)| **r)
            .map(|(c, _)| c.client_id)
            .collect(),
    }
}

/// Equal split among clients that have something queued.
pub fn equal_airtime(clients: &[AirtimeClient]) -> AirtimeAllocation {
    let active = clients.iter().filter(|c| c.dl_queue_bits > 0.0).count();
    let each = if active == 0 {
        0.0
    } else {
        1.0 / active as f64
    };
    AirtimeAllocation {
        shares: clients
            .iter()
            .map(|c| (c.client_id, if c.dl_queue_bits > 0.0 { each } else { 0.0 }))
            .collect(),
        risky_set: Vec::new(),
    }
}
