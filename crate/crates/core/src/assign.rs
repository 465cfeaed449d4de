//! Shared quality-assignment primitives: tolerated quality windows, delivery
//! costs, the buffer-aware utility, and candidate construction for the solvers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::buffer::{estimate_buffer, BufferEstimateInput};
use crate::cache::ContentKey;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Tolerated quality difference γ.
    pub gamma: usize,
    /// Weight of cache delivery μ_c.
    pub mu_c: f64,
    pub b_min_s: f64,
    pub b_max_s: f64,
    /// Keep at most this many configurations after each Pareto reduction.
    pub pareto_cap: Option<usize>,
    /// Bitrates are divided by this before taking the logarithm (1000 = Kbps).
    pub log_unit_bps: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            gamma: 2,
            mu_c: 1.3,
            b_min_s: 4.0,
            b_max_s: 15.0,
            pareto_cap: None,
            log_unit_bps: 1000.0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_min_s > 0.0 && self.b_min_s < self.b_max_s) {
            return Err(Error::Config(format!(
                "need 0 < b_min_s < b_max_s, got {} and {}",
                self.b_min_s, self.b_max_s
            )));
        }
        if !(self.mu_c >= 1.0 && self.mu_c.is_finite()) {
            return Err(Error::Config(format!(
                "mu_c must be >= 1, got {}",
                self.mu_c
            )));
        }
        if self.pareto_cap == Some(0) {
            return Err(Error::Config("pareto_cap must be at least 1".into()));
        }
        if self.log_unit_bps.is_nan() || self.log_unit_bps <= 0.0 {
            return Err(Error::Config("log_unit_bps must be positive".into()));
        }
        Ok(())
    }
}

/// A client's chunk request `v_{j,k,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkRequest {
    pub client_id: u32,
    pub video_id: u32,
    pub chunk_index: u32,
    pub quality_index: usize,
    pub issue_time_s: f64,
}

impl ChunkRequest {
    pub fn key(&self) -> ContentKey {
        ContentKey::new(self.video_id, self.chunk_index, self.quality_index)
    }

    pub fn key_at(&self, quality: usize) -> ContentKey {
        ContentKey::new(self.video_id, self.chunk_index, quality)
    }
}

/// The AP's decision for one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub request: ChunkRequest,
    pub delivered_quality: usize,
    pub from_cache: bool,
    /// Airtime share; filled in by the allocator after quality selection.
    pub airtime: f64,
}

impl Assignment {
    pub fn client_id(&self) -> u32 {
        self.request.client_id
    }

    pub fn key(&self) -> ContentKey {
        self.request.key_at(self.delivered_quality)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub assignments: Vec<Assignment>,
    pub total_utility: f64,
    pub total_cost_bps: f64,
    /// The solver found no feasible configuration and passed requests through.
    pub no_valid_config: bool,
}

/// Symmetric window `|m' - m| <= γ`, clipped to the ladder.
pub fn tolerated_set(
    requested: usize,
    gamma: usize,
    ladder_size: usize,
) -> std::ops::RangeInclusive<usize> {
    debug_assert!(requested < ladder_size);
    requested.saturating_sub(gamma)..=(requested + gamma).min(ladder_size - 1)
}

/// Buffer-aware utility of delivering a chunk at `bitrate_bps` given the
/// estimated post-delivery buffer `b_hat_s`. Natural log, bitrate in Kbps.
pub fn utility(
    bitrate_bps: f64,
    cached: bool,
    mu_c: f64,
    b_hat_s: f64,
    b_min_s: f64,
    b_max_s: f64,
) -> f64 {
    utility_with_unit(bitrate_bps, cached, mu_c, b_hat_s, b_min_s, b_max_s, 1000.0)
}

pub fn utility_with_unit(
    bitrate_bps: f64,
    cached: bool,
    mu_c: f64,
    b_hat_s: f64,
    b_min_s: f64,
    b_max_s: f64,
    log_unit_bps: f64,
) -> f64 {
    let w = if cached { mu_c } else { 1.0 };
    if b_hat_s >= b_min_s {
        w * (bitrate_bps / log_unit_bps).ln() + b_hat_s.min(b_max_s).ln()
    } else if b_hat_s > 0.0 {
        w * b_hat_s.ln()
    } else {
        b_hat_s
    }
}

/// Backhaul bandwidth claimed by a delivery: zero when already cached.
pub fn delivery_cost(bitrate_bps: f64, cached: bool) -> f64 {
    if cached {
        0.0
    } else {
        bitrate_bps
    }
}

/// What the solvers may ask about content availability at the AP.
pub trait ContentView {
    fn is_cached(&self, key: &ContentKey) -> bool;
    /// Already queued for backhaul download; a further claim costs nothing.
    fn is_committed(&self, key: &ContentKey) -> bool;
    /// Backhaul latency `T_b` for fetching `key` of `bits` (queueing included).
    fn backhaul_delay_s(&self, key: &ContentKey, bits: f64) -> f64;
}

/// Fixed content view for tests and offline instances.
#[derive(Debug, Clone, Default)]
pub struct StaticContentView {
    pub cached: BTreeSet<ContentKey>,
    pub committed: BTreeSet<ContentKey>,
    pub fifo_bits_ahead: f64,
    pub backhaul_bps: f64,
}

impl ContentView for StaticContentView {
    fn is_cached(&self, key: &ContentKey) -> bool {
        self.cached.contains(key)
    }

    fn is_committed(&self, key: &ContentKey) -> bool {
        self.committed.contains(key)
    }

    fn backhaul_delay_s(&self, key: &ContentKey, bits: f64) -> f64 {
        if self.backhaul_bps <= 0.0 {
            return f64::INFINITY;
        }
        if self.committed.contains(key) {
            self.fifo_bits_ahead / self.backhaul_bps
        } else {
            (self.fifo_bits_ahead + bits) / self.backhaul_bps
        }
    }
}

/// Per-request snapshot the AP holds when assigning qualities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestContext {
    pub request: ChunkRequest,
    pub bitrates_bps: Vec<f64>,
    pub chunk_duration_s: f64,
    pub buffer_s: f64,
    pub dl_queue_bits: f64,
    pub dl_queue_media_s: f64,
    pub link_capacity_bps: f64,
    /// Airtime is assumed split equally among this many clients during selection.
    pub equal_share_clients: usize,
}

impl RequestContext {
    pub fn effective_rate_bps(&self) -> f64 {
        self.link_capacity_bps / self.equal_share_clients.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateQuality {
    pub client_id: u32,
    pub video_id: u32,
    pub chunk_index: u32,
    pub quality_index: usize,
    pub bitrate_bps: f64,
    pub cached: bool,
    pub cost_bps: f64,
    pub estimated_buffer_s: f64,
    pub utility: f64,
}

impl CandidateQuality {
    pub fn key(&self) -> ContentKey {
        ContentKey::new(self.video_id, self.chunk_index, self.quality_index)
    }
}

/// Candidates for every tolerated level of one request, in ascending quality.
pub fn build_candidates(
    ctx: &RequestContext,
    view: &dyn ContentView,
    params: &SolverParams,
) -> Vec<CandidateQuality> {
    let req = &ctx.request;
    let rate = ctx.effective_rate_bps();
    tolerated_set(req.quality_index, params.gamma, ctx.bitrates_bps.len())
        .map(|m| {
            let key = req.key_at(m);
            let bitrate = ctx.bitrates_bps[m];
            let bits = bitrate * ctx.chunk_duration_s;
            let cached = view.is_cached(&key);
            let cost = if view.is_committed(&key) {
                0.0
            } else {
                delivery_cost(bitrate, cached)
            };
            let input = BufferEstimateInput {
                current_buffer_s: ctx.buffer_s,
                backhaul_delay_s: if cached {
                    0.0
                } else {
                    view.backhaul_delay_s(&key, bits)
                },
                dl_transmit_s: bits / rate,
                dl_queue_bits: ctx.dl_queue_bits,
                dl_queue_media_s: ctx.dl_queue_media_s,
                effective_rate_bps: rate,
                from_cache: cached,
            };
            let b_hat = estimate_buffer(&input);
            CandidateQuality {
                client_id: req.client_id,
                video_id: req.video_id,
                chunk_index: req.chunk_index,
                quality_index: m,
                bitrate_bps: bitrate,
                cached,
                cost_bps: cost,
                estimated_buffer_s: b_hat,
                utility: utility_with_unit(
                    bitrate,
                    cached,
                    params.mu_c,
                    b_hat,
                    params.b_min_s,
                    params.b_max_s,
                    params.log_unit_bps,
                ),
            }
        })
        .collect()
}

/// Requests delivered exactly as asked (the pass-through used by the
/// client-driven baselines and by solver fallbacks).
pub fn pass_through(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    use_cache: bool,
) -> Vec<Assignment> {
    contexts
        .iter()
        .map(|c| Assignment {
            request: c.request,
            delivered_quality: c.request.quality_index,
            from_cache: use_cache && view.is_cached(&c.request.key()),
            airtime: 0.0,
        })
        .collect()
}
