//! Rate-based DASH client: harmonic-mean throughput estimate, buffer-gated
//! request issue, playout and stall accounting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::assign::ChunkRequest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub b_max_s: f64,
    /// Playout starts once this much media is buffered.
    pub start_threshold_s: f64,
    /// In-flight cap once playing.
    pub max_in_flight: usize,
    pub rate_window: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            b_max_s: 15.0,
            start_threshold_s: 15.0,
            max_in_flight: 3,
            rate_window: 5,
        }
    }
}

/// A chunk fully delivered to the client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub request: ChunkRequest,
    pub size_bits: f64,
    pub media_s: f64,
    pub completion_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: u32,
    pub video_id: u32,
    pub join_time_s: f64,
    pub chunk_count: u32,
    pub chunk_duration_s: f64,
    pub next_chunk_index: u32,
    pub buffer_s: f64,
    pub playout_started: bool,
    pub playing_position_s: f64,
    pub stall_time_s: f64,
    pub startup_latency_s: Option<f64>,
    pub in_flight: Vec<ChunkRequest>,
    pub rate_window: VecDeque<f64>,
    pub chunks_received: u32,
    /// Set when the last chunk has played out.
    pub finished_at_s: Option<f64>,
    clock_s: f64,
}

/// Harmonic mean of the samples, `None` when there are none.
pub fn estimate_rate(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let inv: f64 = samples.iter().map(|r| 1.0 / r).sum();
    Some(samples.len() as f64 / inv)
}

/// Highest level strictly below the estimate; the lowest level otherwise.
pub fn select_quality(estimate_bps: Option<f64>, bitrates_bps: &[f64]) -> usize {
    let Some(est) = estimate_bps else { return 0 };
    bitrates_bps.iter().rposition(|q| *q < est).unwrap_or(0)
}

impl ClientState {
    pub fn new(
        client_id: u32,
        video_id: u32,
        join_time_s: f64,
        chunk_count: u32,
        chunk_duration_s: f64,
    ) -> Self {
        Self {
            client_id,
            video_id,
            join_time_s,
            chunk_count,
            chunk_duration_s,
            next_chunk_index: 0,
            buffer_s: 0.0,
            playout_started: false,
            playing_position_s: 0.0,
            stall_time_s: 0.0,
            startup_latency_s: None,
            in_flight: Vec::new(),
            rate_window: VecDeque::new(),
            chunks_received: 0,
            finished_at_s: None,
            clock_s: join_time_s,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at_s.is_some()
    }

    pub fn has_joined(&self, now_s: f64) -> bool {
        now_s >= self.join_time_s
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    fn all_received(&self) -> bool {
        self.chunks_received >= self.chunk_count
    }

    /// Time from join to the end of playout, or to `now_s` if still running.
    pub fn session_time_s(&self, now_s: f64) -> f64 {
        self.finished_at_s.unwrap_or(now_s.max(self.join_time_s)) - self.join_time_s
    }

    fn advance_to(&mut self, t: f64) {
        if t <= self.clock_s || self.is_finished() {
            self.clock_s = self.clock_s.max(t);
            return;
        }
        let dt = t - self.clock_s;
        if self.playout_started {
            if self.buffer_s >= dt {
                self.buffer_s -= dt;
                self.playing_position_s += dt;
            } else {
                let played = self.buffer_s;
                self.playing_position_s += played;
                self.buffer_s = 0.0;
                if self.all_received() {
                    self.finished_at_s = Some(self.clock_s + played);
                } else {
                    self.stall_time_s += dt - played;
                }
            }
            if self.all_received() && self.buffer_s <= 0.0 && self.finished_at_s.is_none() {
                self.finished_at_s = Some(t);
            }
        }
        self.clock_s = t;
    }

    fn maybe_start(&mut self, cfg: &ClientConfig) {
        if !self.playout_started && (self.buffer_s >= cfg.start_threshold_s || self.all_received())
        {
            self.playout_started = true;
            self.startup_latency_s = Some(self.clock_s - self.join_time_s);
        }
    }

    fn receive(&mut self, a: &Arrival, cfg: &ClientConfig) {
        self.advance_to(a.completion_s);
        if let Some(pos) = self
            .in_flight
            .iter()
            .position(|r| r.chunk_index == a.request.chunk_index)
        {
            let req = self.in_flight.remove(pos);
            let elapsed = a.completion_s - req.issue_time_s;
            if elapsed > 0.0 {
                self.rate_window.push_back(a.size_bits / elapsed);
                while self.rate_window.len() > cfg.rate_window {
                    self.rate_window.pop_front();
                }
            }
        }
        self.buffer_s += a.media_s;
        self.chunks_received += 1;
        self.maybe_start(cfg);
    }

    fn issue(&mut self, cfg: &ClientConfig, bitrates_bps: &[f64]) -> Vec<ChunkRequest> {
        let mut out = Vec::new();
        if self.is_finished() || self.clock_s < self.join_time_s {
            return out;
        }
        loop {
            if self.next_chunk_index >= self.chunk_count {
                break;
            }
            let pending = self.in_flight.len() as f64 * self.chunk_duration_s;
            let allowed = if self.playout_started {
                self.in_flight.len() < cfg.max_in_flight
                    && self.buffer_s + pending + self.chunk_duration_s <= cfg.b_max_s
            } else {
                self.buffer_s + pending < cfg.start_threshold_s
            };
            if !allowed {
                break;
            }
            let quality = if self.playout_started {
                let w: Vec<f64> = self.rate_window.iter().copied().collect();
                select_quality(estimate_rate(&w), bitrates_bps)
            } else {
                0
            };
            let req = ChunkRequest {
                client_id: self.client_id,
                video_id: self.video_id,
                chunk_index: self.next_chunk_index,
                quality_index: quality,
                issue_time_s: self.clock_s,
            };
            self.next_chunk_index += 1;
            self.in_flight.push(req);
            out.push(req);
        }
        out
    }
}

/// Advance the client to `now_s`, applying `arrivals` at their completion
/// times, and return the requests it issues along the way.
pub fn step_client(
    state: &mut ClientState,
    cfg: &ClientConfig,
    bitrates_bps: &[f64],
    now_s: f64,
    arrivals: &[Arrival],
) -> Vec<ChunkRequest> {
    if now_s < state.join_time_s {
        return Vec::new();
    }
    let mut sorted: Vec<&Arrival> = arrivals.iter().collect();
    sorted.sort_by(|a, b| a.completion_s.total_cmp(&b.completion_s));
    // requests due at the join instant come first
    let mut out = state.issue(cfg, bitrates_bps);
    for a in sorted {
        state.receive(a, cfg);
        out.extend(state.issue(cfg, bitrates_bps));
    }
    state.advance_to(now_s);
    out.extend(state.issue(cfg, bitrates_bps));
    out
}
