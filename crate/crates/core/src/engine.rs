//! The AP control loop, clocked by the resource allocation interval (RAI).
//!
//! Each interval: collect the requests issued since the last one, assign
//! qualities with the configured scheme, queue cache hits for the downlink
//! and misses on the backhaul FIFO (one download per distinct content),
//! advance the backhaul, allocate airtime, serve the downlink queues and
//! hand completed chunks to the clients.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assign::{
    pass_through, Assignment, ChunkRequest, ContentView, RequestContext, SolveOutcome, SolverParams,
};
use crate::buff::buff_assign;
use crate::buffer::{allocate_airtime, equal_airtime, AirtimeClient, AirtimeParams};
use crate::cache::{CacheState, ContentKey};
use crate::catalog::Catalog;
use crate::client::{step_client, Arrival, ClientConfig, ClientState};
use crate::cph::cph_assign;
use crate::error::Error;
use crate::radio::{serve_downlink, DlItem, LinkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "CPH")]
    Cph,
    #[serde(rename = "CPH-EQ")]
    CphEq,
    #[serde(rename = "BUFF")]
    Buff,
    #[serde(rename = "CLIENT")]
    Client,
    #[serde(rename = "CLIENT-CACHE")]
    ClientCache,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Cph,
        Scheme::CphEq,
        Scheme::Buff,
        Scheme::Client,
        Scheme::ClientCache,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cph => "CPH",
            Scheme::CphEq => "CPH-EQ",
            Scheme::Buff => "BUFF",
            Scheme::Client => "CLIENT",
            Scheme::ClientCache => "CLIENT-CACHE",
        }
    }

    pub fn uses_cache(self) -> bool {
        self != Scheme::Client
    }

    /// The AP may overwrite requested qualities.
    pub fn assigns_quality(self) -> bool {
        matches!(self, Scheme::Cph | Scheme::CphEq | Scheme::Buff)
    }

    pub fn buffer_aware_airtime(self) -> bool {
        matches!(self, Scheme::Cph | Scheme::Buff)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scheme {s:?}; expected one of CPH, CPH-EQ, BUFF, CLIENT, CLIENT-CACHE"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub scheme: Scheme,
    pub t_ap_s: f64,
    pub backhaul_bps: f64,
    pub solver: SolverParams,
    pub cache_capacity_bits: u64,
    pub sufficient_chunks: u32,
    pub record_events: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Cph,
            t_ap_s: 0.5,
            backhaul_bps: 20e6,
            solver: SolverParams::default(),
            cache_capacity_bits: u64::MAX,
            sufficient_chunks: 2,
            record_events: false,
        }
    }
}

/// `T_b` for a chunk queued behind `bits_ahead` on a backhaul of `backhaul_bps`.
pub fn backhaul_delay_estimate(bits_ahead: f64, chunk_bits: f64, backhaul_bps: f64) -> f64 {
    if backhaul_bps <= 0.0 {
        return f64::INFINITY;
    }
    (bits_ahead + chunk_bits) / backhaul_bps
}

#[derive(Debug, Clone, PartialEq)]
struct FifoEntry {
    key: ContentKey,
    bitrate_bps: f64,
    size_bits: f64,
    remaining_bits: f64,
    /// (client index, downlink item id) waiting for this download.
    waiters: Vec<(usize, u64)>,
}

struct EngineView<'a> {
    cache: Option<&'a CacheState>,
    fifo: &'a VecDeque<FifoEntry>,
    backhaul_bps: f64,
}

impl ContentView for EngineView<'_> {
    fn is_cached(&self, key: &ContentKey) -> bool {
        self.cache.is_some_and(|c| c.contains(key))
    }

    fn is_committed(&self, key: &ContentKey) -> bool {
        self.fifo.iter().any(|e| e.key == *key)
    }

    fn backhaul_delay_s(&self, key: &ContentKey, bits: f64) -> f64 {
        let mut ahead = 0.0;
        for e in self.fifo {
            if e.key == *key {
                return backhaul_delay_estimate(ahead, e.remaining_bits, self.backhaul_bps);
            }
            ahead += e.remaining_bits;
        }
        backhaul_delay_estimate(ahead, bits, self.backhaul_bps)
    }
}

/// Violation counters for the per-interval constraint checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub quality_window: u64,
    pub airtime_budget: u64,
    pub backhaul_drain: u64,
    pub cache_flag: u64,
    pub duplicate_download: u64,
    pub downlink_budget: u64,
}

impl InvariantCounts {
    pub fn total(&self) -> u64 {
        self.quality_window
            + self.airtime_budget
            + self.backhaul_drain
            + self.cache_flag
            + self.duplicate_download
            + self.downlink_budget
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryEvent {
    pub time_s: f64,
    pub client_id: u32,
    pub video_id: u32,
    pub chunk_index: u32,
    pub requested_quality: usize,
    pub delivered_quality: usize,
    pub from_cache: bool,
    pub backhaul_delay_s: f64,
    pub downlink_time_s: f64,
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngineStats {
    /// Per client: sum of delivered bitrates and number of chunks.
    pub bitrate_sum_bps: Vec<f64>,
    pub chunks_delivered: Vec<u64>,
    pub delivered_bits: f64,
    pub cache_bits: f64,
    pub backhaul_bits: f64,
    pub last_delivery_s: f64,
    pub rais_with_requests: u64,
    pub rais_without_config: u64,
    pub requests_assigned: u64,
    pub quality_changes: u64,
    pub invariants: InvariantCounts,
}

pub struct ApState {
    pub cfg: EngineConfig,
    pub links: Vec<LinkState>,
    pub dl_queues: Vec<VecDeque<DlItem>>,
    fifo: VecDeque<FifoEntry>,
    pub intake: Vec<ChunkRequest>,
    pub cache: CacheState,
    pub rai_index: u64,
    next_item_id: u64,
    pub stats: EngineStats,
    pub events: Vec<DeliveryEvent>,
}

impl ApState {
    pub fn new(cfg: EngineConfig, links: Vec<LinkState>) -> Self {
        let n = links.len();
        Self {
            cache: CacheState::new(cfg.cache_capacity_bits),
            cfg,
            links,
            dl_queues: vec![VecDeque::new(); n],
            fifo: VecDeque::new(),
            intake: Vec::new(),
            rai_index: 0,
            next_item_id: 0,
            stats: EngineStats {
                bitrate_sum_bps: vec![0.0; n],
                chunks_delivered: vec![0; n],
                ..Default::default()
            },
            events: Vec::new(),
        }
    }

    pub fn fifo_len(&self) -> usize {
        self.fifo.len()
    }

    /// Backhaul rate held by the download in progress (the FIFO head) when a
    /// client outside `fresh` is waiting for it. Queued entries behind it are
    /// not yet using the pipe.
    pub fn committed_backhaul_bps(&self, fresh: &BTreeSet<u32>) -> f64 {
        match self.fifo.front() {
            Some(e)
                if e.waiters
                    .iter()
                    .any(|(c, _)| !fresh.contains(&self.links[*c].client_id)) =>
            {
                e.bitrate_bps
            }
            _ => 0.0,
        }
    }

    fn view(&self) -> EngineView<'_> {
        EngineView {
            cache: self.cfg.scheme.uses_cache().then_some(&self.cache),
            fifo: &self.fifo,
            backhaul_bps: self.cfg.backhaul_bps,
        }
    }

    fn assign(&self, contexts: &[RequestContext], available_bps: f64) -> SolveOutcome {
        let view = self.view();
        let p = &self.cfg.solver;
        match self.cfg.scheme {
            Scheme::Cph | Scheme::CphEq => cph_assign(contexts, &view, available_bps, p),
            Scheme::Buff => buff_assign(contexts, &view, available_bps, p),
            Scheme::Client | Scheme::ClientCache => SolveOutcome {
                assignments: pass_through(contexts, &view, self.cfg.scheme.uses_cache()),
                total_utility: 0.0,
                total_cost_bps: 0.0,
                no_valid_config: false,
            },
        }
    }

    /// One interval `[now, now + T_ap)`. Returns the arrivals per client.
    pub fn step_rai(
        &mut self,
        clients: &[ClientState],
        catalog: &Catalog,
        now_s: f64,
    ) -> Vec<Vec<Arrival>> {
        let t_ap = self.cfg.t_ap_s;
        let gamma_bps = self.cfg.backhaul_bps;
        let requests = std::mem::take(&mut self.intake);

        let fresh: BTreeSet<u32> = requests.iter().map(|r| r.client_id).collect();
        let available = (gamma_bps - self.committed_backhaul_bps(&fresh)).max(0.0);

        let active = clients
            .iter()
            .filter(|c| c.has_joined(now_s) && !c.is_finished())
            .count()
            .max(1);
        let contexts: Vec<RequestContext> = requests
            .iter()
            .map(|r| {
                let i = r.client_id as usize;
                let ladder = catalog.ladder(r.video_id);
                let q = &self.dl_queues[i];
                RequestContext {
                    request: *r,
                    bitrates_bps: ladder.bitrates_bps.clone(),
                    chunk_duration_s: ladder.chunk_duration_s,
                    buffer_s: clients[i].buffer_s,
                    dl_queue_bits: q.iter().map(|d| d.remaining_bits).sum(),
                    dl_queue_media_s: q.iter().map(|d| d.media_s).sum(),
                    link_capacity_bps: self.links[i].phy_capacity_bps,
                    equal_share_clients: active,
                }
            })
            .collect();

        if !contexts.is_empty() {
            let outcome = self.assign(&contexts, available);
            self.stats.rais_with_requests += 1;
            if outcome.no_valid_config {
                self.stats.rais_without_config += 1;
            }
            self.dispatch(&outcome, catalog, now_s);
        }

        self.advance_backhaul(now_s);
        let rates = self.allocate(clients, catalog, now_s + t_ap);

        let report = serve_downlink(&mut self.dl_queues, &rates, now_s, t_ap);
        for (i, bits) in report.delivered_bits.iter().enumerate() {
            if *bits > rates[i] * t_ap * (1.0 + 1e-12) + 1e-6 {
                self.stats.invariants.downlink_budget += 1;
            }
        }

        let mut arrivals = vec![Vec::new(); clients.len()];
        for c in report.completions {
            let item = c.item;
            let a = item.assignment;
            self.stats.bitrate_sum_bps[c.client] += item.bitrate_bps;
            self.stats.chunks_delivered[c.client] += 1;
            self.stats.delivered_bits += item.size_bits;
            if a.from_cache {
                self.stats.cache_bits += item.size_bits;
            }
            self.stats.last_delivery_s = self.stats.last_delivery_s.max(c.completion_s);
            if self.cfg.record_events {
                self.events.push(DeliveryEvent {
                    time_s: c.completion_s,
                    client_id: a.request.client_id,
                    video_id: a.request.video_id,
                    chunk_index: a.request.chunk_index,
                    requested_quality: a.request.quality_index,
                    delivered_quality: a.delivered_quality,
                    from_cache: a.from_cache,
                    backhaul_delay_s: item.ready_s - item.dispatched_s,
                    downlink_time_s: c.completion_s - item.ready_s,
                });
            }
            arrivals[c.client].push(Arrival {
                request: a.request,
                size_bits: item.size_bits,
                media_s: item.media_s,
                completion_s: c.completion_s,
            });
        }
        self.rai_index += 1;
        arrivals
    }

    fn dispatch(&mut self, outcome: &SolveOutcome, catalog: &Catalog, now_s: f64) {
        let scheme = self.cfg.scheme;
        let gamma = self.cfg.solver.gamma;
        let mut new_downloads: BTreeSet<ContentKey> = BTreeSet::new();
        for a in &outcome.assignments {
            let req = a.request;
            let m = req.quality_index;
            let ok = if scheme.assigns_quality() {
                a.delivered_quality.abs_diff(m) <= gamma
            } else {
                a.delivered_quality == m
            };
            if !ok {
                self.stats.invariants.quality_window += 1;
            }
            self.stats.requests_assigned += 1;
            if a.delivered_quality != m {
                self.stats.quality_changes += 1;
            }

            let key = a.key();
            let cached = scheme.uses_cache() && self.cache.contains(&key);
            if a.from_cache != cached {
                self.stats.invariants.cache_flag += 1;
            }
            let ladder = catalog.ladder(req.video_id);
            let size = catalog.size_bits(key.video, key.chunk, key.quality);
            let client = req.client_id as usize;
            let id = self.next_item_id;
            self.next_item_id += 1;
            let ready_s = if cached {
                self.cache.touch(&key, self.rai_index);
                now_s
            } else {
                match self.fifo.iter_mut().find(|e| e.key == key) {
                    Some(e) => e.waiters.push((client, id)),
                    None => {
                        if !new_downloads.insert(key) {
                            self.stats.invariants.duplicate_download += 1;
                        }
                        self.fifo.push_back(FifoEntry {
                            key,
                            bitrate_bps: ladder.bitrates_bps[key.quality],
                            size_bits: size,
                            remaining_bits: size,
                            waiters: vec![(client, id)],
                        });
                    }
                }
                f64::INFINITY
            };
            self.dl_queues[client].push_back(DlItem {
                id,
                assignment: Assignment {
                    from_cache: cached,
                    ..*a
                },
                bitrate_bps: ladder.bitrates_bps[key.quality],
                size_bits: size,
                remaining_bits: size,
                media_s: ladder.chunk_duration_s,
                dispatched_s: now_s,
                ready_s,
            });
        }
        let distinct: BTreeSet<ContentKey> = self.fifo.iter().map(|e| e.key).collect();
        if distinct.len() != self.fifo.len() {
            self.stats.invariants.duplicate_download += 1;
        }
    }

    fn advance_backhaul(&mut self, now_s: f64) {
        let rate = self.cfg.backhaul_bps;
        let budget = rate * self.cfg.t_ap_s;
        let mut used = 0.0;
        while let Some(head) = self.fifo.front_mut() {
            let avail = budget - used;
            if avail <= 0.0 {
                break;
            }
            if head.remaining_bits > avail {
                head.remaining_bits -= avail;
                used = budget;
                break;
            }
            used += head.remaining_bits;
            let done = self.fifo.pop_front().unwrap();
            let t = now_s + used / rate;
            if self.cfg.scheme.uses_cache() {
                // content larger than the whole cache is simply not kept
                let _ = self
                    .cache
                    .insert(done.key, done.size_bits.round() as u64, self.rai_index);
            }
            for (client, id) in done.waiters {
                if let Some(item) = self.dl_queues[client].iter_mut().find(|d| d.id == id) {
                    item.ready_s = t;
                }
            }
        }
        if used > budget * (1.0 + 1e-12) {
            self.stats.invariants.backhaul_drain += 1;
        }
        self.stats.backhaul_bits += used;
    }

    fn allocate(&mut self, clients: &[ClientState], catalog: &Catalog, end_s: f64) -> Vec<f64> {
        let ac: Vec<AirtimeClient> = clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let ready: Vec<&DlItem> = self.dl_queues[i]
                    .iter()
                    .filter(|d| d.ready_s < end_s)
                    .collect();
                let bits: f64 = ready.iter().map(|d| d.remaining_bits).sum();
                let avg = if ready.is_empty() {
                    0.0
                } else {
                    ready.iter().map(|d| d.bitrate_bps).sum::<f64>() / ready.len() as f64
                };
                let tau = catalog.ladder(c.video_id).chunk_duration_s;
                AirtimeClient {
                    client_id: c.client_id,
                    dl_queue_bits: bits,
                    buffer_s: c.buffer_s,
                    avg_queued_bitrate_bps: avg,
                    link_capacity_bps: self.links[i].phy_capacity_bps,
                    buffered_chunks: (c.buffer_s / tau).floor() as u32,
                }
            })
            .collect();
        let alloc = if self.cfg.scheme.buffer_aware_airtime() {
            allocate_airtime(
                &ac,
                &AirtimeParams {
                    b_min_s: self.cfg.solver.b_min_s,
                    t_ap_s: self.cfg.t_ap_s,
                    sufficient_chunks: self.cfg.sufficient_chunks,
                },
            )
        } else {
            equal_airtime(&ac)
        };
        if alloc.total() > 1.0 + 1e-9 {
            self.stats.invariants.airtime_budget += 1;
        }
        alloc
            .shares
            .iter()
            .enumerate()
            .map(|(i, (_, s))| s * self.links[i].phy_capacity_bps)
            .collect()
    }
}

/// A complete AP cell: engine, clients and content.
pub struct Simulation {
    pub ap: ApState,
    pub clients: Vec<ClientState>,
    pub client_cfg: ClientConfig,
    pub catalog: Catalog,
    pub now_s: f64,
}

impl Simulation {
    pub fn new(
        ap: ApState,
        clients: Vec<ClientState>,
        client_cfg: ClientConfig,
        catalog: Catalog,
    ) -> Self {
        Self {
            ap,
            clients,
            client_cfg,
            catalog,
            now_s: 0.0,
        }
    }

    pub fn all_finished(&self) -> bool {
        self.clients.iter().all(|c| c.is_finished())
    }

    pub fn step(&mut self) {
        let t0 = self.ap.rai_index as f64 * self.ap.cfg.t_ap_s;
        let t1 = (self.ap.rai_index + 1) as f64 * self.ap.cfg.t_ap_s;
        let arrivals = self.ap.step_rai(&self.clients, &self.catalog, t0);
        for (c, arr) in self.clients.iter_mut().zip(&arrivals) {
            let ladder = self.catalog.ladder(c.video_id);
            let reqs = step_client(c, &self.client_cfg, &ladder.bitrates_bps, t1, arr);
            self.ap.intake.extend(reqs);
        }
        self.now_s = t1;
    }

    /// Step until every client has finished playout or `max_time_s` passes.
    pub fn run(&mut self, max_time_s: f64) {
        while !self.all_finished() && self.now_s < max_time_s {
            self.step();
        }
    }
}
