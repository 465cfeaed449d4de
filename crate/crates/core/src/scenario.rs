//! Scenario configuration, replicated runs, per-run metrics, confidence
//! intervals and CSV/JSON output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::assign::SolverParams;
use crate::catalog::{
    load_trace_catalog, make_synthetic_catalog, Catalog, PopularityModel, Spacing,
};
use crate::client::{ClientConfig, ClientState};
use crate::engine::{ApState, EngineConfig, Scheme, Simulation};
use crate::error::{Error, Result};
use crate::radio::{LinkState, RadioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    /// Per-chunk trace file; when set the synthetic fields are ignored.
    pub trace_path: Option<PathBuf>,
    pub levels: usize,
    pub min_kbps: f64,
    pub max_kbps: f64,
    pub spacing: Spacing,
    pub chunk_duration_s: f64,
    pub chunk_count: u32,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            trace_path: None,
            levels: 19,
            min_kbps: 100.0,
            max_kbps: 15_000.0,
            spacing: Spacing::Geometric,
            chunk_duration_s: 2.0,
            chunk_count: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schemes: Vec<Scheme>,
    pub n_clients: usize,
    pub n_videos: usize,
    pub backhaul_mbps: f64,
    pub gamma: usize,
    pub mu_c: f64,
    pub b_min_s: f64,
    pub b_max_s: f64,
    pub t_ap_s: f64,
    /// Unbounded when absent.
    pub cache_capacity_bits: Option<u64>,
    pub zipf_exponent: f64,
    /// Clients join uniformly at random within this window.
    pub join_window_s: f64,
    /// Playout start threshold; `b_max_s` when absent.
    pub start_threshold_s: Option<f64>,
    pub pareto_cap: Option<usize>,
    /// Simulated time limit; long enough for every client to finish when absent.
    pub duration_s: Option<f64>,
    pub replications: u32,
    pub base_seed: u64,
    /// Worker threads for independent runs; all cores when absent.
    pub threads: Option<usize>,
    pub radio: RadioConfig,
    pub catalog: CatalogConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            n_clients: 10,
            n_videos: 10,
            backhaul_mbps: 20.0,
            gamma: 2,
            mu_c: 1.3,
            b_min_s: 4.0,
            b_max_s: 15.0,
            t_ap_s: 0.5,
            cache_capacity_bits: None,
            zipf_exponent: 1.2,
            join_window_s: 10.0,
            start_threshold_s: None,
            pareto_cap: None,
            duration_s: None,
            replications: 20,
            base_seed: 1,
            threads: None,
            radio: RadioConfig::default(),
            catalog: CatalogConfig::default(),
        }
    }
}

pub const SWEEP_PARAMS: [&str; 5] = ["n_clients", "backhaul_mbps", "mu_c", "gamma", "n_videos"];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        Self::from_toml(&text)
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            gamma: self.gamma,
            mu_c: self.mu_c,
            b_min_s: self.b_min_s,
            b_max_s: self.b_max_s,
            pareto_cap: self.pareto_cap,
            ..Default::default()
        }
    }

    /// Every problem with the configuration, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        need(!self.schemes.is_empty(), "schemes must not be empty");
        need(self.n_clients >= 1, "n_clients must be at least 1");
        need(self.n_videos >= 1, "n_videos must be at least 1");
        need(self.backhaul_mbps > 0.0, "backhaul_mbps must be positive");
        need(self.mu_c >= 1.0, "mu_c must be at least 1");
        need(
            self.b_min_s > 0.0 && self.b_min_s < self.b_max_s,
            "need 0 < b_min_s < b_max_s",
        );
        need(self.t_ap_s > 0.0, "t_ap_s must be positive");
        need(self.zipf_exponent > 0.0, "zipf_exponent must be positive");
        need(
            self.join_window_s >= 0.0,
            "join_window_s must be non-negative",
        );
        need(
            self.start_threshold_s.is_none_or(|s| s > 0.0),
            "start_threshold_s must be positive",
        );
        need(self.pareto_cap != Some(0), "pareto_cap must be at least 1");
        need(
            self.duration_s.is_none_or(|d| d > 0.0),
            "duration_s must be positive",
        );
        need(self.replications >= 1, "replications must be at least 1");
        need(self.threads != Some(0), "threads must be at least 1");
        need(
            self.cache_capacity_bits != Some(0),
            "cache_capacity_bits must be positive",
        );
        if self.catalog.trace_path.is_none() {
            need(
                self.catalog.levels >= 1,
                "catalog.levels must be at least 1",
            );
            need(
                self.catalog.min_kbps > 0.0 && self.catalog.min_kbps <= self.catalog.max_kbps,
                "need 0 < catalog.min_kbps <= catalog.max_kbps",
            );
            need(
                self.catalog.chunk_duration_s > 0.0,
                "catalog.chunk_duration_s must be positive",
            );
            need(
                self.catalog.chunk_count >= 1,
                "catalog.chunk_count must be at least 1",
            );
        }
        if let Err(Error::Config(m)) = self.radio.validate() {
            errs.push(m);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    pub fn build_catalog(&self) -> Result<Catalog> {
        match &self.catalog.trace_path {
            Some(p) => load_trace_catalog(p),
            None => {
                let c = &self.catalog;
                make_synthetic_catalog(
                    self.n_videos,
                    c.levels,
                    c.min_kbps * 1e3,
                    c.max_kbps * 1e3,
                    c.chunk_duration_s,
                    c.chunk_count,
                    c.spacing,
                )
            }
        }
    }

    /// Set a sweepable parameter from its numeric value.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{name} needs a non-negative integer, got {v}"
                )))
            }
        };
        match name {
            "n_clients" => self.n_clients = as_count(value)?,
            "n_videos" => self.n_videos = as_count(value)?,
            "gamma" => self.gamma = as_count(value)?,
            "backhaul_mbps" => self.backhaul_mbps = value,
            "mu_c" => self.mu_c = value,
            _ => {
                return Err(Error::UnknownParameter {
                    name: name.to_string(),
                    valid: SWEEP_PARAMS.join(", "),
                })
            }
        }
        Ok(())
    }
}

/// Metrics of one (scheme, replication) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub param: String,
    pub value: String,
    pub scheme: Scheme,
    pub rep: u32,
    pub seed: u64,
    pub mean_bitrate_kbps: f64,
    pub cache_bit_hit_ratio: f64,
    pub stall_ratio: f64,
    pub initial_latency_s: f64,
    pub backhaul_utilization: f64,
    pub no_valid_config_fraction: f64,
    pub quality_changes: u64,
    pub invariant_violations: u64,
}

/// Metric columns summarized per cell, in output order.
pub const METRICS: [&str; 6] = [
    "mean_bitrate_kbps",
    "cache_bit_hit_ratio",
    "stall_ratio",
    "initial_latency_s",
    "backhaul_utilization",
    "no_valid_config_fraction",
];

impl RunMetrics {
    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "mean_bitrate_kbps" => self.mean_bitrate_kbps,
            "cache_bit_hit_ratio" => self.cache_bit_hit_ratio,
            "stall_ratio" => self.stall_ratio,
            "initial_latency_s" => self.initial_latency_s,
            "backhaul_utilization" => self.backhaul_utilization,
            "no_valid_config_fraction" => self.no_valid_config_fraction,
            _ => f64::NAN,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Build the cell for replication `rep`. Placement, video choice and join
/// times come from the replication seed only, so every scheme sees the same draw.
pub fn build_simulation(
    cfg: &ScenarioConfig,
    catalog: &Catalog,
    scheme: Scheme,
    rep: u32,
) -> Result<Simulation> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_clients;
    let distances = cfg.radio.place_clients(n, &mut rng);
    let popularity = PopularityModel::new(
        cfg.zipf_exponent,
        catalog.video_count().min(cfg.n_videos).max(1),
    )?;
    let videos: Vec<u32> = (0..n).map(|_| popularity.sample_video(&mut rng)).collect();
    let joins: Vec<f64> = (0..n)
        .map(|_| rng.gen::<f64>() * cfg.join_window_s)
        .collect();

    let links = distances
        .iter()
        .enumerate()
        .map(|(i, d)| LinkState {
            client_id: i as u32,
            distance_m: *d,
            phy_capacity_bps: cfg.radio.link_capacity(*d),
        })
        .collect();
    let clients = (0..n)
        .map(|i| {
            let l = catalog.ladder(videos[i]);
            ClientState::new(
                i as u32,
                videos[i],
                joins[i],
                l.chunk_count,
                l.chunk_duration_s,
            )
        })
        .collect();
    let engine = EngineConfig {
        scheme,
        t_ap_s: cfg.t_ap_s,
        backhaul_bps: cfg.backhaul_mbps * 1e6,
        solver: cfg.solver_params(),
        cache_capacity_bits: cfg.cache_capacity_bits.unwrap_or(u64::MAX),
        sufficient_chunks: 2,
        record_events: false,
    };
    let client_cfg = ClientConfig {
        b_max_s: cfg.b_max_s,
        start_threshold_s: cfg.start_threshold_s.unwrap_or(cfg.b_max_s),
        ..Default::default()
    };
    Ok(Simulation::new(
        ApState::new(engine, links),
        clients,
        client_cfg,
        catalog.clone(),
    ))
}

fn time_limit(cfg: &ScenarioConfig, catalog: &Catalog) -> f64 {
    cfg.duration_s.unwrap_or_else(|| {
        let longest = catalog
            .ladders()
            .iter()
            .map(|l| l.chunk_count as f64 * l.chunk_duration_s)
            .fold(0.0, f64::max);
        cfg.join_window_s + 4.0 * longest + 120.0
    })
}

pub fn metrics_of(sim: &Simulation) -> (f64, f64, f64, f64, f64, f64) {
    let st = &sim.ap.stats;
    let per_client: Vec<f64> = st
        .bitrate_sum_bps
        .iter()
        .zip(&st.chunks_delivered)
        .filter(|(_, n)| **n > 0)
        .map(|(s, n)| s / *n as f64 / 1e3)
        .collect();
    let stalls: Vec<f64> = sim
        .clients
        .iter()
        .map(|c| {
            let t = c.session_time_s(sim.now_s);
            if t > 0.0 {
                c.stall_time_s / t
            } else {
                0.0
            }
        })
        .collect();
    let latencies: Vec<f64> = sim
        .clients
        .iter()
        .filter_map(|c| c.startup_latency_s)
        .collect();
    let hit = if st.delivered_bits > 0.0 {
        st.cache_bits / st.delivered_bits
    } else {
        0.0
    };
    let active = sim.now_s * sim.ap.cfg.backhaul_bps;
    let util = if active > 0.0 {
        st.backhaul_bits / active
    } else {
        0.0
    };
    let nvc = if st.rais_with_requests > 0 {
        st.rais_without_config as f64 / st.rais_with_requests as f64
    } else {
        0.0
    };
    (
        mean(&per_client),
        hit,
        mean(&stalls),
        mean(&latencies),
        util,
        nvc,
    )
}

/// One complete run.
pub fn run_replication(
    cfg: &ScenarioConfig,
    catalog: &Catalog,
    scheme: Scheme,
    rep: u32,
) -> Result<RunMetrics> {
    let mut sim = build_simulation(cfg, catalog, scheme, rep)?;
    sim.run(time_limit(cfg, catalog));
    let (bitrate, hit, stall, latency, util, nvc) = metrics_of(&sim);
    Ok(RunMetrics {
        param: String::new(),
        value: String::new(),
        scheme,
        rep,
        seed: cfg.base_seed.wrapping_add(rep as u64),
        mean_bitrate_kbps: bitrate,
        cache_bit_hit_ratio: hit,
        stall_ratio: stall,
        initial_latency_s: latency,
        backhaul_utilization: util,
        no_valid_config_fraction: nvc,
        quality_changes: sim.ap.stats.quality_changes,
        invariant_violations: sim.ap.stats.invariants.total(),
    })
}

fn par_map<T: Sync, U: Send>(
    items: &[T],
    threads: Option<usize>,
    f: impl Fn(&T) -> U + Sync,
) -> Vec<U> {
    let workers = threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(items.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<U>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

/// All schemes times all replications, sorted by (scheme, rep).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    let catalog = cfg.build_catalog()?;
    let mut jobs: Vec<(Scheme, u32)> = Vec::new();
    for s in &cfg.schemes {
        for r in 0..cfg.replications {
            jobs.push((*s, r));
        }
    }
    jobs.sort();
    jobs.dedup();
    par_map(&jobs, cfg.threads, |(s, r)| {
        run_replication(cfg, &catalog, *s, *r)
    })
    .into_iter()
    .collect()
}

/// Cross product of `values` with the scenario's schemes and replications.
pub fn sweep(cfg: &ScenarioConfig, param: &str, values: &[f64]) -> Result<Vec<RunMetrics>> {
    let mut rows = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        c.set_param(param, *v)?;
        c.validate()?;
    }
    for v in values {
        let mut c = cfg.clone();
        c.set_param(param, *v)?;
        for mut row in run_scenario(&c)? {
            row.param = param.to_string();
            row.value = v.to_string();
            rows.push(row);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Half-width of the 95% Student-t interval; absent for a single sample.
    pub ci95: Option<f64>,
}

pub fn mean_ci(values: &[f64]) -> Stat {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return Stat {
            mean: m,
            ci95: None,
        };
    }
    let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Stat {
            mean: m,
            ci95: Some(0.0),
        };
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Stat {
        mean: m,
        ci95: Some(t * sd / (n as f64).sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub param: String,
    pub value: String,
    pub scheme: Scheme,
    pub runs: usize,
    pub metrics: BTreeMap<String, Stat>,
    pub invariant_violations: u64,
}

/// Mean and CI per (param value, scheme) cell, in first-appearance order of values.
pub fn summarize(rows: &[RunMetrics]) -> Vec<SummaryCell> {
    let mut keys: Vec<(String, String, Scheme)> = Vec::new();
    for r in rows {
        let k = (r.param.clone(), r.value.clone(), r.scheme);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(param, value, scheme)| {
            let cell: Vec<&RunMetrics> = rows
                .iter()
                .filter(|r| r.param == param && r.value == value && r.scheme == scheme)
                .collect();
            let metrics = METRICS
                .iter()
                .map(|m| {
                    let v: Vec<f64> = cell.iter().map(|r| r.metric(m)).collect();
                    (m.to_string(), mean_ci(&v))
                })
                .collect();
            SummaryCell {
                param,
                value,
                scheme,
                runs: cell.len(),
                metrics,
                invariant_violations: cell.iter().map(|r| r.invariant_violations).sum(),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[RunMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(summary: &[SummaryCell], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, summary)?;
    Ok(())
}

/// Fixed-width text table of the summary.
pub fn format_summary(summary: &[SummaryCell]) -> String {
    let fmt = |s: &Stat| match s.ci95 {
        Some(h) => format!("{:.4} ± {:.4}", s.mean, h),
        None => format!("{:.4} ± NA", s.mean),
    };
    let mut out = format!("{:<14} {:<8} {:<13}", "param", "value", "scheme");
    for m in METRICS {
        out.push_str(&format!(" {m:>26}"));
    }
    out.push('\n');
    for c in summary {
        out.push_str(&format!(
            "{:<14} {:<8} {:<13}",
            c.param,
            c.value,
            c.scheme.name()
        ));
        for m in METRICS {
            out.push_str(&format!(" {:>26}", fmt(&c.metrics[m])));
        }
        out.push('\n');
    }
    out
}
