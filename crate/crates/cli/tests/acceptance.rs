//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::collections::VecDeque;
use std::process::Command;
use std::time::{Duration, Instant};

use apstream_core::buffer::{estimate_buffer, BufferEstimateInput};
use apstream_core::cache::{CacheState, ContentKey};
use apstream_core::cph::{
    pareto_min, solve_groups, Configuration, Group, Item, Pick, PruneStrategy,
};
use apstream_core::engine::Scheme;
use apstream_core::oracle::{compare, random_instance};
use apstream_core::scenario::{mean_ci, run_scenario, sweep, RunMetrics, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rows_for<'a>(
    rows: &'a [RunMetrics],
    scheme: Scheme,
    value: Option<&str>,
) -> Vec<&'a RunMetrics> {
    rows.iter()
        .filter(|r| r.scheme == scheme && value.is_none_or(|v| r.value == v))
        .collect()
}

fn mean_of(rows: &[&RunMetrics], f: impl Fn(&RunMetrics) -> f64) -> f64 {
    rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
}

fn oracle_exactness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = 0;
    for _ in 0..500 {
        let inst = random_instance(&mut rng, 4, 5);
        let c = compare(&inst).map_err(|e| e.to_string())?;
        if !c.agrees() {
            bad += 1;
        }
    }
    let took = start.elapsed();
    ensure(
        bad == 0 && took < Duration::from_secs(30),
        format!(
            "500 instances, {bad} mismatches, {:.2}s",
            took.as_secs_f64()
        ),
    )
}

fn item(video: u32, quality: usize, utility: f64, cost: f64) -> Item {
    Item {
        key: ContentKey::new(video, 0, quality),
        utility,
        cost_bps: cost,
        cached: false,
    }
}

fn by_group(c: &Configuration) -> Vec<usize> {
    let mut p: Vec<&Pick> = c.picks.iter().collect();
    p.sort_by_key(|p| p.group);
    p.iter().map(|p| p.key.quality).collect()
}

fn pruning_examples() -> Check {
    // Three clients on distinct content, levels r1..r3.
    let table = [
        [(5.0, 250.0), (10.0, 400.0), (6.0, 700.0)],
        [(1.0, 250.0), (10.0, 450.0), (12.0, 800.0)],
        [(4.0, 150.0), (9.0, 300.0), (11.0, 600.0)],
    ];
    let groups: Vec<Group> = table
        .iter()
        .enumerate()
        .map(|(i, row)| Group {
            client_id: i as u32,
            items: row
                .iter()
                .enumerate()
                .map(|(m, (u, c))| item(i as u32, m, *u, *c))
                .collect(),
        })
        .collect();
    let a = solve_groups(&groups, 1200.0, PruneStrategy::SharedContentAware, None)
        .best
        .ok_or("distinct-content instance infeasible")?;
    let a_ok =
        a.total_utility == 29.0 && a.total_cost_bps == 1150.0 && by_group(&a) == vec![1, 1, 1];

    // Three clients on one chunk; cost depends only on the quality level.
    let cost = [300.0, 500.0, 700.0, 1000.0, 1200.0];
    let shared = [
        vec![(0, 6.0), (1, 0.0), (2, 6.0)],
        vec![(2, 5.0), (3, 14.0), (4, 14.0)],
        vec![(1, 2.0), (2, 15.0), (3, 7.0)],
    ];
    let groups: Vec<Group> = shared
        .iter()
        .enumerate()
        .map(|(i, row)| Group {
            client_id: i as u32,
            items: row.iter().map(|(q, u)| item(0, *q, *u, cost[*q])).collect(),
        })
        .collect();
    let util = |s: PruneStrategy| {
        solve_groups(&groups, 1700.0, s, None)
            .best
            .map(|c| c.total_utility)
    };
    let adapted = util(PruneStrategy::SharedContentAware);
    let eager = util(PruneStrategy::Eager);

    let cfg = |u: f64, c: f64| Configuration {
        total_utility: u,
        total_cost_bps: c,
        picks: Vec::new(),
    };
    let front = pareto_min(vec![cfg(20.0, 850.0), cfg(7.0, 950.0)]);
    let front_ok =
        front.len() == 1 && front[0].total_utility == 20.0 && front[0].total_cost_bps == 850.0;

    ensure(
        a_ok && adapted == Some(35.0) && eager == Some(27.0) && front_ok,
        format!(
            "distinct: U={} cost={} levels={:?}; shared: adapted={adapted:?} eager={eager:?}; front size {}",
            a.total_utility,
            a.total_cost_bps,
            by_group(&a),
            front.len()
        ),
    )
}

fn invariant_suite() -> Check {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        replications: 10,
        base_seed: 300,
        ..Default::default()
    };
    let rows = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let violations: u64 = rows.iter().map(|r| r.invariant_violations).sum();
    let took = start.elapsed();
    ensure(
        rows.len() == 50 && violations == 0 && took < Duration::from_secs(300),
        format!(
            "{} runs, {violations} violations, {:.1}s",
            rows.len(),
            took.as_secs_f64()
        ),
    )
}

fn zero_tolerance_identity() -> Check {
    let cfg = ScenarioConfig {
        gamma: 0,
        schemes: vec![Scheme::Cph, Scheme::CphEq, Scheme::Buff],
        ..Default::default()
    };
    let rows = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let changes: u64 = rows.iter().map(|r| r.quality_changes).sum();
    ensure(
        changes == 0,
        format!("{} runs, {changes} overwritten qualities", rows.len()),
    )
}

fn trends() -> Check {
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let rows = sweep(&cfg, "n_clients", &[1.0, 5.0, 10.0, 20.0]).map_err(|e| e.to_string())?;
    let m =
        |s: Scheme, n: &str, f: fn(&RunMetrics) -> f64| mean_of(&rows_for(&rows, s, Some(n)), f);
    let bitrate = |r: &RunMetrics| r.mean_bitrate_kbps;
    let hit = |r: &RunMetrics| r.cache_bit_hit_ratio;
    let stall = |r: &RunMetrics| r.stall_ratio;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for n in ["10", "20"] {
        let [cph, buff, cc, cl] = [
            Scheme::Cph,
            Scheme::Buff,
            Scheme::ClientCache,
            Scheme::Client,
        ]
        .map(|s| m(s, n, bitrate));
        notes.push(format!("N={n} kbps {cph:.0}/{buff:.0}/{cc:.0}/{cl:.0}"));
        if !(cph >= buff && buff >= cc && cc >= cl) {
            failures.push(format!("bitrate order at N={n}"));
        }
        if cph < 1.25 * cl {
            failures.push(format!("CPH gain over CLIENT at N={n}"));
        }
        let [hc, hcc, hcl] =
            [Scheme::Cph, Scheme::ClientCache, Scheme::Client].map(|s| m(s, n, hit));
        notes.push(format!("hit {hc:.3}/{hcc:.3}/{hcl:.3}"));
        if !(hc >= hcc && hcc >= hcl && hcl == 0.0) {
            failures.push(format!("hit order at N={n}"));
        }
    }
    let (sc, scl) = (m(Scheme::Cph, "20", stall), m(Scheme::Client, "20", stall));
    notes.push(format!("N=20 stall CPH {sc:.4} CLIENT {scl:.4}"));
    if scl < 2.0 * sc {
        failures.push("stall ratio at N=20".into());
    }
    let took = start.elapsed();
    if took > Duration::from_secs(1200) {
        failures.push("runtime".into());
    }
    notes.push(format!("{:.1}s", took.as_secs_f64()));
    let msg = notes.join("; ");
    if failures.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; failed: {}", failures.join(", ")))
    }
}

fn single_video_cache() -> Check {
    let cfg = ScenarioConfig {
        n_videos: 1,
        schemes: vec![Scheme::Cph, Scheme::ClientCache],
        ..Default::default()
    };
    let rows = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let cph = rows_for(&rows, Scheme::Cph, None);
    let cc = rows_for(&rows, Scheme::ClientCache, None);
    let good = cph
        .iter()
        .zip(&cc)
        .filter(|(a, b)| {
            assert_eq!(a.rep, b.rep);
            a.cache_bit_hit_ratio >= 2.0 * b.cache_bit_hit_ratio
        })
        .count();
    ensure(
        good * 10 >= cph.len() * 9,
        format!(
            "{good}/{} runs at >= 2x; mean hit {:.3} vs {:.3}",
            cph.len(),
            mean_of(&cph, |r| r.cache_bit_hit_ratio),
            mean_of(&cc, |r| r.cache_bit_hit_ratio)
        ),
    )
}

fn cache_weight_sweep() -> Check {
    let cfg = ScenarioConfig {
        schemes: vec![Scheme::Cph],
        ..Default::default()
    };
    let rows = sweep(&cfg, "mu_c", &[1.0, 1.3, 1.5]).map_err(|e| e.to_string())?;
    let stat = |v: &str| {
        let xs: Vec<f64> = rows_for(&rows, Scheme::Cph, Some(v))
            .iter()
            .map(|r| r.cache_bit_hit_ratio)
            .collect();
        mean_ci(&xs)
    };
    let (lo, mid, hi) = (stat("1"), stat("1.3"), stat("1.5"));
    let half = lo.ci95.unwrap_or(0.0);
    ensure(
        hi.mean >= lo.mean - half,
        format!(
            "hit {:.4} / {:.4} / {:.4}, CI half-width at 1.0 {half:.4}",
            lo.mean, mid.mean, hi.mean
        ),
    )
}

/// Time-stepped replay: the queued chunks drain first at the effective rate,
/// the new chunk enters the link once it has both reached the AP and the
/// queue ahead has cleared, playback consumes one second per second and a
/// queued chunk adds its media when its last bit lands.
fn replay(input: &BufferEstimateInput, queued_chunks: &[(f64, f64)], dt: f64) -> f64 {
    let rate = input.effective_rate_bps;
    let t_b = if input.from_cache {
        0.0
    } else {
        input.backhaul_delay_s
    };
    let new_bits = input.dl_transmit_s * rate;
    let mut queue: VecDeque<(f64, f64)> = queued_chunks.iter().copied().collect();
    let mut new_left = new_bits;
    let mut buffer = input.current_buffer_s;
    let mut t = 0.0;
    loop {
        let mut budget = rate * dt;
        buffer -= dt;
        while budget > 0.0 {
            if let Some(front) = queue.front_mut() {
                let take = front.0.min(budget);
                front.0 -= take;
                budget -= take;
                if front.0 <= 0.0 {
                    buffer += front.1;
                    queue.pop_front();
                }
            } else if t + dt > t_b {
                // Only the part of the step after arrival can carry the new chunk.
                let usable = budget.min(rate * (t + dt - t_b).min(dt));
                let take = new_left.min(usable);
                new_left -= take;
                if new_left <= 0.0 {
                    let unused = (usable - take) / rate;
                    return buffer + unused;
                }
                break;
            } else {
                break;
            }
        }
        t += dt;
    }
}

fn buffer_model() -> Check {
    let base = |b: f64, t_b: f64, t_dl: f64, d: f64, tau: f64, cache: bool| BufferEstimateInput {
        current_buffer_s: b,
        backhaul_delay_s: t_b,
        dl_transmit_s: t_dl,
        dl_queue_bits: d,
        dl_queue_media_s: tau,
        effective_rate_bps: 1e6,
        from_cache: cache,
    };
    let hand = [
        (base(8.0, 3.0, 1.0, 0.0, 0.0, false), 4.0),
        (base(8.0, 3.0, 1.0, 4e6, 6.0, false), 9.0),
        (base(8.0, 3.0, 1.0, 0.0, 0.0, true), 7.0),
        (base(8.0, 3.0, 1.0, 4e6, 6.0, true), 9.0),
    ];
    let hand_ok = hand.iter().all(|(i, want)| estimate_buffer(i) == *want);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let rate = rng.gen_range(1e6..50e6);
        let chunks: Vec<(f64, f64)> = (0..rng.gen_range(0..4))
            .map(|_| (rng.gen_range(1e5..8e6), 2.0))
            .collect();
        let input = BufferEstimateInput {
            current_buffer_s: rng.gen_range(0.0..16.0),
            backhaul_delay_s: rng.gen_range(0.0..4.0),
            dl_transmit_s: rng.gen_range(0.01..3.0),
            dl_queue_bits: chunks.iter().map(|c| c.0).sum(),
            dl_queue_media_s: chunks.iter().map(|c| c.1).sum(),
            effective_rate_bps: rate,
            from_cache: rng.gen_bool(0.3),
        };
        let gap = (estimate_buffer(&input) - replay(&input, &chunks, 1e-3)).abs();
        worst = worst.max(gap);
    }
    ensure(
        hand_ok && worst <= 0.5,
        format!(
            "hand cases {}, max replay gap {worst:.4}s over 1000 states",
            if hand_ok { "exact" } else { "wrong" }
        ),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_apstream"))
            .args([
                "run",
                "--clients",
                "6",
                "--reps",
                "3",
                "--seed",
                "42",
                "--out-csv",
            ])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("binary exited with {}", status.status));
        }
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(
        !outputs[0].is_empty() && outputs[0] == outputs[1],
        format!(
            "two invocations, {} CSV bytes each, identical={}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

/// Recency list, most recent last.
struct ReferenceLru {
    capacity: u64,
    entries: Vec<(ContentKey, u64)>,
}

impl ReferenceLru {
    fn used(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    fn touch(&mut self, key: ContentKey) {
        if let Some(i) = self.entries.iter().position(|e| e.0 == key) {
            let e = self.entries.remove(i);
            self.entries.push(e);
        }
    }

    fn insert(&mut self, key: ContentKey, size: u64) -> Vec<ContentKey> {
        if self.entries.iter().any(|e| e.0 == key) {
            self.touch(key);
            return Vec::new();
        }
        let mut evicted = Vec::new();
        while self.used() + size > self.capacity {
            evicted.push(self.entries.remove(0).0);
        }
        self.entries.push((key, size));
        evicted
    }
}

fn lru_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let capacity = 5_000;
    let mut cache = CacheState::new(capacity);
    let mut reference = ReferenceLru {
        capacity,
        entries: Vec::new(),
    };
    let mut ops = 0;
    for now in 0..10_000u64 {
        let key = ContentKey::new(
            rng.gen_range(0..3),
            rng.gen_range(0..6),
            rng.gen_range(0..3),
        );
        if rng.gen_bool(0.6) {
            let size = rng.gen_range(1..=1_500);
            let got = cache.insert(key, size, now).map_err(|e| e.to_string())?;
            if got != reference.insert(key, size) {
                return Err(format!("op {now}: eviction list differs"));
            }
        } else {
            cache.touch(&key, now);
            reference.touch(key);
        }
        let order: Vec<ContentKey> = reference.entries.iter().map(|e| e.0).collect();
        if cache.lru_order() != order
            || cache.used_bits() != reference.used()
            || cache.contains(&key) != order.contains(&key)
        {
            return Err(format!("op {now}: state differs"));
        }
        ops += 1;
    }
    Ok(format!("{ops} operations, exact agreement"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("solver matches exhaustive search", oracle_exactness),
        ("worked pruning examples", pruning_examples),
        ("constraint invariants", invariant_suite),
        (
            "zero tolerance keeps requested quality",
            zero_tolerance_identity,
        ),
        ("scheme ordering over client counts", trends),
        ("single-video cache amplification", single_video_cache),
        ("cache weight sweep", cache_weight_sweep),
        ("buffer model", buffer_model),
        ("CSV determinism", determinism),
        ("LRU reference", lru_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
