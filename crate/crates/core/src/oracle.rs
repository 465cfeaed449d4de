//! Random small assignment instances for differential checks of the CPH
//! solver against exhaustive search.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::assign::{ChunkRequest, RequestContext, SolverParams, StaticContentView};
use crate::cph::{brute_force_assign, cph_assign};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub contexts: Vec<RequestContext>,
    pub view: StaticContentView,
    pub backhaul_bps: f64,
    pub params: SolverParams,
}

/// Up to `max_clients` requests over a pool of at most two videos and two
/// chunks, so shared content is common. Ladders have at most `max_levels`
/// whole-bps bitrates.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_clients: usize,
    max_levels: usize,
) -> RandomInstance {
    let n = rng.gen_range(1..=max_clients);
    let videos = rng.gen_range(1..=2u32);
    let chunks = rng.gen_range(1..=2u32);
    let ladders: Vec<Vec<f64>> = (0..videos)
        .map(|_| {
            let q = rng.gen_range(1..=max_levels);
            let mut rates: Vec<f64> = Vec::with_capacity(q);
            let mut r = rng.gen_range(100_000..600_000) as f64;
            for _ in 0..q {
                rates.push(r);
                r += rng.gen_range(50_000..1_500_000) as f64;
            }
            rates
        })
        .collect();
    let params = SolverParams {
        gamma: *[0usize, 1, 2].choose(rng).unwrap(),
        ..Default::default()
    };
    let backhaul_bps = rng.gen_range(200_000..8_000_000) as f64;
    let mut view = StaticContentView {
        backhaul_bps,
        fifo_bits_ahead: if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..1e7)
        },
        ..Default::default()
    };
    let contexts = (0..n)
        .map(|i| {
            let video = rng.gen_range(0..videos);
            let ladder = &ladders[video as usize];
            let request = ChunkRequest {
                client_id: i as u32,
                video_id: video,
                chunk_index: rng.gen_range(0..chunks),
                quality_index: rng.gen_range(0..ladder.len()),
                issue_time_s: 0.0,
            };
            for m in 0..ladder.len() {
                let key = request.key_at(m);
                if rng.gen_bool(0.25) {
                    view.cached.insert(key);
                } else if rng.gen_bool(0.1) {
                    view.committed.insert(key);
                }
            }
            let queued = rng.gen_bool(0.5);
            RequestContext {
                request,
                bitrates_bps: ladder.clone(),
                chunk_duration_s: 2.0,
                buffer_s: rng.gen_range(0.0..16.0),
                dl_queue_bits: if queued { rng.gen_range(1e5..8e6) } else { 0.0 },
                dl_queue_media_s: if queued {
                    2.0 * rng.gen_range(1..4) as f64
                } else {
                    0.0
                },
                link_capacity_bps: rng.gen_range(5e6..60e6),
                equal_share_clients: n,
            }
        })
        .collect();
    RandomInstance {
        contexts,
        view,
        backhaul_bps,
        params,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub cph_utility: f64,
    pub oracle_utility: f64,
    pub cph_cost: f64,
    pub oracle_cost: f64,
    pub same_qualities: bool,
}

impl Comparison {
    /// Bitwise utility agreement (both infeasible also counts).
    pub fn agrees(&self) -> bool {
        let both_nan = self.cph_utility.is_nan() && self.oracle_utility.is_nan();
        both_nan
            || (self.cph_utility.to_bits() == self.oracle_utility.to_bits() && self.same_qualities)
    }
}

pub fn compare(inst: &RandomInstance) -> Result<Comparison> {
    let a = cph_assign(&inst.contexts, &inst.view, inst.backhaul_bps, &inst.params);
    let b = brute_force_assign(&inst.contexts, &inst.view, inst.backhaul_bps, &inst.params)?;
    let q = |o: &crate::assign::SolveOutcome| {
        o.assignments
            .iter()
            .map(|x| x.delivered_quality)
            .collect::<Vec<_>>()
    };
    Ok(Comparison {
        cph_utility: a.total_utility,
        oracle_utility: b.total_utility,
        cph_cost: a.total_cost_bps,
        oracle_cost: b.total_cost_bps,
        same_qualities: q(&a) == q(&b),
    })
}

/// Compare `instances` seeded random instances; returns the disagreeing ones
/// by position.
pub fn check_many(instances: usize, seed: u64) -> Result<Vec<(usize, Comparison)>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for i in 0..instances {
        let c = compare(&random_instance(&mut rng, 4, 5))?;
        if !c.agrees() {
            bad.push((i, c));
        }
    }
    Ok(bad)
}
