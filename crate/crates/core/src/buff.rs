//! Greedy stall-safe quality assignment.
//!
//! Among all stall-safe candidates of all pending requests, repeatedly take
//! the one with the highest weighted log-bitrate that still fits the
//! remaining backhaul budget.

use std::cmp::Ordering;

use crate::assign::{
    build_candidates, Assignment, ContentView, RequestContext, SolveOutcome, SolverParams,
};
use crate::cache::ContentKey;

#[derive(Debug, Clone, Copy)]
struct Cand {
    request: usize,
    client_id: u32,
    key: ContentKey,
    cached: bool,
    cost: f64,
    score: f64,
}

fn preferred(a: &Cand, b: &Cand) -> bool {
    match a.score.total_cmp(&b.score) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.key.quality.cmp(&b.key.quality) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (a.client_id, a.request) < (b.client_id, b.request),
        },
    }
}

pub fn buff_assign(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    backhaul_bps: f64,
    params: &SolverParams,
) -> SolveOutcome {
    let mut cands: Vec<Cand> = Vec::new();
    for (i, ctx) in contexts.iter().enumerate() {
        let all = build_candidates(ctx, view, params);
        for (pos, c) in all.iter().enumerate() {
            // the lowest tolerated level stays available even when unsafe
            if pos > 0 && c.estimated_buffer_s < 0.0 {
                continue;
            }
            let w = if c.cached { params.mu_c } else { 1.0 };
            cands.push(Cand {
                request: i,
                client_id: c.client_id,
                key: c.key(),
                cached: c.cached,
                cost: c.cost_bps,
                score: w * (c.bitrate_bps / params.log_unit_bps).ln(),
            });
        }
    }

    let mut remaining = backhaul_bps;
    cands.retain(|c| c.cost <= remaining);
    let mut chosen: Vec<Option<Cand>> = vec![None; contexts.len()];
    let mut total_utility = 0.0;
    let mut total_cost = 0.0;

    while let Some(best) = cands
        .iter()
        .copied()
        .reduce(|a, b| if preferred(&b, &a) { b } else { a })
    {
        chosen[best.request] = Some(best);
        total_utility += best.score;
        total_cost += best.cost;
        remaining -= best.cost;
        cands.retain(|c| c.request != best.request);
        for c in cands.iter_mut().filter(|c| c.key == best.key) {
            c.cost = 0.0;
        }
        cands.retain(|c| c.cost <= remaining);
    }

    let assignments = contexts
        .iter()
        .zip(&chosen)
        .map(|(ctx, pick)| match pick {
            Some(c) => Assignment {
                request: ctx.request,
                delivered_quality: c.key.quality,
                from_cache: c.cached,
                airtime: 0.0,
            },
            None => Assignment {
                request: ctx.request,
                delivered_quality: ctx.request.quality_index,
                from_cache: view.is_cached(&ctx.request.key()),
                airtime: 0.0,
            },
        })
        .collect();

    SolveOutcome {
        assignments,
        total_utility,
        total_cost_bps: total_cost,
        no_valid_config: false,
    }
}
