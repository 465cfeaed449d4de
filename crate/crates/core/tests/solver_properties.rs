use std::collections::BTreeSet;

use apstream_core::assign::{
    tolerated_set, ChunkRequest, ContentView, RequestContext, SolveOutcome, SolverParams,
    StaticContentView,
};
use apstream_core::buff::buff_assign;
use apstream_core::cache::ContentKey;
use apstream_core::cph::{
    cph_assign, groups_for, pareto_min, solve_groups, Configuration, PruneStrategy,
};
use apstream_core::oracle::{random_instance, RandomInstance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> RandomInstance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 4, 5)
}

/// Constraints every non-fallback outcome must satisfy: one pick per request,
/// within tolerance and cache flag matching presence. With `whole_budget`,
/// the distinct uncached content of every assignment must fit the backhaul;
/// otherwise only the solver's charged cost is bounded, since requests left
/// unassigned at exhaustion keep their requested quality.
fn check_outcome(
    inst: &RandomInstance,
    out: &SolveOutcome,
    whole_budget: bool,
) -> Result<(), TestCaseError> {
    prop_assert_eq!(out.assignments.len(), inst.contexts.len());
    let mut clients = BTreeSet::new();
    let mut charged = BTreeSet::new();
    let mut cost = 0.0;
    for (a, ctx) in out.assignments.iter().zip(&inst.contexts) {
        prop_assert!(clients.insert(a.client_id()));
        prop_assert_eq!(a.request, ctx.request);
        if out.no_valid_config {
            prop_assert_eq!(a.delivered_quality, ctx.request.quality_index);
            continue;
        }
        let window = tolerated_set(
            ctx.request.quality_index,
            inst.params.gamma,
            ctx.bitrates_bps.len(),
        );
        prop_assert!(window.contains(&a.delivered_quality));
        prop_assert_eq!(a.from_cache, inst.view.is_cached(&a.key()));
        if !a.from_cache && !inst.view.is_committed(&a.key()) && charged.insert(a.key()) {
            cost += ctx.bitrates_bps[a.delivered_quality];
        }
    }
    if !out.no_valid_config {
        prop_assert!(out.total_cost_bps <= inst.backhaul_bps);
        if whole_budget {
            prop_assert!(cost <= inst.backhaul_bps);
        }
    }
    Ok(())
}

fn config(u: f64, c: f64) -> Configuration {
    Configuration {
        total_utility: u,
        total_cost_bps: c,
        picks: Vec::new(),
    }
}

fn points(cs: &[Configuration]) -> Vec<(u64, u64)> {
    let mut v: Vec<_> = cs
        .iter()
        .map(|c| (c.total_utility.to_bits(), c.total_cost_bps.to_bits()))
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cph_outcome_respects_constraints(seed in any::<u64>()) {
        let inst = instance(seed);
        let out = cph_assign(&inst.contexts, &inst.view, inst.backhaul_bps, &inst.params);
        check_outcome(&inst, &out, true)?;
    }

    #[test]
    fn buff_outcome_respects_constraints(seed in any::<u64>()) {
        let inst = instance(seed);
        let out = buff_assign(&inst.contexts, &inst.view, inst.backhaul_bps, &inst.params);
        check_outcome(&inst, &out, false)?;
    }

    #[test]
    fn eager_pruning_never_beats_shared_aware(seed in any::<u64>()) {
        let inst = instance(seed);
        let groups = groups_for(&inst.contexts, &inst.view, &inst.params);
        let u = |s| solve_groups(&groups, inst.backhaul_bps, s, None).best.map(|c| c.total_utility);
        match (u(PruneStrategy::SharedContentAware), u(PruneStrategy::Eager)) {
            (Some(a), Some(e)) => prop_assert!(e <= a),
            (a, e) => prop_assert_eq!(a.is_some(), e.is_some()),
        }
    }

    #[test]
    fn pareto_cap_bounds_retained_set(seed in any::<u64>(), cap in 1usize..4) {
        let inst = instance(seed);
        let groups = groups_for(&inst.contexts, &inst.view, &inst.params);
        let sol = solve_groups(&groups, inst.backhaul_bps, PruneStrategy::SharedContentAware, Some(cap));
        prop_assert!(sol.peak_retained <= cap);
    }

    #[test]
    fn pareto_min_is_idempotent_and_order_insensitive(
        pts in prop::collection::vec((0u32..40, 0u32..40), 0..30),
        rot in 0usize..30,
    ) {
        let cs: Vec<Configuration> = pts.iter().map(|(u, c)| config(*u as f64, *c as f64 * 10.0)).collect();
        let once = pareto_min(cs.clone());
        prop_assert_eq!(points(&pareto_min(once.clone())), points(&once));
        let mut shuffled = cs.clone();
        if !shuffled.is_empty() {
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
            shuffled.reverse();
        }
        prop_assert_eq!(points(&pareto_min(shuffled)), points(&once));
        for a in &once {
            for b in &once {
                let dominates = b.total_utility >= a.total_utility
                    && b.total_cost_bps <= a.total_cost_bps
                    && (b.total_utility > a.total_utility || b.total_cost_bps < a.total_cost_bps);
                prop_assert!(!dominates);
            }
        }
    }

    /// A single client whose buffer clears the upper clamp for every level:
    /// both solvers reduce to maximizing the weighted log bitrate.
    #[test]
    fn single_client_solvers_agree(
        levels in 2usize..6,
        requested in 0usize..6,
        gamma in 0usize..3,
        cached_mask in 0u32..64,
    ) {
        let requested = requested.min(levels - 1);
        let bitrates: Vec<f64> = (0..levels).map(|m| 300_000.0 * (m as f64 + 1.0)).collect();
        let request = ChunkRequest { client_id: 0, video_id: 0, chunk_index: 0, quality_index: requested, issue_time_s: 0.0 };
        let mut view = StaticContentView { backhaul_bps: 1e9, ..Default::default() };
        for m in 0..levels {
            if cached_mask & (1 << m) != 0 {
                view.cached.insert(ContentKey::new(0, 0, m));
            }
        }
        let ctx = RequestContext {
            request,
            bitrates_bps: bitrates,
            chunk_duration_s: 2.0,
            buffer_s: 60.0,
            dl_queue_bits: 0.0,
            dl_queue_media_s: 0.0,
            link_capacity_bps: 50e6,
            equal_share_clients: 1,
        };
        let params = SolverParams { gamma, ..Default::default() };
        let a = cph_assign(std::slice::from_ref(&ctx), &view, 1e9, &params);
        let b = buff_assign(std::slice::from_ref(&ctx), &view, 1e9, &params);
        prop_assert_eq!(a.assignments[0].delivered_quality, b.assignments[0].delivered_quality);
    }
}
