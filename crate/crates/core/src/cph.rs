//! Compositional Pareto-algebraic quality assignment.
//!
//! Each request becomes a group of (utility, cost, content) items, one per
//! tolerated quality. Groups are merged pairwise by Cartesian product; a
//! content already present in a partial configuration is not charged again.
//! Requests for the same chunk are merged first and, while such a cluster is
//! open, dominance is only applied between configurations that use the
//! same set of that chunk's representations: a configuration that looks
//! dominated may still be the cheapest way to serve a later member of the
//! cluster. Once a cluster is closed its content never recurs, costs become
//! additive, and plain Pareto reduction is exact.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::assign::{
    build_candidates, Assignment, ContentView, RequestContext, SolveOutcome, SolverParams,
};
use crate::cache::ContentKey;
use crate::error::{Error, Result};

/// Largest instance the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub key: ContentKey,
    pub utility: f64,
    pub cost_bps: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub client_id: u32,
    pub items: Vec<Item>,
}

impl Group {
    /// The chunk all items of this group refer to.
    pub fn chunk(&self) -> (u32, u32) {
        let k = self.items[0].key;
        (k.video, k.chunk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    /// Index of the group in the caller's slice.
    pub group: usize,
    pub client_id: u32,
    pub key: ContentKey,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub total_utility: f64,
    pub total_cost_bps: f64,
    /// In merge order.
    pub picks: Vec<Pick>,
}

impl Configuration {
    pub fn empty() -> Self {
        Self {
            total_utility: 0.0,
            total_cost_bps: 0.0,
            picks: Vec::new(),
        }
    }

    fn uses(&self, key: &ContentKey) -> bool {
        self.picks.iter().any(|p| p.key == *key)
    }

    pub fn qualities(&self) -> Vec<usize> {
        self.picks.iter().map(|p| p.key.quality).collect()
    }
}

fn lex_picks(a: &Configuration, b: &Configuration) -> Ordering {
    a.picks
        .iter()
        .map(|p| p.key.quality)
        .cmp(b.picks.iter().map(|p| p.key.quality))
}

/// Preference among complete configurations: utility, then cost, then the
/// lexicographically smallest quality vector.
pub fn better(a: &Configuration, b: &Configuration) -> bool {
    match a.total_utility.total_cmp(&b.total_utility) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.total_cost_bps.total_cmp(&b.total_cost_bps) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => lex_picks(a, b) == Ordering::Less,
        },
    }
}

/// Non-dominated subset, ordered by ascending cost. Exact (utility, cost)
/// duplicates keep the lexicographically smallest picks.
pub fn pareto_min(mut configs: Vec<Configuration>) -> Vec<Configuration> {
    configs.sort_by(|a, b| {
        a.total_cost_bps
            .total_cmp(&b.total_cost_bps)
            .then(b.total_utility.total_cmp(&a.total_utility))
            .then_with(|| lex_picks(a, b))
    });
    let mut out: Vec<Configuration> = Vec::with_capacity(configs.len());
    for c in configs {
        match out.last() {
            Some(best) if c.total_utility.total_cmp(&best.total_utility) != Ordering::Greater => {}
            _ => out.push(c),
        }
    }
    out
}

/// Cartesian product of partial configurations with one group. Content
/// already used by the partial configuration adds utility but no cost.
/// Products over `capacity_bps` are dropped.
pub fn merge(
    partial: &[Configuration],
    group_index: usize,
    group: &Group,
    capacity_bps: f64,
) -> Vec<Configuration> {
    let mut out = Vec::with_capacity(partial.len() * group.items.len());
    for a in partial {
        for item in &group.items {
            let cost = if a.uses(&item.key) {
                a.total_cost_bps
            } else {
                a.total_cost_bps + item.cost_bps
            };
            if cost > capacity_bps {
                continue;
            }
            let mut picks = a.picks.clone();
            picks.push(Pick {
                group: group_index,
                client_id: group.client_id,
                key: item.key,
                cached: item.cached,
            });
            out.push(Configuration {
                total_utility: a.total_utility + item.utility,
                total_cost_bps: cost,
                picks,
            });
        }
    }
    out
}

// Pareto reduction restricted to configurations that use the same set of
// representations of `chunk`.
fn reduce_within_chunk(configs: Vec<Configuration>, chunk: (u32, u32)) -> Vec<Configuration> {
    let mut classes: BTreeMap<Vec<ContentKey>, Vec<Configuration>> = BTreeMap::new();
    for c in configs {
        let mut used: Vec<ContentKey> = c
            .picks
            .iter()
            .filter(|p| (p.key.video, p.key.chunk) == chunk)
            .map(|p| p.key)
            .collect();
        used.sort();
        used.dedup();
        classes.entry(used).or_default().push(c);
    }
    classes.into_values().flat_map(pareto_min).collect()
}

fn truncate(mut configs: Vec<Configuration>, cap: Option<usize>) -> Vec<Configuration> {
    if let Some(l) = cap {
        if configs.len() > l {
            configs.sort_by(|a, b| {
                if better(a, b) {
                    Ordering::Less
                } else if better(b, a) {
                    Ordering::Greater
                } else {
                    Ordering::Equal
                }
            });
            configs.truncate(l);
        }
    }
    configs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneStrategy {
    /// Hold back dominance inside same-chunk clusters until the cluster is merged.
    #[default]
    SharedContentAware,
    /// Pareto-reduce after every merge regardless of shared content.
    Eager,
}

/// Order in which groups are merged: members of multi-request chunks first
/// (clusters ordered by their first member), then the remaining groups, each
/// by position.
pub fn merge_order(groups: &[Group]) -> Vec<Vec<usize>> {
    let mut clusters: Vec<((u32, u32), Vec<usize>)> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        match clusters.iter_mut().find(|(c, _)| *c == g.chunk()) {
            Some((_, members)) => members.push(i),
            None => clusters.push((g.chunk(), vec![i])),
        }
    }
    let (shared, single): (Vec<_>, Vec<_>) = clusters.into_iter().partition(|(_, m)| m.len() > 1);
    shared.into_iter().chain(single).map(|(_, m)| m).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub best: Option<Configuration>,
    /// Largest retained set after any reduction step.
    pub peak_retained: usize,
}

/// Merge all groups under `capacity_bps` and return the best configuration.
pub fn solve_groups(
    groups: &[Group],
    capacity_bps: f64,
    strategy: PruneStrategy,
    pareto_cap: Option<usize>,
) -> GroupSolution {
    let mut partial = vec![Configuration::empty()];
    let mut peak = 0;
    for cluster in merge_order(groups) {
        for (pos, &gi) in cluster.iter().enumerate() {
            partial = merge(&partial, gi, &groups[gi], capacity_bps);
            let open = pos + 1 < cluster.len();
            partial = match strategy {
                PruneStrategy::SharedContentAware if open => {
                    reduce_within_chunk(partial, groups[gi].chunk())
                }
                _ => pareto_min(partial),
            };
            partial = truncate(partial, pareto_cap);
            peak = peak.max(partial.len());
            if partial.is_empty() {
                return GroupSolution {
                    best: None,
                    peak_retained: peak,
                };
            }
        }
    }
    let best = partial
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a });
    GroupSolution {
        best,
        peak_retained: peak,
    }
}

/// Exhaustive search over every combination of items, in merge order, with
/// shared content charged once.
pub fn brute_force_groups(groups: &[Group], capacity_bps: f64) -> Result<Option<Configuration>> {
    let combinations: u128 = groups.iter().map(|g| g.items.len() as u128).product();
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            combinations,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let order: Vec<usize> = merge_order(groups).into_iter().flatten().collect();
    let mut digits = vec![0usize; order.len()];
    let mut best: Option<Configuration> = None;
    loop {
        let mut utility = 0.0;
        let mut cost = 0.0;
        let mut picks: Vec<Pick> = Vec::with_capacity(order.len());
        for (slot, &gi) in order.iter().enumerate() {
            let item = &groups[gi].items[digits[slot]];
            if !picks.iter().any(|p| p.key == item.key) {
                cost += item.cost_bps;
            }
            utility += item.utility;
            picks.push(Pick {
                group: gi,
                client_id: groups[gi].client_id,
                key: item.key,
                cached: item.cached,
            });
        }
        if cost <= capacity_bps {
            let c = Configuration {
                total_utility: utility,
                total_cost_bps: cost,
                picks,
            };
            if best.as_ref().is_none_or(|b| better(&c, b)) {
                best = Some(c);
            }
        }
        // advance the odometer; the last slot varies fastest
        let mut slot = order.len();
        loop {
            if slot == 0 {
                return Ok(best);
            }
            slot -= 1;
            digits[slot] += 1;
            if digits[slot] < groups[order[slot]].items.len() {
                break;
            }
            digits[slot] = 0;
        }
    }
}

/// One group per request, built from its tolerated candidates.
pub fn groups_for(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    params: &SolverParams,
) -> Vec<Group> {
    contexts
        .iter()
        .map(|ctx| Group {
            client_id: ctx.request.client_id,
            items: build_candidates(ctx, view, params)
                .into_iter()
                .map(|c| Item {
                    key: c.key(),
                    utility: c.utility,
                    cost_bps: c.cost_bps,
                    cached: c.cached,
                })
                .collect(),
        })
        .collect()
}

fn outcome_from(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    best: Option<Configuration>,
) -> SolveOutcome {
    match best {
        Some(cfg) => {
            let mut assignments: Vec<Assignment> = contexts
                .iter()
                .map(|c| Assignment {
                    request: c.request,
                    delivered_quality: c.request.quality_index,
                    from_cache: false,
                    airtime: 0.0,
                })
                .collect();
            for p in &cfg.picks {
                assignments[p.group].delivered_quality = p.key.quality;
                assignments[p.group].from_cache = p.cached;
            }
            SolveOutcome {
                assignments,
                total_utility: cfg.total_utility,
                total_cost_bps: cfg.total_cost_bps,
                no_valid_config: false,
            }
        }
        None => SolveOutcome {
            assignments: crate::assign::pass_through(contexts, view, true),
            total_utility: f64::NAN,
            total_cost_bps: f64::NAN,
            no_valid_config: true,
        },
    }
}

pub fn cph_assign_with(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    backhaul_bps: f64,
    params: &SolverParams,
    strategy: PruneStrategy,
) -> SolveOutcome {
    if contexts.is_empty() {
        return SolveOutcome {
            assignments: Vec::new(),
            total_utility: 0.0,
            total_cost_bps: 0.0,
            no_valid_config: false,
        };
    }
    let groups = groups_for(contexts, view, params);
    let sol = solve_groups(&groups, backhaul_bps, strategy, params.pareto_cap);
    outcome_from(contexts, view, sol.best)
}

/// Quality assignment for the requests awaiting a decision this interval.
/// Falls back to the requested qualities when nothing fits the backhaul.
pub fn cph_assign(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    backhaul_bps: f64,
    params: &SolverParams,
) -> SolveOutcome {
    cph_assign_with(
        contexts,
        view,
        backhaul_bps,
        params,
        PruneStrategy::SharedContentAware,
    )
}

pub fn brute_force_assign(
    contexts: &[RequestContext],
    view: &dyn ContentView,
    backhaul_bps: f64,
    params: &SolverParams,
) -> Result<SolveOutcome> {
    let groups = groups_for(contexts, view, params);
    let best = brute_force_groups(&groups, backhaul_bps)?;
    Ok(outcome_from(contexts, view, best))
}

/// Group-level instance, serializable for offline differential checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub capacity_bps: f64,
    pub groups: Vec<Group>,
}

impl Instance {
    /// Text form: `capacity <bps>`, then per group a `group <client_id>` line
    /// followed by `item video,chunk,quality,utility,cost_bps,cached` lines.
    pub fn dump(&self) -> String {
        let mut s = format!("capacity {}\n", self.capacity_bps);
        for g in &self.groups {
            let _ = writeln!(s, "group {}", g.client_id);
            for it in &g.items {
                let _ = writeln!(
                    s,
                    "item {},{},{},{},{},{}",
                    it.key.video,
                    it.key.chunk,
                    it.key.quality,
                    it.utility,
                    it.cost_bps,
                    it.cached as u8
                );
            }
        }
        s
    }

    pub fn load(text: &str) -> Result<Self> {
        let mut capacity = None;
        let mut groups: Vec<Group> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let perr = |m: &str| Error::Parse {
                line: idx + 1,
                message: m.to_string(),
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("capacity ") {
                capacity = Some(v.trim().parse::<f64>().map_err(|_| perr("bad capacity"))?);
            } else if let Some(v) = line.strip_prefix("group ") {
                let client_id = v.trim().parse().map_err(|_| perr("bad client id"))?;
                groups.push(Group {
                    client_id,
                    items: Vec::new(),
                });
            } else if let Some(v) = line.strip_prefix("item ") {
                let f: Vec<&str> = v.split(',').map(str::trim).collect();
                if f.len() != 6 {
                    return Err(perr("item needs 6 fields"));
                }
                let group = groups
                    .last_mut()
                    .ok_or_else(|| perr("item before any group"))?;
                group.items.push(Item {
                    key: ContentKey::new(
                        f[0].parse().map_err(|_| perr("bad video"))?,
                        f[1].parse().map_err(|_| perr("bad chunk"))?,
                        f[2].parse().map_err(|_| perr("bad quality"))?,
                    ),
                    utility: f[3].parse().map_err(|_| perr("bad utility"))?,
                    cost_bps: f[4].parse().map_err(|_| perr("bad cost"))?,
                    cached: match f[5] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(perr("cached must be 0 or 1")),
                    },
                });
            } else {
                return Err(perr("unknown record"));
            }
        }
        let capacity_bps =
            capacity.ok_or_else(|| Error::Validation("missing capacity line".into()))?;
        if let Some(g) = groups.iter().find(|g| g.items.is_empty()) {
            return Err(Error::Validation(format!(
                "group for client {} has no items",
                g.client_id
            )));
        }
        Ok(Self {
            capacity_bps,
            groups,
        })
    }
}
