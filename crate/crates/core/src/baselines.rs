//! Reference validation protocols: Aria-style rule validation (with and
//! without reordering) and the FGA SCC-based cycle breaker.

use std::collections::BTreeSet;

use crate::model::Tid;
use crate::mtfs::DependencyDicts;

/// Strongly connected components of the full dependency graph plus the
/// per-tid degree weights used by FGA.
#[derive(Debug, Clone)]
pub struct SccReport {
    pub components: Vec<Vec<Tid>>,
    pub weights: Vec<(Tid, usize)>,
}

/// Aria validation. Without reordering, any RAW or WAW dependency aborts.
/// With reordering, RAW dependencies flip into WAR, so only WAW
/// dependencies and RAW co-occurring with WAR abort.
pub fn aria_validate(dicts: &DependencyDicts, n: usize, reorder: bool) -> BTreeSet<Tid> {
    let mut aborts = BTreeSet::new();
    for tid in 1..=n as Tid {
        let has_raw = !dicts.raw_of(tid).is_empty();
        let has_war = !dicts.war_of(tid).is_empty();
        let has_waw = !dicts.waw_of(tid).is_empty();
        let abort = if reorder {
            has_waw || (has_raw && has_war)
        } else {
            has_raw || has_waw
        };
        if abort {
            aborts.insert(tid);
        }
    }
    aborts
}

/// Directed graph over tids 1..=n in execution-order-constraint orientation:
/// WAR/WAW keep the natural earlier-before-later direction, RAW edges are
/// reversed per the reordering rule.
struct ConstraintGraph {
    adj: Vec<Vec<u32>>,
}

impl ConstraintGraph {
    fn from_dicts(dicts: &DependencyDicts, n: usize) -> Self {
        let mut adj = vec![Vec::new(); n + 1];
        for (&i, deps) in &dicts.war_waw {
            for &j in deps {
                adj[j as usize].push(i);
            }
        }
        for (&i, deps) in &dicts.raw {
            for &j in deps {
                adj[i as usize].push(j);
            }
        }
        ConstraintGraph { adj }
    }

    /// Kosaraju SCCs over the subgraph induced by `alive`.
    fn sccs(&self, alive: &BTreeSet<Tid>) -> Vec<Vec<Tid>> {
        let n = self.adj.len() - 1;
        let mut order = Vec::new();
        let mut seen = vec![false; n + 1];
        for &start in alive {
            if seen[start as usize] {
                continue;
            }
            // Iterative post-order.
            let mut stack = vec![(start, 0usize)];
            seen[start as usize] = true;
            while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
                if *idx < self.adj[node as usize].len() {
                    let next = self.adj[node as usize][*idx];
                    *idx += 1;
                    if alive.contains(&next) && !seen[next as usize] {
                        seen[next as usize] = true;
                        stack.push((next, 0));
                    }
                } else {
                    order.push(node);
                    stack.pop();
                }
            }
        }

        let mut radj = vec![Vec::new(); n + 1];
        for (from, outs) in self.adj.iter().enumerate() {
            for &to in outs {
                radj[to as usize].push(from as u32);
            }
        }
        let mut comp = vec![usize::MAX; n + 1];
        let mut comps: Vec<Vec<Tid>> = Vec::new();
        for &node in order.iter().rev() {
            if comp[node as usize] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = Vec::new();
            let mut stack = vec![node];
            comp[node as usize] = id;
            while let Some(x) = stack.pop() {
                members.push(x);
                for &prev in &radj[x as usize] {
                    if alive.contains(&prev) && comp[prev as usize] == usize::MAX {
                        comp[prev as usize] = id;
                        stack.push(prev);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    /// In-degree + out-degree of `tid` within the component subgraph.
    fn weight_within(&self, tid: Tid, members: &BTreeSet<Tid>) -> usize {
        let out = self.adj[tid as usize]
            .iter()
            .filter(|t| members.contains(t))
            .count();
        let inn = members
            .iter()
            .filter(|&&m| m != tid && self.adj[m as usize].contains(&tid))
            .count();
        out + inn
    }
}

/// SCC decomposition of the full dependency graph (RAW edges reversed),
/// with in+out degree weights.
pub fn scc_report(dicts: &DependencyDicts, n: usize) -> SccReport {
    let g = ConstraintGraph::from_dicts(dicts, n);
    let alive: BTreeSet<Tid> = (1..=n as Tid).collect();
    let components = g.sccs(&alive);
    let weights = (1..=n as Tid)
        .map(|t| (t, g.weight_within(t, &alive)))
        .collect();
    SccReport { components, weights }
}

/// FGA: detect strongly connected components of the full dependency graph;
/// within each multi-node SCC repeatedly abort the max-weight tid (ties to
/// the higher tid) and recompute until the component is cycle-free.
pub fn fga_reorder(dicts: &DependencyDicts, n: usize) -> BTreeSet<Tid> {
    let g = ConstraintGraph::from_dicts(dicts, n);
    let mut aborts = BTreeSet::new();
    let mut pending: Vec<BTreeSet<Tid>> = g
        .sccs(&(1..=n as Tid).collect())
        .into_iter()
        .filter(|c| c.len() > 1)
        .map(|c| c.into_iter().collect())
        .collect();
    while let Some(members) = pending.pop() {
        let victim = members
            .iter()
            .map(|&t| (g.weight_within(t, &members), t))
            .max()
            .map(|(_, t)| t)
            .expect("multi-node scc is nonempty");
        aborts.insert(victim);
        let remaining: BTreeSet<Tid> = members.into_iter().filter(|&t| t != victim).collect();
        for sub in g.sccs(&remaining) {
            if sub.len() > 1 {
                pending.push(sub.into_iter().collect());
            }
        }
    }
    aborts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dicts(
        war: &[(Tid, &[Tid])],
        waw: &[(Tid, &[Tid])],
        raw: &[(Tid, &[Tid])],
    ) -> DependencyDicts {
        let to_map = |s: &[(Tid, &[Tid])]| -> BTreeMap<Tid, Vec<Tid>> {
            s.iter().map(|&(t, d)| (t, d.to_vec())).collect()
        };
        let war = to_map(war);
        let waw = to_map(waw);
        let mut war_waw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
        for (t, d) in war.iter().chain(waw.iter()) {
            let e = war_waw.entry(*t).or_default();
            e.extend(d.iter().copied());
            e.sort_unstable();
            e.dedup();
        }
        DependencyDicts { war_waw, raw: to_map(raw), war, waw }
    }

    #[test]
    fn aria_commits_pure_war_with_reorder() {
        let d = dicts(&[(2, &[1])], &[], &[]);
        assert!(aria_validate(&d, 2, true).is_empty());
    }

    #[test]
    fn aria_reorders_pure_raw() {
        let d = dicts(&[], &[], &[(2, &[1])]);
        assert!(aria_validate(&d, 2, true).is_empty());
        // Without reordering, RAW aborts.
        assert_eq!(aria_validate(&d, 2, false), BTreeSet::from([2]));
    }

    #[test]
    fn aria_aborts_raw_plus_waw() {
        let d = dicts(&[], &[(3, &[1])], &[(3, &[2])]);
        assert_eq!(aria_validate(&d, 3, true), BTreeSet::from([3]));
    }

    #[test]
    fn aria_aborts_raw_plus_war_only_with_reorder() {
        let d = dicts(&[(3, &[1])], &[], &[(3, &[2])]);
        assert_eq!(aria_validate(&d, 3, true), BTreeSet::from([3]));
        // Without reordering WAR alone is tolerated but RAW aborts.
        assert_eq!(aria_validate(&d, 3, false), BTreeSet::from([3]));
    }

    #[test]
    fn fga_acyclic_graph_aborts_nothing() {
        let d = dicts(&[(2, &[1]), (3, &[2])], &[], &[]);
        assert!(fga_reorder(&d, 3).is_empty());
    }

    #[test]
    fn fga_two_cycle_tie_breaks_to_higher_tid() {
        // war_waw 2→1 (constraint 1 before 2) plus raw[2]=[1] reversed
        // (constraint 2 before 1) forms a 2-cycle with equal weights.
        let d = dicts(&[(2, &[1])], &[], &[(2, &[1])]);
        assert_eq!(fga_reorder(&d, 2), BTreeSet::from([2]));
    }

    #[test]
    fn fga_single_scc_needs_one_abort() {
        // 3-cycle: constraints 1→2 (war_waw 2:[1]), 2→3 (war_waw 3:[2]),
        // 3→1 (raw 3:[1] reversed... raw[i]=[j] gives i→j, so raw[1]? tids
        // point backwards); use raw[3]=[1] giving 3→1.
        let d = dicts(&[(2, &[1]), (3, &[2])], &[], &[(3, &[1])]);
        let aborts = fga_reorder(&d, 3);
        assert_eq!(aborts.len(), 1);
        // Verify acyclicity after removal by brute force: enumerate all
        // single-node removals that break the cycle.
        let report = scc_report(&d, 3);
        assert!(report.components.iter().any(|c| c.len() == 3));
    }

    #[test]
    fn mtfs_abort_set_never_larger_than_aria() {
        use crate::mtfs::{build_matrix, extract_abort_set};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xAB0);
        for _ in 0..300 {
            let n = rng.gen_range(2..=32u32);
            let mut war: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            let mut waw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            let mut raw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            for i in 2..=n {
                for j in 1..i {
                    if rng.gen_bool(0.08) {
                        war.entry(i).or_default().push(j);
                    }
                    if rng.gen_bool(0.08) {
                        waw.entry(i).or_default().push(j);
                    }
                    if rng.gen_bool(0.08) {
                        raw.entry(i).or_default().push(j);
                    }
                }
            }
            let mut war_waw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            for (t, d) in war.iter().chain(waw.iter()) {
                let e = war_waw.entry(*t).or_default();
                e.extend(d.iter().copied());
                e.sort_unstable();
                e.dedup();
            }
            let d = DependencyDicts { war_waw, raw, war, waw };
            let m = build_matrix(&d, n as usize).unwrap();
            let mtfs_set = extract_abort_set(&m, &d).tids;
            let aria_set = aria_validate(&d, n as usize, true);
            assert!(
                mtfs_set.len() <= aria_set.len(),
                "mtfs {mtfs_set:?} vs aria {aria_set:?} on {d:?}"
            );
            assert!(mtfs_set.is_subset(&aria_set));
        }
    }

    #[test]
    fn fga_output_always_acyclic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xF6A);
        for _ in 0..300 {
            let n = rng.gen_range(2..=24u32);
            let mut war_waw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            let mut raw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
            for i in 2..=n {
                for j in 1..i {
                    if rng.gen_bool(0.15) {
                        war_waw.entry(i).or_default().push(j);
                    }
                    if rng.gen_bool(0.1) {
                        raw.entry(i).or_default().push(j);
                    }
                }
            }
            let d = DependencyDicts { war_waw, raw, war: BTreeMap::new(), waw: BTreeMap::new() };
            let aborts = fga_reorder(&d, n as usize);
            let g = ConstraintGraph::from_dicts(&d, n as usize);
            let alive: BTreeSet<Tid> = (1..=n).filter(|t| !aborts.contains(t)).collect();
            assert!(g.sccs(&alive).iter().all(|c| c.len() == 1));
        }
    }
}
