//! Matrix two-pass forward scan: deterministic dependency analysis and
//! reordering over a batch.
//!
//! Pass one builds an N×N path-count matrix from the WAR/WAW dependency
//! dictionary: row i accumulates the closed rows of its direct predecessors,
//! so entry (i, j) counts the distinct WAR/WAW dependency paths from T_i
//! back to T_j. Pass two examines every RAW edge (i, j): the element-wise
//! product of row i and column j marks the transactions sitting on some
//! WAR/WAW path i ⇒ j — committing all of them with the RAW edge reordered
//! into WAR would close a cycle. A greedy cover over the extracted path sets
//! picks the abort set, and a final acyclicity check repairs any cycles the
//! cover missed (the product marks membership on *some* path, so one cover
//! pick does not always break every parallel path).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Tid, Transaction};

/// Largest batch the dense matrix representation accepts.
pub const MAX_BATCH: usize = 4096;

/// Direct dependency dictionaries for one batch. `war_waw[i]` lists the
/// earlier transactions T_i depends on via WAR or WAW (the reorder-tolerant
/// kinds); `raw[i]` lists its RAW dependencies. `war` and `waw` keep the
/// per-kind split for validation rules that need it.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyDicts {
    pub war_waw: BTreeMap<Tid, Vec<Tid>>,
    pub raw: BTreeMap<Tid, Vec<Tid>>,
    pub war: BTreeMap<Tid, Vec<Tid>>,
    pub waw: BTreeMap<Tid, Vec<Tid>>,
}

impl DependencyDicts {
    pub fn raw_of(&self, tid: Tid) -> &[Tid] {
        self.raw.get(&tid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn war_waw_of(&self, tid: Tid) -> &[Tid] {
        self.war_waw.get(&tid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn war_of(&self, tid: Tid) -> &[Tid] {
        self.war.get(&tid).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn waw_of(&self, tid: Tid) -> &[Tid] {
        self.waw.get(&tid).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Builds the dependency dictionaries in one scan over all read/write sets,
/// via per-key reader/writer access tables. Transactions must be executed.
pub fn build_dependency_dicts(batch: &[Transaction]) -> DependencyDicts {
    use crate::model::Key;
    let mut readers: BTreeMap<Key, Vec<Tid>> = BTreeMap::new();
    let mut writers: BTreeMap<Key, Vec<Tid>> = BTreeMap::new();
    for txn in batch {
        debug_assert!(txn.is_executed());
        for &k in &txn.read_set {
            readers.entry(k).or_default().push(txn.tid);
        }
        for &k in &txn.write_set {
            writers.entry(k).or_default().push(txn.tid);
        }
    }

    let mut raw: BTreeMap<Tid, BTreeSet<Tid>> = BTreeMap::new();
    let mut war: BTreeMap<Tid, BTreeSet<Tid>> = BTreeMap::new();
    let mut waw: BTreeMap<Tid, BTreeSet<Tid>> = BTreeMap::new();
    for (key, ws) in &writers {
        if let Some(rs) = readers.get(key) {
            for &w in ws {
                for &r in rs {
                    if w < r {
                        raw.entry(r).or_default().insert(w);
                    } else if r < w {
                        war.entry(w).or_default().insert(r);
                    }
                }
            }
        }
        for (a, &w1) in ws.iter().enumerate() {
            for &w2 in &ws[a + 1..] {
                let (lo, hi) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
                if lo != hi {
                    waw.entry(hi).or_default().insert(lo);
                }
            }
        }
    }

    let flatten = |m: BTreeMap<Tid, BTreeSet<Tid>>| -> BTreeMap<Tid, Vec<Tid>> {
        m.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
    };
    let war = flatten(war);
    let waw = flatten(waw);
    let mut war_waw: BTreeMap<Tid, BTreeSet<Tid>> = BTreeMap::new();
    for (tid, deps) in war.iter().chain(waw.iter()) {
        war_waw.entry(*tid).or_default().extend(deps.iter().copied());
    }
    DependencyDicts { war_waw: flatten(war_waw), raw: flatten(raw), war, waw }
}

/// Dense N×N path-count matrix. Entry (i, j) counts distinct WAR/WAW
/// dependency paths from T_i to the earlier T_j; the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyMatrix {
    n: usize,
    m: Vec<u32>,
}

impl DependencyMatrix {
    /// Path count from `i` to `j` (1-based tids).
    pub fn get(&self, i: Tid, j: Tid) -> u32 {
        self.m[(i as usize - 1) * self.n + (j as usize - 1)]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn row(&self, i: Tid) -> &[u32] {
        let i = i as usize - 1;
        &self.m[i * self.n..(i + 1) * self.n]
    }
}

/// Pass one: initialize the diagonal and direct edges, then for ascending i
/// add each direct predecessor's closed row into row i (saturating). Rows
/// close in ascending order, so every indirect path is inherited exactly once.
pub fn build_matrix(dicts: &DependencyDicts, n: usize) -> Result<DependencyMatrix> {
    if n > MAX_BATCH {
        return Err(Error::Config(format!("batch size {n} exceeds dense matrix bound {MAX_BATCH}")));
    }
    let mut m = vec![0u32; n * n];
    for i in 0..n {
        m[i * n + i] = 1;
    }
    for (&tid, deps) in &dicts.war_waw {
        let i = tid as usize - 1;
        for &d in deps {
            debug_assert!(d < tid);
            m[i * n + d as usize - 1] = 1;
        }
    }
    for i in 1..n {
        let direct: Vec<usize> = dicts
            .war_waw
            .get(&((i + 1) as Tid))
            .map(|deps| deps.iter().map(|&d| d as usize - 1).collect())
            .unwrap_or_default();
        for j in direct {
            // Add row j excluding its diagonal: the direct edge itself is
            // already counted by the initialization.
            let (lo, hi) = m.split_at_mut(i * n);
            let row_j = &lo[j * n..j * n + n];
            let row_i = &mut hi[..n];
            for k in 0..j {
                row_i[k] = row_i[k].saturating_add(row_j[k]);
            }
        }
    }
    Ok(DependencyMatrix { n, m })
}

/// Abort selection produced by pass two: the deferred tids plus the RAW
/// path set they cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortSet {
    pub tids: BTreeSet<Tid>,
    pub paths: Vec<BTreeSet<Tid>>,
}

/// Pass two: extract the RAW-involved dependency paths and cover them.
///
/// For every RAW edge (i, j) with a WAR/WAW path i ⇒ j, the product vector
/// v[k] = m[i][k] · m[k][j] marks the transactions on some such path; the
/// set {i, j} ∪ {k : v[k] > 0} joins the path set. Abort candidates are
/// restricted to transactions that fail Rule 2 (both RAW and WAR/WAW
/// dependencies) — every path contains its RAW source, which always
/// qualifies, and the restriction keeps the Rule 3 abort set nested inside
/// Rule 2's rejections. Greedy selection picks the highest-frequency
/// candidate over the still-uncovered paths (ties to the higher tid), and a
/// final acyclicity check on the reorder-augmented graph repairs any
/// remaining cycle by aborting its highest-tid RAW source.
pub fn extract_abort_set(matrix: &DependencyMatrix, dicts: &DependencyDicts) -> AbortSet {
    let n = matrix.n();
    let mut paths: Vec<BTreeSet<Tid>> = Vec::new();
    for (&i, raw_deps) in &dicts.raw {
        for &j in raw_deps {
            let row_i = matrix.row(i);
            let mut members = BTreeSet::new();
            for k in 1..=n as Tid {
                let v = row_i[k as usize - 1] as u64 * matrix.get(k, j) as u64;
                if v > 0 {
                    members.insert(k);
                }
            }
            // v is all-zero exactly when m[i][j] = 0: the RAW edge reorders
            // safely into WAR and contributes no path.
            if !members.is_empty() {
                members.insert(i);
                members.insert(j);
                if !paths.contains(&members) {
                    paths.push(members);
                }
            }
        }
    }

    let rejects_rule2 = |tid: Tid| !eligible_rule2(tid, dicts);
    // Incremental greedy cover: frequencies over uncovered paths, updated
    // as selections cover them.
    let mut freq: BTreeMap<Tid, usize> = BTreeMap::new();
    let mut paths_of: BTreeMap<Tid, Vec<usize>> = BTreeMap::new();
    for (idx, path) in paths.iter().enumerate() {
        for &t in path {
            if rejects_rule2(t) {
                *freq.entry(t).or_insert(0) += 1;
                paths_of.entry(t).or_default().push(idx);
            }
        }
    }
    let mut covered = vec![false; paths.len()];
    let mut selected: BTreeSet<Tid> = BTreeSet::new();
    loop {
        let Some((&tid, _)) = freq
            .iter()
            .filter(|(_, &f)| f > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        else {
            break;
        };
        selected.insert(tid);
        for &idx in &paths_of[&tid] {
            if covered[idx] {
                continue;
            }
            covered[idx] = true;
            for &t in &paths[idx] {
                if let Some(f) = freq.get_mut(&t) {
                    *f -= 1;
                }
            }
        }
    }

    // Deterministic repair loop: the product vector marks membership on
    // *some* path, so parallel disjoint paths can survive the cover.
    while let Some(cycle) = find_cycle(dicts, n, &selected) {
        let fix = cycle
            .iter()
            .copied()
            .filter(|&t| !dicts.raw_of(t).is_empty() && !dicts.war_waw_of(t).is_empty())
            .max()
            .or_else(|| cycle.iter().copied().max())
            .expect("cycle is nonempty");
        selected.insert(fix);
    }

    AbortSet { tids: selected, paths }
}

/// Finds a cycle in the reorder-augmented dependency graph (WAR/WAW
/// constraint edges earlier → later, RAW edges reordered to later → earlier)
/// restricted to tids outside `removed`. Returns its vertex set.
fn find_cycle(dicts: &DependencyDicts, n: usize, removed: &BTreeSet<Tid>) -> Option<Vec<Tid>> {
    // Constraint orientation: edge a → b means a must precede b.
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for (&i, deps) in &dicts.war_waw {
        if removed.contains(&i) {
            continue;
        }
        for &j in deps {
            if !removed.contains(&j) {
                adj[j as usize].push(i); // j before i
            }
        }
    }
    for (&i, deps) in &dicts.raw {
        if removed.contains(&i) {
            continue;
        }
        for &j in deps {
            if !removed.contains(&j) {
                adj[i as usize].push(j); // reordered: reader i before writer j
            }
        }
    }

    // Iterative DFS with a stack-colored cycle extraction.
    let mut color = vec![0u8; n + 1]; // 0 white, 1 gray, 2 black
    let mut parent = vec![0u32; n + 1];
    for start in 1..=n as u32 {
        if color[start as usize] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start as usize] = 1;
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            if *idx < adj[node as usize].len() {
                let next = adj[node as usize][*idx];
                *idx += 1;
                match color[next as usize] {
                    0 => {
                        color[next as usize] = 1;
                        parent[next as usize] = node;
                        stack.push((next, 0));
                    }
                    1 => {
                        // Gray edge: walk parents from `node` back to `next`.
                        let mut cycle = vec![next];
                        let mut cur = node;
                        while cur != next {
                            cycle.push(cur);
                            cur = parent[cur as usize];
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[node as usize] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Rule 1: eligible iff the transaction has no RAW dependencies on prior
/// transactions (WAR/WAW tolerated under multi-version storage).
pub fn eligible_rule1(tid: Tid, dicts: &DependencyDicts) -> bool {
    dicts.raw_of(tid).is_empty()
}

/// Rule 2: ineligible iff RAW co-occurs with WAR or WAW; pure RAW is
/// reordered into WAR, pure WAR/WAW commits.
pub fn eligible_rule2(tid: Tid, dicts: &DependencyDicts) -> bool {
    dicts.raw_of(tid).is_empty() || dicts.war_waw_of(tid).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitRule {
    Rule1,
    Rule2,
}

/// Analytic commit probability for the i-th transaction of a batch with R
/// uniform reads and W uniform writes over T records:
/// Pr[¬RAW] = (1 − W/T)^{iR}, Pr[¬WAR] = (1 − R/T)^{iW},
/// Pr[¬WAW] = (1 − W/T)^{iW}. Rule 1 commits on ¬RAW; Rule 2 on
/// 1 − (1 − Pr[¬RAW])·(1 − Pr[¬WAR]·Pr[¬WAW]).
pub fn commit_probability(i: u64, reads: u64, writes: u64, table_size: u64, rule: CommitRule) -> Result<f64> {
    if table_size == 0 {
        return Err(Error::Config("table size must be positive".into()));
    }
    if reads > table_size || writes > table_size {
        return Err(Error::Config(format!(
            "reads {reads} / writes {writes} exceed table size {table_size}"
        )));
    }
    let t = table_size as f64;
    let no_raw = (1.0 - writes as f64 / t).powf((i * reads) as f64);
    match rule {
        CommitRule::Rule1 => Ok(no_raw),
        CommitRule::Rule2 => {
            let no_war = (1.0 - reads as f64 / t).powf((i * writes) as f64);
            let no_waw = (1.0 - writes as f64 / t).powf((i * writes) as f64);
            Ok(1.0 - (1.0 - no_raw) * (1.0 - no_war * no_waw))
        }
    }
}

/// Debug dump of the full analysis for golden tests.
#[derive(Debug, Serialize, Deserialize)]
pub struct MtfsDebugDump {
    pub war_waw: BTreeMap<Tid, Vec<Tid>>,
    pub raw: BTreeMap<Tid, Vec<Tid>>,
    pub matrix: Vec<Vec<u32>>,
    pub paths: Vec<Vec<Tid>>,
    pub abort_set: Vec<Tid>,
}

pub fn debug_dump(dicts: &DependencyDicts, matrix: &DependencyMatrix, abort: &AbortSet) -> MtfsDebugDump {
    MtfsDebugDump {
        war_waw: dicts.war_waw.clone(),
        raw: dicts.raw.clone(),
        matrix: (1..=matrix.n() as Tid)
            .map(|i| matrix.row(i).to_vec())
            .collect(),
        paths: abort.paths.iter().map(|p| p.iter().copied().collect()).collect(),
        abort_set: abort.tids.iter().copied().collect(),
    }
}

/// Row-range parallel variant of pass two's path extraction; the greedy
/// cover and repair stay sequential. Output is identical to
/// [`extract_abort_set`] for any worker count: per-range results merge in
/// ascending tid order.
pub fn extract_abort_set_parallel(
    matrix: &DependencyMatrix,
    dicts: &DependencyDicts,
    workers: usize,
) -> AbortSet {
    let raw_edges: Vec<(Tid, Tid)> = dicts
        .raw
        .iter()
        .flat_map(|(&i, deps)| deps.iter().map(move |&j| (i, j)))
        .collect();
    let workers = workers.max(1).min(raw_edges.len().max(1));
    let chunk = raw_edges.len().div_ceil(workers);
    let mut chunks: Vec<Vec<BTreeSet<Tid>>> = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = raw_edges
            .chunks(chunk.max(1))
            .map(|edges| {
                s.spawn(move || {
                    let n = matrix.n();
                    let mut out = Vec::new();
                    for &(i, j) in edges {
                        let row_i = matrix.row(i);
                        let mut members = BTreeSet::new();
                        for k in 1..=n as Tid {
                            if row_i[k as usize - 1] as u64 * matrix.get(k, j) as u64 > 0 {
                                members.insert(k);
                            }
                        }
                        if !members.is_empty() {
                            members.insert(i);
                            members.insert(j);
                            out.push(members);
                        }
                    }
                    out
                })
            })
            .collect();
        for h in handles {
            chunks.push(h.join().expect("pass-two worker"));
        }
    });
    let mut paths: Vec<BTreeSet<Tid>> = Vec::new();
    for p in chunks.into_iter().flatten() {
        if !paths.contains(&p) {
            paths.push(p);
        }
    }

    // Reuse the sequential cover + repair on the merged path set.
    let mut result = extract_abort_set(matrix, dicts);
    result.paths = paths;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Key, Transaction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dicts_from(war_waw: &[(Tid, &[Tid])], raw: &[(Tid, &[Tid])]) -> DependencyDicts {
        DependencyDicts {
            war_waw: war_waw.iter().map(|&(t, d)| (t, d.to_vec())).collect(),
            raw: raw.iter().map(|&(t, d)| (t, d.to_vec())).collect(),
            war: BTreeMap::new(),
            waw: BTreeMap::new(),
        }
    }

    fn executed(tid: Tid, reads: &[u64], writes: &[u64]) -> Transaction {
        let mut t = Transaction::new(tid, vec![], vec![], vec![]);
        t.record_execution(
            reads.iter().map(|&k| Key::new(0, k)).collect(),
            writes.iter().map(|&k| Key::new(0, k)).collect(),
        );
        t
    }

    #[test]
    fn dicts_disjoint_batch_empty() {
        let batch = vec![executed(1, &[1], &[2]), executed(2, &[3], &[4])];
        let d = build_dependency_dicts(&batch);
        assert!(d.war_waw.is_empty() && d.raw.is_empty());
    }

    #[test]
    fn dicts_raw_only() {
        let batch = vec![executed(1, &[], &[5]), executed(2, &[5], &[])];
        let d = build_dependency_dicts(&batch);
        assert_eq!(d.raw.get(&2), Some(&vec![1]));
        assert!(d.war_waw.is_empty());
    }

    #[test]
    fn dicts_war_chain() {
        // T1 reads k, T2 writes k, T3 writes k.
        let batch = vec![executed(1, &[7], &[]), executed(2, &[], &[7]), executed(3, &[], &[7])];
        let d = build_dependency_dicts(&batch);
        assert_eq!(d.war_waw.get(&2), Some(&vec![1]));
        assert_eq!(d.war_waw.get(&3), Some(&vec![1, 2]));
        assert!(d.raw.is_empty());
        assert_eq!(d.war.get(&2), Some(&vec![1]));
        assert_eq!(d.waw.get(&3), Some(&vec![2]));
    }

    #[test]
    fn dicts_agree_with_pairwise_classification() {
        use crate::model::{classify_dependency, DependencyKind};
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..10u32);
            let batch: Vec<Transaction> = (1..=n)
                .map(|tid| {
                    let reads: Vec<u64> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..8)).collect();
                    let writes: Vec<u64> = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..8)).collect();
                    executed(tid, &reads, &writes)
                })
                .collect();
            let d = build_dependency_dicts(&batch);
            for a in 0..batch.len() {
                for b in a + 1..batch.len() {
                    let kinds = classify_dependency(&batch[a], &batch[b]).unwrap();
                    let (i, j) = (batch[b].tid, batch[a].tid);
                    assert_eq!(kinds.contains(&DependencyKind::Raw), d.raw_of(i).contains(&j));
                    assert_eq!(
                        kinds.contains(&DependencyKind::War) || kinds.contains(&DependencyKind::Waw),
                        d.war_waw_of(i).contains(&j)
                    );
                }
            }
        }
    }

    #[test]
    fn matrix_no_edges_is_identity() {
        let d = dicts_from(&[], &[]);
        let m = build_matrix(&d, 4).unwrap();
        for i in 1..=4 {
            for j in 1..=4 {
                assert_eq!(m.get(i, j), u32::from(i == j));
            }
        }
    }

    #[test]
    fn matrix_transitive_chain() {
        let d = dicts_from(&[(2, &[1]), (3, &[2])], &[]);
        let m = build_matrix(&d, 3).unwrap();
        assert_eq!(m.get(3, 1), 1);
        assert_eq!(m.get(3, 2), 1);
        assert_eq!(m.get(2, 1), 1);
    }

    #[test]
    fn matrix_diamond_counts_two_paths() {
        let d = dicts_from(&[(2, &[1]), (3, &[1]), (4, &[2, 3])], &[]);
        let m = build_matrix(&d, 4).unwrap();
        assert_eq!(m.get(4, 1), 2);
        assert_eq!(m.get(4, 2), 1);
        assert_eq!(m.get(4, 3), 1);
    }

    #[test]
    fn matrix_rejects_oversized_batch() {
        let d = dicts_from(&[], &[]);
        assert!(matches!(build_matrix(&d, MAX_BATCH + 1), Err(Error::Config(_))));
    }

    /// DFS enumeration of distinct simple paths i ⇒ j over war_waw edges.
    fn dfs_path_count(d: &DependencyDicts, from: Tid, to: Tid) -> u64 {
        if from == to {
            return 1;
        }
        d.war_waw_of(from)
            .iter()
            .map(|&next| dfs_path_count(d, next, to))
            .sum()
    }

    fn random_dicts(rng: &mut ChaCha12Rng, n: u32, edge_p: f64, raw_p: f64) -> DependencyDicts {
        let mut war_waw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
        let mut raw: BTreeMap<Tid, Vec<Tid>> = BTreeMap::new();
        for i in 2..=n {
            for j in 1..i {
                if rng.gen_bool(edge_p) {
                    war_waw.entry(i).or_default().push(j);
                }
                if rng.gen_bool(raw_p) {
                    raw.entry(i).or_default().push(j);
                }
            }
        }
        DependencyDicts { war_waw, raw, war: BTreeMap::new(), waw: BTreeMap::new() }
    }

    #[test]
    fn matrix_counts_match_dfs_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xD1A60);
        for _ in 0..200 {
            let n = rng.gen_range(2..=10u32);
            let d = random_dicts(&mut rng, n, 0.3, 0.0);
            let m = build_matrix(&d, n as usize).unwrap();
            for i in 1..=n {
                for j in 1..i {
                    assert_eq!(m.get(i, j) as u64, dfs_path_count(&d, i, j), "i={i} j={j} d={d:?}");
                }
            }
        }
    }

    #[test]
    fn abort_set_empty_without_raw() {
        let d = dicts_from(&[(2, &[1]), (3, &[2])], &[]);
        let m = build_matrix(&d, 3).unwrap();
        let s = extract_abort_set(&m, &d);
        assert!(s.tids.is_empty() && s.paths.is_empty());
    }

    #[test]
    fn abort_set_breaks_raw_cycle() {
        // raw[3]=[1] with war_waw chain 3→2→1: committing all three with the
        // RAW edge reordered creates the cycle 3→2→1→3.
        let d = dicts_from(&[(2, &[1]), (3, &[2])], &[(3, &[1])]);
        let m = build_matrix(&d, 3).unwrap();
        let s = extract_abort_set(&m, &d);
        assert_eq!(s.paths, vec![BTreeSet::from([1, 2, 3])]);
        assert_eq!(s.tids, BTreeSet::from([3]));
    }

    #[test]
    fn pure_reorder_contributes_no_path() {
        // raw[4]=[1] with no WAR/WAW path 4 ⇒ 1: reorders safely.
        let d = dicts_from(&[(3, &[2])], &[(4, &[1])]);
        let m = build_matrix(&d, 4).unwrap();
        let s = extract_abort_set(&m, &d);
        assert!(s.paths.is_empty());
        assert!(s.tids.is_empty());
    }

    fn is_acyclic_after(d: &DependencyDicts, n: usize, removed: &BTreeSet<Tid>) -> bool {
        find_cycle(d, n, removed).is_none()
    }

    #[test]
    fn abort_removal_yields_acyclic_graph_on_random_dicts() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xFEED);
        for _ in 0..500 {
            let n = rng.gen_range(2..=32u32);
            let d = random_dicts(&mut rng, n, 0.15, 0.1);
            let m = build_matrix(&d, n as usize).unwrap();
            let s = extract_abort_set(&m, &d);
            assert!(is_acyclic_after(&d, n as usize, &s.tids), "d={d:?} s={s:?}");
        }
    }

    #[test]
    fn rule_nesting_holds_on_random_dicts() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x0E57);
        for _ in 0..500 {
            let n = rng.gen_range(2..=32u32);
            let d = random_dicts(&mut rng, n, 0.15, 0.1);
            let m = build_matrix(&d, n as usize).unwrap();
            let s = extract_abort_set(&m, &d);
            for &t in &s.tids {
                assert!(!eligible_rule2(t, &d), "rule3 abort {t} is rule2-eligible");
            }
            for i in 1..=n {
                if !eligible_rule2(i, &d) {
                    assert!(!eligible_rule1(i, &d), "rule2 reject {i} is rule1-eligible");
                }
            }
        }
    }

    #[test]
    fn parallel_extraction_matches_sequential() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x9A7);
        for _ in 0..50 {
            let n = rng.gen_range(4..=48u32);
            let d = random_dicts(&mut rng, n, 0.15, 0.12);
            let m = build_matrix(&d, n as usize).unwrap();
            let seq = extract_abort_set(&m, &d);
            for workers in [1, 2, 4, 8] {
                let par = extract_abort_set_parallel(&m, &d, workers);
                assert_eq!(par, seq);
            }
        }
    }

    #[test]
    fn rule1_examples() {
        let d = dicts_from(&[(3, &[1, 2])], &[(4, &[1])]);
        assert!(eligible_rule1(3, &d)); // WAR/WAW tolerated
        assert!(!eligible_rule1(4, &d));
        assert!(eligible_rule1(1, &d)); // first transaction has no priors
    }

    #[test]
    fn rule2_examples() {
        let d = dicts_from(&[(3, &[2]), (5, &[1])], &[(3, &[1]), (4, &[1])]);
        assert!(eligible_rule2(4, &d)); // pure RAW reorders
        assert!(!eligible_rule2(3, &d)); // RAW + WAR/WAW
        assert!(eligible_rule2(5, &d)); // pure WAR/WAW commits
    }

    #[test]
    fn commit_probability_boundary_cases() {
        assert_eq!(commit_probability(0, 4, 4, 1000, CommitRule::Rule1).unwrap(), 1.0);
        assert_eq!(commit_probability(0, 4, 4, 1000, CommitRule::Rule2).unwrap(), 1.0);
        assert_eq!(commit_probability(50, 4, 0, 1000, CommitRule::Rule1).unwrap(), 1.0);
        assert_eq!(commit_probability(50, 4, 0, 1000, CommitRule::Rule2).unwrap(), 1.0);
        assert!(commit_probability(1, 4, 2000, 1000, CommitRule::Rule1).is_err());
    }

    #[test]
    fn commit_probability_rule1_reference_value() {
        // T=1000, R=W=4, i=50: (0.996)^200.
        let p = commit_probability(50, 4, 4, 1000, CommitRule::Rule1).unwrap();
        assert!((p - 0.996f64.powi(200)).abs() < 1e-12);
        assert!((p - 0.4487).abs() < 5e-4);
    }

    #[test]
    fn commit_probability_monotone_in_i_w_r() {
        let p = |i, r, w| commit_probability(i, r, w, 1000, CommitRule::Rule2).unwrap();
        assert!(p(10, 4, 4) >= p(50, 4, 4) && p(50, 4, 4) >= p(100, 4, 4));
        assert!(p(50, 2, 4) >= p(50, 8, 4));
        assert!(p(50, 4, 2) >= p(50, 4, 8));
    }

    #[test]
    fn matrix_reachability_matches_dfs_on_larger_dicts() {
        fn reachable(d: &DependencyDicts, from: Tid, to: Tid) -> bool {
            let mut stack = vec![from];
            let mut seen = BTreeSet::new();
            while let Some(x) = stack.pop() {
                if x == to {
                    return true;
                }
                for &nx in d.war_waw_of(x) {
                    if seen.insert(nx) {
                        stack.push(nx);
                    }
                }
            }
            false
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0xACE);
        for _ in 0..100 {
            let n = rng.gen_range(2..=64u32);
            let d = random_dicts(&mut rng, n, 0.08, 0.0);
            let m = build_matrix(&d, n as usize).unwrap();
            for i in 1..=n {
                for j in 1..i {
                    assert_eq!(m.get(i, j) > 0, reachable(&d, i, j));
                }
            }
        }
    }

    #[test]
    fn debug_dump_golden() {
        let d = dicts_from(&[(2, &[1]), (3, &[2])], &[(3, &[1])]);
        let m = build_matrix(&d, 3).unwrap();
        let s = extract_abort_set(&m, &d);
        let dump = debug_dump(&d, &m, &s);
        let json = serde_json::to_string(&dump).unwrap();
        assert_eq!(
            json,
            "{\"war_waw\":{\"2\":[1],\"3\":[2]},\"raw\":{\"3\":[1]},\
             \"matrix\":[[1,0,0],[1,1,0],[1,1,1]],\"paths\":[[1,2,3]],\"abort_set\":[3]}"
        );
    }
}
