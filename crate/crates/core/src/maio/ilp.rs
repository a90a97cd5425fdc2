//! Latency-free slice assignment ILP and its exact solver.
//!
//! Variables are `y_m` (enable candidate MEC `m`) and `x_{r,s}` (RU `r` uses
//! OLT site `s`). Constraints: every RU is assigned exactly once to a
//! reachable site, `x_{r,m} <= y_m`, per-MEC capacity, a cap on enabled MECs
//! per level-2 tree (shared ODN spectrum), no-good cuts
//! `sum_{r in S} x_{r,m} <= |S| - 1`, `y_m <= sum_r x_{r,m}` (an enabled MEC
//! serves someone) and optionally `sum y >= k`. The objective is `sum y`.
//! Zero-cost sites (the central office) are always enabled.
//!
//! The solver enumerates enable patterns by increasing size in
//! lexicographic order and completes each with a depth-first assignment
//! search over RUs by index. Sites are tried least-loaded first (by offered
//! rate, ties by index), so the first solution found is a balanced one.
//! Pruning uses capacities, a bipartite matching bound and forward checking
//! of the cuts. The first success is optimal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slice::OltSite;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IlpError {
    #[error("no assignment satisfies the constraints")]
    Infeasible,
    #[error("malformed model: {0}")]
    Malformed(String),
    /// No solution found, but some enable patterns hit the node limit.
    #[error("search limit reached before an assignment was found")]
    SearchLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpSite {
    pub site: OltSite,
    /// Maximum RUs served; `None` is unbounded.
    pub capacity: Option<usize>,
    /// Level-2 tree whose spectrum the site's slice uses.
    pub tree: Option<usize>,
    /// 1 for candidate MECs, 0 for always-on sites.
    pub cost: u32,
}

/// Forbids assigning every RU in `members` to `site` at once.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoGoodCut {
    pub site: usize,
    /// Sorted, de-duplicated RU indices.
    pub members: Vec<usize>,
}

impl NoGoodCut {
    pub fn new(site: usize, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { site, members }
    }

    /// Whether `assignment` (site index per RU) violates the cut.
    pub fn excludes(&self, assignment: &[usize]) -> bool {
        self.members.iter().all(|&r| assignment[r] == self.site)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub n_rus: usize,
    pub sites: Vec<IlpSite>,
    /// Reachable site indices per RU.
    pub reachable: Vec<Vec<usize>>,
    /// Maximum number of enabled cost-1 sites per level-2 tree.
    pub tree_limits: BTreeMap<usize, usize>,
    pub cuts: Vec<NoGoodCut>,
    /// Lower bound on the objective (`sum y >= min_enabled`).
    pub min_enabled: usize,
    /// Offered rate per RU. Only steers the search towards balanced
    /// assignments; it never changes the optimum. Empty means uniform.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Per-site priority: among enable patterns of equal size, those with
    /// the larger priority sum are tried first. Empty means lexicographic.
    #[serde(default)]
    pub site_priority: Vec<f64>,
    /// Search nodes allowed per enable pattern; `None` is unlimited.
    #[serde(default)]
    pub node_limit: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IlpSolution {
    /// Enabled cost-1 site indices, ascending.
    pub enabled: Vec<usize>,
    /// Site index per RU.
    pub assignment: Vec<usize>,
    pub objective: usize,
    /// Every smaller objective at or above `min_enabled` was fully searched.
    pub proven: bool,
}

impl IlpModel {
    pub fn validate(&self) -> Result<(), IlpError> {
        let bad = |m: String| Err(IlpError::Malformed(m));
        if self.reachable.len() != self.n_rus {
            return bad(format!("{} reachability rows for {} RUs", self.reachable.len(), self.n_rus));
        }
        for (r, row) in self.reachable.iter().enumerate() {
            if row.iter().any(|&s| s >= self.sites.len()) {
                return bad(format!("RU {r} references a missing site"));
            }
        }
        for c in &self.cuts {
            if c.site >= self.sites.len() || c.members.iter().any(|&r| r >= self.n_rus) {
                return bad("cut references a missing site or RU".into());
            }
            if c.members.is_empty() {
                return bad("empty cut".into());
            }
        }
        Ok(())
    }

    /// Cost-1 site indices.
    pub fn candidates(&self) -> Vec<usize> {
        (0..self.sites.len())
            .filter(|&s| self.sites[s].cost > 0)
            .collect()
    }

    /// Checks every constraint for a complete assignment and enabled set.
    pub fn is_feasible(&self, enabled: &[usize], assignment: &[usize]) -> bool {
        if assignment.len() != self.n_rus || enabled.len() < self.min_enabled {
            return false;
        }
        let on = |s: usize| self.sites[s].cost == 0 || enabled.contains(&s);
        let mut load = vec![0usize; self.sites.len()];
        for (r, &s) in assignment.iter().enumerate() {
            if !self.reachable[r].contains(&s) || !on(s) {
                return false;
            }
            load[s] += 1;
        }
        if load
            .iter()
            .zip(&self.sites)
            .any(|(&l, site)| site.capacity.is_some_and(|c| l > c))
        {
            return false;
        }
        if enabled.iter().any(|&m| load[m] == 0) || !self.tree_limits_ok(enabled) {
            return false;
        }
        !self.cuts.iter().any(|c| c.excludes(assignment))
    }

    fn tree_limits_ok(&self, enabled: &[usize]) -> bool {
        let mut per_tree: BTreeMap<usize, usize> = BTreeMap::new();
        for &s in enabled {
            if let Some(t) = self.sites[s].tree {
                *per_tree.entry(t).or_default() += 1;
            }
        }
        per_tree
            .iter()
            .all(|(t, &n)| self.tree_limits.get(t).is_none_or(|&lim| n <= lim))
    }
}

/// Minimum of the model. Exact unless a node limit cuts a search short, in
/// which case [`IlpSolution::proven`] is false.
pub fn solve_ilp(model: &IlpModel) -> Result<IlpSolution, IlpError> {
    model.validate()?;
    let candidates = model.candidates();
    let priority = |s: usize| model.site_priority.get(s).copied().unwrap_or(0.0);
    let mut unresolved = false;
    for k in model.min_enabled..=candidates.len() {
        let mut patterns: Vec<Vec<usize>> = Vec::new();
        for_each_combination(candidates.len(), k, |combo| {
            patterns.push(combo.iter().map(|&i| candidates[i]).collect());
            false
        });
        // Stable: lexicographic within equal priority.
        patterns.sort_by(|a, b| {
            let pa: f64 = a.iter().map(|&s| priority(s)).sum();
            let pb: f64 = b.iter().map(|&s| priority(s)).sum();
            pb.total_cmp(&pa)
        });
        let proven = !unresolved;
        for enabled in patterns {
            if !model.tree_limits_ok(&enabled) {
                continue;
            }
            match complete_assignment(model, &enabled) {
                Outcome::Found(assignment) => {
                    return Ok(IlpSolution {
                        enabled,
                        assignment,
                        objective: k,
                        proven,
                    })
                }
                Outcome::Infeasible => {}
                Outcome::Unresolved => unresolved = true,
            }
        }
    }
    Err(if unresolved {
        IlpError::SearchLimit
    } else {
        IlpError::Infeasible
    })
}

/// Calls `f` on each k-subset of `0..n` in lexicographic order until it returns true.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return;
        }
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - k {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Search<'a> {
    model: &'a IlpModel,
    allowed: Vec<Vec<usize>>,
    residual: Vec<usize>,
    /// Offered weight per site, for least-loaded value ordering.
    weight: Vec<f64>,
    count: Vec<usize>,
    assignment: Vec<usize>,
    /// Cut ids each RU belongs to.
    cuts_of: Vec<Vec<usize>>,
    /// Members of each cut currently placed at the cut's site.
    placed: Vec<usize>,
    /// forbidden[r][s] > 0 when placing RU r at s would complete a cut.
    forbidden: Vec<Vec<u32>>,
    /// Enabled cost-1 sites that still serve nobody.
    empty_enabled: Vec<usize>,
    nodes: u64,
    aborted: bool,
}

enum Outcome {
    Found(Vec<usize>),
    Infeasible,
    Unresolved,
}

const UNBOUNDED: usize = usize::MAX;

fn complete_assignment(model: &IlpModel, enabled: &[usize]) -> Outcome {
    let on = |s: usize| model.sites[s].cost == 0 || enabled.contains(&s);
    let allowed: Vec<Vec<usize>> = model
        .reachable
        .iter()
        .map(|row| {
            let mut v: Vec<usize> = row.iter().copied().filter(|&s| on(s)).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    if allowed.iter().any(Vec::is_empty) {
        return Outcome::Infeasible;
    }
    // An enabled MEC nobody can reach is never worth enabling.
    if enabled.iter().any(|&m| !allowed.iter().any(|row| row.contains(&m))) {
        return Outcome::Infeasible;
    }
    let residual: Vec<usize> = model
        .sites
        .iter()
        .map(|s| s.capacity.unwrap_or(UNBOUNDED))
        .collect();
    let forbidden = vec![vec![0u32; model.sites.len()]; model.n_rus];
    if !matching_fits(&allowed, &residual, &forbidden, 0) {
        return Outcome::Infeasible;
    }

    // Fail first: RUs with the fewest options are placed first, so conflicts
    // among tightly constrained RUs surface near the root instead of after
    // every choice for the loosely constrained ones.
    let mut order: Vec<usize> = (0..model.n_rus).collect();
    order.sort_by_key(|&r| (allowed[r].len(), r));
    let mut pos = vec![0; model.n_rus];
    for (i, &r) in order.iter().enumerate() {
        pos[r] = i;
    }
    let permuted = IlpModel {
        reachable: order.iter().map(|&r| model.reachable[r].clone()).collect(),
        cuts: model
            .cuts
            .iter()
            .map(|c| NoGoodCut::new(c.site, c.members.iter().map(|&r| pos[r]).collect()))
            .collect(),
        weights: if model.weights.is_empty() {
            Vec::new()
        } else {
            order.iter().map(|&r| model.weights[r]).collect()
        },
        ..model.clone()
    };
    let allowed: Vec<Vec<usize>> = order.iter().map(|&r| allowed[r].clone()).collect();
    let model = &permuted;
    let mut cuts_of = vec![Vec::new(); model.n_rus];
    for (i, c) in model.cuts.iter().enumerate() {
        for &r in &c.members {
            cuts_of[r].push(i);
        }
    }
    let mut search = Search {
        model,
        allowed,
        residual,
        weight: vec![0.0; model.sites.len()],
        count: vec![0; model.sites.len()],
        assignment: vec![usize::MAX; model.n_rus],
        cuts_of,
        placed: vec![0; model.cuts.len()],
        forbidden,
        empty_enabled: enabled.to_vec(),
        nodes: 0,
        aborted: false,
    };
    // Single-member cuts forbid outright.
    for c in &model.cuts {
        if c.members.len() == 1 {
            search.forbidden[c.members[0]][c.site] += 1;
        }
    }
    if search.dfs(0) {
        let mut assignment = vec![0; model.n_rus];
        for (i, &r) in order.iter().enumerate() {
            assignment[r] = search.assignment[i];
        }
        Outcome::Found(assignment)
    } else if search.aborted {
        Outcome::Unresolved
    } else {
        Outcome::Infeasible
    }
}

impl Search<'_> {
    fn ru_weight(&self, r: usize) -> f64 {
        self.model.weights.get(r).copied().unwrap_or(1.0)
    }

    fn dfs(&mut self, r: usize) -> bool {
        self.nodes += 1;
        if self.model.node_limit.is_some_and(|lim| self.nodes > lim) {
            self.aborted = true;
            return false;
        }
        if r == self.model.n_rus {
            return self.empty_enabled.is_empty();
        }
        // Least-loaded site first; ties by index.
        let mut order: Vec<usize> = self.allowed[r]
            .iter()
            .copied()
            .filter(|&s| self.residual[s] > 0 && self.forbidden[r][s] == 0)
            .collect();
        order.sort_by(|&a, &b| self.weight[a].total_cmp(&self.weight[b]).then(a.cmp(&b)));
        for s in order {
            self.place(r, s);
            let ok = self.rest_fits(r + 1) && self.dfs(r + 1);
            if ok {
                return true;
            }
            self.unplace(r, s);
            if self.aborted {
                return false;
            }
        }
        false
    }

    fn place(&mut self, r: usize, s: usize) {
        self.assignment[r] = s;
        if self.residual[s] != UNBOUNDED {
            self.residual[s] -= 1;
        }
        self.weight[s] += self.ru_weight(r);
        self.count[s] += 1;
        if self.count[s] == 1 {
            self.empty_enabled.retain(|&m| m != s);
        }
        for k in 0..self.cuts_of[r].len() {
            let ci = self.cuts_of[r][k];
            let cut = &self.model.cuts[ci];
            if cut.site != s {
                continue;
            }
            self.placed[ci] += 1;
            // RUs are placed in index order: if all but one member sit at the
            // cut's site and the last member is still open, it may not join.
            let last = *cut.members.last().expect("non-empty cut");
            if last != r && self.placed[ci] + 1 == cut.members.len() {
                self.forbidden[last][s] += 1;
            }
        }
    }

    fn unplace(&mut self, r: usize, s: usize) {
        for k in 0..self.cuts_of[r].len() {
            let ci = self.cuts_of[r][k];
            let cut = &self.model.cuts[ci];
            if cut.site != s {
                continue;
            }
            let last = *cut.members.last().expect("non-empty cut");
            if last != r && self.placed[ci] + 1 == cut.members.len() {
                self.forbidden[last][s] -= 1;
            }
            self.placed[ci] -= 1;
        }
        self.weight[s] -= self.ru_weight(r);
        self.count[s] -= 1;
        if self.count[s] == 0 && self.model.sites[s].cost > 0 {
            self.empty_enabled.push(s);
        }
        if self.residual[s] != UNBOUNDED {
            self.residual[s] += 1;
        }
        self.assignment[r] = usize::MAX;
    }

    fn rest_fits(&self, from: usize) -> bool {
        let remaining = self.model.n_rus - from;
        if self.empty_enabled.len() > remaining {
            return false;
        }
        if self
            .empty_enabled
            .iter()
            .any(|&m| !(from..self.model.n_rus).any(|r| self.allowed[r].contains(&m) && self.forbidden[r][m] == 0))
        {
            return false;
        }
        matching_fits(&self.allowed, &self.residual, &self.forbidden, from)
    }
}

/// Whether RUs `from..` can all be placed within the residual capacities
/// (a bipartite b-matching, solved with augmenting paths).
fn matching_fits(allowed: &[Vec<usize>], residual: &[usize], forbidden: &[Vec<u32>], from: usize) -> bool {
    if from >= allowed.len() {
        return true;
    }
    let rows: Vec<Vec<usize>> = allowed[from..]
        .iter()
        .zip(&forbidden[from..])
        .map(|(row, fb)| row.iter().copied().filter(|&s| fb[s] == 0 && residual[s] > 0).collect())
        .collect();
    if rows.iter().any(Vec::is_empty) {
        return false;
    }
    let bounded_sites: Vec<usize> = (0..residual.len()).filter(|&s| residual[s] != UNBOUNDED).collect();
    // RUs that can reach an unbounded site never constrain the rest.
    let tight: Vec<&Vec<usize>> = rows
        .iter()
        .filter(|row| !row.iter().any(|&s| residual[s] == UNBOUNDED))
        .collect();
    if tight.is_empty() {
        return true;
    }
    let total: usize = bounded_sites.iter().map(|&s| residual[s]).sum();
    if tight.len() > total {
        return false;
    }
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); residual.len()];
    for i in 0..tight.len() {
        let mut seen = vec![false; residual.len()];
        if !augment(i, &tight, residual, &mut holders, &mut seen) {
            return false;
        }
    }
    true
}

fn augment(
    ru: usize,
    rows: &[&Vec<usize>],
    residual: &[usize],
    holders: &mut [Vec<usize>],
    seen: &mut [bool],
) -> bool {
    for &s in rows[ru].iter() {
        if seen[s] || residual[s] == 0 {
            continue;
        }
        seen[s] = true;
        if holders[s].len() < residual[s] {
            holders[s].push(ru);
            return true;
        }
        for k in 0..holders[s].len() {
            let other = holders[s][k];
            if augment(other, rows, residual, holders, seen) {
                holders[s][k] = ru;
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mec(id: usize, capacity: usize) -> IlpSite {
        IlpSite {
            site: OltSite::Mec(id),
            capacity: Some(capacity),
            tree: Some(0),
            cost: 1,
        }
    }

    fn full_model(n_rus: usize, caps: &[usize]) -> IlpModel {
        IlpModel {
            n_rus,
            sites: caps.iter().enumerate().map(|(i, &c)| mec(i, c)).collect(),
            reachable: vec![(0..caps.len()).collect(); n_rus],
            ..IlpModel::default()
        }
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| {
            seen.push(c.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut empty = 0;
        for_each_combination(3, 0, |_| {
            empty += 1;
            false
        });
        assert_eq!(empty, 1);
    }

    #[test]
    fn single_reachable_mec_is_enabled() {
        let model = IlpModel {
            n_rus: 1,
            sites: vec![mec(0, 4), mec(1, 4)],
            reachable: vec![vec![0]],
            ..IlpModel::default()
        };
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.enabled, vec![0]);
        assert_eq!(sol.objective, 1);
    }

    #[test]
    fn pigeonhole_forces_three_mecs() {
        let sol = solve_ilp(&full_model(8, &[3, 3, 3])).unwrap();
        assert_eq!(sol.objective, 3);
        assert!(full_model(8, &[3, 3, 3]).is_feasible(&sol.enabled, &sol.assignment));
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        assert_eq!(solve_ilp(&full_model(10, &[3, 3, 3])), Err(IlpError::Infeasible));
    }

    #[test]
    fn free_site_costs_nothing() {
        let mut model = full_model(3, &[1]);
        model.sites.push(IlpSite {
            site: OltSite::Co,
            capacity: None,
            tree: None,
            cost: 0,
        });
        model.reachable = vec![vec![0, 1]; 3];
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.objective, 0);
        assert_eq!(sol.assignment, vec![1, 1, 1]);
    }

    #[test]
    fn cuts_exclude_supersets() {
        let mut model = full_model(3, &[3, 3]);
        model.cuts.push(NoGoodCut::new(0, vec![0, 1]));
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.objective, 1);
        // MEC 0 cannot take both RU 0 and RU 1, so the single MEC is MEC 1.
        assert_eq!(sol.enabled, vec![1]);
        model.cuts.push(NoGoodCut::new(1, vec![0, 1]));
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.objective, 2);
        assert!(!model.cuts.iter().any(|c| c.excludes(&sol.assignment)));
    }

    #[test]
    fn min_enabled_forces_extra_sites() {
        let mut model = full_model(2, &[4, 4, 4]);
        model.min_enabled = 2;
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.objective, 2);
        assert_eq!(sol.enabled, vec![0, 1]);
        model.min_enabled = 4;
        assert_eq!(solve_ilp(&model), Err(IlpError::Infeasible));
    }

    #[test]
    fn tree_limit_caps_enabled_sites() {
        let mut model = full_model(4, &[2, 2, 2]);
        model.tree_limits.insert(0, 1);
        assert_eq!(solve_ilp(&model), Err(IlpError::Infeasible));
        model.sites[2].tree = Some(1);
        let sol = solve_ilp(&model).unwrap();
        assert_eq!(sol.enabled, vec![0, 2]);
    }

    #[test]
    fn matching_bound_catches_reachability_bottleneck() {
        // RUs 0-2 can only use MEC 0 (capacity 2).
        let model = IlpModel {
            n_rus: 4,
            sites: vec![mec(0, 2), mec(1, 5)],
            reachable: vec![vec![0], vec![0], vec![0], vec![0, 1]],
            ..IlpModel::default()
        };
        assert_eq!(solve_ilp(&model), Err(IlpError::Infeasible));
    }

    #[test]
    fn conflict_among_late_rus_is_found_near_the_root() {
        // 30 free RUs first, then three RUs pinned to MEC 2 that a cut keeps
        // apart. Index-order search would revisit every placement of the
        // free RUs before noticing.
        let mut reachable = vec![vec![0, 1]; 30];
        reachable.extend([vec![2], vec![2], vec![2]]);
        let model = IlpModel {
            n_rus: 33,
            sites: vec![mec(0, 20), mec(1, 20), mec(2, 5)],
            reachable,
            cuts: vec![NoGoodCut::new(2, vec![30, 31, 32])],
            node_limit: Some(1_000),
            ..IlpModel::default()
        };
        assert_eq!(solve_ilp(&model), Err(IlpError::Infeasible));
    }

    #[test]
    fn malformed_models_are_rejected() {
        let mut model = full_model(2, &[2]);
        model.reachable.pop();
        assert!(matches!(solve_ilp(&model), Err(IlpError::Malformed(_))));
    }
}
