//! Depth-first 0-1 branch-and-bound with a fixed variable order.
//!
//! Variables are fixed in index order (for bin-packing models: bin by bin,
//! `y_k` before the `x_ik` of its column). A node is one variable fixing.
//! A node is pruned when
//! - a linear row can no longer be satisfied given the min/max activity of
//!   its unfixed variables,
//! - the objective lower bound reaches the incumbent, or
//! - a side constraint whose variables are all fixed evaluates above zero.
//!
//! Side constraints are never bounded on partial assignments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IpModel, Relation};
use crate::poly::{Monomial, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("variable {0} does not have the binary domain {{0, 1}}")]
    NonBinaryDomain(usize),
    #[error("objective is not linear")]
    NonlinearObjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ValueOrder {
    /// Try `x = 1` before `x = 0`.
    #[default]
    OneFirst,
    ZeroFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    /// Stop after this many nodes; the result is then marked incomplete.
    pub node_limit: Option<u64>,
    pub value_order: ValueOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub incumbent_updates: u64,
    /// `None` when no feasible point exists (or none was found before the
    /// node limit).
    pub optimum: Option<i64>,
    pub proof: Option<Vec<i64>>,
    /// `false` when the node limit cut the search short.
    pub complete: bool,
}

impl SolveStats {
    pub fn is_infeasible(&self) -> bool {
        self.complete && self.optimum.is_none()
    }
}

struct Row {
    lo: Option<i128>,
    hi: Option<i128>,
    fixed: i128,
    min_rem: i128,
    max_rem: i128,
}

impl Row {
    fn violated(&self) -> bool {
        self.hi.is_some_and(|hi| self.fixed + self.min_rem > hi)
            || self.lo.is_some_and(|lo| self.fixed + self.max_rem < lo)
    }
}

struct Search<'a> {
    n: usize,
    rows: Vec<Row>,
    var_rows: Vec<Vec<(usize, i64)>>,
    obj: Vec<i64>,
    obj_const: i128,
    obj_fixed: i128,
    obj_min_rem: i128,
    side: &'a [Polynomial],
    side_open: Vec<usize>,
    var_side: Vec<Vec<usize>>,
    point: Vec<i64>,
    order: [i64; 2],
    node_limit: u64,
    nodes: u64,
    updates: u64,
    incumbent: Option<(i128, Vec<i64>)>,
    stopped: bool,
}

impl Search<'_> {
    /// Fixes `var = val`; returns `false` if a row or a now-complete side
    /// constraint is violated. Always paired with [`Search::unfix`].
    fn fix(&mut self, var: usize, val: i64) -> bool {
        self.point[var] = val;
        let mut ok = true;
        for &(r, a) in &self.var_rows[var] {
            let row = &mut self.rows[r];
            if a > 0 {
                row.max_rem -= a as i128;
            } else {
                row.min_rem -= a as i128;
            }
            row.fixed += a as i128 * val as i128;
            ok &= !row.violated();
        }
        let c = self.obj[var] as i128;
        self.obj_min_rem -= c.min(0);
        self.obj_fixed += c * val as i128;
        for &s in &self.var_side[var] {
            self.side_open[s] -= 1;
            if ok && self.side_open[s] == 0 {
                let v = self.side[s]
                    .evaluate_int(&self.point)
                    .expect("side constraint variables are in range");
                ok = v <= 0;
            }
        }
        ok
    }

    fn unfix(&mut self, var: usize, val: i64) {
        for &(r, a) in &self.var_rows[var] {
            let row = &mut self.rows[r];
            if a > 0 {
                row.max_rem += a as i128;
            } else {
                row.min_rem += a as i128;
            }
            row.fixed -= a as i128 * val as i128;
        }
        let c = self.obj[var] as i128;
        self.obj_min_rem += c.min(0);
        self.obj_fixed -= c * val as i128;
        for &s in &self.var_side[var] {
            self.side_open[s] += 1;
        }
        self.point[var] = 0;
    }

    fn lower_bound(&self) -> i128 {
        self.obj_const + self.obj_fixed + self.obj_min_rem
    }

    fn dfs(&mut self, depth: usize) {
        if depth == self.n {
            let value = self.lower_bound();
            if self
                .incumbent
                .as_ref()
                .is_none_or(|(best, _)| value < *best)
            {
                self.incumbent = Some((value, self.point.clone()));
                self.updates += 1;
            }
            return;
        }
        for val in self.order {
            if self.nodes >= self.node_limit {
                self.stopped = true;
                return;
            }
            self.nodes += 1;
            let feasible = self.fix(depth, val);
            let bounded = self
                .incumbent
                .as_ref()
                .is_some_and(|(best, _)| self.lower_bound() >= *best);
            if feasible && !bounded {
                self.dfs(depth + 1);
            }
            self.unfix(depth, val);
            if self.stopped {
                return;
            }
        }
    }
}

/// Solves a binary model with a linear objective to optimality.
pub fn solve(model: &IpModel, options: &SolveOptions) -> Result<SolveStats, SolveError> {
    let n = model.num_vars();
    if let Some(i) = model.domains().iter().position(|d| !d.is_binary()) {
        return Err(SolveError::NonBinaryDomain(i));
    }
    if model.objective().degree().is_some_and(|d| d > 1) {
        return Err(SolveError::NonlinearObjective);
    }
    let mut obj = vec![0i64; n];
    let mut obj_const = 0i128;
    for (m, c) in model.objective().terms() {
        match m.factors().next() {
            Some((v, _)) => obj[v] += c,
            None => obj_const += c as i128,
        }
    }
    let mut var_rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    let mut rows = Vec::with_capacity(model.constraints().len());
    for (r, c) in model.constraints().iter().enumerate() {
        let rhs = c.rhs as i128;
        let (lo, hi) = match c.relation {
            Relation::Le => (None, Some(rhs)),
            Relation::Ge => (Some(rhs), None),
            Relation::Eq => (Some(rhs), Some(rhs)),
        };
        let mut row = Row {
            lo,
            hi,
            fixed: 0,
            min_rem: 0,
            max_rem: 0,
        };
        for &(v, a) in &c.terms {
            if a > 0 {
                row.max_rem += a as i128;
            } else {
                row.min_rem += a as i128;
            }
            var_rows[v].push((r, a));
        }
        rows.push(row);
    }
    let side = model.side_constraints();
    let mut var_side: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut side_open = Vec::with_capacity(side.len());
    for (s, p) in side.iter().enumerate() {
        let vars = p.variables();
        for &v in &vars {
            var_side[v].push(s);
        }
        side_open.push(vars.len());
    }
    let mut stats = SolveStats {
        nodes_explored: 0,
        incumbent_updates: 0,
        optimum: None,
        proof: None,
        complete: true,
    };
    let trivially_infeasible = rows.iter().any(Row::violated)
        || side
            .iter()
            .any(|p| p.variables().is_empty() && p.coeff(&Monomial::one()) > 0);
    if trivially_infeasible {
        return Ok(stats);
    }
    let obj_min_rem = obj.iter().map(|&c| (c as i128).min(0)).sum();
    let mut search = Search {
        n,
        rows,
        var_rows,
        obj,
        obj_const,
        obj_fixed: 0,
        obj_min_rem,
        side,
        side_open,
        var_side,
        point: vec![0; n],
        order: match options.value_order {
            ValueOrder::OneFirst => [1, 0],
            ValueOrder::ZeroFirst => [0, 1],
        },
        node_limit: options.node_limit.unwrap_or(u64::MAX),
        nodes: 0,
        updates: 0,
        incumbent: None,
        stopped: false,
    };
    search.dfs(0);
    stats.nodes_explored = search.nodes;
    stats.incumbent_updates = search.updates;
    stats.complete = !search.stopped;
    if let Some((value, point)) = search.incumbent {
        stats.optimum = Some(i64::try_from(value).expect("objective fits in i64"));
        stats.proof = Some(point);
    }
    Ok(stats)
}

/// One solver configuration: the base model plus a list of breakers.
#[derive(Debug, Clone, Default)]
pub struct Configuration {
    pub config_id: String,
    pub template: Option<String>,
    pub profile: Option<String>,
    pub breakers: Vec<Polynomial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub config_id: String,
    pub template: Option<String>,
    pub profile: Option<String>,
    pub stats: SolveStats,
    /// Nodes relative to the baseline, in percent.
    pub relative_nodes_pct: f64,
}

/// Solves the baseline (the model as given) and every configuration, each
/// on its own thread, and reports node counts relative to the baseline.
pub fn compare(
    model: &IpModel,
    configs: &[Configuration],
    options: &SolveOptions,
) -> Result<Vec<CompareRow>, SolveError> {
    let models: Vec<IpModel> = configs
        .iter()
        .map(|c| {
            model
                .with_side_constraints(&c.breakers)
                .expect("breakers reference model variables")
        })
        .collect();
    let (baseline, results) = std::thread::scope(|scope| {
        let handles: Vec<_> = models
            .iter()
            .map(|m| scope.spawn(move || solve(m, options)))
            .collect();
        let baseline = solve(model, options);
        let results: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect();
        (baseline, results)
    });
    let baseline = baseline?;
    let base_nodes = baseline.nodes_explored.max(1) as f64;
    let mut rows = vec![CompareRow {
        config_id: "baseline".to_string(),
        template: None,
        profile: None,
        relative_nodes_pct: 100.0,
        stats: baseline,
    }];
    for (cfg, stats) in configs.iter().zip(results) {
        let stats = stats?;
        rows.push(CompareRow {
            config_id: cfg.config_id.clone(),
            template: cfg.template.clone(),
            profile: cfg.profile.clone(),
            relative_nodes_pct: 100.0 * stats.nodes_explored as f64 / base_nodes,
            stats,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binpack::BinPackingInstance;
    use crate::model::{Domain, LinearConstraint};
    use crate::verify::{Enumeration, Guard};

    #[test]
    fn two_variable_example() {
        let toy = IpModel::two_variable_example();
        let plain = solve(&toy, &SolveOptions::default()).unwrap();
        assert_eq!(plain.optimum, Some(1));
        assert!(plain.complete);

        let breaker = &Polynomial::var(1) - &Polynomial::var(0);
        let with = solve(
            &toy.with_side_constraints([&breaker]).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(with.optimum, Some(1));
        assert_eq!(with.proof, Some(vec![1, 0]));
        assert!(with.nodes_explored <= plain.nodes_explored);
    }

    #[test]
    fn infeasible_rows() {
        let rows = vec![
            LinearConstraint::new("a", vec![(0, 1)], Relation::Ge, 1),
            LinearConstraint::new("b", vec![(0, 1)], Relation::Le, 0),
        ];
        let m = IpModel::binary(1, Polynomial::var(0), rows).unwrap();
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert!(s.is_infeasible());
        assert_eq!(s.nodes_explored, 2);

        let empty_row = vec![LinearConstraint::new("c", vec![], Relation::Ge, 1)];
        let m = IpModel::binary(1, Polynomial::var(0), empty_row).unwrap();
        let s = solve(&m, &SolveOptions::default()).unwrap();
        assert!(s.is_infeasible());
        assert_eq!(s.nodes_explored, 0);
    }

    #[test]
    fn rejects_non_binary_and_nonlinear() {
        let m = IpModel::new(
            1,
            Polynomial::var(0),
            vec![],
            vec![Domain::new(vec![0, 1, 2])],
        )
        .unwrap();
        assert_eq!(
            solve(&m, &SolveOptions::default()),
            Err(SolveError::NonBinaryDomain(0))
        );
        let sq = &Polynomial::var(0) * &Polynomial::var(0);
        let m = IpModel::binary(1, sq, vec![]).unwrap();
        assert_eq!(
            solve(&m, &SolveOptions::default()),
            Err(SolveError::NonlinearObjective)
        );
    }

    #[test]
    fn matches_enumeration_on_small_bin_packing() {
        for (sizes, bins) in [
            (vec![5, 5], 2),
            (vec![6, 6, 6], 3),
            (vec![3, 4, 7, 2], 3),
            (vec![2, 9, 9], 2),
        ] {
            let inst = BinPackingInstance::new(10, sizes, bins).unwrap();
            let model = inst.build_model();
            let enumerated = Enumeration::of(&model, &Guard::default())
                .unwrap()
                .optimum();
            for order in [ValueOrder::OneFirst, ValueOrder::ZeroFirst] {
                let opts = SolveOptions {
                    value_order: order,
                    ..SolveOptions::default()
                };
                let s = solve(&model, &opts).unwrap();
                assert_eq!(s.optimum.map(i128::from), enumerated);
                if let Some(p) = &s.proof {
                    assert!(model.is_feasible(p));
                }
            }
        }
    }

    #[test]
    fn node_limit_marks_incomplete() {
        let inst = BinPackingInstance::new(10, vec![4, 4, 4, 4], 4).unwrap();
        let s = solve(
            &inst.build_model(),
            &SolveOptions {
                node_limit: Some(5),
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert!(!s.complete);
        assert_eq!(s.nodes_explored, 5);
    }

    #[test]
    fn compare_rows() {
        let toy = IpModel::two_variable_example();
        let rows = compare(&toy, &[], &SolveOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].relative_nodes_pct, 100.0);

        let same = Configuration {
            config_id: "dup".into(),
            ..Configuration::default()
        };
        let rows = compare(&toy, &[same], &SolveOptions::default()).unwrap();
        assert_eq!(rows[0].stats, rows[1].stats);
        assert_eq!(rows[1].relative_nodes_pct, 100.0);
    }

    #[test]
    fn deterministic_node_counts() {
        let inst = BinPackingInstance::new(10, vec![3, 3, 4, 4, 6], 5).unwrap();
        let m = inst.build_model();
        let a = solve(&m, &SolveOptions::default()).unwrap();
        let b = solve(&m, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
