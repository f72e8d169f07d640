//! Discrete Bayesian networks: data model, structural checks and statistics.
//!
//! A network is a list of categorical variables plus one conditional
//! probability table per variable. CPT rows are indexed by the joint state of
//! the parents with the *last* parent varying fastest; within a row the child
//! state varies fastest.

mod bif;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bif::{parse_bif, write_bif};

/// Tolerance on CPT row sums accepted by the parser.
pub const PARSE_ROW_TOLERANCE: f64 = 1e-6;
/// Tolerance on CPT row sums for a constructed network.
pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, states: &[&str]) -> Self {
        Self {
            name: name.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub child: usize,
    pub parents: Vec<usize>,
    /// Row-major: `table[row * k_child + state]`.
    pub table: Vec<f64>,
}

impl Cpt {
    pub fn row_count(&self, network: &BayesianNetwork) -> usize {
        self.parents
            .iter()
            .map(|&p| network.cardinality(p))
            .product()
    }

    /// Row index of a parent configuration, last parent fastest.
    pub fn row_index(&self, cards: &[usize], assignment: &[usize]) -> usize {
        self.parents
            .iter()
            .fold(0, |acc, &p| acc * cards[p] + assignment[p])
    }
}

/// Full joint state: one state index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

/// Observed variables and their states. Ordered by variable index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence(pub BTreeMap<usize, usize>);

impl Evidence {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, variable: usize) -> Option<usize> {
        self.0.get(&variable).copied()
    }

    pub fn is_observed(&self, variable: usize) -> bool {
        self.0.contains_key(&variable)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(&v, &s)| (v, s))
    }

    pub fn check(&self, network: &BayesianNetwork) -> Result<()> {
        for (v, s) in self.iter() {
            if v >= network.len() {
                return Err(Error::InvalidEvidence(format!("variable index {v} out of range")));
            }
            if s >= network.cardinality(v) {
                return Err(Error::InvalidEvidence(format!(
                    "state {s} out of range for `{}`",
                    network.variables[v].name
                )));
            }
        }
        Ok(())
    }
}

impl FromIterator<(usize, usize)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianNetwork {
    pub name: String,
    pub variables: Vec<Variable>,
    pub cpts: Vec<Cpt>,
    #[serde(skip)]
    children: Vec<Vec<usize>>,
}

impl BayesianNetwork {
    /// Builds a network and rejects it unless [`validate`] passes.
    pub fn new(name: impl Into<String>, variables: Vec<Variable>, cpts: Vec<Cpt>) -> Result<Self> {
        let net = Self::from_parts_unchecked(name, variables, cpts);
        let report = validate(&net);
        if !report.is_valid() {
            return Err(Error::InvalidNetwork(report.summary()));
        }
        Ok(net)
    }

    /// Builds a network without validation. Index errors are tolerated here so
    /// that [`validate`] can report them; most other methods assume a valid
    /// network.
    pub fn from_parts_unchecked(
        name: impl Into<String>,
        variables: Vec<Variable>,
        mut cpts: Vec<Cpt>,
    ) -> Self {
        cpts.sort_by_key(|c| c.child);
        let mut children = vec![Vec::new(); variables.len()];
        for cpt in &cpts {
            for &p in &cpt.parents {
                if p < variables.len() && cpt.child < variables.len() {
                    children[p].push(cpt.child);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
            c.dedup();
        }
        Self {
            name: name.into(),
            variables,
            cpts,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cardinality(&self, variable: usize) -> usize {
        self.variables[variable].cardinality()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn cpt(&self, variable: usize) -> &Cpt {
        &self.cpts[variable]
    }

    pub fn parents(&self, variable: usize) -> &[usize] {
        &self.cpts[variable].parents
    }

    pub fn children(&self, variable: usize) -> &[usize] {
        &self.children[variable]
    }

    pub fn edge_count(&self) -> usize {
        self.cpts.iter().map(|c| c.parents.len()).sum()
    }

    /// CPT row `P(variable | parents as in assignment)`.
    pub fn cpt_row(&self, variable: usize, cards: &[usize], assignment: &[usize]) -> &[f64] {
        let cpt = &self.cpts[variable];
        let k = cards[variable];
        let row = cpt.row_index(cards, assignment);
        &cpt.table[row * k..(row + 1) * k]
    }

    /// Joint probability of a full assignment (product of CPT entries).
    pub fn joint_probability(&self, assignment: &[usize]) -> f64 {
        let cards = self.cardinalities();
        (0..self.len())
            .map(|v| self.cpt_row(v, &cards, assignment)[assignment[v]])
            .product()
    }

    /// Normalizes every CPT row to sum to one.
    pub fn renormalize(&mut self) {
        let cards = self.cardinalities();
        for cpt in &mut self.cpts {
            let k = cards[cpt.child];
            for row in cpt.table.chunks_mut(k) {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|p| *p /= s);
                }
            }
        }
    }

    /// Canonical JSON: variables then CPTs as flat row-major arrays.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_canonical_json(text: &str) -> Result<Self> {
        let raw: BayesianNetwork = serde_json::from_str(text)?;
        Self::new(raw.name, raw.variables, raw.cpts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResidual {
    pub variable: usize,
    pub row: usize,
    /// `sum(row) - 1`.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub cycle: Option<Vec<usize>>,
    pub row_failures: Vec<RowResidual>,
    pub index_errors: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.cycle.is_none() && self.row_failures.is_empty() && self.index_errors.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(c) = &self.cycle {
            parts.push(format!("cycle through variables {c:?}"));
        }
        for r in &self.row_failures {
            parts.push(format!(
                "variable {} row {} residual {:+e}",
                r.variable, r.row, r.residual
            ));
        }
        parts.extend(self.index_errors.iter().cloned());
        parts.join("; ")
    }
}

/// Structural and numerical checks. Never fails; the report carries findings.
pub fn validate(network: &BayesianNetwork) -> ValidationReport {
    validate_with_tolerance(network, ROW_TOLERANCE)
}

pub fn validate_with_tolerance(network: &BayesianNetwork, tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = network.len();
    let mut seen = vec![0usize; n];
    for (i, cpt) in network.cpts.iter().enumerate() {
        if cpt.child >= n {
            report
                .index_errors
                .push(format!("CPT {i} has child index {} out of range", cpt.child));
            continue;
        }
        seen[cpt.child] += 1;
        for &p in &cpt.parents {
            if p >= n {
                report
                    .index_errors
                    .push(format!("CPT of variable {} has parent {p} out of range", cpt.child));
            } else if p == cpt.child {
                report
                    .index_errors
                    .push(format!("variable {} is its own parent", cpt.child));
            }
        }
    }
    for (v, &count) in seen.iter().enumerate() {
        if count != 1 {
            report
                .index_errors
                .push(format!("variable {v} has {count} CPTs (expected 1)"));
        }
    }
    let mut names = BTreeSet::new();
    for (v, var) in network.variables.iter().enumerate() {
        if !names.insert(var.name.as_str()) {
            report.index_errors.push(format!("duplicate variable name `{}`", var.name));
        }
        if var.states.len() < 2 {
            report
                .index_errors
                .push(format!("variable {v} has fewer than two states"));
        }
        let unique: BTreeSet<_> = var.states.iter().collect();
        if unique.len() != var.states.len() {
            report
                .index_errors
                .push(format!("variable `{}` has duplicate state labels", var.name));
        }
    }
    if !report.index_errors.is_empty() {
        return report;
    }

    let cards = network.cardinalities();
    for cpt in &network.cpts {
        let k = cards[cpt.child];
        let rows: usize = cpt.parents.iter().map(|&p| cards[p]).product();
        if cpt.table.len() != rows * k {
            report.index_errors.push(format!(
                "CPT of variable {} has {} entries, expected {}",
                cpt.child,
                cpt.table.len(),
                rows * k
            ));
            continue;
        }
        for (r, row) in cpt.table.chunks(k).enumerate() {
            let in_range = row.iter().all(|p| (0.0..=1.0).contains(p));
            let residual = row.iter().sum::<f64>() - 1.0;
            if !in_range || residual.abs() > tolerance {
                report.row_failures.push(RowResidual {
                    variable: cpt.child,
                    row: r,
                    residual,
                });
            }
        }
    }
    report.cycle = find_cycle(network);
    report
}

fn find_cycle(network: &BayesianNetwork) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let n = network.len();
    let mut color = vec![0u8; n];
    let mut stack_path = Vec::new();
    fn visit(
        v: usize,
        net: &BayesianNetwork,
        color: &mut [u8],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        color[v] = 1;
        path.push(v);
        for &c in net.children(v) {
            if color[c] == 1 {
                let start = path.iter().position(|&x| x == c).unwrap_or(0);
                return Some(path[start..].to_vec());
            }
            if color[c] == 0 {
                if let Some(cycle) = visit(c, net, color, path) {
                    return Some(cycle);
                }
            }
        }
        path.pop();
        color[v] = 2;
        None
    }
    (0..n).find_map(|v| {
        if color[v] == 0 {
            visit(v, network, &mut color, &mut stack_path)
        } else {
            None
        }
    })
}

/// Kahn's algorithm; among ready variables the lowest declaration index goes first.
pub fn topological_order(network: &BayesianNetwork) -> Result<Vec<usize>> {
    let n = network.len();
    let mut indegree: Vec<usize> = (0..n).map(|v| network.parents(v).len()).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in network.children(v) {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&v| indegree[v] > 0).unwrap_or(0);
        return Err(Error::Cycle(network.variables[stuck].name.clone()));
    }
    Ok(order)
}

/// Parents, children and the children's other parents.
pub fn markov_blanket(network: &BayesianNetwork, variable: usize) -> BTreeSet<usize> {
    let mut blanket: BTreeSet<usize> = network.parents(variable).iter().copied().collect();
    for &c in network.children(variable) {
        blanket.insert(c);
        blanket.extend(network.parents(c).iter().copied());
    }
    blanket.remove(&variable);
    blanket
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub node_count: usize,
    pub edge_count: usize,
    /// Independent parameters: `sum_j (K_j - 1) * prod_parents K_p`.
    pub parameter_count: usize,
    /// Every CPT entry: `sum_j K_j * prod_parents K_p`.
    pub full_entry_count: usize,
    pub avg_markov_blanket: f64,
    /// `2 * edges / nodes`.
    pub avg_degree: f64,
    pub max_in_degree: usize,
}

pub fn network_stats(network: &BayesianNetwork) -> NetworkStats {
    let cards = network.cardinalities();
    let n = network.len();
    let mut parameter_count = 0;
    let mut full_entry_count = 0;
    for cpt in &network.cpts {
        let rows: usize = cpt.parents.iter().map(|&p| cards[p]).product();
        parameter_count += (cards[cpt.child] - 1) * rows;
        full_entry_count += cards[cpt.child] * rows;
    }
    let blanket_total: usize = (0..n).map(|v| markov_blanket(network, v).len()).sum();
    let edge_count = network.edge_count();
    NetworkStats {
        node_count: n,
        edge_count,
        parameter_count,
        full_entry_count,
        avg_markov_blanket: if n == 0 { 0.0 } else { blanket_total as f64 / n as f64 },
        avg_degree: if n == 0 { 0.0 } else { 2.0 * edge_count as f64 / n as f64 },
        max_in_degree: (0..n).map(|v| network.parents(v).len()).max().unwrap_or(0),
    }
}

/// Reference figures for a dataset, used to report which counting convention
/// (if any) reproduces them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub nodes: usize,
    pub edges: usize,
    pub parameters: usize,
    pub avg_markov_blanket: f64,
    pub avg_degree: f64,
    pub max_in_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParameterConvention {
    Independent,
    FullEntries,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsComparison {
    pub stats: NetworkStats,
    pub reference: ReferenceStats,
    pub nodes_match: bool,
    pub edges_match: bool,
    pub parameter_convention: ParameterConvention,
    pub blanket_delta: f64,
    pub degree_delta: f64,
    pub max_in_degree_match: bool,
}

impl StatsComparison {
    pub fn mismatches(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.nodes_match {
            out.push(format!("nodes {} vs {}", self.stats.node_count, self.reference.nodes));
        }
        if !self.edges_match {
            out.push(format!("edges {} vs {}", self.stats.edge_count, self.reference.edges));
        }
        if self.parameter_convention == ParameterConvention::Neither {
            out.push(format!(
                "parameters: independent {} / full {} vs reference {}",
                self.stats.parameter_count, self.stats.full_entry_count, self.reference.parameters
            ));
        }
        if self.blanket_delta.abs() > 0.01 {
            out.push(format!("avg blanket off by {:+.3}", self.blanket_delta));
        }
        if self.degree_delta.abs() > 0.01 {
            out.push(format!(
                "avg degree {:.3} vs {:.3} (2E/N convention)",
                self.stats.avg_degree, self.reference.avg_degree
            ));
        }
        if !self.max_in_degree_match {
            out.push(format!(
                "max in-degree {} vs {}",
                self.stats.max_in_degree, self.reference.max_in_degree
            ));
        }
        out
    }
}

pub fn compare_stats(stats: &NetworkStats, reference: &ReferenceStats) -> StatsComparison {
    let parameter_convention = if stats.parameter_count == reference.parameters {
        ParameterConvention::Independent
    } else if stats.full_entry_count == reference.parameters {
        ParameterConvention::FullEntries
    } else {
        ParameterConvention::Neither
    };
    StatsComparison {
        stats: stats.clone(),
        reference: *reference,
        nodes_match: stats.node_count == reference.nodes,
        edges_match: stats.edge_count == reference.edges,
        parameter_convention,
        blanket_delta: stats.avg_markov_blanket - reference.avg_markov_blanket,
        degree_delta: stats.avg_degree - reference.avg_degree,
        max_in_degree_match: stats.max_in_degree == reference.max_in_degree,
    }
}
