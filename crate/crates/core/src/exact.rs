//! Exact posterior marginals by variable elimination, with a brute-force
//! enumeration oracle for cross-checking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bn::{BayesianNetwork, Evidence};
use crate::error::{Error, Result};

pub const DEFAULT_FACTOR_CAP: usize = 10_000_000;
pub const ENUMERATION_GUARD: u128 = 1 << 24;

/// Dense table over a list of variables; the last scope variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn scalar(value: f64) -> Self {
        Self { scope: vec![], cards: vec![], values: vec![value] }
    }

    /// CPT of `variable` as a factor over (parents..., variable).
    pub fn from_cpt(network: &BayesianNetwork, variable: usize) -> Self {
        let cpt = network.cpt(variable);
        let mut scope = cpt.parents.clone();
        scope.push(variable);
        let cards = scope.iter().map(|&v| network.cardinality(v)).collect();
        Self { scope, cards, values: cpt.table.clone() }
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.scope.len()];
        for i in (0..self.scope.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    /// Fixes observed variables, dropping them from the scope.
    pub fn reduce(&self, evidence: &Evidence) -> Self {
        if !self.scope.iter().any(|&v| evidence.is_observed(v)) {
            return self.clone();
        }
        let strides = self.strides();
        let mut base = 0;
        let mut scope = Vec::new();
        let mut cards = Vec::new();
        let mut kept_strides = Vec::new();
        for (i, &v) in self.scope.iter().enumerate() {
            match evidence.get(v) {
                Some(s) => base += s * strides[i],
                None => {
                    scope.push(v);
                    cards.push(self.cards[i]);
                    kept_strides.push(strides[i]);
                }
            }
        }
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut counter = vec![0usize; scope.len()];
        let mut offset = base;
        for _ in 0..size {
            values.push(self.values[offset]);
            for i in (0..counter.len()).rev() {
                counter[i] += 1;
                offset += kept_strides[i];
                if counter[i] < cards[i] {
                    break;
                }
                offset -= kept_strides[i] * cards[i];
                counter[i] = 0;
            }
        }
        Self { scope, cards, values }
    }

    /// Pointwise product over the union of scopes.
    pub fn product(&self, other: &Factor, cap: usize) -> Result<Self> {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (i, &v) in other.scope.iter().enumerate() {
            if !scope.contains(&v) {
                scope.push(v);
                cards.push(other.cards[i]);
            }
        }
        let size = cards.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).unwrap_or(usize::MAX);
        if size > cap {
            return Err(Error::FactorTooLarge { entries: size, cap });
        }
        let stride_in = |f: &Factor| -> Vec<usize> {
            let s = f.strides();
            scope
                .iter()
                .map(|v| f.scope.iter().position(|x| x == v).map_or(0, |i| s[i]))
                .collect()
        };
        let sa = stride_in(self);
        let sb = stride_in(other);
        let mut values = Vec::with_capacity(size);
        let mut counter = vec![0usize; scope.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            for i in (0..counter.len()).rev() {
                counter[i] += 1;
                ia += sa[i];
                ib += sb[i];
                if counter[i] < cards[i] {
                    break;
                }
                ia -= sa[i] * cards[i];
                ib -= sb[i] * cards[i];
                counter[i] = 0;
            }
        }
        Ok(Self { scope, cards, values })
    }

    /// Sums out one variable.
    pub fn marginalize(&self, variable: usize) -> Self {
        let Some(pos) = self.scope.iter().position(|&v| v == variable) else {
            return self.clone();
        };
        let k = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..k {
                let src = (o * k + s) * inner;
                let dst = o * inner;
                for j in 0..inner {
                    values[dst + j] += self.values[src + j];
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Self { scope, cards, values }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Posterior distribution of every unobserved variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMarginals {
    pub evidence: Evidence,
    pub marginals: BTreeMap<usize, Vec<f64>>,
}

impl PosteriorMarginals {
    pub fn get(&self, variable: usize) -> Option<&[f64]> {
        self.marginals.get(&variable).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VeOptions {
    pub factor_cap: usize,
}

impl Default for VeOptions {
    fn default() -> Self {
        Self { factor_cap: DEFAULT_FACTOR_CAP }
    }
}

/// Moral graph adjacency restricted to `keep`.
fn moral_graph(network: &BayesianNetwork, keep: &BTreeSet<usize>) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = keep.iter().map(|&v| (v, BTreeSet::new())).collect();
    for v in 0..network.len() {
        let mut family: Vec<usize> = network.parents(v).to_vec();
        family.push(v);
        family.retain(|x| keep.contains(x));
        for &a in &family {
            for &b in &family {
                if a != b {
                    adj.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }
    adj
}

fn minfill_over(mut adj: BTreeMap<usize, BTreeSet<usize>>) -> Vec<usize> {
    let mut order = Vec::with_capacity(adj.len());
    while !adj.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (&v, nbrs) in &adj {
            let nb: Vec<usize> = nbrs.iter().copied().collect();
            let mut fill = 0;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !adj[&nb[i]].contains(&nb[j]) {
                        fill += 1;
                    }
                }
            }
            // BTreeMap iterates by ascending index, so strict `<` keeps the lowest index on ties.
            if best.is_none_or(|(f, _)| fill < f) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        let nbrs = adj.remove(&v).unwrap();
        for &a in &nbrs {
            let entry = adj.get_mut(&a).unwrap();
            entry.remove(&v);
            entry.extend(nbrs.iter().copied().filter(|&b| b != a));
        }
        order.push(v);
    }
    order
}

/// Greedy min-fill order over the moral graph of the unobserved variables.
pub fn elimination_order_minfill(network: &BayesianNetwork, evidence: &Evidence) -> Vec<usize> {
    let keep: BTreeSet<usize> = (0..network.len()).filter(|&v| !evidence.is_observed(v)).collect();
    minfill_over(moral_graph(network, &keep))
}

/// Largest scope of the intermediate factor left after summing out each
/// variable of `order` (its moral-graph neighbours at elimination time).
pub fn max_factor_scope(network: &BayesianNetwork, evidence: &Evidence, order: &[usize]) -> usize {
    let keep: BTreeSet<usize> = (0..network.len()).filter(|&v| !evidence.is_observed(v)).collect();
    let mut adj = moral_graph(network, &keep);
    let mut widest = 0;
    for v in order {
        let Some(nbrs) = adj.remove(v) else { continue };
        widest = widest.max(nbrs.len());
        for &a in &nbrs {
            let entry = adj.get_mut(&a).unwrap();
            entry.remove(v);
            entry.extend(nbrs.iter().copied().filter(|&b| b != a));
        }
    }
    widest
}

/// Variables relevant to a query: ancestors of the query and the evidence.
/// Everything else is barren and sums to one.
fn relevant(network: &BayesianNetwork, query: usize, evidence: &Evidence) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    let mut stack: Vec<usize> = evidence.iter().map(|(v, _)| v).collect();
    stack.push(query);
    while let Some(v) = stack.pop() {
        if set.insert(v) {
            stack.extend(network.parents(v).iter().copied());
        }
    }
    set
}

fn eliminate(
    network: &BayesianNetwork,
    evidence: &Evidence,
    query: usize,
    order: &[usize],
    options: &VeOptions,
) -> Result<Factor> {
    let vars = relevant(network, query, evidence);
    let mut factors: Vec<Factor> = vars
        .iter()
        .map(|&v| Factor::from_cpt(network, v).reduce(evidence))
        .collect();
    for &v in order {
        if v == query || !vars.contains(&v) || evidence.is_observed(v) {
            continue;
        }
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = rest;
        let mut acc = Factor::scalar(1.0);
        for f in &touching {
            acc = acc.product(f, options.factor_cap)?;
        }
        factors.push(acc.marginalize(v));
    }
    let mut acc = Factor::scalar(1.0);
    for f in &factors {
        acc = acc.product(f, options.factor_cap)?;
    }
    Ok(acc)
}

/// `P(evidence)` by variable elimination.
pub fn evidence_probability(network: &BayesianNetwork, evidence: &Evidence) -> Result<f64> {
    evidence.check(network)?;
    let factors: Vec<Factor> = (0..network.len())
        .map(|v| Factor::from_cpt(network, v).reduce(evidence))
        .collect();
    let order = elimination_order_minfill(network, evidence);
    let mut factors = factors;
    for &v in &order {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope.contains(&v));
        factors = rest;
        let mut acc = Factor::scalar(1.0);
        for f in &touching {
            acc = acc.product(f, DEFAULT_FACTOR_CAP)?;
        }
        factors.push(acc.marginalize(v));
    }
    Ok(factors.iter().map(Factor::total).product())
}

pub fn posterior_marginals_ve(network: &BayesianNetwork, evidence: &Evidence) -> Result<PosteriorMarginals> {
    posterior_marginals_ve_with(network, evidence, None, &VeOptions::default())
}

/// Variable elimination with an optional explicit elimination order (min-fill
/// otherwise). The order must cover every unobserved variable.
pub fn posterior_marginals_ve_with(
    network: &BayesianNetwork,
    evidence: &Evidence,
    order: Option<&[usize]>,
    options: &VeOptions,
) -> Result<PosteriorMarginals> {
    evidence.check(network)?;
    let owned;
    let order = match order {
        Some(o) => o,
        None => {
            owned = elimination_order_minfill(network, evidence);
            &owned
        }
    };
    let mut marginals = BTreeMap::new();
    for q in (0..network.len()).filter(|&v| !evidence.is_observed(v)) {
        let f = eliminate(network, evidence, q, order, options)?;
        debug_assert_eq!(f.scope, vec![q]);
        let z = f.total();
        if !(z > 0.0) {
            return Err(Error::ZeroProbabilityEvidence);
        }
        marginals.insert(q, f.values.iter().map(|x| x / z).collect());
    }
    if marginals.is_empty() {
        // Fully observed: the evidence itself must still be possible.
        let assignment: Vec<usize> = (0..network.len()).map(|v| evidence.get(v).unwrap()).collect();
        if network.joint_probability(&assignment) <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
    }
    Ok(PosteriorMarginals { evidence: evidence.clone(), marginals })
}

/// Brute-force marginals by summing Eq.-style CPT products over all joint states.
pub fn posterior_marginals_enum(network: &BayesianNetwork, evidence: &Evidence) -> Result<PosteriorMarginals> {
    evidence.check(network)?;
    let cards = network.cardinalities();
    let states: u128 = cards.iter().map(|&k| k as u128).product();
    if states > ENUMERATION_GUARD {
        return Err(Error::StateSpaceTooLarge { states, guard: ENUMERATION_GUARD });
    }
    let free: Vec<usize> = (0..network.len()).filter(|&v| !evidence.is_observed(v)).collect();
    let mut acc: Vec<Vec<f64>> = free.iter().map(|&v| vec![0.0; cards[v]]).collect();
    let mut assignment: Vec<usize> = (0..network.len()).map(|v| evidence.get(v).unwrap_or(0)).collect();
    let mut z = 0.0;
    loop {
        let p = network.joint_probability(&assignment);
        z += p;
        for (slot, &v) in acc.iter_mut().zip(&free) {
            slot[assignment[v]] += p;
        }
        // odometer over the free variables
        let mut i = free.len();
        loop {
            if i == 0 {
                if !(z > 0.0) {
                    return Err(Error::ZeroProbabilityEvidence);
                }
                let marginals = free
                    .iter()
                    .zip(acc)
                    .map(|(&v, m)| (v, m.into_iter().map(|x| x / z).collect()))
                    .collect();
                return Ok(PosteriorMarginals { evidence: evidence.clone(), marginals });
            }
            i -= 1;
            let v = free[i];
            assignment[v] += 1;
            if assignment[v] < cards[v] {
                break;
            }
            assignment[v] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{Cpt, Variable};

    fn ab_chain() -> BayesianNetwork {
        BayesianNetwork::new(
            "ab",
            vec![Variable::new("A", &["0", "1"]), Variable::new("B", &["0", "1"])],
            vec![
                Cpt { child: 0, parents: vec![], table: vec![0.7, 0.3] },
                Cpt { child: 1, parents: vec![0], table: vec![0.8, 0.2, 0.1, 0.9] },
            ],
        )
        .unwrap()
    }

    fn chain(n: usize) -> BayesianNetwork {
        let vars = (0..n).map(|i| Variable::new(format!("X{i}"), &["0", "1"])).collect();
        let cpts = (0..n)
            .map(|i| {
                if i == 0 {
                    Cpt { child: 0, parents: vec![], table: vec![0.4, 0.6] }
                } else {
                    Cpt { child: i, parents: vec![i - 1], table: vec![0.9, 0.1, 0.3, 0.7] }
                }
            })
            .collect();
        BayesianNetwork::new("chain", vars, cpts).unwrap()
    }

    #[test]
    fn hand_bayes_on_chain() {
        let net = ab_chain();
        let ev: Evidence = [(1, 1)].into_iter().collect();
        let post = posterior_marginals_ve(&net, &ev).unwrap();
        // 0.3*0.9 / (0.3*0.9 + 0.7*0.2)
        let expect = 0.27 / 0.41;
        assert!((post.get(0).unwrap()[1] - expect).abs() < 1e-12);
        assert!(post.get(1).is_none());
    }

    #[test]
    fn factor_reduce_and_marginalize() {
        let net = ab_chain();
        let f = Factor::from_cpt(&net, 1);
        let r = f.reduce(&[(0, 1)].into_iter().collect());
        assert_eq!(r.scope, vec![1]);
        assert_eq!(r.values, vec![0.1, 0.9]);
        let m = f.marginalize(1);
        assert_eq!(m.scope, vec![0]);
        assert!((m.values[0] - 1.0).abs() < 1e-15 && (m.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn factor_product_matches_pointwise() {
        let a = Factor { scope: vec![0, 1], cards: vec![2, 3], values: (1..=6).map(f64::from).collect() };
        let b = Factor { scope: vec![1, 2], cards: vec![3, 2], values: (1..=6).map(f64::from).collect() };
        let p = a.product(&b, 100).unwrap();
        assert_eq!(p.scope, vec![0, 1, 2]);
        for x in 0..2 {
            for y in 0..3 {
                for z in 0..2 {
                    let got = p.values[(x * 3 + y) * 2 + z];
                    assert_eq!(got, a.values[x * 3 + y] * b.values[y * 2 + z]);
                }
            }
        }
        assert!(matches!(a.product(&b, 5), Err(Error::FactorTooLarge { .. })));
    }

    #[test]
    fn chain_minfill_starts_at_endpoint() {
        let net = chain(5);
        let order = elimination_order_minfill(&net, &Evidence::empty());
        assert_eq!(order.len(), 5);
        assert!(order[0] == 0 || order[0] == 4);
        assert_eq!(max_factor_scope(&net, &Evidence::empty(), &order), 1);
    }

    #[test]
    fn complete_moral_graph_scope_three() {
        // D has parents A,B,C: moralization connects all four.
        let vars = ["A", "B", "C", "D"].iter().map(|n| Variable::new(*n, &["0", "1"])).collect();
        let mut cpts: Vec<Cpt> = (0..3).map(|i| Cpt { child: i, parents: vec![], table: vec![0.5, 0.5] }).collect();
        cpts.push(Cpt { child: 3, parents: vec![0, 1, 2], table: vec![0.5; 16] });
        let net = BayesianNetwork::new("k4", vars, cpts).unwrap();
        let order = elimination_order_minfill(&net, &Evidence::empty());
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(max_factor_scope(&net, &Evidence::empty(), &order), 3);
    }

    #[test]
    fn deterministic_child_given_parents() {
        let vars = vec![Variable::new("A", &["0", "1"]), Variable::new("B", &["0", "1", "2"])];
        let net = BayesianNetwork::new(
            "det",
            vars,
            vec![
                Cpt { child: 0, parents: vec![], table: vec![0.5, 0.5] },
                Cpt { child: 1, parents: vec![0], table: vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0] },
            ],
        )
        .unwrap();
        let ev: Evidence = [(0, 1)].into_iter().collect();
        let post = posterior_marginals_enum(&net, &ev).unwrap();
        assert_eq!(post.get(1).unwrap(), &[0.0, 0.0, 1.0]);
        let bad: Evidence = [(0, 1), (1, 0)].into_iter().collect();
        assert!(matches!(posterior_marginals_enum(&net, &bad), Err(Error::ZeroProbabilityEvidence)));
        assert!(matches!(posterior_marginals_ve(&net, &bad), Err(Error::ZeroProbabilityEvidence)));
        let bad_partial: Evidence = [(1, 0)].into_iter().collect();
        assert!(matches!(posterior_marginals_ve(&net, &bad_partial), Err(Error::ZeroProbabilityEvidence)));
    }

    #[test]
    fn factor_cap_is_enforced() {
        let net = chain(5);
        let opts = VeOptions { factor_cap: 1 };
        assert!(matches!(
            posterior_marginals_ve_with(&net, &Evidence::empty(), None, &opts),
            Err(Error::FactorTooLarge { .. })
        ));
    }

    #[test]
    fn evidence_probability_of_chain() {
        let net = ab_chain();
        let ev: Evidence = [(1, 1)].into_iter().collect();
        assert!((evidence_probability(&net, &ev).unwrap() - 0.41).abs() < 1e-12);
    }
}
