//! Modular networks: communities attached to a regular backbone, their
//! capacity classes, collective node isolation and threshold checks.

use crate::network_graph::{flooding_capacity, FlowGraph, Network, NetworkError};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModularError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("node `{0}` is labelled both backbone and community member")]
    DoubleLabel(String),
    #[error("node `{0}` belongs to neither a community nor the backbone")]
    Unassigned(String),
    #[error("edge {edge} joins communities `{a}` and `{b}` directly")]
    CommunityEdge { edge: usize, a: String, b: String },
    #[error("node `{0}` is not in a community")]
    NotInCommunity(String),
    #[error("end users share community `{0}`")]
    SameCommunity(String),
    #[error("backbone is not {k}-regular: node `{node}` has degree {degree}")]
    NotRegular { k: usize, node: String, degree: usize },
    #[error("target set must be a nonempty set of backbone nodes")]
    BadTargets,
    #[error("ideal spec does not match the network: {0}")]
    SpecMismatch(String),
}

pub type Result<T> = std::result::Result<T, ModularError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModularNetwork {
    pub base: Network,
    pub community_names: Vec<String>,
    /// node indices per community
    pub communities: Vec<Vec<usize>>,
    pub backbone: Vec<usize>,
    /// intercommunity edge ids E_{c:b} per community
    pub intercommunity: Vec<Vec<usize>>,
    community_of: Vec<Option<usize>>,
}

impl ModularNetwork {
    /// Reads the modular structure from node labels.
    pub fn from_network(base: Network) -> Result<Self> {
        let mut names: BTreeMap<String, usize> = BTreeMap::new();
        for n in base.nodes() {
            match (&n.community, n.backbone) {
                (Some(_), true) => return Err(ModularError::DoubleLabel(n.id.clone())),
                (None, false) => return Err(ModularError::Unassigned(n.id.clone())),
                (Some(c), false) => {
                    let next = names.len();
                    names.entry(c.clone()).or_insert(next);
                }
                _ => {}
            }
        }
        // order communities by first appearance
        let mut order: Vec<(usize, String)> = names.into_iter().map(|(k, v)| (v, k)).collect();
        order.sort();
        let community_names: Vec<String> = order.into_iter().map(|(_, k)| k).collect();
        let lookup: BTreeMap<&str, usize> = community_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let community_of: Vec<Option<usize>> = base
            .nodes()
            .iter()
            .map(|n| n.community.as_deref().map(|c| lookup[c]))
            .collect();
        let mut communities = vec![Vec::new(); community_names.len()];
        let mut backbone = Vec::new();
        for (i, c) in community_of.iter().enumerate() {
            match c {
                Some(c) => communities[*c].push(i),
                None => backbone.push(i),
            }
        }
        let mut intercommunity = vec![Vec::new(); community_names.len()];
        for (i, e) in base.edges().iter().enumerate() {
            match (community_of[e.u], community_of[e.v]) {
                (Some(a), Some(b)) if a != b => {
                    return Err(ModularError::CommunityEdge {
                        edge: i,
                        a: community_names[a].clone(),
                        b: community_names[b].clone(),
                    })
                }
                (Some(a), None) | (None, Some(a)) => intercommunity[a].push(i),
                _ => {}
            }
        }
        Ok(ModularNetwork {
            base,
            community_names,
            communities,
            backbone,
            intercommunity,
            community_of,
        })
    }

    pub fn community_of(&self, node: usize) -> Option<usize> {
        self.community_of.get(node).copied().flatten()
    }

    fn user_community(&self, node: usize) -> Result<usize> {
        self.community_of(node)
            .ok_or_else(|| ModularError::NotInCommunity(self.base.id(node).to_string()))
    }

    /// P_{b|c}: backbone nodes attached to community `c`.
    pub fn attachment_backbone(&self, c: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.intercommunity[c]
            .iter()
            .map(|&e| {
                let e = &self.base.edges()[e];
                if self.community_of[e.u].is_none() {
                    e.u
                } else {
                    e.v
                }
            })
            .collect();
        set.into_iter().collect()
    }

    /// P_{c|b}: community nodes with a backbone link.
    pub fn attachment_community(&self, c: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.intercommunity[c]
            .iter()
            .map(|&e| {
                let e = &self.base.edges()[e];
                if self.community_of[e.u].is_some() {
                    e.u
                } else {
                    e.v
                }
            })
            .collect();
        set.into_iter().collect()
    }

    pub fn intercommunity_capacity(&self, c: usize) -> Result<f64> {
        let caps = self.base.capacities()?;
        Ok(self.intercommunity[c].iter().map(|&e| caps[e]).sum())
    }

    /// Backbone-only network and the base index of each of its nodes.
    pub fn backbone_network(&self) -> (Network, Vec<usize>) {
        self.induced(&self.backbone)
    }

    /// Community-internal network and the base index of each of its nodes.
    pub fn community_network(&self, c: usize) -> (Network, Vec<usize>) {
        self.induced(&self.communities[c])
    }

    fn induced(&self, nodes: &[usize]) -> (Network, Vec<usize>) {
        let mut local = vec![usize::MAX; self.base.len()];
        let mut net = Network::new();
        for (i, &x) in nodes.iter().enumerate() {
            local[x] = i;
            let n = &self.base.nodes()[x];
            net.add_node(&n.id, n.community.as_deref(), n.backbone)
                .expect("ids are unique in the base network");
        }
        for e in self.base.edges() {
            if local[e.u] != usize::MAX && local[e.v] != usize::MAX {
                net.add_edge(local[e.u], local[e.v], e.capacity.unwrap_or(0.0))
                    .expect("induced edge is valid");
            }
        }
        (net, nodes.to_vec())
    }

    /// Edges with both endpoints on the backbone.
    pub fn backbone_edges(&self) -> Vec<usize> {
        self.edge_ids(|a, b| a.is_none() && b.is_none())
    }

    /// Edges internal to community `c`.
    pub fn community_edges(&self, c: usize) -> Vec<usize> {
        self.edge_ids(|a, b| a == Some(c) && b == Some(c))
    }

    fn edge_ids(&self, keep: impl Fn(Option<usize>, Option<usize>) -> bool) -> Vec<usize> {
        self.base
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| keep(self.community_of[e.u], self.community_of[e.v]))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Star graph: one node per community joined to a single backbone node by the
/// summed intercommunity capacity.
pub fn quotient_graph(m: &ModularNetwork) -> Result<Network> {
    let mut q = Network::new();
    let hub = q.add_node("backbone", None, true)?;
    for (c, name) in m.community_names.iter().enumerate() {
        let x = q.add_node(name, Some(name), false)?;
        q.add_edge(x, hub, m.intercommunity_capacity(c)?)?;
    }
    Ok(q)
}

/// C_{c:b}: the smaller intercommunity capacity of the two end-user communities.
pub fn global_community_capacity(m: &ModularNetwork, alpha: usize, beta: usize) -> Result<f64> {
    let (ca, cb) = (m.user_community(alpha)?, m.user_community(beta)?);
    if ca == cb {
        return Err(ModularError::SameCommunity(m.community_names[ca].clone()));
    }
    Ok(m.intercommunity_capacity(ca)?.min(m.intercommunity_capacity(cb)?))
}

/// Cheapest cut inside j's community that separates j from the backbone;
/// j's own backbone links are always cut, other intercommunity links never are.
pub fn local_community_capacity(m: &ModularNetwork, j: usize) -> Result<f64> {
    let c = m.user_community(j)?;
    let caps = m.base.capacities()?;
    let n = m.base.len();
    let sink = n;
    let mut g = FlowGraph::new(n + 1);
    for e in m.community_edges(c) {
        let ed = &m.base.edges()[e];
        g.add(ed.u, ed.v, caps[e], caps[e]);
    }
    for &e in &m.intercommunity[c] {
        let ed = &m.base.edges()[e];
        let inner = if m.community_of[ed.u].is_some() { ed.u } else { ed.v };
        let cap = if inner == j { caps[e] } else { f64::INFINITY };
        g.add(inner, sink, cap, cap);
    }
    Ok(g.max_flow(j, sink))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub targets: Vec<usize>,
    /// F_I(x): number of target links of each non-target neighbour x
    pub shares: BTreeMap<usize, usize>,
}

impl TargetDistribution {
    pub fn new(net: &Network, targets: &[usize]) -> Result<Self> {
        let set: BTreeSet<usize> = targets.iter().copied().collect();
        if set.is_empty() || set.iter().any(|&x| x >= net.len()) {
            return Err(ModularError::BadTargets);
        }
        let mut shares = BTreeMap::new();
        for e in net.edges() {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                if set.contains(&a) && !set.contains(&b) {
                    *shares.entry(b).or_insert(0) += 1;
                }
            }
        }
        Ok(TargetDistribution {
            targets: set.into_iter().collect(),
            shares,
        })
    }
}

fn check_regular(k: usize, net: &Network) -> Result<()> {
    let adj = net.adjacency();
    for (x, a) in adj.iter().enumerate() {
        if a.len() != k {
            return Err(ModularError::NotRegular {
                k,
                node: net.id(x).to_string(),
                degree: a.len(),
            });
        }
    }
    Ok(())
}

/// H_min(k, I) = k|I| - S_E - S_N on a k-regular backbone.
pub fn h_min(k: usize, targets: &TargetDistribution, backbone: &Network) -> Result<usize> {
    check_regular(k, backbone)?;
    let set: BTreeSet<usize> = targets.targets.iter().copied().collect();
    let shared_edges = backbone
        .edges()
        .iter()
        .filter(|e| set.contains(&e.u) && set.contains(&e.v))
        .count()
        * 2;
    let shared_neighbours: usize = targets
        .shares
        .values()
        .map(|&f| (2 * f).saturating_sub(k))
        .sum();
    Ok(k * set.len() - shared_edges - shared_neighbours)
}

/// Fewest backbone edges whose removal isolates the targets from every node
/// outside their closed neighbourhood (unit-capacity max-flow). `None` when
/// that neighbourhood already covers the backbone.
pub fn h_min_oracle(targets: &TargetDistribution, backbone: &Network) -> Option<usize> {
    let n = backbone.len();
    let mut near = vec![false; n];
    for &t in &targets.targets {
        near[t] = true;
    }
    for &x in targets.shares.keys() {
        near[x] = true;
    }
    let far: Vec<usize> = (0..n).filter(|&x| !near[x]).collect();
    if far.is_empty() {
        return None;
    }
    let (s, t) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    for e in backbone.edges() {
        g.add(e.u, e.v, 1.0, 1.0);
    }
    for &x in &targets.targets {
        g.add(s, x, f64::INFINITY, 0.0);
    }
    for &x in &far {
        g.add(x, t, f64::INFINITY, 0.0);
    }
    Some(g.max_flow(s, t).round() as usize)
}

/// Isolation count for a weakly-regular neighbourhood, sum of (k - lambda_j - 1).
pub fn h_min_weakly_regular(k: usize, lambdas: &[usize]) -> usize {
    lambdas.iter().map(|l| k.saturating_sub(l + 1)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealModularSpec {
    pub k_b: usize,
    /// connectivity per community, in community order
    pub k_c: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealReport {
    /// backbone nodes whose intra-backbone degree differs from k_b
    pub irregular: Vec<String>,
    pub k_c_measured: Vec<usize>,
    pub k_c_matches: Vec<bool>,
    pub ok: bool,
}

/// Edge connectivity with unit capacities (parallel edges count separately).
pub fn edge_connectivity(net: &Network) -> usize {
    let n = net.len();
    if n < 2 {
        return 0;
    }
    (1..n)
        .map(|t| {
            let mut g = FlowGraph::new(n);
            for e in net.edges() {
                g.add(e.u, e.v, 1.0, 1.0);
            }
            g.max_flow(0, t).round() as usize
        })
        .min()
        .unwrap_or(0)
}

pub fn verify_ideal(m: &ModularNetwork, spec: &IdealModularSpec) -> IdealReport {
    let (bb, _) = m.backbone_network();
    let irregular: Vec<String> = bb
        .adjacency()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.len() != spec.k_b)
        .map(|(x, _)| bb.id(x).to_string())
        .collect();
    let k_c_measured: Vec<usize> = (0..m.communities.len())
        .map(|c| edge_connectivity(&m.community_network(c).0))
        .collect();
    let k_c_matches: Vec<bool> = k_c_measured
        .iter()
        .enumerate()
        .map(|(c, k)| spec.k_c.get(c) == Some(k))
        .collect();
    let ok = irregular.is_empty() && spec.k_c.len() == m.communities.len() && k_c_matches.iter().all(|b| *b);
    IdealReport {
        irregular,
        k_c_measured,
        k_c_matches,
        ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub c_cb: f64,
    /// (community, C_c^min) for the two end-user communities
    pub c_min_community: Vec<(String, f64)>,
    pub c_min_backbone: f64,
    pub h_min_star: usize,
    /// formula value of H*_min, reported beside the oracle value
    pub h_min_formula_star: usize,
    pub satisfied: bool,
}

/// H_min of one community's attachment set: the oracle where it is defined,
/// else the formula.
pub fn community_h_min(m: &ModularNetwork, k_b: usize, c: usize) -> Result<(usize, usize)> {
    let (bb, map) = m.backbone_network();
    let local: BTreeMap<usize, usize> = map.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let targets: Vec<usize> = m.attachment_backbone(c).iter().map(|x| local[x]).collect();
    let td = TargetDistribution::new(&bb, &targets)?;
    let formula = h_min(k_b, &td, &bb)?;
    Ok((h_min_oracle(&td, &bb).unwrap_or(formula), formula))
}

pub fn theorem1_thresholds(
    m: &ModularNetwork,
    spec: &IdealModularSpec,
    alpha: usize,
    beta: usize,
) -> Result<Theorem1Report> {
    let report = verify_ideal(m, spec);
    if !report.ok {
        return Err(ModularError::SpecMismatch(format!(
            "irregular backbone nodes {:?}, measured k_c {:?} vs declared {:?}",
            report.irregular, report.k_c_measured, spec.k_c
        )));
    }
    let c_cb = global_community_capacity(m, alpha, beta)?;
    let users = [m.user_community(alpha)?, m.user_community(beta)?];
    let mut h_star = usize::MAX;
    let mut h_formula = usize::MAX;
    for &c in &users {
        let (h, f) = community_h_min(m, spec.k_b, c)?;
        h_star = h_star.min(h);
        h_formula = h_formula.min(f);
    }
    let c_min_backbone = c_cb / h_star as f64;
    let caps = m.base.capacities()?;
    let mut satisfied = m.backbone_edges().iter().all(|&e| caps[e] >= c_min_backbone);
    let mut c_min_community = Vec::new();
    for &c in &users {
        let t = c_cb / spec.k_c[c] as f64;
        satisfied &= m.community_edges(c).iter().all(|&e| caps[e] >= t);
        c_min_community.push((m.community_names[c].clone(), t));
    }
    Ok(Theorem1Report {
        c_cb,
        c_min_community,
        c_min_backbone,
        h_min_star: h_star,
        h_min_formula_star: h_formula,
        satisfied,
    })
}

/// L x M torus of backbone nodes "b{i}_{j}" with unit capacities.
pub fn torus_backbone(l: usize, m: usize) -> Network {
    grid_backbone(l, m, true)
}

/// Open L x M grid (boundary nodes have degree < 4).
pub fn open_grid_backbone(l: usize, m: usize) -> Network {
    grid_backbone(l, m, false)
}

fn grid_backbone(l: usize, m: usize, wrap: bool) -> Network {
    let mut net = Network::new();
    for i in 0..l {
        for j in 0..m {
            net.add_node(&format!("b{i}_{j}"), None, true).unwrap();
        }
    }
    let idx = |i: usize, j: usize| i * m + j;
    for i in 0..l {
        for j in 0..m {
            if wrap || i + 1 < l {
                net.add_edge(idx(i, j), idx((i + 1) % l, j), 1.0).unwrap();
            }
            if wrap || j + 1 < m {
                net.add_edge(idx(i, j), idx(i, (j + 1) % m), 1.0).unwrap();
            }
        }
    }
    net
}

/// Torus backbone index of (i, j) on an L x M torus.
pub fn torus_index(m: usize, i: usize, j: usize) -> usize {
    i * m + j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealInstance {
    pub network: ModularNetwork,
    pub spec: IdealModularSpec,
    pub alpha: usize,
    pub beta: usize,
}

impl Serialize for ModularNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&self.base.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModularNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let net = Network::from_json(&v.to_string()).map_err(serde::de::Error::custom)?;
        ModularNetwork::from_network(net).map_err(serde::de::Error::custom)
    }
}

/// Cycle plus random chords on `n` nodes, as local edge pairs.
fn random_community(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..rng.random_range(0..=n) {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        edges.push((a, b));
    }
    edges
}

/// Random ideal modular network whose capacities satisfy both Theorem 1
/// thresholds: torus backbone 3..=5 x 3..=5, 2..=4 communities of 4..=8
/// nodes, intercommunity capacities U(0.1, 1), community edges
/// C_cb/k_c * U(1, 2) and backbone edges C_cb/H*_min * U(1, 2).
pub fn random_ideal(rng: &mut impl Rng) -> IdealInstance {
    loop {
        if let Some(inst) = try_random_ideal(rng) {
            return inst;
        }
    }
}

fn try_random_ideal(rng: &mut impl Rng) -> Option<IdealInstance> {
    let (l, w) = (rng.random_range(3..=5), rng.random_range(3..=5));
    let mut net = torus_backbone(l, w);
    let backbone: Vec<usize> = (0..net.len()).collect();
    let ncomm = rng.random_range(2..=4);
    let mut members = Vec::new();
    for c in 0..ncomm {
        let n = rng.random_range(4..=8);
        let base = net.len();
        let name = format!("c{c}");
        for i in 0..n {
            net.add_node(&format!("c{c}_{i}"), Some(&name), false).ok()?;
        }
        for (a, b) in random_community(rng, n) {
            net.add_edge(base + a, base + b, 1.0).ok()?;
        }
        members.push((base..base + n).collect::<Vec<_>>());
    }
    for nodes in &members {
        let links = rng.random_range(1..=nodes.len().min(4));
        let mut pick = nodes.clone();
        pick.shuffle(rng);
        for &x in &pick[..links] {
            let y = *backbone.choose(rng)?;
            net.add_edge(x, y, rng.random_range(0.1..1.0)).ok()?;
        }
    }
    let mut users: Vec<usize> = (0..ncomm).collect();
    users.shuffle(rng);
    let (ca, cb) = (users[0], users[1]);
    let alpha = *members[ca].choose(rng)?;
    let beta = *members[cb].choose(rng)?;
    let mut m = ModularNetwork::from_network(net).ok()?;
    let (ia, ib) = (m.attachment_backbone(ca), m.attachment_backbone(cb));
    if ia.iter().any(|x| ib.contains(x)) {
        return None;
    }
    let k_c: Vec<usize> = (0..ncomm)
        .map(|c| edge_connectivity(&m.community_network(c).0))
        .collect();
    let spec = IdealModularSpec { k_b: 4, k_c };
    let c_cb = global_community_capacity(&m, alpha, beta).ok()?;
    let h_star = community_h_min(&m, 4, ca).ok()?.0.min(community_h_min(&m, 4, cb).ok()?.0);
    for e in m.backbone_edges() {
        m.base.set_capacity(e, c_cb / h_star as f64 * rng.random_range(1.0..2.0)).ok()?;
    }
    for c in 0..ncomm {
        for e in m.community_edges(c) {
            m.base
                .set_capacity(e, c_cb / spec.k_c[c] as f64 * rng.random_range(1.0..2.0))
                .ok()?;
        }
    }
    Some(IdealInstance {
        network: m,
        spec,
        alpha,
        beta,
    })
}

/// Flooding capacity of the base network between the instance's end users.
pub fn instance_flooding(inst: &IdealInstance) -> Result<f64> {
    Ok(flooding_capacity(&inst.network.base, inst.alpha, inst.beta)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network_graph::{brute_force_min_cut, CutMode};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn targets(net: &Network, m: usize, cells: &[(usize, usize)]) -> TargetDistribution {
        let t: Vec<usize> = cells.iter().map(|&(i, j)| torus_index(m, i, j)).collect();
        TargetDistribution::new(net, &t).unwrap()
    }

    #[test]
    fn manhattan_layouts() {
        let bb = torus_backbone(8, 8);
        let sep = targets(&bb, 8, &[(1, 1), (1, 5), (5, 1), (5, 5)]);
        assert_eq!(h_min(4, &sep, &bb).unwrap(), 16);
        assert_eq!(h_min_oracle(&sep, &bb), Some(16));
        let plus = targets(&bb, 8, &[(3, 4), (4, 3), (3, 2), (2, 3)]);
        assert_eq!(h_min(4, &plus, &bb).unwrap(), 12);
        assert_eq!(h_min_oracle(&plus, &bb), Some(12));
        let single = targets(&bb, 8, &[(4, 4)]);
        assert_eq!(h_min(4, &single, &bb).unwrap(), 4);
        assert_eq!(h_min_oracle(&single, &bb), Some(4));
    }

    #[test]
    fn shared_edges_counted_twice() {
        let bb = torus_backbone(8, 8);
        let pair = targets(&bb, 8, &[(2, 2), (2, 3)]);
        assert_eq!(h_min(4, &pair, &bb).unwrap(), 6);
        assert_eq!(h_min_oracle(&pair, &bb), Some(6));
        let line = targets(&bb, 8, &[(2, 2), (2, 3), (2, 4)]);
        assert_eq!(h_min(4, &line, &bb).unwrap(), 8);
        assert_eq!(h_min_oracle(&line, &bb), Some(8));
    }

    #[test]
    fn h_min_requires_regularity() {
        let grid = open_grid_backbone(4, 4);
        let t = TargetDistribution::new(&grid, &[5]).unwrap();
        assert!(matches!(h_min(4, &t, &grid), Err(ModularError::NotRegular { .. })));
        assert!(matches!(TargetDistribution::new(&grid, &[]), Err(ModularError::BadTargets)));
    }

    #[test]
    fn weakly_regular_example() {
        assert_eq!(h_min_weakly_regular(4, &[1, 1, 1, 1]), 8);
    }

    #[test]
    fn h_min_bounds_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let l = rng.random_range(5..=10);
            let bb = torus_backbone(l, l);
            let n = rng.random_range(1..=6);
            let mut all: Vec<usize> = (0..bb.len()).collect();
            all.shuffle(&mut rng);
            let t = TargetDistribution::new(&bb, &all[..n]).unwrap();
            let h = h_min(4, &t, &bb).unwrap();
            assert!(h >= 4 && h <= 4 * n, "h = {h}, n = {n}");
        }
    }

    fn toy(caps_a: &[f64], caps_b: &[f64]) -> (ModularNetwork, usize, usize) {
        let mut net = Network::new();
        let hub = net.add_node("hub", None, true).unwrap();
        let mut users = Vec::new();
        for (name, caps) in [("A", caps_a), ("B", caps_b)] {
            let u = net.add_node(&format!("{name}0"), Some(name), false).unwrap();
            users.push(u);
            for (i, c) in caps.iter().enumerate() {
                let x = net.add_node(&format!("{name}{}", i + 1), Some(name), false).unwrap();
                net.add_edge(u, x, 10.0).unwrap();
                net.add_edge(x, hub, *c).unwrap();
            }
        }
        (ModularNetwork::from_network(net).unwrap(), users[0], users[1])
    }

    #[test]
    fn global_capacity_examples() {
        let (m, a, b) = toy(&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5]);
        assert_relative_eq!(global_community_capacity(&m, a, b).unwrap(), 1.5);
        let (m, a, b) = toy(&[0.5, 1.0], &[0.25, 0.75]);
        assert_relative_eq!(global_community_capacity(&m, a, b).unwrap(), 1.0);
        assert!(matches!(
            global_community_capacity(&m, a, a + 1),
            Err(ModularError::SameCommunity(_))
        ));
        let q = quotient_graph(&m).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q.capacities().unwrap(), vec![1.5, 1.0]);
    }

    #[test]
    fn structure_errors() {
        let mut net = Network::new();
        net.add_node("a", Some("x"), false).unwrap();
        net.add_node("b", Some("y"), false).unwrap();
        net.add_edge(0, 1, 1.0).unwrap();
        assert!(matches!(
            ModularNetwork::from_network(net),
            Err(ModularError::CommunityEdge { .. })
        ));
        let mut net = Network::new();
        net.add_node("a", None, false).unwrap();
        assert!(matches!(ModularNetwork::from_network(net), Err(ModularError::Unassigned(_))));
    }

    #[test]
    fn local_capacity_examples() {
        // user of degree 3 in K4 with a far exit: isolation costs 3 c
        let mut net = Network::new();
        let hub = net.add_node("hub", None, true).unwrap();
        for i in 0..4 {
            net.add_node(&format!("k{i}"), Some("K"), false).unwrap();
        }
        for a in 1..5 {
            for b in a + 1..5 {
                net.add_edge(a, b, 0.3).unwrap();
            }
        }
        net.add_edge(4, hub, 5.0).unwrap();
        let m = ModularNetwork::from_network(net.clone()).unwrap();
        assert_relative_eq!(local_community_capacity(&m, 1).unwrap(), 0.9, max_relative = 1e-12);
        // a direct backbone link is in every local cut
        net.add_edge(1, hub, 0.2).unwrap();
        let m = ModularNetwork::from_network(net).unwrap();
        assert_relative_eq!(local_community_capacity(&m, 1).unwrap(), 1.1, max_relative = 1e-12);
    }

    #[test]
    fn verify_examples() {
        let mut net = torus_backbone(3, 3);
        let base = net.len();
        for i in 0..5 {
            net.add_node(&format!("k{i}"), Some("K5"), false).unwrap();
        }
        for a in 0..5 {
            for b in a + 1..5 {
                net.add_edge(base + a, base + b, 1.0).unwrap();
            }
        }
        let base2 = net.len();
        for i in 0..7 {
            net.add_node(&format!("s{i}"), Some("S7"), false).unwrap();
        }
        for i in 1..7 {
            net.add_edge(base2, base2 + i, 1.0).unwrap();
        }
        net.add_edge(base, 0, 1.0).unwrap();
        net.add_edge(base2, 4, 1.0).unwrap();
        let m = ModularNetwork::from_network(net).unwrap();
        let r = verify_ideal(&m, &IdealModularSpec { k_b: 4, k_c: vec![4, 1] });
        assert!(r.ok, "{r:?}");
        let r = verify_ideal(&m, &IdealModularSpec { k_b: 3, k_c: vec![4, 2] });
        assert!(!r.ok);
        assert_eq!(r.irregular.len(), 9);
        assert_eq!(r.k_c_matches, vec![true, false]);
    }

    #[test]
    fn threshold_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_ideal(&mut rng);
        let r = theorem1_thresholds(&inst.network, &inst.spec, inst.alpha, inst.beta).unwrap();
        assert!(r.satisfied);
        for (name, t) in &r.c_min_community {
            let c = inst.network.community_names.iter().position(|n| n == name).unwrap();
            assert_eq!(*t, r.c_cb / inst.spec.k_c[c] as f64);
        }
        assert_eq!(r.c_min_backbone, r.c_cb / r.h_min_star as f64);
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_ideal(&mut rng);
        let bad = IdealModularSpec { k_b: 3, ..inst.spec.clone() };
        assert!(matches!(
            theorem1_thresholds(&inst.network, &bad, inst.alpha, inst.beta),
            Err(ModularError::SpecMismatch(_))
        ));
    }

    #[test]
    fn serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_ideal(&mut rng);
        let text = serde_json::to_string(&inst).unwrap();
        let back: IdealInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back.network.communities, inst.network.communities);
        assert_eq!(back.network.base.capacities().unwrap(), inst.network.base.capacities().unwrap());
    }

    /// Exhaustive minimum over cuts that only sever intercommunity edges.
    fn intercommunity_only_min(m: &ModularNetwork, alpha: usize, beta: usize) -> f64 {
        let n = m.base.len();
        let caps = m.base.capacities().unwrap();
        let free: Vec<usize> = (0..n).filter(|&x| x != alpha && x != beta).collect();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << free.len()) {
            let mut side = vec![false; n];
            side[alpha] = true;
            for (b, &x) in free.iter().enumerate() {
                side[x] = mask >> b & 1 == 1;
            }
            let mut sum = 0.0;
            let mut pure = true;
            for (i, e) in m.base.edges().iter().enumerate() {
                if side[e.u] != side[e.v] {
                    pure &= m.community_of(e.u).is_none() != m.community_of(e.v).is_none();
                    sum += caps[i];
                }
            }
            if pure {
                best = best.min(sum);
            }
        }
        best
    }

    #[test]
    fn global_capacity_matches_restricted_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            // two communities of 3-5 nodes on a 2-node backbone
            let mut net = Network::new();
            net.add_node("b0", None, true).unwrap();
            net.add_node("b1", None, true).unwrap();
            net.add_edge(0, 1, rng.random_range(0.0..2.0)).unwrap();
            let mut users = Vec::new();
            for c in ["A", "B"] {
                let n = rng.random_range(3..=5);
                let base = net.len();
                for i in 0..n {
                    net.add_node(&format!("{c}{i}"), Some(c), false).unwrap();
                }
                for (a, b) in random_community(&mut rng, n) {
                    net.add_edge(base + a, base + b, rng.random_range(0.0..2.0)).unwrap();
                }
                for i in 0..rng.random_range(1..=3) {
                    net.add_edge(base + i, rng.random_range(0..2), rng.random_range(0.1..1.0)).unwrap();
                }
                users.push(base + n - 1);
            }
            let m = ModularNetwork::from_network(net).unwrap();
            let g = global_community_capacity(&m, users[0], users[1]).unwrap();
            let e = intercommunity_only_min(&m, users[0], users[1]);
            assert!((g - e).abs() <= 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn local_capacity_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..30 {
            let mut net = Network::new();
            net.add_node("hub", None, true).unwrap();
            let n = rng.random_range(3..=7);
            for i in 0..n {
                net.add_node(&format!("c{i}"), Some("C"), false).unwrap();
            }
            for (a, b) in random_community(&mut rng, n) {
                net.add_edge(1 + a, 1 + b, rng.random_range(0.0..2.0)).unwrap();
            }
            for i in 0..rng.random_range(1..=3) {
                net.add_edge(1 + i, 0, rng.random_range(0.1..1.0)).unwrap();
            }
            let m = ModularNetwork::from_network(net).unwrap();
            let j = 1;
            let caps = m.base.capacities().unwrap();
            let exits: BTreeSet<usize> = m.attachment_community(0).into_iter().filter(|&x| x != j).collect();
            let others: Vec<usize> = (1..=n).filter(|&x| x != j && !exits.contains(&x)).collect();
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << others.len()) {
                let mut side = vec![false; n + 1];
                side[j] = true;
                for (b, &x) in others.iter().enumerate() {
                    side[x] = mask >> b & 1 == 1;
                }
                let mut sum = 0.0;
                for (i, e) in m.base.edges().iter().enumerate() {
                    let inter = e.u == 0 || e.v == 0;
                    let crosses = if inter { e.u == j || e.v == j } else { side[e.u] != side[e.v] };
                    if crosses {
                        sum += caps[i];
                    }
                }
                best = best.min(sum);
            }
            let v = local_community_capacity(&m, j).unwrap();
            assert!((v - best).abs() <= 1e-12, "{v} vs {best}");
        }
    }

    #[test]
    fn oracle_matches_enumeration_small() {
        // brute-force isolation cuts on a 4x4 torus
        let bb = torus_backbone(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let t = TargetDistribution::new(&bb, &[rng.random_range(0..16)]).unwrap();
            let mut near: BTreeSet<usize> = t.targets.iter().copied().collect();
            near.extend(t.shares.keys());
            let far: Vec<usize> = (0..16).filter(|x| !near.contains(x)).collect();
            let mut net = bb.clone();
            let s = net.add_node("s", None, true).unwrap();
            let k = net.add_node("t", None, true).unwrap();
            for &x in &t.targets {
                net.add_edge(s, x, 100.0).unwrap();
            }
            for &x in &far {
                net.add_edge(x, k, 100.0).unwrap();
            }
            let cut = brute_force_min_cut(&net, s, k, CutMode::Multi).unwrap();
            assert_eq!(Some(cut.multi_edge_capacity.round() as usize), h_min_oracle(&t, &bb));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn quotient_upper_bound(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_ideal(&mut rng);
            let m = &inst.network;
            let q = quotient_graph(m).unwrap();
            let (ca, cb) = (m.community_of(inst.alpha).unwrap(), m.community_of(inst.beta).unwrap());
            let qa = q.node_index(&m.community_names[ca]).unwrap();
            let qb = q.node_index(&m.community_names[cb]).unwrap();
            let qv = flooding_capacity(&q, qa, qb).unwrap().value;
            prop_assert!(instance_flooding(&inst).unwrap() <= qv + 1e-9);
            let g = global_community_capacity(m, inst.alpha, inst.beta).unwrap();
            prop_assert!((qv - g).abs() <= 1e-12);
        }

        #[test]
        fn lemma1_sandwich(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_ideal(&mut rng);
            let m = &inst.network;
            let c = m.community_of(inst.alpha).unwrap();
            let nodes = &m.communities[c];
            let (i, j) = (nodes[0], nodes[nodes.len() - 1]);
            let full = flooding_capacity(&m.base, i, j).unwrap().value;
            let (inner, map) = m.community_network(c);
            let li = map.iter().position(|&x| x == i).unwrap();
            let lj = map.iter().position(|&x| x == j).unwrap();
            let within = flooding_capacity(&inner, li, lj).unwrap().value;
            // cheapest non-community completion of the community min cut
            let side = flooding_capacity(&inner, li, lj).unwrap().min_cut.a;
            let n = m.base.len();
            let (s, t) = (n, n + 1);
            let mut g = FlowGraph::new(n + 2);
            let caps = m.base.capacities().unwrap();
            let internal: BTreeSet<usize> = m.community_edges(c).into_iter().collect();
            for (k, e) in m.base.edges().iter().enumerate() {
                if !internal.contains(&k) {
                    g.add(e.u, e.v, caps[k], caps[k]);
                }
            }
            for (l, &x) in map.iter().enumerate() {
                if side.contains(&l) {
                    g.add(s, x, f64::INFINITY, 0.0);
                } else {
                    g.add(x, t, f64::INFINITY, 0.0);
                }
            }
            let rest = g.max_flow(s, t);
            prop_assert!(within <= full + 1e-9);
            prop_assert!(full <= within + rest + 1e-9);
        }
    }
}
