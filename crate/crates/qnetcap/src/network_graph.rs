//! Undirected capacitated networks: widest-path (single-path) and
//! max-flow/min-cut (flooding) end-to-end capacities.

use crate::capacity_core::{fiber_transmissivity, plob, BoundKind, CapacityBound};
use crate::freespace_optics::{build_channel, AtmosphereModel, BeamSetup, Condition, OpticsError, Trajectory};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use thiserror::Error;

/// Residual capacities at or below this are treated as saturated.
pub const FLOW_EPS: f64 = 1e-12;
pub const BRUTE_FORCE_MAX_NODES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("end users must be distinct nodes")]
    SameEndpoints,
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("edge {edge}: capacity {value} must be finite and >= 0")]
    InvalidCapacity { edge: usize, value: f64 },
    #[error("edge {0} has neither a capacity nor a channel")]
    MissingCapacity(usize),
    #[error("edge {edge}: {source}")]
    Channel { edge: usize, source: OpticsError },
    #[error("brute-force enumeration limited to {max} nodes, network has {n}")]
    TooLarge { n: usize, max: usize },
    #[error("malformed network JSON: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
enum RawId {
    Num(i64),
    Str(String),
}

impl From<RawId> for String {
    fn from(id: RawId) -> String {
        match id {
            RawId::Num(n) => n.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetupRef {
    Preset(String),
    Custom(BeamSetup),
}

impl SetupRef {
    pub fn resolve(&self) -> std::result::Result<BeamSetup, OpticsError> {
        match self {
            SetupRef::Custom(s) => Ok(s.clone()),
            SetupRef::Preset(name) => BeamSetup::preset(name).ok_or_else(|| {
                OpticsError::Capacity(crate::capacity_core::CapacityError::Domain {
                    name: "setup",
                    value: f64::NAN,
                    expected: "a known preset (table1-setup1, table1-setup2, table2)",
                })
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Fiber {
        length_km: f64,
        #[serde(default = "default_loss_rate")]
        loss_rate: f64,
    },
    FreeSpace {
        setup: SetupRef,
        #[serde(default)]
        atmosphere: Option<AtmosphereModel>,
        trajectory: Trajectory,
        #[serde(default = "default_condition")]
        condition: Condition,
    },
}

fn default_loss_rate() -> f64 {
    0.02
}

fn default_condition() -> Condition {
    Condition::ClearNight
}

impl ChannelSpec {
    pub fn capacity(&self) -> std::result::Result<CapacityBound, OpticsError> {
        match self {
            ChannelSpec::Fiber { length_km, loss_rate } => {
                Ok(plob(fiber_transmissivity(*length_km, *loss_rate)?)?)
            }
            ChannelSpec::FreeSpace { setup, atmosphere, trajectory, condition } => {
                let atmo = atmosphere.clone().unwrap_or_default();
                if let Trajectory::Intersatellite { z, .. } = trajectory {
                    return crate::freespace_optics::intersatellite_capacity(&setup.resolve()?, *z);
                }
                build_channel(&setup.resolve()?, &atmo, trajectory, *condition)?.capacity()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub community: Option<String>,
    pub backbone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub capacity: Option<f64>,
    pub kind: BoundKind,
    pub channel: Option<ChannelSpec>,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: RawId,
    #[serde(default)]
    community: Option<RawId>,
    #[serde(default)]
    backbone: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    u: RawId,
    v: RawId,
    #[serde(default)]
    capacity: Option<f64>,
    #[serde(default)]
    channel: Option<ChannelSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    nodes: Vec<RawNode>,
    edges: Vec<RawEdge>,
}

#[derive(Serialize)]
struct OutNode<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    community: Option<&'a str>,
    backbone: bool,
}

#[derive(Serialize)]
struct OutEdge<'a> {
    u: &'a str,
    v: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    channel: Option<&'a ChannelSpec>,
}

#[derive(Serialize)]
struct OutNetwork<'a> {
    nodes: Vec<OutNode<'a>>,
    edges: Vec<OutEdge<'a>>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    /// Network on nodes "0".."n-1" with the given capacitated edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut net = Network::new();
        for i in 0..n {
            net.add_node(&i.to_string(), None, false)?;
        }
        for &(u, v, c) in edges {
            net.add_edge(u, v, c)?;
        }
        Ok(net)
    }

    pub fn add_node(&mut self, id: &str, community: Option<&str>, backbone: bool) -> Result<usize> {
        if self.index.contains_key(id) {
            return Err(NetworkError::DuplicateNode(id.to_string()));
        }
        let i = self.nodes.len();
        self.nodes.push(Node {
            id: id.to_string(),
            community: community.map(str::to_string),
            backbone,
        });
        self.index.insert(id.to_string(), i);
        Ok(i)
    }

    fn push_edge(&mut self, u: usize, v: usize, capacity: Option<f64>, channel: Option<ChannelSpec>) -> Result<usize> {
        let n = self.nodes.len();
        for x in [u, v] {
            if x >= n {
                return Err(NetworkError::UnknownNode(x.to_string()));
            }
        }
        if u == v {
            return Err(NetworkError::SelfLoop(self.nodes[u].id.clone()));
        }
        let e = self.edges.len();
        if let Some(c) = capacity {
            if !(c.is_finite() && c >= 0.0) {
                return Err(NetworkError::InvalidCapacity { edge: e, value: c });
            }
        }
        if capacity.is_none() && channel.is_none() {
            return Err(NetworkError::MissingCapacity(e));
        }
        self.edges.push(Edge {
            u,
            v,
            capacity,
            kind: BoundKind::ExactAchievable,
            channel,
        });
        Ok(e)
    }

    pub fn add_edge(&mut self, u: usize, v: usize, capacity: f64) -> Result<usize> {
        self.push_edge(u, v, Some(capacity), None)
    }

    pub fn add_channel_edge(&mut self, u: usize, v: usize, channel: ChannelSpec) -> Result<usize> {
        self.push_edge(u, v, None, Some(channel))
    }

    pub fn set_capacity(&mut self, edge: usize, capacity: f64) -> Result<()> {
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(NetworkError::InvalidCapacity { edge, value: capacity });
        }
        self.edges[edge].capacity = Some(capacity);
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownNode(id.to_string()))
    }

    pub fn id(&self, i: usize) -> &str {
        &self.nodes[i].id
    }

    /// Capacity of every edge, failing on edges whose channel was never evaluated.
    pub fn capacities(&self) -> Result<Vec<f64>> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| e.capacity.ok_or(NetworkError::MissingCapacity(i)))
            .collect()
    }

    /// Incident edge ids per node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push(i);
            adj[e.v].push(i);
        }
        adj
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| NetworkError::Json(e.to_string()))?;
        let mut net = Network::new();
        for n in raw.nodes {
            let community: Option<String> = n.community.map(Into::into);
            net.add_node(&String::from(n.id), community.as_deref(), n.backbone)?;
        }
        for e in raw.edges {
            let u = net.node_index(&String::from(e.u))?;
            let v = net.node_index(&String::from(e.v))?;
            net.push_edge(u, v, e.capacity, e.channel)?;
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let out = OutNetwork {
            nodes: self
                .nodes
                .iter()
                .map(|n| OutNode {
                    id: &n.id,
                    community: n.community.as_deref(),
                    backbone: n.backbone,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| OutEdge {
                    u: &self.nodes[e.u].id,
                    v: &self.nodes[e.v].id,
                    capacity: e.capacity,
                    channel: e.channel.as_ref(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&out).expect("network serializes")
    }

    fn endpoints(&self, alpha: usize, beta: usize) -> Result<()> {
        for x in [alpha, beta] {
            if x >= self.nodes.len() {
                return Err(NetworkError::UnknownNode(x.to_string()));
            }
        }
        if alpha == beta {
            return Err(NetworkError::SameEndpoints);
        }
        Ok(())
    }
}

/// Evaluates every channel-carrying edge and stamps its capacity and bound kind.
pub fn capacities_from_channels(net: &Network) -> Result<Network> {
    let mut out = net.clone();
    for (i, e) in out.edges.iter_mut().enumerate() {
        if let Some(ch) = &e.channel {
            let b = ch
                .capacity()
                .map_err(|source| NetworkError::Channel { edge: i, source })?;
            let value = b
                .finite()
                .map_err(|c| NetworkError::Channel { edge: i, source: c.into() })?;
            e.capacity = Some(value);
            e.kind = b.kind;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    /// source side, sorted node indices
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// edge indices crossing the partition
    pub cut_set: Vec<usize>,
    pub multi_edge_capacity: f64,
    pub single_edge_capacity: f64,
}

impl Cut {
    pub fn from_side(net: &Network, in_a: &[bool]) -> Result<Cut> {
        let caps = net.capacities()?;
        let mut cut_set = Vec::new();
        let (mut sum, mut max) = (0.0, 0.0f64);
        for (i, e) in net.edges.iter().enumerate() {
            if in_a[e.u] != in_a[e.v] {
                cut_set.push(i);
                sum += caps[i];
                max = max.max(caps[i]);
            }
        }
        let a = (0..net.len()).filter(|&x| in_a[x]).collect();
        let b = (0..net.len()).filter(|&x| !in_a[x]).collect();
        Ok(Cut {
            a,
            b,
            cut_set,
            multi_edge_capacity: sum,
            single_edge_capacity: max,
        })
    }

    /// Partition invariants against the network and the end users.
    pub fn is_valid(&self, net: &Network, alpha: usize, beta: usize) -> bool {
        let mut side = vec![None; net.len()];
        for &x in &self.a {
            side[x] = Some(true);
        }
        for &x in &self.b {
            if side[x].is_some() {
                return false;
            }
            side[x] = Some(false);
        }
        if side.iter().any(Option::is_none) || side[alpha] != Some(true) || side[beta] != Some(false) {
            return false;
        }
        let expect: Vec<usize> = (0..net.edges.len())
            .filter(|&i| side[net.edges[i].u] != side[net.edges[i].v])
            .collect();
        expect == self.cut_set
    }

    fn kind(&self, net: &Network) -> BoundKind {
        self.cut_set
            .iter()
            .fold(BoundKind::ExactAchievable, |k, &i| k.combine(net.edges[i].kind))
    }
}

/// Dinic max-flow on an undirected graph with real capacities.
#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowGraph {
    pub(crate) fn new(n: usize) -> Self {
        FlowGraph {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    /// Adds an arc pair; `back` is the reverse capacity (equal for undirected edges).
    pub(crate) fn add(&mut self, u: usize, v: usize, c: f64, back: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(back);
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut level = vec![-1; self.head.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for &a in &self.head[x] {
                let y = self.to[a];
                if level[y] < 0 && self.cap[a] > FLOW_EPS {
                    level[y] = level[x] + 1;
                    q.push_back(y);
                }
            }
        }
        level
    }

    fn push(&mut self, x: usize, t: usize, f: f64, level: &[i64], it: &mut [usize]) -> f64 {
        if x == t {
            return f;
        }
        while it[x] < self.head[x].len() {
            let a = self.head[x][it[x]];
            let y = self.to[a];
            if self.cap[a] > FLOW_EPS && level[y] == level[x] + 1 {
                let d = self.push(y, t, f.min(self.cap[a]), level, it);
                if d > 0.0 {
                    self.cap[a] -= d;
                    self.cap[a ^ 1] += d;
                    return d;
                }
            }
            it[x] += 1;
        }
        0.0
    }

    pub(crate) fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] < 0 {
                return total;
            }
            let mut it = vec![0; self.head.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut it);
                if f <= FLOW_EPS {
                    break;
                }
                total += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph.
    pub(crate) fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).iter().map(|&l| l >= 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodingResult {
    pub value: f64,
    pub kind: BoundKind,
    pub min_cut: Cut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePathResult {
    pub value: f64,
    pub kind: BoundKind,
    /// node indices from alpha to beta; empty if disconnected
    pub route: Vec<usize>,
}

/// Multi-path (flooding) capacity by max-flow, witnessed by the residual-reachable min cut.
pub fn flooding_capacity(net: &Network, alpha: usize, beta: usize) -> Result<FloodingResult> {
    net.endpoints(alpha, beta)?;
    let caps = net.capacities()?;
    let mut g = FlowGraph::new(net.len());
    for (e, c) in net.edges.iter().zip(&caps) {
        g.add(e.u, e.v, *c, *c);
    }
    let flow = g.max_flow(alpha, beta);
    let side = g.source_side(alpha);
    let min_cut = Cut::from_side(net, &side)?;
    let kind = min_cut.kind(net);
    // report the cut sum; the flow matches it to within accumulated rounding
    debug_assert!((flow - min_cut.multi_edge_capacity).abs() <= 1e-9 * flow.max(1.0));
    Ok(FloodingResult {
        value: min_cut.multi_edge_capacity,
        kind,
        min_cut,
    })
}

/// Max-flow value alone, for duality checks.
pub fn max_flow_value(net: &Network, alpha: usize, beta: usize) -> Result<f64> {
    net.endpoints(alpha, beta)?;
    let caps = net.capacities()?;
    let mut g = FlowGraph::new(net.len());
    for (e, c) in net.edges.iter().zip(&caps) {
        g.add(e.u, e.v, *c, *c);
    }
    Ok(g.max_flow(alpha, beta))
}

#[derive(PartialEq)]
struct Widest(f64, usize);

impl Eq for Widest {}

impl PartialOrd for Widest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Widest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Single-path capacity as the widest (max-bottleneck) route.
pub fn single_path_capacity(net: &Network, alpha: usize, beta: usize) -> Result<SinglePathResult> {
    net.endpoints(alpha, beta)?;
    let caps = net.capacities()?;
    let adj = net.adjacency();
    let n = net.len();
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    best[alpha] = f64::INFINITY;
    let mut heap = BinaryHeap::from([Widest(f64::INFINITY, alpha)]);
    while let Some(Widest(w, x)) = heap.pop() {
        if done[x] {
            continue;
        }
        done[x] = true;
        if x == beta {
            break;
        }
        for &e in &adj[x] {
            let y = net.edges[e].other(x);
            let cand = w.min(caps[e]);
            if !done[y] && cand > best[y] {
                best[y] = cand;
                via[y] = Some(e);
                heap.push(Widest(cand, y));
            }
        }
    }
    if via[beta].is_none() {
        return Ok(SinglePathResult {
            value: 0.0,
            kind: BoundKind::ExactAchievable,
            route: Vec::new(),
        });
    }
    let mut route = vec![beta];
    let mut kind = BoundKind::ExactAchievable;
    let mut x = beta;
    while let Some(e) = via[x] {
        kind = kind.combine(net.edges[e].kind);
        x = net.edges[e].other(x);
        route.push(x);
    }
    route.reverse();
    Ok(SinglePathResult {
        value: best[beta],
        kind,
        route,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMode {
    Single,
    Multi,
}

/// Exhaustive minimum over all bipartitions separating alpha from beta.
pub fn brute_force_min_cut(net: &Network, alpha: usize, beta: usize, mode: CutMode) -> Result<Cut> {
    net.endpoints(alpha, beta)?;
    let n = net.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(NetworkError::TooLarge { n, max: BRUTE_FORCE_MAX_NODES });
    }
    let caps = net.capacities()?;
    let free: Vec<usize> = (0..n).filter(|&x| x != alpha && x != beta).collect();
    let mut in_a = vec![false; n];
    let mut best: Option<(f64, u32)> = None;
    for mask in 0u32..(1u32 << free.len()) {
        for (bit, &x) in free.iter().enumerate() {
            in_a[x] = mask >> bit & 1 == 1;
        }
        in_a[alpha] = true;
        in_a[beta] = false;
        let mut v = 0.0f64;
        for (e, c) in net.edges.iter().zip(&caps) {
            if in_a[e.u] != in_a[e.v] {
                v = match mode {
                    CutMode::Multi => v + c,
                    CutMode::Single => v.max(*c),
                };
            }
        }
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, mask));
        }
    }
    let (_, mask) = best.expect("at least one bipartition");
    for (bit, &x) in free.iter().enumerate() {
        in_a[x] = mask >> bit & 1 == 1;
    }
    in_a[alpha] = true;
    in_a[beta] = false;
    Cut::from_side(net, &in_a)
}
