//! The LOCAL model engine: identifier assignment, synchronous message rounds
//! with unbounded messages, round accounting, overlay (virtual graph)
//! emulation with round dilation, and a locality auditor.
//!
//! Vertices are state machines that see only their own context (identifier,
//! degree, public parameters carried by the algorithm value, a private random
//! stream) and their inbox. They have no access to the graph: the barrier
//! between rounds is structural.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

/// Multiply-mix hasher for integer identifier keys. Simulation hot paths
/// (message routing, neighbor tables) hash billions of small keys; the
/// default SipHash dominates the profile there.
#[derive(Default, Clone)]
pub struct IdHasher(u64);

impl std::hash::Hasher for IdHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
        }
    }
    fn write_u64(&mut self, x: u64) {
        let mut h = (self.0 ^ x).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        h ^= h >> 32;
        self.0 = h;
    }
    fn write_usize(&mut self, x: usize) {
        self.write_u64(x as u64);
    }
    fn write_u32(&mut self, x: u32) {
        self.write_u64(u64::from(x));
    }
}

/// Hash map keyed by small integer identifiers.
pub type IdMap<K, V> = HashMap<K, V, std::hash::BuildHasherDefault<IdHasher>>;
/// Hash set of small integer identifiers.
pub type IdSet<K> = std::collections::HashSet<K, std::hash::BuildHasherDefault<IdHasher>>;

use rand::{seq::SliceRandom, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;

// ---------------------------------------------------------------------------
// Identifier assignment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdScheme {
    /// A seeded shuffle of 1..=n.
    Permutation,
    /// Distinct draws from [1, n^3].
    RandomRange,
    /// BFS order from vertex 0: a stressor for greedy symmetry breaking.
    AdversarialBfs,
}

#[derive(Debug, Clone)]
pub struct IdAssignment {
    ids: Vec<u64>,
    pub scheme: IdScheme,
    pub seed: u64,
}

impl IdAssignment {
    pub fn id(&self, v: usize) -> u64 {
        self.ids[v]
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Exclusive upper bound on identifier values (n^3 + 1 covers all schemes).
    pub fn id_range(&self) -> u64 {
        let n = self.ids.len() as u64;
        n * n * n + 1
    }

    pub fn from_ids(ids: Vec<u64>, scheme: IdScheme, seed: u64) -> IdAssignment {
        let mut seen = std::collections::HashSet::new();
        for &i in &ids {
            assert!(i >= 1, "identifiers start at 1");
            assert!(seen.insert(i), "identifiers must be injective");
        }
        IdAssignment { ids, scheme, seed }
    }
}

pub fn assign_ids(g: &Graph, scheme: IdScheme, seed: u64) -> IdAssignment {
    let n = g.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5_5a5a_dead_beef);
    let ids = match scheme {
        IdScheme::Permutation => {
            let mut v: Vec<u64> = (1..=n as u64).collect();
            v.shuffle(&mut rng);
            v
        }
        IdScheme::RandomRange => {
            use rand::Rng;
            let hi = (n as u64).pow(3).max(n as u64);
            let mut seen = std::collections::HashSet::new();
            let mut v = Vec::with_capacity(n);
            while v.len() < n {
                let x = rng.gen_range(1..=hi);
                if seen.insert(x) {
                    v.push(x);
                }
            }
            v
        }
        IdScheme::AdversarialBfs => {
            let mut order = vec![u64::MAX; n];
            let mut next = 1u64;
            for start in 0..n {
                if order[start] != u64::MAX {
                    continue;
                }
                order[start] = next;
                next += 1;
                let mut queue = VecDeque::from([start]);
                while let Some(u) = queue.pop_front() {
                    for &w in g.neighbors(u) {
                        if order[w] == u64::MAX {
                            order[w] = next;
                            next += 1;
                            queue.push_back(w);
                        }
                    }
                }
            }
            order
        }
    };
    IdAssignment::from_ids(ids, scheme, seed)
}

// ---------------------------------------------------------------------------
// Algorithm contract
// ---------------------------------------------------------------------------

/// What a vertex knows a priori: its identifier, its degree, and a private
/// random stream seed (derived from the run seed and the identifier).
#[derive(Debug, Clone, Copy)]
pub struct NodeCtx {
    pub id: u64,
    pub degree: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Outbox<M> {
    Silent,
    /// Same message on every port.
    Broadcast(M),
    /// (port, message) pairs; ports index the adjacency list.
    PerPort(Vec<(usize, M)>),
}

/// When the engine must step this vertex again. Any incoming message always
/// wakes a vertex regardless of its schedule; `At` adds a timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wake {
    OnMessage,
    At(u64),
}

#[derive(Debug, Clone)]
pub enum Action<M, O> {
    Continue { outbox: Outbox<M>, wake: Wake },
    Halt(O),
}

impl<M, O> Action<M, O> {
    pub fn idle() -> Self {
        Action::Continue { outbox: Outbox::Silent, wake: Wake::OnMessage }
    }

    pub fn at(round: u64) -> Self {
        Action::Continue { outbox: Outbox::Silent, wake: Wake::At(round) }
    }

    pub fn send(msg: M, wake: Wake) -> Self {
        Action::Continue { outbox: Outbox::Broadcast(msg), wake }
    }
}

/// A synchronous LOCAL algorithm. Round 0 is the initial step (empty inbox);
/// messages sent in round t arrive in round t+1. A vertex's behaviour is a
/// function of its context, per-vertex input, and inbox history only.
pub trait LocalAlgorithm {
    /// Per-vertex input handed to round 0 (output of an earlier phase,
    /// an input coloring, overlay routing tables, ...). Use () when ids and
    /// public parameters are all a vertex starts with.
    type Input: Clone;
    type State;
    type Msg: Clone;
    type Output: Clone;

    fn init(&self, ctx: &NodeCtx, input: &Self::Input) -> Self::State;

    /// Called at round 0 (empty inbox) and afterwards whenever the vertex has
    /// mail or a timer fires. `inbox` holds (port, message) pairs.
    fn step(
        &self,
        ctx: &NodeCtx,
        state: &mut Self::State,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> Action<Self::Msg, Self::Output>;

    /// Size accounting for the trace; override when messages own heap data.
    fn message_bytes(_msg: &Self::Msg) -> usize {
        std::mem::size_of::<Self::Msg>()
    }
}

// ---------------------------------------------------------------------------
// Round trace
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTrace {
    pub rounds: u64,
    pub halt_rounds: Vec<u64>,
    pub max_message_bytes: usize,
    pub output_bits_per_vertex: Option<u64>,
}

impl RoundTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization")
    }

    pub fn from_json(text: &str) -> Result<RoundTrace, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Json(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("round cap {cap} exceeded with {unhalted} vertices still running")]
    RoundCapExceeded { cap: u64, unhalted: usize },
    #[error("deadlock: {0} vertices sleep on messages that will never arrive")]
    Deadlock(usize),
    #[error("malformed overlay: {0}")]
    MalformedOverlay(String),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Default 10 * n when None.
    pub round_cap: Option<u64>,
    pub record_message_bytes: bool,
    /// Shuffle the order vertices are stepped within a round (outcomes must
    /// not depend on it; used by the barrier-semantics tests).
    pub schedule_seed: Option<u64>,
    pub run_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { round_cap: None, record_message_bytes: false, schedule_seed: None, run_seed: 0 }
    }
}

pub struct RunResult<O> {
    pub outputs: Vec<O>,
    pub trace: RoundTrace,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

struct Engine<'g, A: LocalAlgorithm> {
    g: &'g Graph,
    alg: &'g A,
    ctxs: Vec<NodeCtx>,
    rev_port: Vec<Vec<usize>>,
    states: Vec<Option<A::State>>,
    outputs: Vec<Option<A::Output>>,
    halt_rounds: Vec<u64>,
    wake_at: Vec<u64>, // u64::MAX: message-only
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    max_message_bytes: usize,
    unhalted: usize,
}

impl<'g, A: LocalAlgorithm> Engine<'g, A> {
    fn new(g: &'g Graph, ids: &IdAssignment, alg: &'g A, run_seed: u64) -> Self {
        let n = g.n();
        assert_eq!(ids.n(), n);
        let ctxs: Vec<NodeCtx> = (0..n)
            .map(|v| NodeCtx {
                id: ids.id(v),
                degree: g.degree(v),
                seed: splitmix64(run_seed ^ ids.id(v).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            })
            .collect();
        // rev_port[v][p] = position of v in adj[w]'s list, where w = adj[v][p]
        let mut rev_port = vec![Vec::new(); n];
        for v in 0..n {
            rev_port[v] = g
                .neighbors(v)
                .iter()
                .map(|&w| g.neighbors(w).binary_search(&v).expect("symmetric adjacency"))
                .collect();
        }
        Engine {
            g,
            alg,
            ctxs,
            rev_port,
            states: (0..n).map(|_| None).collect(),
            outputs: vec![None; n],
            halt_rounds: vec![0; n],
            wake_at: vec![u64::MAX; n],
            heap: BinaryHeap::new(),
            max_message_bytes: 0,
            unhalted: n,
        }
    }

    fn dispatch(&mut self, from: usize, round_sends: &mut IdMap<usize, Vec<(usize, A::Msg)>>, outbox: Outbox<A::Msg>, record: bool) {
        match outbox {
            Outbox::Silent => {}
            Outbox::Broadcast(m) => {
                if record {
                    self.max_message_bytes = self.max_message_bytes.max(A::message_bytes(&m));
                }
                for (p, &w) in self.g.neighbors(from).iter().enumerate() {
                    if self.states[w].is_some() || self.outputs[w].is_none() {
                        round_sends.entry(w).or_default().push((self.rev_port[from][p], m.clone()));
                    }
                }
            }
            Outbox::PerPort(list) => {
                for (p, m) in list {
                    assert!(p < self.g.degree(from), "port out of range");
                    if record {
                        self.max_message_bytes = self.max_message_bytes.max(A::message_bytes(&m));
                    }
                    let w = self.g.neighbors(from)[p];
                    if self.states[w].is_some() || self.outputs[w].is_none() {
                        round_sends.entry(w).or_default().push((self.rev_port[from][p], m.clone()));
                    }
                }
            }
        }
    }

    fn apply(&mut self, v: usize, round: u64, action: Action<A::Msg, A::Output>, round_sends: &mut IdMap<usize, Vec<(usize, A::Msg)>>, record: bool) {
        match action {
            Action::Halt(out) => {
                self.states[v] = None;
                self.outputs[v] = Some(out);
                self.halt_rounds[v] = round;
                self.wake_at[v] = u64::MAX;
                self.unhalted -= 1;
            }
            Action::Continue { outbox, wake } => {
                self.dispatch(v, round_sends, outbox, record);
                match wake {
                    Wake::OnMessage => self.wake_at[v] = u64::MAX,
                    Wake::At(r) => {
                        assert!(r > round, "wake must be in the future (vertex asked for {r} at round {round})");
                        self.wake_at[v] = r;
                        self.heap.push(Reverse((r, v)));
                    }
                }
            }
        }
    }

    /// Run until all vertices halt (strict = true) or until quiescence.
    /// Returns the number of the last active round.
    fn run(&mut self, inputs: &[A::Input], cfg: &RunConfig, strict: bool) -> Result<u64, SimError> {
        let n = self.g.n();
        let cap = cfg.round_cap.unwrap_or(10 * n as u64);
        let record = cfg.record_message_bytes;
        let mut rng = cfg.schedule_seed.map(rand_chacha::ChaCha8Rng::seed_from_u64);
        // round 0: everyone steps
        let mut round_sends: IdMap<usize, Vec<(usize, A::Msg)>> = IdMap::default();
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        let mut last_active = 0u64;
        for &v in &order {
            let mut st = self.alg.init(&self.ctxs[v], &inputs[v]);
            let action = self.alg.step(&self.ctxs[v], &mut st, 0, &[]);
            self.states[v] = Some(st);
            self.apply(v, 0, action, &mut round_sends, record);
        }
        loop {
            if self.unhalted == 0 {
                break;
            }
            // next round with activity
            let deliveries = !round_sends.is_empty();
            let mut next = if deliveries { Some(last_active + 1) } else { None };
            while let Some(&Reverse((r, v))) = self.heap.peek() {
                if self.wake_at[v] != r {
                    self.heap.pop(); // stale
                    continue;
                }
                next = Some(next.map_or(r, |x: u64| x.min(r)));
                break;
            }
            let Some(round) = next else {
                if strict {
                    return Err(SimError::Deadlock(self.unhalted));
                }
                break;
            };
            if round > cap {
                return Err(SimError::RoundCapExceeded { cap, unhalted: self.unhalted });
            }
            // collect steppers: mail recipients + timers
            let mut inbox_now = if round == last_active + 1 && deliveries {
                std::mem::take(&mut round_sends)
            } else {
                IdMap::default()
            };
            let mut steppers: Vec<usize> = inbox_now.keys().copied().collect();
            while let Some(&Reverse((r, v))) = self.heap.peek() {
                if r > round {
                    break;
                }
                self.heap.pop();
                if self.wake_at[v] == r && r == round {
                    if !inbox_now.contains_key(&v) {
                        steppers.push(v);
                    }
                    self.wake_at[v] = u64::MAX;
                }
            }
            steppers.sort_unstable();
            if let Some(r) = rng.as_mut() {
                steppers.shuffle(r);
            }
            last_active = round;
            let mut sends: IdMap<usize, Vec<(usize, A::Msg)>> = IdMap::default();
            for v in steppers {
                let Some(mut st) = self.states[v].take() else { continue };
                let mut inbox = inbox_now.remove(&v).unwrap_or_default();
                inbox.sort_by_key(|&(p, _)| p);
                if self.wake_at[v] != u64::MAX && self.wake_at[v] <= round {
                    self.wake_at[v] = u64::MAX;
                }
                let action = self.alg.step(&self.ctxs[v], &mut st, round, &inbox);
                self.states[v] = Some(st);
                self.apply(v, round, action, &mut sends, record);
            }
            round_sends = sends;
        }
        Ok(last_active)
    }
}

/// Execute a LOCAL algorithm until every vertex halts.
pub fn run_algorithm<A: LocalAlgorithm>(
    g: &Graph,
    ids: &IdAssignment,
    alg: &A,
    inputs: &[A::Input],
    cfg: &RunConfig,
) -> Result<RunResult<A::Output>, SimError> {
    let mut engine = Engine::new(g, ids, alg, cfg.run_seed);
    engine.run(inputs, cfg, true)?;
    let rounds = engine.halt_rounds.iter().copied().max().unwrap_or(0);
    Ok(RunResult {
        outputs: engine.outputs.into_iter().map(Option::unwrap).collect(),
        trace: RoundTrace {
            rounds,
            halt_rounds: engine.halt_rounds,
            max_message_bytes: engine.max_message_bytes,
            output_bits_per_vertex: None,
        },
    })
}

/// Like `run_algorithm` but also stops at quiescence (no mail in flight, no
/// timers); unhalted vertices yield their final state instead of an output.
pub fn run_to_quiescence<A: LocalAlgorithm>(
    g: &Graph,
    ids: &IdAssignment,
    alg: &A,
    inputs: &[A::Input],
    cfg: &RunConfig,
) -> Result<(Vec<Result<A::Output, A::State>>, RoundTrace), SimError> {
    let mut engine = Engine::new(g, ids, alg, cfg.run_seed);
    let last = engine.run(inputs, cfg, false)?;
    let ends = engine
        .outputs
        .into_iter()
        .zip(engine.states)
        .map(|(o, s)| match o {
            Some(out) => Ok(out),
            None => Err(s.expect("unhalted vertex keeps its state")),
        })
        .collect();
    let rounds = engine
        .halt_rounds
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(last);
    Ok((
        ends,
        RoundTrace {
            rounds,
            halt_rounds: engine.halt_rounds,
            max_message_bytes: engine.max_message_bytes,
            output_bits_per_vertex: None,
        },
    ))
}

// ---------------------------------------------------------------------------
// Virtual protocols and overlay emulation
// ---------------------------------------------------------------------------

/// Context of a virtual node: its virtual identifier, virtual degree, and a
/// private seed.
#[derive(Debug, Clone, Copy)]
pub struct VNodeCtx {
    pub vid: u64,
    pub vdegree: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VWake {
    OnMessage,
    At(u64),
}

#[derive(Debug, Clone)]
pub enum VAction<M, O> {
    Continue { broadcast: Option<M>, wake: VWake },
    Halt(O),
}

/// An algorithm at virtual-round granularity over an abstract neighborhood:
/// nodes broadcast to all virtual neighbors, and inboxes carry sender vids.
/// Runs directly on explicit graphs, under path-routed overlay emulation, or
/// under the flood-hosted emulation inside the pipelines.
pub trait VirtualProto {
    type Msg: Clone;
    type Out: Clone;
    type State;

    fn init(&self, node: &VNodeCtx) -> Self::State;

    /// vround 0 has an empty inbox; messages broadcast in vround t arrive in
    /// vround t+1.
    fn step(
        &self,
        node: &VNodeCtx,
        state: &mut Self::State,
        vround: u64,
        inbox: &[(u64, Self::Msg)],
    ) -> VAction<Self::Msg, Self::Out>;
}

/// Adapter: run a `VirtualProto` directly on an explicit graph (dilation 1).
/// Virtual ids are the real ids.
pub struct DirectProto<P>(pub P);

pub struct DirectState<P: VirtualProto> {
    inner: P::State,
}

impl<P: VirtualProto> LocalAlgorithm for DirectProto<P> {
    type Input = ();
    type State = DirectState<P>;
    type Msg = (u64, P::Msg);
    type Output = P::Out;

    fn init(&self, ctx: &NodeCtx, _input: &()) -> Self::State {
        let vctx = VNodeCtx { vid: ctx.id, vdegree: ctx.degree, seed: ctx.seed };
        DirectState { inner: self.0.init(&vctx) }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        state: &mut Self::State,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> Action<Self::Msg, Self::Output> {
        let vctx = VNodeCtx { vid: ctx.id, vdegree: ctx.degree, seed: ctx.seed };
        let vin: Vec<(u64, P::Msg)> = inbox.iter().map(|(_, m)| m.clone()).collect();
        match self.0.step(&vctx, &mut state.inner, round, &vin) {
            VAction::Halt(o) => Action::Halt(o),
            VAction::Continue { broadcast, wake } => Action::Continue {
                outbox: match broadcast {
                    Some(m) => Outbox::Broadcast((ctx.id, m)),
                    None => Outbox::Silent,
                },
                wake: match wake {
                    VWake::OnMessage => Wake::OnMessage,
                    VWake::At(r) => Wake::At(r),
                },
            },
        }
    }
}

/// A virtual graph hosted on real vertices. Virtual edges are realized by
/// real paths of length at most `dilation`.
#[derive(Debug, Clone)]
pub struct OverlayGraph {
    pub n_virtual: usize,
    /// Real host of each virtual node.
    pub host: Vec<usize>,
    /// Sorted virtual adjacency.
    pub vadj: Vec<Vec<usize>>,
    /// Realization path (real vertex sequence, host[a] .. host[b]) for each
    /// virtual edge a < b.
    pub paths: HashMap<(usize, usize), Vec<usize>>,
    pub dilation: u64,
}

impl OverlayGraph {
    /// The identity overlay: every real vertex hosts itself, dilation 1.
    pub fn identity(g: &Graph) -> OverlayGraph {
        let mut paths = HashMap::new();
        for (u, v) in g.edges() {
            paths.insert((u, v), vec![u, v]);
        }
        OverlayGraph {
            n_virtual: g.n(),
            host: (0..g.n()).collect(),
            vadj: (0..g.n()).map(|v| g.neighbors(v).to_vec()).collect(),
            paths,
            dilation: 1,
        }
    }

    /// The power-graph overlay g^k: every vertex hosts itself; virtual edges
    /// are realized by shortest paths.
    pub fn power(g: &Graph, k: u32) -> OverlayGraph {
        let n = g.n();
        let mut vadj = vec![Vec::new(); n];
        let mut paths = HashMap::new();
        for v in 0..n {
            // truncated BFS with parents
            let mut dist: HashMap<usize, (u32, usize)> = HashMap::new();
            dist.insert(v, (0, usize::MAX));
            let mut queue = VecDeque::from([v]);
            while let Some(u) = queue.pop_front() {
                let (du, _) = dist[&u];
                if du == k {
                    continue;
                }
                for &w in g.neighbors(u) {
                    if !dist.contains_key(&w) {
                        dist.insert(w, (du + 1, u));
                        queue.push_back(w);
                    }
                }
            }
            for (&w, &(_, _)) in dist.iter() {
                if w == v {
                    continue;
                }
                vadj[v].push(w);
                if v < w {
                    let mut path = vec![w];
                    let mut cur = w;
                    while cur != v {
                        cur = dist[&cur].1;
                        path.push(cur);
                    }
                    path.reverse();
                    paths.insert((v, w), path);
                }
            }
            vadj[v].sort_unstable();
        }
        OverlayGraph { n_virtual: n, host: (0..n).collect(), vadj, paths, dilation: k as u64 }
    }

    pub fn validate(&self, g: &Graph) -> Result<(), SimError> {
        for (&(a, b), path) in &self.paths {
            if path.len() < 2 && self.host[a] != self.host[b] {
                return Err(SimError::MalformedOverlay(format!("path for ({a},{b}) too short")));
            }
            if path.first() != Some(&self.host[a]) || path.last() != Some(&self.host[b]) {
                return Err(SimError::MalformedOverlay(format!("path for ({a},{b}) does not join hosts")));
            }
            if path.len() as u64 - 1 > self.dilation {
                return Err(SimError::MalformedOverlay(format!("path for ({a},{b}) exceeds dilation")));
            }
            for w in path.windows(2) {
                if !g.has_edge(w[0].min(w[1]), w[0].max(w[1])) {
                    return Err(SimError::MalformedOverlay(format!(
                        "path for ({a},{b}) uses non-edge ({}, {})",
                        w[0], w[1]
                    )));
                }
            }
        }
        for a in 0..self.n_virtual {
            for &b in &self.vadj[a] {
                let key = (a.min(b), a.max(b));
                if !self.paths.contains_key(&key) {
                    return Err(SimError::MalformedOverlay(format!("virtual edge ({a},{b}) lacks a path")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct HostedNode<M> {
    vnode: usize,
    vid: u64,
    vneighbors: Vec<(usize, u64)>, // (virtual node, vid)
    routes: Vec<Vec<usize>>,       // remaining-hop routes per virtual neighbor
    inbox: Vec<(u64, M)>,
    wake: Option<u64>, // next vround
}

#[derive(Clone)]
pub struct Packet<M> {
    dst_vnode: usize,
    src_vid: u64,
    route: Vec<usize>, // remaining real vertices to visit
    msg: M,
}

pub struct EmulationAlg<P: VirtualProto> {
    proto: P,
    dilation: u64,
}

#[derive(Clone)]
pub struct EmulationInput<M> {
    hosted: Vec<HostedNode<M>>,
    /// neighbor real index -> port
    ports: HashMap<usize, usize>,
}

pub struct EmulationState<P: VirtualProto> {
    hosted: Vec<(HostedNode<P::Msg>, Option<P::State>, Option<(u64, P::Out)>)>,
    ports: HashMap<usize, usize>,
}

impl<P: VirtualProto> LocalAlgorithm for EmulationAlg<P> {
    type Input = EmulationInput<P::Msg>;
    type State = EmulationState<P>;
    type Msg = Packet<P::Msg>;
    type Output = Vec<VNodeResult<P::Out>>;

    fn init(&self, ctx: &NodeCtx, input: &Self::Input) -> Self::State {
        let hosted = input
            .hosted
            .iter()
            .map(|h| {
                let vctx = VNodeCtx {
                    vid: h.vid,
                    vdegree: h.vneighbors.len(),
                    seed: splitmix64(ctx.seed ^ h.vid),
                };
                (h.clone(), Some(self.proto.init(&vctx)), None)
            })
            .collect();
        EmulationState { hosted, ports: input.ports.clone() }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        state: &mut Self::State,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> Action<Self::Msg, Self::Output> {
        let EmulationState { hosted, ports } = state;
        let mut outgoing: Vec<(usize, Packet<P::Msg>)> = Vec::new();
        // deliver or forward packets
        for (_, pkt) in inbox {
            let mut pkt = pkt.clone();
            if pkt.route.is_empty() {
                if let Some(slot) = hosted.iter_mut().find(|(h, _, _)| h.vnode == pkt.dst_vnode) {
                    slot.0.inbox.push((pkt.src_vid, pkt.msg.clone()));
                }
            } else {
                let next = pkt.route.remove(0);
                let port = *ports.get(&next).expect("route uses a non-neighbor");
                outgoing.push((port, pkt));
            }
        }
        // virtual rounds fire at multiples of the dilation
        if round % self.dilation == 0 {
            let vround = round / self.dilation;
            for (h, st, out) in hosted.iter_mut() {
                if out.is_some() {
                    continue;
                }
                let due = h.wake.map_or(false, |w| w <= vround) || !h.inbox.is_empty();
                if !due && vround > 0 {
                    continue;
                }
                let vctx = VNodeCtx {
                    vid: h.vid,
                    vdegree: h.vneighbors.len(),
                    seed: splitmix64(ctx.seed ^ h.vid),
                };
                let mut vinbox = std::mem::take(&mut h.inbox);
                vinbox.sort_by_key(|&(vid, _)| vid);
                let st_ref = st.as_mut().expect("live vnode has state");
                match self.proto.step(&vctx, st_ref, vround, &vinbox) {
                    VAction::Halt(o) => {
                        *out = Some((vround, o));
                        *st = None;
                        h.wake = None;
                    }
                    VAction::Continue { broadcast, wake } => {
                        h.wake = match wake {
                            VWake::OnMessage => None,
                            VWake::At(r) => Some(r),
                        };
                        if let Some(m) = broadcast {
                            for (k, &(nb_vnode, _)) in h.vneighbors.iter().enumerate() {
                                let route = &h.routes[k];
                                let pkt = Packet {
                                    dst_vnode: nb_vnode,
                                    src_vid: h.vid,
                                    route: route.get(1..).map(<[usize]>::to_vec).unwrap_or_default(),
                                    msg: m.clone(),
                                };
                                match route.first() {
                                    // co-hosted virtual neighbor: deliver locally
                                    None => outgoing.push((usize::MAX, pkt)),
                                    Some(first) => {
                                        let port = *ports.get(first).expect("route start not a neighbor");
                                        outgoing.push((port, pkt));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // local deliveries (co-hosted neighbors), marked with usize::MAX
        let mut real_out = Vec::new();
        for (port, pkt) in outgoing {
            if port == usize::MAX {
                if let Some(slot) = hosted.iter_mut().find(|(h, _, _)| h.vnode == pkt.dst_vnode) {
                    slot.0.inbox.push((pkt.src_vid, pkt.msg));
                }
            } else {
                real_out.push((port, pkt));
            }
        }
        // Hosts never halt here: any vertex may still have to relay traffic
        // for other virtual edges, so the run ends at quiescence and outputs
        // are collected from the final states.
        // Next timer: earliest hosted vnode wake, or the next dilation
        // boundary when local mail is pending.
        let mut wake: Option<u64> = None;
        for (h, _, o) in hosted.iter() {
            if o.is_none() {
                let w = h.wake.map(|vr| vr * self.dilation);
                let w = if h.inbox.is_empty() { w } else { Some(((round / self.dilation) + 1) * self.dilation) };
                if let Some(w) = w {
                    let w = w.max(round + 1);
                    wake = Some(wake.map_or(w, |x: u64| x.min(w)));
                }
            }
        }
        Action::Continue {
            outbox: if real_out.is_empty() { Outbox::Silent } else { Outbox::PerPort(real_out) },
            wake: match wake {
                Some(w) => Wake::At(w),
                None => Wake::OnMessage,
            },
        }
    }
}


/// Emulate a virtual-graph algorithm on the real graph: every virtual round
/// is realized by `dilation` real rounds of store-and-forward along the
/// overlay's realization paths.
///
/// Virtual identifiers: host id ranked first, ties broken by the virtual
/// node's canonical key (callers get vids dense per host).
pub fn emulate_overlay<P: VirtualProto>(
    g: &Graph,
    ids: &IdAssignment,
    overlay: &OverlayGraph,
    proto: P,
    cfg: &RunConfig,
) -> Result<(Vec<VNodeResult<P::Out>>, RoundTrace), SimError> {
    overlay.validate(g)?;
    let n = g.n();
    // vids: host id * (max hosted + 1) + rank among co-hosted (by vnode index)
    let mut hosted_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, &h) in overlay.host.iter().enumerate() {
        hosted_by[h].push(a);
    }
    let maxk = hosted_by.iter().map(Vec::len).max().unwrap_or(1) as u64;
    let mut vid_of = vec![0u64; overlay.n_virtual];
    for h in 0..n {
        for (rank, &a) in hosted_by[h].iter().enumerate() {
            vid_of[a] = ids.id(h) * (maxk + 1) + rank as u64 + 1;
        }
    }
    let mut inputs: Vec<EmulationInput<P::Msg>> = (0..n)
        .map(|v| EmulationInput {
            hosted: Vec::new(),
            ports: g.neighbors(v).iter().enumerate().map(|(p, &w)| (w, p)).collect(),
        })
        .collect();
    for (a, &h) in overlay.host.iter().enumerate() {
        let mut vneighbors = Vec::new();
        let mut routes = Vec::new();
        for &b in &overlay.vadj[a] {
            let key = (a.min(b), a.max(b));
            let path = &overlay.paths[&key];
            let route: Vec<usize> = if a < b {
                path[1..].to_vec()
            } else {
                let mut r: Vec<usize> = path[..path.len() - 1].to_vec();
                r.reverse();
                r
            };
            vneighbors.push((b, vid_of[b]));
            routes.push(route);
        }
        inputs[h].hosted.push(HostedNode {
            vnode: a,
            vid: vid_of[a],
            vneighbors,
            routes,
            inbox: Vec::new(),
            wake: Some(0),
        });
    }
    let alg = EmulationAlg { proto, dilation: overlay.dilation.max(1) };
    let (ends, trace) = run_to_quiescence(g, ids, &alg, &inputs, cfg)?;
    let mut out: Vec<VNodeResult<P::Out>> = Vec::new();
    for (v, end) in ends.into_iter().enumerate() {
        match end {
            Ok(list) => out.extend(list),
            Err(st) => {
                if st.hosted.iter().any(|(_, _, o)| o.is_none()) {
                    return Err(SimError::Deadlock(v));
                }
                out.extend(st.hosted.into_iter().map(|(h, _, o)| {
                    let (halt_vround, output) = o.unwrap();
                    VNodeResult { vnode: h.vnode, vid: h.vid, output, halt_vround }
                }));
            }
        }
    }
    out.sort_by_key(|e| e.vnode);
    Ok((out, trace))
}

#[derive(Debug, Clone)]
pub struct VNodeResult<O> {
    pub vnode: usize,
    pub vid: u64,
    pub output: O,
    pub halt_vround: u64,
}

// ---------------------------------------------------------------------------
// Locality audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditVerdict {
    /// Balls isomorphic and outputs identical.
    Pass,
    /// Balls isomorphic but outputs differ: a locality violation.
    Fail(String),
    /// Balls not isomorphic (or the algorithm ran longer than r): no claim.
    Inconclusive(String),
}

/// If the labelled r-balls of v1 in (g1, ids1) and v2 in (g2, ids2) are
/// isomorphic (root- and id-preserving), a LOCAL algorithm halting within r
/// rounds must produce identical outputs at v1 and v2.
pub fn audit_locality<A>(
    g1: &Graph,
    v1: usize,
    ids1: &IdAssignment,
    g2: &Graph,
    v2: usize,
    ids2: &IdAssignment,
    r: u64,
    alg: &A,
    cfg: &RunConfig,
) -> Result<AuditVerdict, SimError>
where
    A: LocalAlgorithm<Input = ()>,
    A::Output: PartialEq + std::fmt::Debug,
{
    let b1 = crate::graph::ball_view(g1, v1, r as u32, ids1).expect("v1 in range");
    let b2 = crate::graph::ball_view(g2, v2, r as u32, ids2).expect("v2 in range");
    if !balls_id_isomorphic(&b1, &b2) {
        return Ok(AuditVerdict::Inconclusive("balls not isomorphic".into()));
    }
    let r1 = run_algorithm(g1, ids1, alg, &vec![(); g1.n()], cfg)?;
    let r2 = run_algorithm(g2, ids2, alg, &vec![(); g2.n()], cfg)?;
    if r1.trace.halt_rounds[v1] > r || r2.trace.halt_rounds[v2] > r {
        return Ok(AuditVerdict::Inconclusive(format!(
            "vertex halts after round r = {r} ({} / {})",
            r1.trace.halt_rounds[v1], r2.trace.halt_rounds[v2]
        )));
    }
    if r1.outputs[v1] == r2.outputs[v2] {
        Ok(AuditVerdict::Pass)
    } else {
        Ok(AuditVerdict::Fail(format!(
            "outputs differ: {:?} vs {:?}",
            r1.outputs[v1], r2.outputs[v2]
        )))
    }
}

/// Root- and id-preserving isomorphism test: with injective identifiers this
/// reduces to equality of the id-labelled edge sets and root ids.
fn balls_id_isomorphic(b1: &crate::graph::BallView, b2: &crate::graph::BallView) -> bool {
    let pos1: HashMap<usize, usize> = b1.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let pos2: HashMap<usize, usize> = b2.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    if b1.ids[pos1[&b1.root]] != b2.ids[pos2[&b2.root]] {
        return false;
    }
    let mut ids1: Vec<u64> = b1.ids.clone();
    let mut ids2: Vec<u64> = b2.ids.clone();
    ids1.sort_unstable();
    ids2.sort_unstable();
    if ids1 != ids2 {
        return false;
    }
    let edge_ids = |b: &crate::graph::BallView, pos: &HashMap<usize, usize>| {
        let mut e: Vec<(u64, u64)> = b
            .edges
            .iter()
            .map(|&(u, v)| {
                let (a, b2) = (b.ids[pos[&u]], b.ids[pos[&v]]);
                (a.min(b2), a.max(b2))
            })
            .collect();
        e.sort_unstable();
        e
    };
    edge_ids(b1, &pos1) == edge_ids(b2, &pos2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cycle_graph, path_graph};

    /// Toy algorithm: flood own id for `radius` rounds and output the
    /// smallest id seen. Output depends exactly on the radius-r ball.
    struct MinIdFlood {
        radius: u64,
    }

    struct FloodState {
        best: u64,
        changed: bool,
    }

    impl LocalAlgorithm for MinIdFlood {
        type Input = ();
        type State = FloodState;
        type Msg = u64;
        type Output = u64;

        fn init(&self, ctx: &NodeCtx, _: &()) -> FloodState {
            FloodState { best: ctx.id, changed: true }
        }

        fn step(
            &self,
            _ctx: &NodeCtx,
            st: &mut FloodState,
            round: u64,
            inbox: &[(usize, u64)],
        ) -> Action<u64, u64> {
            for &(_, m) in inbox {
                if m < st.best {
                    st.best = m;
                    st.changed = true;
                }
            }
            if round >= self.radius {
                return Action::Halt(st.best);
            }
            let out = if st.changed { Outbox::Broadcast(st.best) } else { Outbox::Silent };
            st.changed = false;
            Action::Continue { outbox: out, wake: Wake::At(round + 1) }
        }
    }

    #[test]
    fn id_schemes_are_injective_and_deterministic() {
        let g = cycle_graph(100);
        for scheme in [IdScheme::Permutation, IdScheme::RandomRange, IdScheme::AdversarialBfs] {
            let a = assign_ids(&g, scheme, 42);
            let b = assign_ids(&g, scheme, 42);
            assert_eq!(a.ids, b.ids);
            let mut sorted = a.ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 100);
            assert!(a.ids.iter().all(|&x| x >= 1 && x <= 100u64.pow(3)));
        }
        let p = assign_ids(&g, IdScheme::Permutation, 7);
        let mut v = p.ids.clone();
        v.sort_unstable();
        assert_eq!(v, (1..=100).collect::<Vec<u64>>());
    }

    #[test]
    fn flood_reaches_exactly_radius() {
        let g = path_graph(9);
        let ids = IdAssignment::from_ids((1..=9).rev().collect(), IdScheme::Permutation, 0);
        // ids: vertex v has id 9-v; smallest id 1 sits at vertex 8
        let res = run_algorithm(&g, &ids, &MinIdFlood { radius: 3 }, &vec![(); 9], &RunConfig::default()).unwrap();
        // vertex 4 sees balls of radius 3 => min id among vertices 1..=7 = id(7) = 2
        assert_eq!(res.outputs[4], 2);
        assert_eq!(res.outputs[8], 1);
        assert_eq!(res.trace.rounds, 3);
    }

    #[test]
    fn outcome_is_schedule_independent() {
        let g = cycle_graph(30);
        let ids = assign_ids(&g, IdScheme::RandomRange, 5);
        let base = run_algorithm(&g, &ids, &MinIdFlood { radius: 6 }, &vec![(); 30], &RunConfig::default()).unwrap();
        for seed in 0..5 {
            let cfg = RunConfig { schedule_seed: Some(seed), ..Default::default() };
            let r = run_algorithm(&g, &ids, &MinIdFlood { radius: 6 }, &vec![(); 30], &cfg).unwrap();
            assert_eq!(r.outputs, base.outputs);
            assert_eq!(r.trace.rounds, base.trace.rounds);
        }
    }

    #[test]
    fn round_cap_reported() {
        struct Forever;
        impl LocalAlgorithm for Forever {
            type Input = ();
            type State = ();
            type Msg = ();
            type Output = ();
            fn init(&self, _: &NodeCtx, _: &()) {}
            fn step(&self, _: &NodeCtx, _: &mut (), round: u64, _: &[(usize, ())]) -> Action<(), ()> {
                Action::Continue { outbox: Outbox::Broadcast(()), wake: Wake::At(round + 1) }
            }
        }
        let g = cycle_graph(4);
        let ids = assign_ids(&g, IdScheme::Permutation, 0);
        let err = run_algorithm(&g, &ids, &Forever, &vec![(); 4], &RunConfig::default());
        assert!(matches!(err, Err(SimError::RoundCapExceeded { .. })));
    }

    /// A virtual protocol computing min vid among virtual neighbors within 2
    /// virtual rounds.
    struct VMin;
    impl VirtualProto for VMin {
        type Msg = u64;
        type Out = u64;
        type State = u64;
        fn init(&self, node: &VNodeCtx) -> u64 {
            node.vid
        }
        fn step(&self, _n: &VNodeCtx, best: &mut u64, vround: u64, inbox: &[(u64, u64)]) -> VAction<u64, u64> {
            for &(_, m) in inbox {
                *best = (*best).min(m);
            }
            if vround >= 2 {
                VAction::Halt(*best)
            } else {
                VAction::Continue { broadcast: Some(*best), wake: VWake::At(vround + 1) }
            }
        }
    }

    #[test]
    fn identity_overlay_matches_direct_run() {
        let g = cycle_graph(12);
        let ids = assign_ids(&g, IdScheme::RandomRange, 3);
        let overlay = OverlayGraph::identity(&g);
        let (vouts, _) = emulate_overlay(&g, &ids, &overlay, VMin, &RunConfig::default()).unwrap();
        let direct = run_algorithm(&g, &ids, &DirectProto(VMin), &vec![(); 12], &RunConfig::default()).unwrap();
        // direct run uses real ids as vids; overlay re-ranks them but the
        // min-within-2-hops structure is the same modulo the vid map
        let mut direct_sorted: Vec<u64> = direct.outputs.clone();
        direct_sorted.sort_unstable();
        // under the identity overlay each vertex hosts one vnode with vid
        // id*(1+1)+1 = 2*id+1; outputs should be the transformed mins
        let mut expect: Vec<u64> = direct.outputs.iter().map(|&m| 2 * m + 1).collect();
        expect.sort_unstable();
        let mut got: Vec<u64> = vouts.iter().map(|e| e.output).collect();
        got.sort_unstable();
        assert_eq!(got, expect);
        let _ = direct_sorted;
    }

    #[test]
    fn power_overlay_reaches_distance_k() {
        let g = path_graph(10);
        let ids = IdAssignment::from_ids((1..=10).collect(), IdScheme::Permutation, 0);
        let overlay = OverlayGraph::power(&g, 3);
        overlay.validate(&g).unwrap();
        let (vouts, trace) = emulate_overlay(&g, &ids, &overlay, VMin, &RunConfig::default()).unwrap();
        // after 2 virtual rounds over g^3, vertex 9 (id 10) sees min over
        // distance <= 6: vertex 3 with id 4 -> vid 2*4+1 = 9
        let last = vouts.iter().find(|e| e.vid == 2 * 10 + 1).unwrap();
        assert_eq!(last.output, 2 * 4 + 1);
        // 2 virtual rounds at dilation 3 cost at most ~3*3 real rounds
        assert!(trace.rounds <= 9, "rounds = {}", trace.rounds);
    }

    #[test]
    fn audit_detects_equivalent_midpoints() {
        // two paths identical within radius 3 of their midpoints, different
        // beyond: midpoint outputs must agree for a radius-3 algorithm
        let g1 = path_graph(9);
        let g2 = path_graph(11);
        let ids1 = IdAssignment::from_ids(vec![20, 19, 5, 6, 1, 7, 8, 21, 22], IdScheme::Permutation, 0);
        let ids2 = IdAssignment::from_ids(
            vec![40, 41, 42, 19, 5, 6, 1, 7, 8, 21, 44],
            IdScheme::Permutation,
            0,
        );
        let verdict = audit_locality(
            &g1,
            4,
            &ids1,
            &g2,
            6,
            &ids2,
            3,
            &MinIdFlood { radius: 3 },
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!(verdict, AuditVerdict::Pass);
        // radius-4 balls differ: inconclusive
        let verdict = audit_locality(
            &g1,
            4,
            &ids1,
            &g2,
            6,
            &ids2,
            4,
            &MinIdFlood { radius: 4 },
            &RunConfig::default(),
        )
        .unwrap();
        assert!(matches!(verdict, AuditVerdict::Inconclusive(_)));
    }

    #[test]
    fn trace_json_round_trip() {
        let t = RoundTrace { rounds: 5, halt_rounds: vec![5, 4], max_message_bytes: 16, output_bits_per_vertex: Some(6) };
        let back = RoundTrace::from_json(&t.to_json()).unwrap();
        assert_eq!(back.rounds, 5);
        assert_eq!(back.halt_rounds, vec![5, 4]);
    }
}
