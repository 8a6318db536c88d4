//! Fractional (qΔ+1 : q) coloring of graphs with maximum degree Δ that
//! contain no K_{Δ+1}, in rounds independent of n (capped color-reduction
//! schedules), via a disjoint cover by induced (2q+1)-vertex paths:
//!
//!  M1. every vertex gathers its radius-(6q+2) ball;
//!  M2. an MIS of H1 (all induced (2q+1)-paths, adjacent when sharing a
//!      vertex) picks a maximal vertex-disjoint path cover; each path is
//!      hosted at its minimum-id member and protocol messages travel in
//!      TTL-bounded origin-deduplicated floods;
//!  M3. leftover (residual) components have diameter < 2q+1 — a longer
//!      shortest path would be an uncovered H1 node, contradicting MIS
//!      maximality — so every member gathers its component and computes the
//!      same canonical proper Δ-coloring, lifted by q;
//!  M4. the selected paths (graph H2, adjacent when joined by an edge) are
//!      properly colored with (2q+1)Δ + 1 classes;
//!  M5. class by class, each path extends the partial coloring. Member
//!      lists keep at least 2q+1 (interior) resp. q+1 (endpoint) colors, so
//!      the exact list q-coloring of a path on 2q+1 vertices succeeds.

use crate::coloring::SetColoring;
use crate::graph::Graph;
use crate::localsim::{
    run_algorithm, Action, IdAssignment, LocalAlgorithm, NodeCtx, Outbox, RoundTrace, RunConfig,
    SimError, VAction, VNodeCtx, VWake, VirtualProto, Wake,
};
use crate::primitives::{
    central_component_coloring, path_list_qcoloring, ColorReduceMis, CrmMsg, CrmOut, CrmState,
};
use std::collections::{HashMap, HashSet};
use crate::localsim::{IdMap, IdSet};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaxdegError {
    #[error("vertex {vertex} has degree {found}, above the bound {delta}")]
    DegreeExceeded { vertex: usize, found: usize, delta: u64 },
    #[error("vertex {vertex} lies in a K_{{Δ+1}}: no (qΔ+1:q) coloring exists")]
    CliqueFound { vertex: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

// ---------------------------------------------------------------------------
// M1: ball gathering
// ---------------------------------------------------------------------------

/// Adjacency records of every vertex within the gather radius; each entry
/// pairs a vertex id with its neighbor ids in port order. Sorted by id and
/// stored flat: with one ball per vertex alive at once, map overhead would
/// dominate the whole pipeline's memory footprint.
#[derive(Debug, Clone, Default)]
pub struct BallGraph {
    pub recs: Vec<(u64, Rc<Vec<u64>>)>,
}

impl BallGraph {
    pub fn get(&self, id: u64) -> Option<&Rc<Vec<u64>>> {
        self.recs.binary_search_by_key(&id, |e| e.0).ok().map(|i| &self.recs[i].1)
    }

    pub fn adjacent(&self, a: u64, b: u64) -> bool {
        self.get(a).map_or(false, |l| l.contains(&b))
    }

    pub fn len(&self) -> usize {
        self.recs.len()
    }
}

/// One round of id exchange gives every vertex its port-ordered neighbor-id
/// record; the record is then gossiped `radius` hops.
pub struct BallGather {
    pub radius: u32,
}

pub struct BallState {
    port_ids: Vec<Option<u64>>,
    seen: IdSet<u64>,
    recs: Vec<(u64, Rc<Vec<u64>>)>,
}

#[derive(Debug, Clone)]
pub enum BallMsg {
    Hello(u64),
    /// All records first learned this round, forwarded as one message per
    /// port: (origin id, port-ordered neighbor ids, remaining hops).
    Recs(Rc<Vec<(u64, Rc<Vec<u64>>, u32)>>),
}

#[derive(Debug, Clone)]
pub struct BallOut {
    pub ball: Rc<BallGraph>,
    pub port_ids: Vec<u64>,
}

impl LocalAlgorithm for BallGather {
    type Input = ();
    type State = BallState;
    type Msg = BallMsg;
    type Output = BallOut;

    fn init(&self, ctx: &NodeCtx, _input: &()) -> BallState {
        BallState { port_ids: vec![None; ctx.degree], seen: IdSet::default(), recs: Vec::new() }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut BallState,
        round: u64,
        inbox: &[(usize, BallMsg)],
    ) -> Action<BallMsg, BallOut> {
        let mut fresh: Vec<(u64, Rc<Vec<u64>>, u32)> = Vec::new();
        for (p, m) in inbox {
            match m {
                BallMsg::Hello(id) => st.port_ids[*p] = Some(*id),
                BallMsg::Recs(batch) => {
                    for (id, rec, ttl) in batch.iter() {
                        if st.seen.insert(*id) {
                            st.recs.push((*id, rec.clone()));
                            if *ttl > 0 {
                                fresh.push((*id, rec.clone(), ttl - 1));
                            }
                        }
                    }
                }
            }
        }
        if round == 0 {
            return Action::Continue {
                outbox: Outbox::Broadcast(BallMsg::Hello(ctx.id)),
                wake: Wake::At(1),
            };
        }
        if round == 1 {
            let rec = Rc::new(
                st.port_ids.iter().map(|o| o.expect("id exchange")).collect::<Vec<u64>>(),
            );
            st.seen.insert(ctx.id);
            st.recs.push((ctx.id, rec.clone()));
            if self.radius > 0 {
                fresh.push((ctx.id, rec, self.radius - 1));
            }
        }
        let end = self.radius as u64 + 2;
        if round >= end {
            st.seen = IdSet::default();
            let mut recs = std::mem::take(&mut st.recs);
            recs.sort_unstable_by_key(|e| e.0);
            recs.shrink_to_fit();
            return Action::Halt(BallOut {
                ball: Rc::new(BallGraph { recs }),
                port_ids: st.port_ids.iter().map(|o| o.unwrap()).collect(),
            });
        }
        Action::Continue {
            outbox: if fresh.is_empty() {
                Outbox::Silent
            } else {
                Outbox::Broadcast(BallMsg::Recs(Rc::new(fresh)))
            },
            wake: Wake::At(end),
        }
    }

    fn message_bytes(msg: &BallMsg) -> usize {
        match msg {
            BallMsg::Hello(_) => std::mem::size_of::<BallMsg>(),
            BallMsg::Recs(batch) => batch
                .iter()
                .map(|(_, rec, _)| std::mem::size_of::<(u64, Rc<Vec<u64>>, u32)>() + 8 * rec.len())
                .sum(),
        }
    }
}

// ---------------------------------------------------------------------------
// Path enumeration inside a ball (pure)
// ---------------------------------------------------------------------------

/// All induced paths on `t` vertices containing `center`, as canonical
/// sequences (a sequence and its reverse are the same path; the
/// lexicographically smaller is kept), sorted. Complete whenever the ball
/// covers radius 2(t-1) around `center`.
pub fn induced_paths_through(ball: &BallGraph, center: u64, t: usize) -> Vec<Rc<Vec<u64>>> {
    let mut dist: HashMap<u64, u32> = HashMap::new();
    dist.insert(center, 0);
    let mut frontier = vec![center];
    for d in 1..t as u32 {
        let mut next = Vec::new();
        for &u in &frontier {
            if let Some(rec) = ball.get(u) {
                for &w in rec.iter() {
                    dist.entry(w).or_insert_with(|| {
                        next.push(w);
                        d
                    });
                }
            }
        }
        frontier = next;
    }
    let mut out: HashSet<Vec<u64>> = HashSet::new();
    let mut seq: Vec<u64> = Vec::with_capacity(t);
    for &s in dist.keys() {
        seq.clear();
        seq.push(s);
        extend_induced(ball, &mut seq, t, center, &mut out);
    }
    let mut v: Vec<Rc<Vec<u64>>> = out.into_iter().map(Rc::new).collect();
    v.sort();
    v
}

fn extend_induced(
    ball: &BallGraph,
    seq: &mut Vec<u64>,
    t: usize,
    must_contain: u64,
    out: &mut HashSet<Vec<u64>>,
) {
    if seq.len() == t {
        if seq.contains(&must_contain) {
            let rev: Vec<u64> = seq.iter().rev().copied().collect();
            out.insert(if *seq < rev { seq.clone() } else { rev });
        }
        return;
    }
    let last = *seq.last().unwrap();
    let Some(rec) = ball.get(last) else { return };
    for i in 0..rec.len() {
        let z = rec[i];
        if seq.contains(&z) {
            continue;
        }
        // induced: z must not be adjacent to anything before the last vertex
        if seq[..seq.len() - 1].iter().any(|&u| ball.adjacent(z, u)) {
            continue;
        }
        seq.push(z);
        extend_induced(ball, seq, t, must_contain, out);
        seq.pop();
    }
}

/// Public bound (a function of q and Δ only) on the number of induced
/// (2q+1)-paths hosted at a single vertex; ranks below it give unique vids.
pub fn paths_per_host_bound(q: u64, delta: u64) -> u64 {
    (2 * q + 1) * delta * delta.saturating_sub(1).pow(2 * q as u32 - 1) + 1
}

// ---------------------------------------------------------------------------
// Hosted execution of the color-reduce protocol over a path graph (H1/H2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HostedIn {
    pub vid: u64,
    /// sorted vids of the adjacent virtual nodes
    pub nbr_vids: Vec<u64>,
}

#[derive(Debug)]
pub struct Batch {
    pub origin: u64,
    pub items: Vec<(u64, CrmMsg)>,
}

/// Runs `ColorReduceMis` on a virtual graph whose nodes live at host
/// vertices. Virtual round v occupies real rounds [v·D, (v+1)·D) where
/// D = ttl+1; the broadcasts of one host are batched into a single flood per
/// virtual round, deduplicated by origin, and filtered at the receiving host
/// against its vnodes' neighbor lists. The TTL must cover the largest real
/// distance between hosts of adjacent virtual nodes.
pub struct HostedCrm {
    pub proto: ColorReduceMis,
    pub ttl: u32,
    pub total_vrounds: u64,
}

impl HostedCrm {
    pub fn new(proto: ColorReduceMis, ttl: u32) -> Self {
        let total = proto.schedule_len() + 1;
        HostedCrm { proto, ttl, total_vrounds: total }
    }

    pub fn dilation(&self) -> u64 {
        self.ttl as u64 + 1
    }
}

pub struct HostedState {
    vids: Vec<u64>,
    vdeg: Vec<u32>,
    inner: Vec<Option<CrmState>>,
    outs: Vec<Option<CrmOut>>,
    /// whether the vnode received mail this window (contents are folded into
    /// the inner state on arrival; see `ColorReduceMis::absorb`)
    vmail: Vec<bool>,
    vwake: Vec<Option<u64>>,
    /// vid -> (local vnode index, neighbor slot) pairs listening for it
    route: IdMap<u64, Vec<(u32, u32)>>,
    seen: IdSet<u64>,
    seen_window: u64,
}

impl LocalAlgorithm for HostedCrm {
    type Input = Vec<HostedIn>;
    type State = HostedState;
    type Msg = (Rc<Batch>, u32);
    type Output = Vec<(u64, CrmOut)>;

    fn init(&self, ctx: &NodeCtx, input: &Vec<HostedIn>) -> HostedState {
        let mut route: IdMap<u64, Vec<(u32, u32)>> = IdMap::default();
        let mut inner = Vec::new();
        for (i, h) in input.iter().enumerate() {
            for (j, &nv) in h.nbr_vids.iter().enumerate() {
                route.entry(nv).or_default().push((i as u32, j as u32));
            }
            let vctx = VNodeCtx { vid: h.vid, vdegree: h.nbr_vids.len(), seed: ctx.seed };
            inner.push(Some(self.proto.init_slotted(&vctx, &h.nbr_vids)));
        }
        HostedState {
            vids: input.iter().map(|h| h.vid).collect(),
            vdeg: input.iter().map(|h| h.nbr_vids.len() as u32).collect(),
            inner,
            outs: vec![None; input.len()],
            vmail: vec![false; input.len()],
            vwake: vec![Some(0); input.len()],
            route,
            seen: IdSet::default(),
            seen_window: 0,
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut HostedState,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> Action<Self::Msg, Self::Output> {
        let d = self.dilation();
        let end = (self.total_vrounds + 1) * d;
        let mut sends: Vec<(usize, Self::Msg)> = Vec::new();
        // the dedup set is scoped to one virtual-round window; all arrivals
        // land strictly inside the window of the emitting boundary
        let window = round.saturating_sub(1) / d;
        if window != st.seen_window {
            st.seen.clear();
            st.seen_window = window;
        }
        for (from_port, (batch, ttl)) in inbox {
            if batch.origin == ctx.id || !st.seen.insert(batch.origin) {
                continue;
            }
            for (vid, msg) in &batch.items {
                if let Some(local) = st.route.get(vid) {
                    for &(i, slot) in local {
                        if let Some(inner) = st.inner[i as usize].as_mut() {
                            self.proto.absorb_slot(inner, slot as usize, msg);
                            st.vmail[i as usize] = true;
                        }
                    }
                }
            }
            if *ttl > 0 {
                // no need to echo the flood back where it came from
                for p in (0..ctx.degree).filter(|p| p != from_port) {
                    sends.push((p, (batch.clone(), ttl - 1)));
                }
            }
        }
        if round % d == 0 && round < end {
            let vround = round / d;
            let mut items: Vec<(u64, CrmMsg)> = Vec::new();
            for i in 0..st.vids.len() {
                let Some(inner) = st.inner[i].as_mut() else { continue };
                let due = st.vwake[i].map_or(false, |w| w <= vround) || st.vmail[i];
                if !due {
                    continue;
                }
                st.vmail[i] = false;
                let vctx = VNodeCtx { vid: st.vids[i], vdegree: st.vdeg[i] as usize, seed: ctx.seed };
                match self.proto.step(&vctx, inner, vround, &[]) {
                    VAction::Halt(o) => {
                        st.outs[i] = Some(o);
                        st.inner[i] = None;
                        st.vwake[i] = None;
                        st.vmail[i] = false;
                    }
                    VAction::Continue { broadcast, wake } => {
                        st.vwake[i] = match wake {
                            VWake::OnMessage => None,
                            VWake::At(r) => Some(r),
                        };
                        if let Some(m) = broadcast {
                            items.push((st.vids[i], m));
                        }
                    }
                }
            }
            if !items.is_empty() {
                // local delivery: vnodes sharing this host never see the
                // flood (own-origin batches are skipped), so route the items
                // to local listeners directly; they are read next vround
                for (vid, msg) in &items {
                    if let Some(local) = st.route.get(vid) {
                        for &(i, slot) in local {
                            if let Some(inner) = st.inner[i as usize].as_mut() {
                                self.proto.absorb_slot(inner, slot as usize, msg);
                                st.vmail[i as usize] = true;
                            }
                        }
                    }
                }
                let batch = Rc::new(Batch { origin: ctx.id, items });
                for p in 0..ctx.degree {
                    sends.push((p, (batch.clone(), self.ttl)));
                }
            }
        }
        if round >= end {
            debug_assert!(st.inner.iter().all(Option::is_none));
            let out = st
                .vids
                .iter()
                .zip(&mut st.outs)
                .map(|(&vid, o)| (vid, o.take().expect("vnode finished by schedule end")))
                .collect();
            return Action::Halt(out);
        }
        let next_boundary = ((round / d) + 1) * d;
        let wake = if st.vmail.iter().any(|&b| b) {
            next_boundary
        } else {
            st.vwake
                .iter()
                .flatten()
                .map(|&w| (w * d).max(round + 1))
                .min()
                .unwrap_or(end)
                .min(end)
                .max(round + 1)
        };
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake: Wake::At(wake),
        }
    }
}

// ---------------------------------------------------------------------------
// Announcement floods (selected paths, path colors)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Announce {
    pub vid: u64,
    pub members: Vec<u64>,
    pub tag: u64,
}

/// Each vertex floods its announcements TTL hops (deduplicated by vid); a
/// vertex keeps the announcements whose member list names it.
pub struct PathAnnounce {
    pub ttl: u32,
}

pub struct AnnState {
    to_send: Vec<Rc<Announce>>,
    got: Vec<Rc<Announce>>,
    seen: HashSet<u64>,
}

impl LocalAlgorithm for PathAnnounce {
    type Input = Vec<Announce>;
    type State = AnnState;
    type Msg = (Rc<Announce>, u32);
    type Output = Vec<Announce>;

    fn init(&self, _ctx: &NodeCtx, input: &Vec<Announce>) -> AnnState {
        AnnState {
            to_send: input.iter().cloned().map(Rc::new).collect(),
            got: Vec::new(),
            seen: HashSet::new(),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut AnnState,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> Action<Self::Msg, Self::Output> {
        let mut sends: Vec<(usize, Self::Msg)> = Vec::new();
        for (_, (a, ttl)) in inbox {
            if st.seen.insert(a.vid) {
                if a.members.contains(&ctx.id) {
                    st.got.push(a.clone());
                }
                if *ttl > 0 {
                    for p in 0..ctx.degree {
                        sends.push((p, (a.clone(), ttl - 1)));
                    }
                }
            }
        }
        if round == 0 {
            for a in st.to_send.drain(..) {
                st.seen.insert(a.vid);
                if a.members.contains(&ctx.id) {
                    st.got.push(a.clone());
                }
                for p in 0..ctx.degree {
                    sends.push((p, (a.clone(), self.ttl)));
                }
            }
        }
        let end = self.ttl as u64 + 1;
        if round >= end {
            let mut out: Vec<Announce> = st.got.iter().map(|a| (**a).clone()).collect();
            out.sort_by_key(|a| a.vid);
            return Action::Halt(out);
        }
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake: Wake::At(end.max(round + 1)),
        }
    }
}

// ---------------------------------------------------------------------------
// M3: residual component coloring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ResidIn {
    pub covered: bool,
    pub port_ids: Vec<u64>,
    pub q: u64,
    pub delta: u64,
}

#[derive(Debug, Clone)]
pub enum ResidMsg {
    Cov(bool),
    Rec(u64, Rc<Vec<u64>>, u32),
}

pub struct ResidState {
    nbr_covered: Vec<Option<bool>>,
    comp: HashMap<u64, Rc<Vec<u64>>>,
    input: ResidIn,
}

pub struct ResidColor {
    pub q: u64,
}

impl ResidColor {
    fn end(&self) -> u64 {
        2 * self.q + 5
    }
}

/// Canonical fractional coloring of a residual component: the canonical
/// proper Δ-coloring lifted by q when one exists, otherwise (tiny components
/// such as odd cycles when Δ = 2, or a K2 when Δ = 1) the lexicographically
/// least direct set coloring.
pub fn residual_sets(
    comp_ids: &[u64],
    comp: &HashMap<u64, Rc<Vec<u64>>>,
    q: u64,
    delta: u64,
) -> HashMap<u64, Vec<u64>> {
    let index: HashMap<u64, usize> = comp_ids.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut edges = Vec::new();
    for (i, id) in comp_ids.iter().enumerate() {
        if let Some(rec) = comp.get(id) {
            for w in rec.iter() {
                if let Some(&j) = index.get(w) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    let g = Graph::new(comp_ids.len(), &edges).expect("residual component graph");
    let p = q * delta + 1;
    let mut out = HashMap::new();
    if let Some(proper) = central_component_coloring(&g, delta) {
        for (i, id) in comp_ids.iter().enumerate() {
            let c = proper[i];
            out.insert(*id, (c * q..(c + 1) * q).collect());
        }
        return out;
    }
    let subsets = crate::coloring::q_subsets(p, q);
    let mut chosen: Vec<Option<u128>> = vec![None; comp_ids.len()];
    fn bt(v: usize, g: &Graph, subsets: &[u128], chosen: &mut Vec<Option<u128>>) -> bool {
        if v == g.n() {
            return true;
        }
        for &m in subsets {
            if g.neighbors(v).iter().all(|&w| chosen[w].map_or(true, |cm| cm & m == 0)) {
                chosen[v] = Some(m);
                if bt(v + 1, g, subsets, chosen) {
                    return true;
                }
                chosen[v] = None;
            }
        }
        false
    }
    assert!(bt(0, &g, &subsets, &mut chosen), "residual component admits no (qΔ+1:q) coloring");
    for (i, id) in comp_ids.iter().enumerate() {
        out.insert(*id, crate::coloring::mask_to_set(chosen[i].unwrap()));
    }
    out
}

impl LocalAlgorithm for ResidColor {
    type Input = ResidIn;
    type State = ResidState;
    type Msg = ResidMsg;
    type Output = Option<Vec<u64>>;

    fn init(&self, ctx: &NodeCtx, input: &ResidIn) -> ResidState {
        ResidState {
            nbr_covered: vec![None; ctx.degree],
            comp: HashMap::new(),
            input: input.clone(),
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut ResidState,
        round: u64,
        inbox: &[(usize, ResidMsg)],
    ) -> Action<ResidMsg, Option<Vec<u64>>> {
        let mut sends: Vec<(usize, ResidMsg)> = Vec::new();
        for (p, m) in inbox {
            match m {
                ResidMsg::Cov(c) => st.nbr_covered[*p] = Some(*c),
                ResidMsg::Rec(id, rec, ttl) => {
                    if !st.comp.contains_key(id) {
                        st.comp.insert(*id, rec.clone());
                        if *ttl > 0 {
                            for p2 in 0..ctx.degree {
                                if st.nbr_covered[p2] == Some(false) {
                                    sends.push((p2, ResidMsg::Rec(*id, rec.clone(), ttl - 1)));
                                }
                            }
                        }
                    }
                }
            }
        }
        if round == 0 {
            for p in 0..ctx.degree {
                sends.push((p, ResidMsg::Cov(st.input.covered)));
            }
        }
        if round == 1 && !st.input.covered {
            let resid: Vec<usize> =
                (0..ctx.degree).filter(|&p| st.nbr_covered[p] == Some(false)).collect();
            let rec = Rc::new(resid.iter().map(|&p| st.input.port_ids[p]).collect::<Vec<u64>>());
            st.comp.insert(ctx.id, rec.clone());
            let ttl = (2 * self.q + 1) as u32;
            for &p in &resid {
                sends.push((p, ResidMsg::Rec(ctx.id, rec.clone(), ttl)));
            }
        }
        if round >= self.end() {
            if st.input.covered {
                return Action::Halt(None);
            }
            let mut ids: Vec<u64> = st.comp.keys().copied().collect();
            ids.sort_unstable();
            let sets = residual_sets(&ids, &st.comp, st.input.q, st.input.delta);
            return Action::Halt(Some(sets[&ctx.id].clone()));
        }
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake: Wake::At(if round == 0 { 1 } else { self.end() }.max(round + 1)),
        }
    }
}

// ---------------------------------------------------------------------------
// M4a: H2 adjacency discovery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct H2DiscIn {
    /// my selected path, if covered
    pub path: Option<Announce>,
    pub port_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub enum H2DiscMsg {
    MyVid(u64),
    /// (member id, adjacent vids), relayed along the path
    Report(Rc<(u64, Vec<u64>)>, u32),
}

pub struct H2DiscState {
    input: H2DiscIn,
    adj: HashSet<u64>,
    reports: HashMap<u64, Vec<u64>>,
}

/// Every covered vertex announces its path vid to its neighbors; members
/// relay what they hear to the host (minimum-id member) along the path, so
/// the host learns the vids of the paths adjacent to its own.
pub struct H2Discover {
    pub q: u64,
}

impl H2Discover {
    fn end(&self) -> u64 {
        2 * self.q + 4
    }
}

impl LocalAlgorithm for H2Discover {
    type Input = H2DiscIn;
    type State = H2DiscState;
    type Msg = H2DiscMsg;
    type Output = Vec<u64>;

    fn init(&self, _ctx: &NodeCtx, input: &H2DiscIn) -> H2DiscState {
        H2DiscState { input: input.clone(), adj: HashSet::new(), reports: HashMap::new() }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut H2DiscState,
        round: u64,
        inbox: &[(usize, H2DiscMsg)],
    ) -> Action<H2DiscMsg, Vec<u64>> {
        let mut sends: Vec<(usize, H2DiscMsg)> = Vec::new();
        let path_ports: Vec<usize> = match &st.input.path {
            Some(a) => (0..st.input.port_ids.len())
                .filter(|&p| a.members.contains(&st.input.port_ids[p]))
                .collect(),
            None => Vec::new(),
        };
        let my_vid = st.input.path.as_ref().map(|a| a.vid);
        for (_, m) in inbox {
            match m {
                H2DiscMsg::MyVid(v) => {
                    if my_vid.is_some() && Some(*v) != my_vid {
                        st.adj.insert(*v);
                    }
                }
                H2DiscMsg::Report(r, ttl) => {
                    if !st.reports.contains_key(&r.0) {
                        st.reports.insert(r.0, r.1.clone());
                        if *ttl > 0 {
                            for &p in &path_ports {
                                sends.push((p, H2DiscMsg::Report(r.clone(), ttl - 1)));
                            }
                        }
                    }
                }
            }
        }
        if round == 0 {
            if let Some(v) = my_vid {
                for p in 0..ctx.degree {
                    sends.push((p, H2DiscMsg::MyVid(v)));
                }
            }
        }
        if round == 2 && my_vid.is_some() {
            let mut adj: Vec<u64> = st.adj.iter().copied().collect();
            adj.sort_unstable();
            let r = Rc::new((ctx.id, adj.clone()));
            st.reports.insert(ctx.id, adj);
            for &p in &path_ports {
                sends.push((p, H2DiscMsg::Report(r.clone(), 2 * self.q as u32)));
            }
        }
        if round >= self.end() {
            let out = match &st.input.path {
                Some(a) if a.members.iter().min() == Some(&ctx.id) => {
                    let mut all: HashSet<u64> = HashSet::new();
                    for m in &a.members {
                        all.extend(st.reports.get(m).expect("member report").iter().copied());
                    }
                    let mut v: Vec<u64> = all.into_iter().collect();
                    v.sort_unstable();
                    v
                }
                _ => Vec::new(),
            };
            return Action::Halt(out);
        }
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake: Wake::At(if round < 2 { 2 } else { self.end() }.max(round + 1)),
        }
    }
}

// ---------------------------------------------------------------------------
// M5: sequential extension over the H2 color classes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum M5Role {
    /// already colored (residual), set in hand
    Resid(Vec<u64>),
    Path { vid: u64, members: Vec<u64>, class: u64 },
}

#[derive(Debug, Clone)]
pub struct M5In {
    pub role: M5Role,
    pub port_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub enum M5Msg {
    Colors(Rc<Vec<u64>>),
    /// (member id, forbidden colors), relayed along the path
    Report(Rc<(u64, Vec<u64>)>, u32),
    Assign(Rc<Vec<(u64, Vec<u64>)>>, u32),
}

pub struct M5State {
    input: M5In,
    port_colors: Vec<Option<Rc<Vec<u64>>>>,
    reports: HashMap<u64, Vec<u64>>,
    assign: Option<Rc<Vec<(u64, Vec<u64>)>>>,
    my_set: Option<Vec<u64>>,
}

pub struct ExtendAlg {
    pub q: u64,
    pub delta: u64,
    pub classes: u64,
}

impl ExtendAlg {
    /// window length per class
    pub fn window(&self) -> u64 {
        4 * self.q + 6
    }
    fn base(&self, c: u64) -> u64 {
        2 + c * self.window()
    }
    pub fn total_rounds(&self) -> u64 {
        2 + self.classes * self.window()
    }
}

impl LocalAlgorithm for ExtendAlg {
    type Input = M5In;
    type State = M5State;
    type Msg = M5Msg;
    type Output = Vec<u64>;

    fn init(&self, ctx: &NodeCtx, input: &M5In) -> M5State {
        M5State {
            input: input.clone(),
            port_colors: vec![None; ctx.degree],
            reports: HashMap::new(),
            assign: None,
            my_set: None,
        }
    }

    fn step(
        &self,
        ctx: &NodeCtx,
        st: &mut M5State,
        round: u64,
        inbox: &[(usize, M5Msg)],
    ) -> Action<M5Msg, Vec<u64>> {
        let mut sends: Vec<(usize, M5Msg)> = Vec::new();
        let (path_ports, members, class): (Vec<usize>, Vec<u64>, u64) = match &st.input.role {
            M5Role::Path { members, class, .. } => (
                (0..st.input.port_ids.len())
                    .filter(|&p| members.contains(&st.input.port_ids[p]))
                    .collect(),
                members.clone(),
                *class,
            ),
            M5Role::Resid(_) => (Vec::new(), Vec::new(), 0),
        };
        for (p, m) in inbox {
            match m {
                M5Msg::Colors(set) => st.port_colors[*p] = Some(set.clone()),
                M5Msg::Report(r, ttl) => {
                    if !st.reports.contains_key(&r.0) {
                        st.reports.insert(r.0, r.1.clone());
                        if *ttl > 0 {
                            for &fp in &path_ports {
                                sends.push((fp, M5Msg::Report(r.clone(), ttl - 1)));
                            }
                        }
                    }
                }
                M5Msg::Assign(a, ttl) => {
                    if st.assign.is_none() {
                        st.assign = Some(a.clone());
                        if *ttl > 0 {
                            for &fp in &path_ports {
                                sends.push((fp, M5Msg::Assign(a.clone(), ttl - 1)));
                            }
                        }
                    }
                }
            }
        }
        if let M5Role::Resid(set) = &st.input.role {
            let set = set.clone();
            if round == 0 {
                let rc = Rc::new(set);
                for p in 0..ctx.degree {
                    sends.push((p, M5Msg::Colors(rc.clone())));
                }
                return Action::Continue { outbox: Outbox::PerPort(sends), wake: Wake::At(1) };
            }
            return Action::Halt(set);
        }
        let base = self.base(class);
        if round == base {
            // forbidden colors from already-colored neighbors outside my path
            let forb: HashSet<u64> = (0..ctx.degree)
                .filter(|&p| !members.contains(&st.input.port_ids[p]))
                .filter_map(|p| st.port_colors[p].as_deref())
                .flatten()
                .copied()
                .collect();
            let bound = self.q
                * if path_ports.len() >= 2 {
                    self.delta.saturating_sub(2)
                } else {
                    self.delta.saturating_sub(1)
                };
            assert!(forb.len() as u64 <= bound, "forbidden colors exceed the list-size bound");
            let mut forb: Vec<u64> = forb.into_iter().collect();
            forb.sort_unstable();
            let r = Rc::new((ctx.id, forb.clone()));
            st.reports.insert(ctx.id, forb);
            for &p in &path_ports {
                sends.push((p, M5Msg::Report(r.clone(), 2 * self.q as u32)));
            }
        }
        if round == base + 2 * self.q + 1 && members.iter().min() == Some(&ctx.id) {
            // host: lists in path order, exact list q-coloring
            let p_total = self.q * self.delta + 1;
            let lists: Vec<Vec<u64>> = members
                .iter()
                .map(|m| {
                    let forb = st.reports.get(m).expect("member report");
                    (0..p_total).filter(|c| !forb.contains(c)).collect()
                })
                .collect();
            let sets =
                path_list_qcoloring(&lists, self.q).expect("extension lists are large enough");
            let a = Rc::new(members.iter().copied().zip(sets).collect::<Vec<_>>());
            st.assign = Some(a.clone());
            for &p in &path_ports {
                sends.push((p, M5Msg::Assign(a.clone(), 2 * self.q as u32)));
            }
        }
        if round == base + 4 * self.q + 3 {
            let a = st.assign.as_ref().expect("assignment delivered");
            let mine = a.iter().find(|(m, _)| *m == ctx.id).unwrap().1.clone();
            let rc = Rc::new(mine.clone());
            for p in 0..ctx.degree {
                sends.push((p, M5Msg::Colors(rc.clone())));
            }
            st.my_set = Some(mine);
        }
        if round >= base + 4 * self.q + 5 {
            return Action::Halt(st.my_set.take().expect("set assigned"));
        }
        let next = [base, base + 2 * self.q + 1, base + 4 * self.q + 3, base + 4 * self.q + 5]
            .into_iter()
            .find(|&r| r > round)
            .unwrap();
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake: Wake::At(next),
        }
    }
}

// ---------------------------------------------------------------------------
// The full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct MaxdegResult {
    pub coloring: SetColoring,
    pub trace: RoundTrace,
    /// number of paths in the disjoint cover
    pub cover_size: usize,
    pub h2_classes: u64,
}

fn merge_traces(traces: &[&RoundTrace], bits: u64) -> RoundTrace {
    let prior: u64 = traces[..traces.len() - 1].iter().map(|t| t.rounds).sum();
    let last = traces[traces.len() - 1];
    RoundTrace {
        rounds: prior + last.rounds,
        halt_rounds: last.halt_rounds.iter().map(|r| r + prior).collect(),
        max_message_bytes: traces.iter().map(|t| t.max_message_bytes).max().unwrap_or(0),
        output_bits_per_vertex: Some(bits),
    }
}

pub fn run_maxdeg(
    g: &Graph,
    ids: &IdAssignment,
    q: u64,
    delta: u64,
    cfg: &RunConfig,
) -> Result<MaxdegResult, MaxdegError> {
    assert!(q >= 1 && delta >= 1);
    let p_total = q * delta + 1;
    assert!(p_total <= 128, "palette must fit the subset machinery");
    let n = g.n();
    let t = (2 * q + 1) as usize;
    for v in 0..n {
        let d = g.neighbors(v).len();
        if d as u64 > delta {
            return Err(MaxdegError::DegreeExceeded { vertex: v, found: d, delta });
        }
    }

    let timing = std::env::var("FRACOLOR_PHASE_TIMING").is_ok();
    let mut tick = std::time::Instant::now();
    let mut lap = |label: &str| {
        if timing {
            eprintln!("[maxdeg] {label}: {:?}", tick.elapsed());
        }
        tick = std::time::Instant::now();
    };

    // M1: gather balls
    let radius = (6 * q + 2) as u32;
    let alg1 = BallGather { radius };
    let mut cfg1 = cfg.clone();
    cfg1.round_cap = Some(radius as u64 + 4);
    let res1 = run_algorithm(g, ids, &alg1, &vec![(); n], &cfg1)?;
    for v in 0..n {
        let out = &res1.outputs[v];
        if out.port_ids.len() as u64 == delta
            && out
                .port_ids
                .iter()
                .enumerate()
                .all(|(i, &a)| out.port_ids[i + 1..].iter().all(|&b| out.ball.adjacent(a, b)))
        {
            return Err(MaxdegError::CliqueFound { vertex: v });
        }
    }

    lap("M1 gather");
    // Path enumeration: a pure function of each vertex's own ball, computed
    // once per vertex and shared between the phases that need it.
    let idx_of: IdMap<u64, usize> = (0..n).map(|v| (ids.id(v), v)).collect();
    let through: Vec<Vec<Rc<Vec<u64>>>> =
        (0..n).map(|v| induced_paths_through(&res1.outputs[v].ball, ids.id(v), t)).collect();
    // nothing after this point reads the gathered balls; keeping n of them
    // alive through the MIS phases roughly doubles peak memory
    let port_ids_all: Vec<Vec<u64>> = res1.outputs.iter().map(|o| o.port_ids.clone()).collect();
    let tr1 = res1.trace;
    drop(res1.outputs);
    let b_const = paths_per_host_bound(q, delta);
    let mut vid_of: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut hosted: Vec<Vec<Rc<Vec<u64>>>> = vec![Vec::new(); n];
    for v in 0..n {
        let id_v = ids.id(v);
        let mine: Vec<Rc<Vec<u64>>> =
            through[v].iter().filter(|p| p.iter().min() == Some(&id_v)).cloned().collect();
        assert!((mine.len() as u64) < b_const, "hosted-path bound violated");
        for (rank, p) in mine.iter().enumerate() {
            vid_of.insert((**p).clone(), id_v * b_const + rank as u64 + 1);
        }
        hosted[v] = mine;
    }

    lap("path enumeration");
    // M2: MIS over H1
    // resolve every path to its vid once; the adjacency pass below touches
    // hundreds of millions of (path, intersecting path) pairs
    let through_vids: Vec<Vec<u64>> =
        through.iter().map(|ps| ps.iter().map(|p| vid_of[&***p]).collect()).collect();
    let inputs2: Vec<Vec<HostedIn>> = (0..n)
        .map(|v| {
            hosted[v]
                .iter()
                .map(|a| {
                    let my_vid = vid_of[&***a];
                    let mut nbrs: IdSet<u64> = IdSet::default();
                    for m in a.iter() {
                        for &bv in &through_vids[idx_of[m]] {
                            if bv != my_vid {
                                nbrs.insert(bv);
                            }
                        }
                    }
                    let mut nv: Vec<u64> = nbrs.into_iter().collect();
                    nv.sort_unstable();
                    HostedIn { vid: my_vid, nbr_vids: nv }
                })
                .collect()
        })
        .collect();
    lap("H1 build");
    let delta_v = ((2 * q + 1) * (b_const - 1)).max(1);
    // no cleanup target: the MIS sweep runs directly over the post-iteration
    // palette. The sweep span grows, but its windows are almost all empty
    // (only joins broadcast), while a cleanup would trigger one whole-ball
    // flood per virtual node.
    let proto2 = ColorReduceMis::new(u64::MAX, delta_v, None, true, true);
    let alg2 = HostedCrm::new(proto2, (4 * q + 1) as u32);
    let mut cfg2 = cfg.clone();
    cfg2.round_cap = Some((alg2.total_vrounds + 2) * alg2.dilation());
    let res2 = run_algorithm(g, ids, &alg2, &inputs2, &cfg2)?;

    lap("M2 H1 MIS");
    // M2b: announce selected paths
    let ann_inputs: Vec<Vec<Announce>> = (0..n)
        .map(|v| {
            res2.outputs[v]
                .iter()
                .zip(&hosted[v])
                .filter(|((_, o), _)| o.in_mis)
                .map(|((vid, _), p)| Announce { vid: *vid, members: (**p).clone(), tag: 0 })
                .collect()
        })
        .collect();
    let alg2b = PathAnnounce { ttl: (2 * q) as u32 };
    let mut cfg_ann = cfg.clone();
    cfg_ann.round_cap = Some(2 * q + 4);
    let res2b = run_algorithm(g, ids, &alg2b, &ann_inputs, &cfg_ann)?;
    let my_path: Vec<Option<Announce>> = (0..n)
        .map(|v| {
            assert!(res2b.outputs[v].len() <= 1, "selected paths must be vertex-disjoint");
            res2b.outputs[v].first().cloned()
        })
        .collect();
    let cover_size = my_path.iter().flatten().map(|a| a.vid).collect::<HashSet<_>>().len();

    lap("M2b announce");
    // M3: residual coloring
    let alg3 = ResidColor { q };
    let inputs3: Vec<ResidIn> = (0..n)
        .map(|v| ResidIn {
            covered: my_path[v].is_some(),
            port_ids: port_ids_all[v].clone(),
            q,
            delta,
        })
        .collect();
    let mut cfg3 = cfg.clone();
    cfg3.round_cap = Some(2 * q + 8);
    let res3 = run_algorithm(g, ids, &alg3, &inputs3, &cfg3)?;

    lap("M3 residual");
    // M4: H2 adjacency discovery, coloring, color announcement
    let alg4a = H2Discover { q };
    let inputs4a: Vec<H2DiscIn> = (0..n)
        .map(|v| H2DiscIn { path: my_path[v].clone(), port_ids: port_ids_all[v].clone() })
        .collect();
    let mut cfg4a = cfg.clone();
    cfg4a.round_cap = Some(2 * q + 8);
    let res4a = run_algorithm(g, ids, &alg4a, &inputs4a, &cfg4a)?;

    let delta_2 = ((2 * q + 1) * delta).max(1);
    let proto4 = ColorReduceMis::new(u64::MAX, delta_2, Some(delta_2 + 1), false, true);
    let alg4b = HostedCrm::new(proto4, (4 * q + 2) as u32);
    let inputs4b: Vec<Vec<HostedIn>> = (0..n)
        .map(|v| match &my_path[v] {
            Some(a) if a.members.iter().min() == Some(&ids.id(v)) => {
                vec![HostedIn { vid: a.vid, nbr_vids: res4a.outputs[v].clone() }]
            }
            _ => Vec::new(),
        })
        .collect();
    let mut cfg4b = cfg.clone();
    cfg4b.round_cap = Some((alg4b.total_vrounds + 2) * alg4b.dilation());
    let res4b = run_algorithm(g, ids, &alg4b, &inputs4b, &cfg4b)?;

    let ann4: Vec<Vec<Announce>> = (0..n)
        .map(|v| {
            res4b.outputs[v]
                .iter()
                .map(|(vid, o)| Announce {
                    vid: *vid,
                    members: my_path[v].as_ref().unwrap().members.clone(),
                    tag: o.color,
                })
                .collect()
        })
        .collect();
    let alg4c = PathAnnounce { ttl: (2 * q) as u32 };
    let res4c = run_algorithm(g, ids, &alg4c, &ann4, &cfg_ann)?;

    lap("M4 H2 coloring");
    // M5: sequential extension over the H2 classes
    let classes = delta_2 + 1;
    let inputs5: Vec<M5In> = (0..n)
        .map(|v| {
            let role = match &my_path[v] {
                Some(a) => {
                    let got = res4c.outputs[v]
                        .iter()
                        .find(|x| x.vid == a.vid)
                        .expect("path color announced");
                    M5Role::Path { vid: a.vid, members: a.members.clone(), class: got.tag }
                }
                None => M5Role::Resid(res3.outputs[v].clone().expect("residual vertex colored")),
            };
            M5In { role, port_ids: port_ids_all[v].clone() }
        })
        .collect();
    let alg5 = ExtendAlg { q, delta, classes };
    let mut cfg5 = cfg.clone();
    cfg5.round_cap = Some(alg5.total_rounds() + 2);
    let res5 = run_algorithm(g, ids, &alg5, &inputs5, &cfg5)?;

    lap("M5 extension");
    let bits = q * (64 - p_total.leading_zeros() as u64);
    let trace = merge_traces(
        &[
            &tr1,
            &res2.trace,
            &res2b.trace,
            &res3.trace,
            &res4a.trace,
            &res4b.trace,
            &res4c.trace,
            &res5.trace,
        ],
        bits,
    );
    Ok(MaxdegResult {
        coloring: SetColoring { p: p_total, q, colors: res5.outputs },
        trace,
        cover_size,
        h2_classes: classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring::{verify_set_coloring, ColoringVerdict};
    use crate::generators::gen_bipartite_cubic;
    use crate::graph::{complete_graph, cycle_graph, path_graph, petersen};
    use crate::localsim::{assign_ids, IdScheme};

    fn check(g: &Graph, q: u64, delta: u64, seed: u64) -> MaxdegResult {
        let ids = assign_ids(g, IdScheme::Permutation, seed);
        let res = run_maxdeg(g, &ids, q, delta, &RunConfig::default()).expect("run failed");
        assert_eq!(res.coloring.p, q * delta + 1);
        assert_eq!(
            verify_set_coloring(g, &res.coloring),
            ColoringVerdict::Valid,
            "q={q} delta={delta} seed={seed}"
        );
        res
    }

    #[test]
    fn petersen_all_q() {
        for q in 1..=3u64 {
            check(&petersen(), q, 3, q);
        }
    }

    #[test]
    fn random_cubic() {
        for seed in 0..4u64 {
            if let Ok(gf) = gen_bipartite_cubic(12, seed) {
                for q in [1, 2] {
                    check(&gf.graph, q, 3, seed);
                }
            }
        }
    }

    #[test]
    fn paths_cycles_low_degree() {
        check(&path_graph(12), 1, 2, 0);
        check(&cycle_graph(9), 1, 2, 0); // odd cycle, Δ=2: residual fallback path
        check(&cycle_graph(4), 1, 2, 0);
        check(&path_graph(2), 1, 2, 0);
        check(&path_graph(1), 1, 1, 0);
    }

    #[test]
    fn clique_is_detected() {
        let g = complete_graph(4);
        let ids = assign_ids(&g, IdScheme::Permutation, 0);
        assert!(matches!(
            run_maxdeg(&g, &ids, 1, 3, &RunConfig::default()),
            Err(MaxdegError::CliqueFound { .. })
        ));
    }

    #[test]
    fn degree_bound_is_checked() {
        let g = complete_graph(5);
        let ids = assign_ids(&g, IdScheme::Permutation, 0);
        assert!(matches!(
            run_maxdeg(&g, &ids, 1, 3, &RunConfig::default()),
            Err(MaxdegError::DegreeExceeded { .. })
        ));
    }

    #[test]
    fn rounds_are_size_independent() {
        let a = check(&cycle_graph(16), 1, 3, 1);
        let b = check(&cycle_graph(256), 1, 3, 1);
        assert_eq!(a.trace.rounds, b.trace.rounds);
    }

    #[test]
    fn path_enumeration_matches_brute_force() {
        let g = petersen();
        let ids = assign_ids(&g, IdScheme::Permutation, 3);
        let mut recs: Vec<(u64, Rc<Vec<u64>>)> = (0..g.n())
            .map(|v| {
                (ids.id(v), Rc::new(g.neighbors(v).iter().map(|&w| ids.id(w)).collect::<Vec<u64>>()))
            })
            .collect();
        recs.sort_unstable_by_key(|e| e.0);
        let ball = BallGraph { recs };
        let got = induced_paths_through(&ball, ids.id(0), 3);
        // girth 5: every 3-vertex path is induced. Through a fixed cubic
        // vertex: 3 with it in the middle, 3*2 with it as an endpoint.
        assert_eq!(got.len(), 3 + 6);
        assert!(got.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
    }
}

