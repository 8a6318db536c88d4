//! Symmetry-breaking primitives shared by the coloring pipelines: the
//! polynomial one-round color reduction with its public iteration schedule,
//! maximal independent sets via color sweeps (also at distance k through
//! overlays), exact list coloring of paths by subset DP, and canonical
//! centralized colorings of small components.

use crate::localsim::{IdMap, IdSet};

use crate::graph::Graph;
use crate::localsim::{
    emulate_overlay, run_algorithm, DirectProto, IdAssignment, LocalAlgorithm, OverlayGraph,
    RoundTrace, RunConfig, SimError, VAction, VNodeCtx, VWake, VirtualProto,
};

// ---------------------------------------------------------------------------
// Polynomial color reduction schedules
// ---------------------------------------------------------------------------

fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn next_prime(mut x: u64) -> u64 {
    loop {
        if is_prime(x) {
            return x;
        }
        x += 1;
    }
}

/// Smallest x with x^r >= m.
fn kth_root_ceil(m: u64, r: u32) -> u64 {
    let mut lo = 1u64;
    let mut hi = m.max(1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let mut pow = 1u128;
        let mut ok = false;
        for _ in 0..r {
            pow *= mid as u128;
            if pow >= m as u128 {
                ok = true;
                break;
            }
        }
        if ok {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// The best one-round reduction step for a proper m-coloring at maximum
/// degree `delta`: vertices become degree-k polynomials over F_p with
/// p^(k+1) >= m and p >= k*delta + 1; the new palette is p^2. Returns the
/// pair (p, k) minimizing p^2 (ties to the smaller k), or None when no
/// choice shrinks the palette.
pub fn linial_best_params(m: u64, delta: u64) -> Option<(u64, u32)> {
    let mut best: Option<(u64, u32)> = None;
    for k in 1..=64u32 {
        let floor = k as u64 * delta + 1;
        if let Some((bp, _)) = best {
            if floor >= bp {
                break;
            }
        }
        let p = next_prime(floor.max(kth_root_ceil(m, k + 1)));
        if best.map_or(true, |(bp, _)| p < bp) {
            best = Some((p, k));
        }
    }
    let (p, k) = best?;
    if (p as u128) * (p as u128) < m as u128 {
        Some((p, k))
    } else {
        None
    }
}

/// Palette trajectory m0 -> p^2 -> ... down to the fixed point where no step
/// shrinks the palette further.
pub fn linial_palette_chain(m0: u64, delta: u64) -> Vec<u64> {
    let mut chain = vec![m0];
    let mut m = m0;
    while let Some((p, _)) = linial_best_params(m, delta) {
        m = p * p;
        chain.push(m);
    }
    chain
}

/// One vertex's reduction step: its color in [0, m) read as a degree-k
/// polynomial over F_p (base-p digits); the new color is a*p + g(a) for the
/// smallest evaluation point a avoided by every neighbor's polynomial.
pub fn linial_new_color(color: u64, neighbor_colors: &[u64], p: u64, k: u32) -> u64 {
    // evaluate sum_i digit_i(c) * a^i over F_p, extracting base-p digits of
    // c on the fly (low to high) instead of materializing them
    let eval = |c: u64, a: u64| -> u64 {
        let mut c = c;
        let mut acc = 0u64;
        let mut pow = 1u64;
        for _ in 0..=k {
            acc = (acc + (c % p) * pow) % p;
            pow = (pow * a) % p;
            c /= p;
        }
        acc
    };
    for a in 0..p {
        let val = eval(color, a);
        if neighbor_colors.iter().all(|&c| eval(c, a) != val) {
            return a * p + val;
        }
    }
    unreachable!("a free evaluation point exists whenever p > k * degree");
}

// ---------------------------------------------------------------------------
// The color-reduce / MIS protocol
// ---------------------------------------------------------------------------

/// A deterministic protocol over any (virtual) neighborhood structure:
/// starting from the identifiers as a proper coloring, iterate the
/// polynomial reduction to a constant palette K, optionally shed one color
/// class per round down to `target`, and optionally sweep the color classes
/// in order to extract a maximal independent set.
///
/// The full schedule (iteration count, per-step parameters, cleanup and
/// sweep windows) is public: it depends only on the palette bound and the
/// degree bound, never on the instance. With `capped`, the iteration
/// schedule is derived from the full u64 identifier range, so it is
/// identical for every instance size.
#[derive(Debug, Clone)]
pub struct ColorReduceMis {
    /// (m_from, p, k) per iteration round.
    steps: Vec<(u64, u64, u32)>,
    final_k: u64,
    delta_bound: u64,
    target: Option<u64>,
    mis: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrmMsg {
    Color(u64),
    Joined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrmOut {
    pub color: u64,
    pub in_mis: bool,
}

pub struct CrmState {
    color: u64,
    // neighbor colors already known at init (slot-addressed states start
    // from the neighbor vids), so the round-0 announcement is skipped
    preset: bool,
    // latest color per neighbor, split into an index map and a dense value
    // vector so the per-step palette scan avoids walking a hash map
    nbr_idx: IdMap<u64, u32>,
    nbr_colors: Vec<u64>,
    heard_join: bool,
    joined: bool,
}

impl ColorReduceMis {
    pub fn new(id_range: u64, delta_bound: u64, target: Option<u64>, mis: bool, capped: bool) -> Self {
        if let Some(t) = target {
            assert!(t > delta_bound, "cleanup target must exceed the degree bound");
        }
        let m0 = if capped { u64::MAX } else { id_range.max(2) };
        let chain = linial_palette_chain(m0, delta_bound);
        let mut steps = Vec::new();
        for w in chain.windows(2) {
            let (p, k) = linial_best_params(w[0], delta_bound).expect("chain step");
            debug_assert_eq!(p * p, w[1]);
            steps.push((w[0], p, k));
        }
        ColorReduceMis {
            steps,
            final_k: *chain.last().unwrap(),
            delta_bound,
            target,
            mis,
        }
    }

    pub fn t_iter(&self) -> u64 {
        self.steps.len() as u64
    }

    fn cleanup_span(&self) -> u64 {
        self.target.map_or(0, |t| self.final_k.saturating_sub(t))
    }

    /// Palette after cleanup.
    pub fn final_palette(&self) -> u64 {
        self.target.map_or(self.final_k, |t| self.final_k.min(t))
    }

    fn sweep_base(&self) -> u64 {
        self.t_iter() + self.cleanup_span()
    }

    /// Total virtual rounds of the public schedule.
    pub fn schedule_len(&self) -> u64 {
        self.sweep_base() + if self.mis { self.final_palette() } else { 0 }
    }

    /// The round at which a vertex holding color c after the iterations gets
    /// recolored below the target (if it must).
    fn cleanup_round(&self, c: u64) -> Option<u64> {
        let t = self.target?;
        if c < t {
            None
        } else {
            Some(self.t_iter() + 1 + (self.final_k - 1 - c))
        }
    }

    fn sweep_round(&self, c: u64) -> u64 {
        self.sweep_base() + 1 + c
    }

    /// Initialize a state whose neighbor set is known up front: color slots
    /// are prefilled with the neighbor identifiers (their initial colors) and
    /// addressed by position (see `absorb_slot`), so no per-neighbor index
    /// map is kept and no round-0 announcement is needed.
    pub fn init_slotted(&self, node: &VNodeCtx, nbr_vids: &[u64]) -> CrmState {
        assert!(
            nbr_vids.len() as u64 <= self.delta_bound,
            "degree bound {} violated",
            self.delta_bound
        );
        debug_assert_eq!(node.vdegree, nbr_vids.len());
        CrmState {
            color: node.vid,
            preset: true,
            nbr_idx: IdMap::default(),
            nbr_colors: nbr_vids.to_vec(),
            heard_join: false,
            joined: false,
        }
    }

    /// Fold one incoming message into a slot-addressed state.
    pub fn absorb_slot(&self, st: &mut CrmState, slot: usize, m: &CrmMsg) {
        match m {
            CrmMsg::Color(c) => st.nbr_colors[slot] = *c,
            CrmMsg::Joined => st.heard_join = true,
        }
    }

    /// Fold one incoming message into the state. Within a virtual round a
    /// neighbor sends at most one message, so the fold is order-independent;
    /// hosts apply it on arrival instead of queueing the inbox.
    pub fn absorb(&self, st: &mut CrmState, vid: u64, m: &CrmMsg) {
        match m {
            CrmMsg::Color(c) => match st.nbr_idx.entry(vid) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    st.nbr_colors[*e.get() as usize] = *c;
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(st.nbr_colors.len() as u32);
                    st.nbr_colors.push(*c);
                }
            },
            CrmMsg::Joined => st.heard_join = true,
        }
    }

    /// Next round (strictly after `round`) at which this vertex must act.
    fn next_action(&self, round: u64, color: u64) -> Option<u64> {
        let mut agenda: Vec<u64> = Vec::new();
        if round < self.t_iter() {
            agenda.push(round + 1); // every iteration round
        } else {
            if let Some(r) = self.cleanup_round(color) {
                if r > round {
                    agenda.push(r);
                }
            }
            if self.mis {
                let r = self.sweep_round(color);
                if r > round {
                    agenda.push(r);
                }
            }
        }
        agenda.into_iter().min()
    }
}

impl VirtualProto for ColorReduceMis {
    type Msg = CrmMsg;
    type Out = CrmOut;
    type State = CrmState;

    fn init(&self, node: &VNodeCtx) -> CrmState {
        CrmState {
            color: node.vid,
            preset: false,
            nbr_idx: IdMap::default(),
            nbr_colors: Vec::new(),
            heard_join: false,
            joined: false,
        }
    }

    fn step(
        &self,
        _node: &VNodeCtx,
        st: &mut CrmState,
        vround: u64,
        inbox: &[(u64, CrmMsg)],
    ) -> VAction<CrmMsg, CrmOut> {
        for (vid, m) in inbox {
            self.absorb(st, *vid, m);
        }
        assert!(
            st.nbr_colors.len() as u64 <= self.delta_bound,
            "degree bound {} violated",
            self.delta_bound
        );
        let mut broadcast = None;
        if vround == 0 {
            if !st.preset {
                broadcast = Some(CrmMsg::Color(st.color));
            }
        } else if vround <= self.t_iter() {
            let (m_from, p, k) = self.steps[vround as usize - 1];
            debug_assert!(st.color < m_from);
            let new = linial_new_color(st.color, &st.nbr_colors, p, k);
            if new != st.color {
                st.color = new;
                broadcast = Some(CrmMsg::Color(new));
            }
        } else if self.cleanup_round(st.color) == Some(vround) {
            let t = self.target.unwrap();
            let new = (0..t)
                .find(|c| !st.nbr_colors.contains(c))
                .expect("a free color below the target exists");
            st.color = new;
            broadcast = Some(CrmMsg::Color(new));
        } else if self.mis && st.joined {
            return VAction::Halt(CrmOut { color: st.color, in_mis: true });
        } else if self.mis && vround == self.sweep_round(st.color) {
            if st.heard_join {
                return VAction::Halt(CrmOut { color: st.color, in_mis: false });
            }
            // announce the join, halt next round once it is on the wire;
            // neighbors sweep at strictly later rounds, so the announcement
            // arrives before they decide
            st.joined = true;
            return VAction::Continue { broadcast: Some(CrmMsg::Joined), wake: VWake::At(vround + 1) };
        }
        match self.next_action(vround, st.color) {
            Some(r) => VAction::Continue { broadcast, wake: VWake::At(r) },
            None => {
                if self.mis {
                    VAction::Continue { broadcast, wake: VWake::OnMessage }
                } else if broadcast.is_some() {
                    // make sure the last recolor is delivered before halting:
                    // sends happen as part of this step, so halting now would
                    // drop them — broadcast first, halt next round
                    VAction::Continue { broadcast, wake: VWake::At(vround + 1) }
                } else {
                    VAction::Halt(CrmOut { color: st.color, in_mis: false })
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Wrappers
// ---------------------------------------------------------------------------

/// The runaway cap exists to catch bugs; when the caller didn't pin one,
/// size it from the protocol's public schedule rather than the generic 10n.
fn with_schedule_cap(cfg: &RunConfig, schedule: u64) -> RunConfig {
    let mut cfg = cfg.clone();
    if cfg.round_cap.is_none() {
        cfg.round_cap = Some(schedule + 16);
    }
    cfg
}

/// Iterated color reduction on the explicit graph from the identifiers down
/// to the fixed-point palette for the given degree bound. Returns colors,
/// the palette bound actually guaranteed, and the trace.
pub fn iterated_color_reduction(
    g: &Graph,
    ids: &IdAssignment,
    delta_bound: u64,
    cfg: &RunConfig,
) -> Result<(Vec<u64>, u64, RoundTrace), SimError> {
    let proto = ColorReduceMis::new(ids.id_range(), delta_bound, None, false, false);
    let palette = proto.final_palette();
    let cfg = with_schedule_cap(cfg, proto.schedule_len() + 2);
    let res = run_algorithm(g, ids, &DirectProto(proto), &vec![(); g.n()], &cfg)?;
    Ok((res.outputs.iter().map(|o| o.color).collect(), palette, res.trace))
}

/// Deterministic MIS on the explicit graph: color reduction to delta+1
/// classes, then a sweep joining classes in order.
pub fn mis_via_color_reduction(
    g: &Graph,
    ids: &IdAssignment,
    delta_bound: u64,
    cfg: &RunConfig,
) -> Result<(Vec<bool>, RoundTrace), SimError> {
    let proto = ColorReduceMis::new(ids.id_range(), delta_bound, Some(delta_bound + 1), true, false);
    let cfg = with_schedule_cap(cfg, proto.schedule_len() + 2);
    let res = run_algorithm(g, ids, &DirectProto(proto), &vec![(); g.n()], &cfg)?;
    Ok((res.outputs.iter().map(|o| o.in_mis).collect(), res.trace))
}

/// MIS of the k-th power of g, computed by emulating the protocol over the
/// power overlay (dilation k): selected vertices are pairwise more than k
/// apart and every vertex is within k of a selected one.
pub fn distance_k_mis(
    g: &Graph,
    ids: &IdAssignment,
    k: u32,
    cfg: &RunConfig,
) -> Result<(Vec<bool>, RoundTrace), SimError> {
    let overlay = OverlayGraph::power(g, k);
    let delta_bound = overlay.vadj.iter().map(Vec::len).max().unwrap_or(0) as u64;
    let delta_bound = delta_bound.max(1);
    // emulate_overlay assigns vid = id * 2 + rank + 1 for self-hosted nodes
    let vid_range = ids.id_range() * 2 + 2;
    let proto = ColorReduceMis::new(vid_range, delta_bound, Some(delta_bound + 1), true, false);
    let cfg = with_schedule_cap(cfg, (proto.schedule_len() + 3) * k as u64);
    let (vouts, trace) = emulate_overlay(g, ids, &overlay, proto, &cfg)?;
    let mut out = vec![false; g.n()];
    for e in vouts {
        out[e.vnode] = e.output.in_mis;
    }
    Ok((out, trace))
}

/// Centralized oracle: greedy MIS scanning color classes in order (ties by
/// vertex index); the reference the distributed sweep is checked against.
pub fn mis_from_coloring(g: &Graph, colors: &[u64]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by_key(|&v| (colors[v], v));
    let mut in_mis = vec![false; g.n()];
    let mut blocked = vec![false; g.n()];
    for v in order {
        if !blocked[v] {
            in_mis[v] = true;
            for &w in g.neighbors(v) {
                blocked[w] = true;
            }
        }
    }
    in_mis
}

pub fn is_independent(g: &Graph, sel: &[bool]) -> bool {
    g.edges().into_iter().all(|(u, v)| !(sel[u] && sel[v]))
}

pub fn is_maximal_independent(g: &Graph, sel: &[bool]) -> bool {
    is_independent(g, sel)
        && (0..g.n()).all(|v| sel[v] || g.neighbors(v).iter().any(|&w| sel[w]))
}

// ---------------------------------------------------------------------------
// Distance-k execution of a virtual protocol on marked subgraphs
// ---------------------------------------------------------------------------

/// Per-vertex input for `DistKProto`: whether this vertex participates, and
/// which ports belong to the subgraph the protocol runs on.
#[derive(Debug, Clone)]
pub struct DistKInput {
    pub active: bool,
    pub ports: Vec<usize>,
}

/// Runs a `VirtualProto` where the virtual neighbors of a vertex are the
/// subgraph vertices within distance k of it (along marked ports): each
/// virtual round is realized by k real rounds of TTL-k flooding. The whole
/// run lasts a fixed public number of virtual rounds, so every vertex also
/// serves as a relay until the schedule ends.
pub struct DistKProto<P: VirtualProto> {
    pub proto: P,
    pub k: u32,
    pub total_vrounds: u64,
}

#[derive(Debug, Clone)]
pub struct DistKMsg<M> {
    origin: u64,
    hops_left: u32,
    payload: M,
}

pub struct DistKState<P: VirtualProto> {
    inner: Option<P::State>,
    out: Option<P::Out>,
    ports: Vec<usize>,
    active: bool,
    vinbox: Vec<(u64, P::Msg)>,
    seen: IdSet<u64>,
    seen_window: u64,
    vwake: Option<u64>,
}

impl<P: VirtualProto> LocalAlgorithm for DistKProto<P> {
    type Input = DistKInput;
    type State = DistKState<P>;
    type Msg = DistKMsg<P::Msg>;
    type Output = Option<P::Out>;

    fn init(&self, ctx: &crate::localsim::NodeCtx, input: &DistKInput) -> Self::State {
        let inner = if input.active {
            let vctx = VNodeCtx { vid: ctx.id, vdegree: 0, seed: ctx.seed };
            Some(self.proto.init(&vctx))
        } else {
            None
        };
        DistKState {
            inner,
            out: None,
            ports: input.ports.clone(),
            active: input.active,
            vinbox: Vec::new(),
            seen: IdSet::default(),
            seen_window: 0,
            vwake: Some(0),
        }
    }

    fn step(
        &self,
        ctx: &crate::localsim::NodeCtx,
        st: &mut Self::State,
        round: u64,
        inbox: &[(usize, Self::Msg)],
    ) -> crate::localsim::Action<Self::Msg, Self::Output> {
        use crate::localsim::{Action, Outbox, Wake};
        let k = self.k as u64;
        let end = (self.total_vrounds + 1) * k;
        let mut sends: Vec<(usize, Self::Msg)> = Vec::new();
        // forward and deliver flood packets, deduplicated by origin within
        // each window; the set is keyed by the window so that pure relays
        // (which may sleep through boundary rounds) stay in sync
        let window = round.saturating_sub(1) / k;
        if window != st.seen_window {
            st.seen.clear();
            st.seen_window = window;
        }
        for (_, m) in inbox {
            if m.origin == ctx.id || !st.seen.insert(m.origin) {
                continue;
            }
            if st.active {
                st.vinbox.push((m.origin, m.payload.clone()));
            }
            if m.hops_left > 0 {
                for &p in &st.ports {
                    sends.push((
                        p,
                        DistKMsg { origin: m.origin, hops_left: m.hops_left - 1, payload: m.payload.clone() },
                    ));
                }
            }
        }
        // virtual round boundary
        if round % k == 0 {
            let vround = round / k;
            if let Some(inner) = st.inner.as_mut() {
                let due = st.vwake.map_or(false, |w| w <= vround) || !st.vinbox.is_empty();
                if due {
                    let vctx = VNodeCtx { vid: ctx.id, vdegree: 0, seed: ctx.seed };
                    let mut vinbox = std::mem::take(&mut st.vinbox);
                    vinbox.sort_by_key(|&(vid, _)| vid);
                    match self.proto.step(&vctx, inner, vround, &vinbox) {
                        VAction::Halt(o) => {
                            st.out = Some(o);
                            st.inner = None;
                            st.vwake = None;
                        }
                        VAction::Continue { broadcast, wake } => {
                            st.vwake = match wake {
                                VWake::OnMessage => None,
                                VWake::At(r) => Some(r),
                            };
                            if let Some(m) = broadcast {
                                for &p in &st.ports {
                                    sends.push((
                                        p,
                                        DistKMsg { origin: ctx.id, hops_left: self.k - 1, payload: m.clone() },
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        if round >= end {
            debug_assert!(st.inner.is_none(), "virtual schedule must have completed");
            return Action::Halt(st.out.take());
        }
        // wake at the next virtual boundary where this vnode acts, or only on
        // relay traffic once it halted
        let next_boundary = ((round / k) + 1) * k;
        let wake = match (&st.inner, st.vwake, st.vinbox.is_empty()) {
            (Some(_), _, false) => Wake::At(next_boundary),
            (Some(_), Some(w), true) => Wake::At((w * k).max(round + 1)),
            _ => Wake::At(end.max(round + 1)),
        };
        Action::Continue {
            outbox: if sends.is_empty() { Outbox::Silent } else { Outbox::PerPort(sends) },
            wake,
        }
    }

    fn message_bytes(m: &Self::Msg) -> usize {
        std::mem::size_of::<DistKMsg<P::Msg>>() + std::mem::size_of_val(&m.payload)
    }
}

/// Distance-k color-reduce/MIS over the marked subgraph, with an
/// instance-size-independent (capped) schedule. `delta_bound` is the degree
/// bound of the k-th power of the subgraph.
pub fn dist_k_crm(k: u32, delta_bound: u64, mis: bool) -> DistKProto<ColorReduceMis> {
    let proto = ColorReduceMis::new(u64::MAX, delta_bound, Some(delta_bound + 1), mis, true);
    let total = proto.schedule_len() + 1;
    DistKProto { proto, k, total_vrounds: total }
}

// ---------------------------------------------------------------------------
// One-round baseline
// ---------------------------------------------------------------------------

/// The trivial one-round independent set: join when the own identifier beats
/// every neighbor's. Independent but (far from) maximal — the baseline the
/// benchmark harness contrasts against.
pub struct LocalMinIs;

pub struct LocalMinState {
    best: bool,
}

impl LocalAlgorithm for LocalMinIs {
    type Input = ();
    type State = LocalMinState;
    type Msg = u64;
    type Output = bool;

    fn init(&self, _ctx: &crate::localsim::NodeCtx, _: &()) -> LocalMinState {
        LocalMinState { best: true }
    }

    fn step(
        &self,
        ctx: &crate::localsim::NodeCtx,
        st: &mut LocalMinState,
        round: u64,
        inbox: &[(usize, u64)],
    ) -> crate::localsim::Action<u64, bool> {
        use crate::localsim::{Action, Outbox, Wake};
        if round == 0 {
            if ctx.degree == 0 {
                return Action::Halt(true);
            }
            return Action::Continue { outbox: Outbox::Broadcast(ctx.id), wake: Wake::At(1) };
        }
        for &(_, other) in inbox {
            if other < ctx.id {
                st.best = false;
            }
        }
        Action::Halt(st.best)
    }
}

pub fn random_min_id_is(g: &Graph, ids: &IdAssignment, cfg: &RunConfig) -> Result<(Vec<bool>, RoundTrace), SimError> {
    let res = run_algorithm(g, ids, &LocalMinIs, &vec![(); g.n()], cfg)?;
    Ok((res.outputs, res.trace))
}

// ---------------------------------------------------------------------------
// Exact list q-coloring of paths
// ---------------------------------------------------------------------------

/// Assign each path vertex a q-subset of its list with adjacent subsets
/// disjoint, by subset DP along the path (backward feasibility, then a
/// forward lexicographically-least selection). Returns None when infeasible.
/// Colors must lie in [0, 128).
pub fn path_list_qcoloring(lists: &[Vec<u64>], q: u64) -> Option<Vec<Vec<u64>>> {
    let n = lists.len();
    if n == 0 {
        return Some(Vec::new());
    }
    // candidate q-subsets per vertex, lexicographic by sorted element list
    let mut cands: Vec<Vec<u128>> = Vec::with_capacity(n);
    for list in lists {
        let mut l = list.clone();
        l.sort_unstable();
        l.dedup();
        assert!(l.iter().all(|&c| c < 128), "color out of range");
        if (l.len() as u64) < q {
            return None;
        }
        cands.push(subsets_of(&l, q as usize));
    }
    // feas[i][j]: candidate j at vertex i extends to the end of the path
    let mut feas: Vec<Vec<bool>> = cands.iter().map(|c| vec![false; c.len()]).collect();
    for j in 0..cands[n - 1].len() {
        feas[n - 1][j] = true;
    }
    for i in (0..n - 1).rev() {
        for j in 0..cands[i].len() {
            feas[i][j] = cands[i + 1]
                .iter()
                .enumerate()
                .any(|(j2, &m2)| feas[i + 1][j2] && m2 & cands[i][j] == 0);
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut prev: u128 = 0;
    for i in 0..n {
        let j = (0..cands[i].len()).find(|&j| feas[i][j] && cands[i][j] & prev == 0)?;
        prev = cands[i][j];
        out.push(crate::coloring::mask_to_set(prev));
    }
    Some(out)
}

fn subsets_of(sorted: &[u64], q: usize) -> Vec<u128> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..q).collect();
    if q == 0 {
        return vec![0];
    }
    if q > sorted.len() {
        return out;
    }
    loop {
        out.push(idx.iter().fold(0u128, |m, &i| m | (1 << sorted[i])));
        let mut i = q;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] + (q - i) <= sorted.len() - 1 {
                idx[i] += 1;
                for j in i + 1..q {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical centralized colorings of small components
// ---------------------------------------------------------------------------

/// The lexicographically least proper coloring of g with colors in
/// [0, max_colors), vertices in index order, found by backtracking. Every
/// party that gathers the same labelled component computes the same answer.
pub fn central_component_coloring(g: &Graph, max_colors: u64) -> Option<Vec<u64>> {
    let n = g.n();
    let mut colors: Vec<Option<u64>> = vec![None; n];
    fn rec(g: &Graph, colors: &mut Vec<Option<u64>>, v: usize, max: u64) -> bool {
        if v == g.n() {
            return true;
        }
        'cand: for c in 0..max {
            for &w in g.neighbors(v) {
                if colors[w] == Some(c) {
                    continue 'cand;
                }
            }
            colors[v] = Some(c);
            if rec(g, colors, v + 1, max) {
                return true;
            }
            colors[v] = None;
        }
        false
    }
    if rec(g, &mut colors, 0, max_colors) {
        Some(colors.into_iter().map(Option::unwrap).collect())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, cycle_graph, path_graph, power_graph};
    use crate::localsim::{assign_ids, IdScheme};
    use rand::{Rng, SeedableRng};

    #[test]
    fn palette_chains_at_degree_three() {
        assert_eq!(linial_palette_chain(1 << 24, 3), vec![1 << 24, 289, 49]);
        assert_eq!(linial_palette_chain(1 << 48, 3), vec![1 << 48, 841, 121, 49]);
        // 49 is the fixed point for delta = 3
        assert_eq!(linial_palette_chain(49, 3), vec![49]);
        // chain length grows by at most 2 when the id range squares
        for delta in [3u64, 4, 8] {
            let mut m = 1u64 << 8;
            let mut prev = linial_palette_chain(m, delta).len();
            while m <= 1 << 31 {
                m = m.saturating_mul(m);
                let len = linial_palette_chain(m, delta).len();
                assert!(len <= prev + 2, "chain length jumped at m={m}");
                prev = len;
            }
        }
    }

    #[test]
    fn reduction_step_preserves_properness() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let delta = rng.gen_range(2..=5u64);
            let m = rng.gen_range(200..5000u64);
            let Some((p, k)) = linial_best_params(m, delta) else { continue };
            let mine = rng.gen_range(0..m);
            let mut others = Vec::new();
            while others.len() < delta as usize {
                let c = rng.gen_range(0..m);
                if c != mine && !others.contains(&c) {
                    others.push(c);
                }
            }
            let new_mine = linial_new_color(mine, &others, p, k);
            assert!(new_mine < p * p);
            for &o in &others {
                // symmetric view: the neighbor reduces against a set
                // containing my color
                let new_o = linial_new_color(o, &[mine], p, k);
                let _ = new_o;
                let their_new = linial_new_color(o, &{
                    let mut v: Vec<u64> = others.iter().copied().filter(|&x| x != o).collect();
                    v.push(mine);
                    v
                }, p, k);
                assert_ne!(new_mine, their_new, "collision after reduction step");
            }
        }
    }

    #[test]
    fn iterated_reduction_on_cycles() {
        for n in [10usize, 50, 200] {
            let g = cycle_graph(n);
            let ids = assign_ids(&g, IdScheme::RandomRange, 9);
            let (colors, palette, trace) =
                iterated_color_reduction(&g, &ids, 2, &RunConfig::default()).unwrap();
            for (u, v) in g.edges() {
                assert_ne!(colors[u], colors[v]);
            }
            assert!(colors.iter().all(|&c| c < palette));
            // schedule is O(log* n) iterations plus delivery slack
            assert!(trace.rounds <= 12, "rounds = {}", trace.rounds);
        }
    }

    #[test]
    fn reduction_rounds_stable_under_scaling() {
        // round count may grow by at most 2 when n squares
        let mut prev: Option<u64> = None;
        for n in [16usize, 256, 65536] {
            let g = cycle_graph(n);
            let ids = assign_ids(&g, IdScheme::Permutation, 3);
            let (_, _, trace) = iterated_color_reduction(&g, &ids, 2, &RunConfig::default()).unwrap();
            if let Some(p) = prev {
                assert!(trace.rounds <= p + 2, "rounds {} after {}", trace.rounds, p);
            }
            prev = Some(trace.rounds);
        }
    }

    #[test]
    fn mis_by_sweep_is_maximal() {
        for (g, delta) in [
            (cycle_graph(31), 2u64),
            (path_graph(40), 2),
            (crate::graph::petersen(), 3),
            (complete_graph(5), 4),
        ] {
            let ids = assign_ids(&g, IdScheme::RandomRange, 21);
            let (sel, _) = mis_via_color_reduction(&g, &ids, delta, &RunConfig::default()).unwrap();
            assert!(is_maximal_independent(&g, &sel));
        }
    }

    #[test]
    fn capped_schedule_is_size_independent() {
        let a = ColorReduceMis::new(100, 2, Some(3), true, true);
        let b = ColorReduceMis::new(1 << 40, 2, Some(3), true, true);
        assert_eq!(a.schedule_len(), b.schedule_len());
        assert_eq!(a.t_iter(), b.t_iter());
    }

    #[test]
    fn distance_k_mis_properties() {
        let g = cycle_graph(37);
        let ids = assign_ids(&g, IdScheme::Permutation, 5);
        for k in [2u32, 3, 5] {
            let (sel, _) = distance_k_mis(&g, &ids, k, &RunConfig::default()).unwrap();
            let pg = power_graph(&g, k);
            assert!(is_maximal_independent(&pg, &sel), "k = {k}");
        }
    }

    #[test]
    fn overlay_emulation_matches_explicit_power_run() {
        // run the identical protocol with identical vids on the explicit
        // power graph; outputs must agree vertex by vertex
        let g = path_graph(23);
        let ids = assign_ids(&g, IdScheme::RandomRange, 8);
        let k = 3u32;
        let (sel, _) = distance_k_mis(&g, &ids, k, &RunConfig::default()).unwrap();
        let pg = power_graph(&g, k);
        let delta_bound = (0..pg.n()).map(|v| pg.degree(v)).max().unwrap() as u64;
        let vids: Vec<u64> = (0..g.n()).map(|v| ids.id(v) * 2 + 1).collect();
        let vid_assign = IdAssignment::from_ids(vids, IdScheme::Permutation, 0);
        let proto = ColorReduceMis::new(ids.id_range() * 2 + 2, delta_bound.max(1), Some(delta_bound.max(1) + 1), true, false);
        let res = run_algorithm(&pg, &vid_assign, &DirectProto(proto), &vec![(); pg.n()], &RunConfig::default()).unwrap();
        let explicit: Vec<bool> = res.outputs.iter().map(|o| o.in_mis).collect();
        assert_eq!(sel, explicit);
    }

    #[test]
    fn one_round_baseline() {
        let g = cycle_graph(50);
        let ids = assign_ids(&g, IdScheme::RandomRange, 13);
        let (sel, trace) = random_min_id_is(&g, &ids, &RunConfig::default()).unwrap();
        assert_eq!(trace.rounds, 1);
        assert!(is_independent(&g, &sel));
        assert!(sel.iter().any(|&b| b));
    }

    fn brute_force_path_lists(lists: &[Vec<u64>], q: u64) -> bool {
        fn rec(lists: &[Vec<u64>], q: u64, i: usize, prev: u128) -> bool {
            if i == lists.len() {
                return true;
            }
            let mut l = lists[i].clone();
            l.sort_unstable();
            l.dedup();
            for mask in subsets_of(&l, q as usize) {
                if mask & prev == 0 && rec(lists, q, i + 1, mask) {
                    return true;
                }
            }
            false
        }
        rec(lists, q, 0, 0)
    }

    #[test]
    fn path_list_dp_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let q = rng.gen_range(1..=3u64);
            let n = rng.gen_range(1..=6usize);
            let lists: Vec<Vec<u64>> = (0..n)
                .map(|_| {
                    let len = rng.gen_range(q..=2 * q + 2);
                    let mut l = Vec::new();
                    while (l.len() as u64) < len {
                        let c = rng.gen_range(0..(3 * q + 3));
                        if !l.contains(&c) {
                            l.push(c);
                        }
                    }
                    l
                })
                .collect();
            let got = path_list_qcoloring(&lists, q);
            assert_eq!(got.is_some(), brute_force_path_lists(&lists, q));
            if let Some(sets) = got {
                for (i, s) in sets.iter().enumerate() {
                    assert_eq!(s.len() as u64, q);
                    assert!(s.iter().all(|c| lists[i].contains(c)));
                    if i > 0 {
                        assert!(s.iter().all(|c| !sets[i - 1].contains(c)));
                    }
                }
            }
        }
    }

    #[test]
    fn path_lists_with_guaranteed_slack_always_succeed() {
        // ends with q+1 colors, interior with 2q+1: always feasible
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let q = rng.gen_range(1..=4u64);
            let n = (2 * q + 1) as usize;
            let lists: Vec<Vec<u64>> = (0..n)
                .map(|i| {
                    let len = if i == 0 || i == n - 1 { q + 1 } else { 2 * q + 1 };
                    let mut l = Vec::new();
                    while (l.len() as u64) < len {
                        let c = rng.gen_range(0..(4 * q + 2));
                        if !l.contains(&c) {
                            l.push(c);
                        }
                    }
                    l
                })
                .collect();
            assert!(path_list_qcoloring(&lists, q).is_some());
        }
    }

    #[test]
    fn central_coloring_is_canonical_and_tight() {
        let g = crate::graph::petersen();
        let c = central_component_coloring(&g, 3).unwrap();
        for (u, v) in g.edges() {
            assert_ne!(c[u], c[v]);
        }
        assert_eq!(c, central_component_coloring(&g, 3).unwrap());
        assert!(central_component_coloring(&complete_graph(4), 3).is_none());
        assert!(central_component_coloring(&cycle_graph(5), 2).is_none());
        assert!(central_component_coloring(&cycle_graph(5), 3).is_some());
    }

    #[test]
    fn sweep_respects_class_order_oracle() {
        // the distributed sweep and the centralized oracle agree when fed
        // the same coloring
        let g = cycle_graph(19);
        let ids = assign_ids(&g, IdScheme::RandomRange, 4);
        let proto = ColorReduceMis::new(ids.id_range(), 2, Some(3), true, false);
        let res = run_algorithm(&g, &ids, &DirectProto(proto), &vec![(); g.n()], &RunConfig::default()).unwrap();
        let sel: Vec<bool> = res.outputs.iter().map(|o| o.in_mis).collect();
        assert!(is_maximal_independent(&g, &sel));
        // every selected vertex has no earlier-class selected neighbor
        for v in 0..g.n() {
            if res.outputs[v].in_mis {
                for &w in g.neighbors(v) {
                    assert!(!res.outputs[w].in_mis);
                }
            }
        }
    }
}
