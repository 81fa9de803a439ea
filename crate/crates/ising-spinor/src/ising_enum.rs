//! Exhaustive enumeration of contour configurations.
//!
//! Configurations with prescribed odd-degree vertices form a coset of the
//! cycle space; we walk it in Gray-code order from a spanning-tree
//! representative. Edge sets are `u128` bitmasks over interior edges.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{quarter_turn, Cell, Component, DiscreteDomain, LatticeError, Site, Strand};
use crate::qcyc::{poly_in_x, Q8};

/// Largest cycle-space dimension we agree to enumerate.
pub const MAX_CYCLE_DIM: usize = 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnumError {
    #[error("domain has {0} interior edges; enumeration supports at most 128")]
    DomainTooLarge(usize),
    #[error("cycle space of dimension {0} is too large to enumerate")]
    TooManyConfigurations(usize),
    #[error("sources cannot be connected by any configuration")]
    InfeasibleSources,
    #[error("source or target is not in the boundary of the configuration")]
    SourcesNotInBoundaryOfS,
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("component not found: {0}")]
    ComponentNotFound(String),
    #[error("{0}")]
    Lattice(#[from] LatticeError),
}

/// Pairing of strands at a degree-4 vertex.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Resolution {
    /// N with E and S with W.
    #[default]
    NeSw,
    /// N with W and S with E.
    NwSe,
}

impl Resolution {
    fn partner(self, s: usize) -> usize {
        match self {
            Resolution::NeSw => s ^ 1,
            Resolution::NwSe => {
                if s % 2 == 1 {
                    (s + 1) % 4
                } else {
                    (s + 3) % 4
                }
            }
        }
    }
}

/// How much a half-edge contributes to |S|.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HalfWeight {
    /// A half-edge weighs x^{1/2}; the only choice compatible with
    /// s-holomorphicity at the corners next to the source.
    #[default]
    Half,
    /// A half-edge weighs x, as for a full edge.
    Full,
}

/// A half-edge in a configuration: a boundary half-edge, or the half of an
/// interior edge next to vertex `at`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HalfSel {
    Boundary(usize),
    Inner { edge: usize, at: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub edges: u128,
    pub halves: Vec<HalfSel>,
}

impl Configuration {
    pub fn num_edges(&self) -> u32 {
        self.edges.count_ones()
    }

    /// Twice |S|, with each half-edge counted as one half.
    pub fn len2(&self) -> u32 {
        2 * self.num_edges() + self.halves.len() as u32
    }

    pub fn weight_exponent(&self, hw: HalfWeight) -> u32 {
        match hw {
            HalfWeight::Half => self.len2() / 2,
            HalfWeight::Full => self.num_edges() + self.halves.len() as u32,
        }
    }

    pub fn edge_list(&self) -> Vec<usize> {
        bits(self.edges).collect()
    }
}

pub fn bits(mut m: u128) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Spanning tree data and a fundamental cycle basis as bitmasks.
#[derive(Clone, Debug)]
pub struct CycleSpace {
    pub root_path: Vec<u128>,
    pub cycles: Vec<u128>,
}

impl CycleSpace {
    pub fn new(d: &DiscreteDomain) -> Result<Self, EnumError> {
        if d.edges.len() > 128 {
            return Err(EnumError::DomainTooLarge(d.edges.len()));
        }
        let parent = d.spanning_tree();
        let mut root_path = vec![0u128; d.vertices.len()];
        // BFS order guarantees parents are filled first
        let mut order: Vec<usize> = Vec::with_capacity(d.vertices.len());
        let mut seen = vec![false; d.vertices.len()];
        seen[0] = true;
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            for s in d.strands[v] {
                if let Strand::Edge(e) = s {
                    let w = d.other_end(e, v);
                    if !seen[w] && parent[w] == Some(e) {
                        seen[w] = true;
                        q.push_back(w);
                    }
                }
            }
        }
        for &v in &order {
            if let Some(e) = parent[v] {
                let p = d.other_end(e, v);
                root_path[v] = root_path[p] ^ (1u128 << e);
            }
        }
        let tree: u128 = parent.iter().flatten().fold(0, |m, &e| m | 1u128 << e);
        let mut cycles = Vec::new();
        for e in 0..d.edges.len() {
            if tree >> e & 1 == 0 {
                let ed = d.edges[e];
                cycles.push(root_path[ed.u] ^ root_path[ed.w] ^ (1u128 << e));
            }
        }
        Ok(CycleSpace { root_path, cycles })
    }

    pub fn dim(&self) -> usize {
        self.cycles.len()
    }

    /// Edge set whose odd-degree vertices are exactly `odd`.
    pub fn representative(&self, odd: &[bool]) -> Option<u128> {
        let mut m = 0u128;
        let mut count = 0;
        for (v, &o) in odd.iter().enumerate() {
            if o {
                m ^= self.root_path[v];
                count += 1;
            }
        }
        if count % 2 == 1 {
            None
        } else {
            Some(m)
        }
    }

    /// Calls `f` on every element of `rep + span(cycles)`, Gray-code order.
    pub fn for_each(&self, rep: u128, mut f: impl FnMut(u128)) {
        let mut s = rep;
        f(s);
        for i in 1u64..(1u64 << self.cycles.len()) {
            s ^= self.cycles[i.trailing_zeros() as usize];
            f(s);
        }
    }

    /// Splits the coset into `2^t` independent Gray-code runs.
    pub fn chunks(&self, rep: u128, t: usize) -> Vec<(u128, usize)> {
        let t = t.min(self.cycles.len());
        let low = self.cycles.len() - t;
        (0..1u64 << t)
            .map(|p| {
                let mut s = rep;
                for j in 0..t {
                    if p >> j & 1 == 1 {
                        s ^= self.cycles[low + j];
                    }
                }
                (s, low)
            })
            .collect()
    }

    pub fn for_each_low(&self, start: u128, low: usize, mut f: impl FnMut(u128)) {
        let mut s = start;
        f(s);
        for i in 1u64..(1u64 << low) {
            s ^= self.cycles[i.trailing_zeros() as usize];
            f(s);
        }
    }

    pub fn check_dim(&self) -> Result<(), EnumError> {
        if self.cycles.len() > MAX_CYCLE_DIM {
            Err(EnumError::TooManyConfigurations(self.cycles.len()))
        } else {
            Ok(())
        }
    }
}

fn odd_set(d: &DiscreteDomain, halves: &[HalfSel]) -> Vec<bool> {
    let mut odd = vec![false; d.vertices.len()];
    for h in halves {
        let v = match *h {
            HalfSel::Boundary(b) => d.halves[b].v,
            HalfSel::Inner { at, .. } => at,
        };
        odd[v] = !odd[v];
    }
    odd
}

/// Reduces a source multiset mod 2.
pub fn reduce_sources(sources: &[HalfSel]) -> Vec<HalfSel> {
    let mut count: BTreeMap<HalfSel, usize> = BTreeMap::new();
    for &s in sources {
        *count.entry(s).or_default() += 1;
    }
    count.into_iter().filter(|&(_, c)| c % 2 == 1).map(|(s, _)| s).collect()
}

/// All configurations whose half-edges are the reduced `sources`, in a
/// deterministic order.
pub fn enumerate_configs(d: &DiscreteDomain, sources: &[HalfSel]) -> Result<Vec<Configuration>, EnumError> {
    let halves = reduce_sources(sources);
    let cs = CycleSpace::new(d)?;
    cs.check_dim()?;
    let rep = cs.representative(&odd_set(d, &halves)).ok_or(EnumError::InfeasibleSources)?;
    let mut forbidden = 0u128;
    for h in &halves {
        if let HalfSel::Inner { edge, at } = *h {
            let ed = d.edges[edge];
            if at != ed.u && at != ed.w {
                return Err(EnumError::InfeasibleSources);
            }
            if forbidden >> edge & 1 == 1 {
                return Err(EnumError::InfeasibleSources);
            }
            forbidden |= 1u128 << edge;
        }
    }
    let mut out = Vec::new();
    cs.for_each(rep, |s| {
        if s & forbidden == 0 {
            out.push(Configuration { edges: s, halves: halves.clone() });
        }
    });
    if out.is_empty() {
        return Err(EnumError::InfeasibleSources);
    }
    Ok(out)
}

/// Artificial arc joining two marked boundary half-edges outside the domain.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub from: usize,
    pub to: usize,
    /// Winding from the outward direction at `from` to the inward direction
    /// at `to`, in quarter-turns.
    pub wind: i64,
    /// Cut mask of the lift: bit j set if the arc changes sheet around hole j.
    pub mask: u64,
}

/// Where the path γ ends.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// The source itself; γ is empty.
    Source,
    /// A boundary half-edge tip.
    Half(usize),
    /// Midpoint of `edge`, reached through the half next to `at`.
    Inner { edge: usize, at: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoopInfo {
    pub wind: i64,
    pub mask: u64,
    pub edges: Vec<usize>,
    pub arcs: Vec<usize>,
}

/// Loops and path γ of a configuration, with windings in quarter-turns and
/// cut masks (XOR of crossed cuts) for sheet bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseDecomposition {
    pub path_wind: i64,
    pub path_mask: u64,
    /// Directed path steps as (vertex, strand index).
    pub path: Vec<(usize, usize)>,
    pub loops: Vec<LoopInfo>,
}

impl PhaseDecomposition {
    /// Number of loops that are non-trivial on the cover with this branch mask.
    pub fn nontrivial_loops(&self, branch: u64) -> usize {
        self.loops.iter().filter(|l| (l.mask & branch).count_ones() % 2 == 1).count()
    }

    /// Number of loops with winding ≡ 0 mod 4π.
    pub fn zero_winding_loops(&self) -> usize {
        self.loops.iter().filter(|l| l.wind.rem_euclid(8) == 0).count()
    }

    /// Phase exponent k with W = ζ^k on the cover `branch`, before the
    /// sheet labels of source and target.
    pub fn phase_exp(&self, branch: u64, with_i: bool) -> i64 {
        let mut k = -self.path_wind;
        let mut neg = self.nontrivial_loops(branch) + (self.path_mask & branch).count_ones() as usize;
        if with_i {
            neg += self.zero_winding_loops();
        }
        if neg % 2 == 1 {
            k += 4;
        }
        k.rem_euclid(8)
    }
}

/// Reusable decomposition engine for one domain and one set of arcs.
#[derive(Clone, Debug)]
pub struct Decomposer {
    pub domain: Arc<DiscreteDomain>,
    pub cut_mask: Arc<Vec<u64>>,
    pub arcs: Vec<ArcSpec>,
    pub rule: Resolution,
    /// Half-edge index → (arc, is the `from` end).
    arc_of: Vec<Option<(usize, bool)>>,
}

struct Walker<'a> {
    dec: &'a Decomposer,
    edges: u128,
    present_half: &'a [bool],
    inner: Option<(usize, usize)>,
    record: bool,
}

impl<'a> Walker<'a> {
    fn present(&self, v: usize, s: usize) -> bool {
        match self.dec.domain.strands[v][s] {
            Strand::Edge(e) => self.edges >> e & 1 == 1 || self.inner == Some((e, v)),
            Strand::Half(h) => self.present_half[h],
        }
    }

    fn exit(&self, v: usize, s_in: usize) -> Result<usize, EnumError> {
        let mut deg = 0;
        let mut other = usize::MAX;
        for s in 0..4 {
            if self.present(v, s) {
                deg += 1;
                if s != s_in {
                    other = s;
                }
            }
        }
        match deg {
            2 if other != usize::MAX => Ok(other),
            4 => Ok(self.dec.rule.partner(s_in)),
            _ => Err(EnumError::InvalidConfiguration(format!(
                "vertex {:?} has degree {deg}",
                self.dec.domain.vertices[v]
            ))),
        }
    }
}

impl Decomposer {
    pub fn new(domain: Arc<DiscreteDomain>, cut_mask: Arc<Vec<u64>>, arcs: Vec<ArcSpec>, rule: Resolution) -> Self {
        let mut arc_of = vec![None; domain.halves.len()];
        for (i, a) in arcs.iter().enumerate() {
            arc_of[a.from] = Some((i, true));
            arc_of[a.to] = Some((i, false));
        }
        Decomposer { domain, cut_mask, arcs, rule, arc_of }
    }

    /// Decomposes `edges` plus present half-edges into γ from `source` to
    /// `target` and loops.
    pub fn decompose(
        &self,
        edges: u128,
        present_half: &[bool],
        source: usize,
        target: Target,
        record: bool,
        out: &mut PhaseDecomposition,
    ) -> Result<(), EnumError> {
        let d = &*self.domain;
        out.path_wind = 0;
        out.path_mask = 0;
        out.path.clear();
        out.loops.clear();
        let inner = match target {
            Target::Inner { edge, at } => Some((edge, at)),
            _ => None,
        };
        let w = Walker { dec: self, edges, present_half, inner, record };
        let mut used = 0u128;
        let mut arc_used = 0u64;

        if target != Target::Source {
            if !present_half[source] {
                return Err(EnumError::SourcesNotInBoundaryOfS);
            }
            let h = d.halves[source];
            let mut v = h.v;
            let mut s_in = h.dir.index();
            let mut dir = (s_in + 2) % 4;
            loop {
                let ex = w.exit(v, s_in)?;
                out.path_wind += quarter_turn(dir, ex);
                dir = ex;
                if w.record {
                    out.path.push((v, ex));
                }
                match d.strands[v][ex] {
                    Strand::Edge(e) if inner == Some((e, v)) => {
                        if d.edges[e].w == v {
                            out.path_mask ^= self.cut_mask[e];
                        }
                        break;
                    }
                    Strand::Edge(e) => {
                        if used >> e & 1 == 1 {
                            return Err(EnumError::InvalidConfiguration("path reuses an edge".into()));
                        }
                        used |= 1u128 << e;
                        out.path_mask ^= self.cut_mask[e];
                        v = d.other_end(e, v);
                        s_in = (ex + 2) % 4;
                    }
                    Strand::Half(hh) => {
                        if target == Target::Half(hh) {
                            break;
                        }
                        let Some((ai, fwd)) = self.arc_of[hh] else {
                            return Err(EnumError::InvalidConfiguration("path ends at an unexpected half-edge".into()));
                        };
                        if arc_used >> ai & 1 == 1 {
                            return Err(EnumError::InvalidConfiguration("arc used twice".into()));
                        }
                        arc_used |= 1 << ai;
                        let a = self.arcs[ai];
                        out.path_wind += if fwd { a.wind } else { -a.wind };
                        out.path_mask ^= a.mask;
                        let p = if fwd { a.to } else { a.from };
                        let ph = d.halves[p];
                        if target == Target::Half(p) {
                            break;
                        }
                        if !present_half[p] {
                            return Err(EnumError::SourcesNotInBoundaryOfS);
                        }
                        v = ph.v;
                        s_in = ph.dir.index();
                        dir = (s_in + 2) % 4;
                    }
                }
            }
        }

        // loops through artificial arcs, entered at the `to` end
        for ai in 0..self.arcs.len() {
            if arc_used >> ai & 1 == 1 {
                continue;
            }
            arc_used |= 1 << ai;
            let a = self.arcs[ai];
            let mut lp = LoopInfo { wind: a.wind, mask: a.mask, ..Default::default() };
            if record {
                lp.arcs.push(ai);
            }
            let mut cur = a.to;
            loop {
                if !present_half[cur] {
                    return Err(EnumError::SourcesNotInBoundaryOfS);
                }
                let ph = d.halves[cur];
                let mut v = ph.v;
                let mut s_in = ph.dir.index();
                let mut dir = (s_in + 2) % 4;
                let exit_half = loop {
                    let ex = w.exit(v, s_in)?;
                    lp.wind += quarter_turn(dir, ex);
                    dir = ex;
                    match d.strands[v][ex] {
                        Strand::Edge(e) => {
                            if used >> e & 1 == 1 || inner.map(|t| t.0) == Some(e) {
                                return Err(EnumError::InvalidConfiguration("loop reuses an edge".into()));
                            }
                            used |= 1u128 << e;
                            lp.mask ^= self.cut_mask[e];
                            if record {
                                lp.edges.push(e);
                            }
                            v = d.other_end(e, v);
                            s_in = (ex + 2) % 4;
                        }
                        Strand::Half(hh) => break hh,
                    }
                };
                let Some((bi, fwd)) = self.arc_of[exit_half] else {
                    return Err(EnumError::InvalidConfiguration("loop meets an unexpected half-edge".into()));
                };
                if bi == ai {
                    break;
                }
                if arc_used >> bi & 1 == 1 {
                    return Err(EnumError::InvalidConfiguration("arc used twice".into()));
                }
                arc_used |= 1 << bi;
                let b = self.arcs[bi];
                lp.wind += if fwd { b.wind } else { -b.wind };
                lp.mask ^= b.mask;
                if record {
                    lp.arcs.push(bi);
                }
                cur = if fwd { b.to } else { b.from };
            }
            out.loops.push(lp);
        }

        // ordinary lattice loops
        loop {
            let rem = edges & !used;
            if rem == 0 {
                break;
            }
            let e0 = rem.trailing_zeros() as usize;
            let ed = d.edges[e0];
            let mut lp = LoopInfo::default();
            used |= 1u128 << e0;
            lp.mask ^= self.cut_mask[e0];
            if record {
                lp.edges.push(e0);
            }
            let mut v = ed.w;
            let mut dir = ed.dir.index();
            let mut s_in = (dir + 2) % 4;
            loop {
                let ex = w.exit(v, s_in)?;
                lp.wind += quarter_turn(dir, ex);
                dir = ex;
                if v == ed.u && ex == ed.dir.index() {
                    break;
                }
                match d.strands[v][ex] {
                    Strand::Edge(e) => {
                        if used >> e & 1 == 1 {
                            return Err(EnumError::InvalidConfiguration("loop reuses an edge".into()));
                        }
                        used |= 1u128 << e;
                        lp.mask ^= self.cut_mask[e];
                        if record {
                            lp.edges.push(e);
                        }
                        v = d.other_end(e, v);
                        s_in = (ex + 2) % 4;
                    }
                    Strand::Half(_) => {
                        return Err(EnumError::InvalidConfiguration("loop meets a half-edge".into()));
                    }
                }
            }
            out.loops.push(lp);
        }
        Ok(())
    }
}

/// Convenience wrapper: decomposes a `Configuration` with source `a` and a
/// target site. No artificial arcs.
pub fn decompose(
    d: &Arc<DiscreteDomain>,
    cut_mask: &Arc<Vec<u64>>,
    config: &Configuration,
    source: usize,
    target: Site,
    rule: Resolution,
) -> Result<PhaseDecomposition, EnumError> {
    let mut present = vec![false; d.halves.len()];
    let mut inner = None;
    for h in &config.halves {
        match *h {
            HalfSel::Boundary(b) => present[b] = true,
            HalfSel::Inner { edge, at } => inner = Some((edge, at)),
        }
    }
    let t = match target {
        Site::Half(b) if b == source => {
            if present[source] || inner.is_some() {
                return Err(EnumError::SourcesNotInBoundaryOfS);
            }
            Target::Source
        }
        Site::Half(b) => {
            if !present[b] || !present[source] {
                return Err(EnumError::SourcesNotInBoundaryOfS);
            }
            Target::Half(b)
        }
        Site::Edge(e) => match inner {
            Some((edge, at)) if edge == e => Target::Inner { edge, at },
            _ => return Err(EnumError::SourcesNotInBoundaryOfS),
        },
    };
    let dec = Decomposer::new(d.clone(), cut_mask.clone(), Vec::new(), rule);
    let mut out = PhaseDecomposition::default();
    dec.decompose(config.edges, &present, source, t, true, &mut out)?;
    Ok(out)
}

/// Boundary conditions for partition functions and spin expectations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Monochromatic on every boundary component.
    Plus,
    /// "−" on the counterclockwise arc from `a` to `b`.
    Dobrushin(usize, usize),
    /// Spin changes at each listed outer half-edge; the list must be in
    /// counterclockwise order, "−" on the arc after the first point.
    Marked(Vec<usize>),
    /// All generalized configurations with half-edges on the boundary.
    Free,
}

impl BoundaryCondition {
    fn marked(&self) -> Vec<usize> {
        match self {
            BoundaryCondition::Plus | BoundaryCondition::Free => Vec::new(),
            BoundaryCondition::Dobrushin(a, b) => vec![*a, *b],
            BoundaryCondition::Marked(m) => m.clone(),
        }
    }
}

fn weight_index(edges: u128, halves: usize, hw: HalfWeight) -> usize {
    let e = edges.count_ones() as usize;
    match hw {
        HalfWeight::Half => e + halves / 2,
        HalfWeight::Full => e + halves,
    }
}

/// Length histogram of a coset, as counts indexed by |S|.
fn coset_histogram(cs: &CycleSpace, rep: u128, halves: usize, hw: HalfWeight) -> Vec<i128> {
    let chunks = cs.chunks(rep, 6);
    chunks
        .par_iter()
        .map(|&(start, low)| {
            let mut h = vec![0i128; 130 + halves];
            cs.for_each_low(start, low, |s| h[weight_index(s, halves, hw)] += 1);
            h
        })
        .reduce(|| vec![0i128; 130 + halves], |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        })
}

pub fn partition_fn(d: &DiscreteDomain, bc: &BoundaryCondition) -> Result<Q8, EnumError> {
    partition_fn_with(d, bc, HalfWeight::Half)
}

pub fn partition_fn_with(d: &DiscreteDomain, bc: &BoundaryCondition, hw: HalfWeight) -> Result<Q8, EnumError> {
    let cs = CycleSpace::new(d)?;
    cs.check_dim()?;
    match bc {
        BoundaryCondition::Free => {
            let nb = d.halves.len();
            if nb > 24 || cs.dim() + nb > MAX_CYCLE_DIM + 4 {
                return Err(EnumError::TooManyConfigurations(cs.dim() + nb));
            }
            let mut total = vec![0i128; 130 + nb];
            for sub in 0u64..(1u64 << nb) {
                let hs: Vec<HalfSel> = (0..nb).filter(|&h| sub >> h & 1 == 1).map(HalfSel::Boundary).collect();
                if let Some(rep) = cs.representative(&odd_set(d, &hs)) {
                    let h = coset_histogram(&cs, rep, hs.len(), hw);
                    for (x, y) in total.iter_mut().zip(h) {
                        *x += y;
                    }
                }
            }
            Ok(poly_in_x(&total))
        }
        _ => {
            let m = bc.marked();
            let hs: Vec<HalfSel> = m.iter().map(|&h| HalfSel::Boundary(h)).collect();
            let rep = cs.representative(&odd_set(d, &hs)).ok_or(EnumError::InfeasibleSources)?;
            Ok(poly_in_x(&coset_histogram(&cs, rep, hs.len(), hw)))
        }
    }
}

/// A spin whose expectation can be requested.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpinComponent {
    Hole(usize),
    Face(i64, i64),
}

/// Spins of faces and holes for one configuration.
#[derive(Clone, Debug)]
pub struct SpinState {
    pub face: Vec<i8>,
    pub hole: Vec<i8>,
}

/// Precomputed geometry for reconstructing spins from contours.
#[derive(Clone, Debug)]
pub struct SpinReconstructor {
    domain: Arc<DiscreteDomain>,
    /// (edge, face) pairs giving the first face spin from the outer boundary,
    /// with the walk position of the corner.
    outer_links: Vec<(usize, usize, usize)>,
    /// Edges between two faces: (edge, face, face).
    face_links: Vec<(usize, usize, usize)>,
    /// (edge, face, hole) pairs.
    hole_links: Vec<(usize, usize, usize)>,
    order: Vec<(usize, usize, usize)>,
}

impl SpinReconstructor {
    pub fn new(domain: Arc<DiscreteDomain>) -> Self {
        let d = &*domain;
        let mut outer_links = Vec::new();
        let steps = d.outer_walk.len() - 1;
        for (i, st) in d.outer_walk[..steps].iter().enumerate() {
            if let Strand::Edge(e) = st.strand {
                let cell = crate::lattice::corner_cell(d.vertices[st.corner.v], st.corner.k + 1);
                outer_links.push((e, d.face_index[&cell], i));
            }
        }
        let mut face_links = Vec::new();
        let mut hole_links = Vec::new();
        for (e, ed) in d.edges.iter().enumerate() {
            let p = d.vertices[ed.u];
            let [c1, c2] = crate::lattice::edge_cells(p, ed.dir);
            match (d.face_index.get(&c1), d.face_index.get(&c2)) {
                (Some(&f1), Some(&f2)) => face_links.push((e, f1, f2)),
                (Some(&f), None) | (None, Some(&f)) => {
                    let other = if d.face_index.contains_key(&c1) { c2 } else { c1 };
                    if let Some(Component::Hole(j)) = d.cell_component(other) {
                        hole_links.push((e, f, j));
                    }
                }
                _ => {}
            }
        }
        // BFS order over faces from the first outer link
        let nf = d.faces.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nf];
        for &(e, a, b) in &face_links {
            adj[a].push((e, b));
            adj[b].push((e, a));
        }
        let root = outer_links[0].1;
        let mut seen = vec![false; nf];
        seen[root] = true;
        let mut order = Vec::new();
        let mut q = VecDeque::from([root]);
        while let Some(f) = q.pop_front() {
            for &(e, g) in &adj[f] {
                if !seen[g] {
                    seen[g] = true;
                    order.push((e, f, g));
                    q.push_back(g);
                }
            }
        }
        SpinReconstructor { domain, outer_links, face_links, hole_links, order }
    }

    /// Spins from contours `edges` with spin changes at the marked outer
    /// half-edges (counterclockwise order, "+" just before the first one).
    pub fn spins(&self, edges: u128, marked: &[usize]) -> Result<SpinState, EnumError> {
        let d = &*self.domain;
        let n = d.outer_walk.len() - 1;
        let ext_spin = |i: usize| -> i8 {
            if marked.is_empty() {
                return 1;
            }
            let p0 = d.outer_pos[&marked[0]];
            // marked crossings in the cyclic window [p0, i)
            let rel = |p: usize| (p + n - p0) % n;
            let ri = rel(i);
            let cnt = marked.iter().filter(|&&m| rel(d.outer_pos[&m]) < ri).count();
            if cnt % 2 == 0 {
                1
            } else {
                -1
            }
        };
        let cross = |e: usize| -> i8 {
            if edges >> e & 1 == 1 {
                -1
            } else {
                1
            }
        };
        let mut face = vec![0i8; d.faces.len()];
        let (e0, f0, i0) = self.outer_links[0];
        face[f0] = ext_spin(i0) * cross(e0);
        for &(e, f, g) in &self.order {
            face[g] = face[f] * cross(e);
        }
        for &(e, f, i) in &self.outer_links {
            if face[f] != ext_spin(i) * cross(e) {
                return Err(EnumError::InvalidConfiguration("spins inconsistent along the outer boundary".into()));
            }
        }
        for &(e, f, g) in &self.face_links {
            if face[g] != face[f] * cross(e) {
                return Err(EnumError::InvalidConfiguration("spins inconsistent across an edge".into()));
            }
        }
        let mut hole = vec![0i8; d.holes.len()];
        for &(e, f, j) in &self.hole_links {
            let s = face[f] * cross(e);
            if hole[j] == 0 {
                hole[j] = s;
            } else if hole[j] != s {
                return Err(EnumError::InvalidConfiguration(format!("hole {j} is not monochromatic")));
            }
        }
        Ok(SpinState { face, hole })
    }

    pub fn value(&self, st: &SpinState, comps: &[SpinComponent]) -> Result<i8, EnumError> {
        let d = &*self.domain;
        let mut s = 1i8;
        for c in comps {
            s *= match *c {
                SpinComponent::Hole(j) => {
                    *st.hole.get(j).ok_or_else(|| EnumError::ComponentNotFound(format!("hole {j}")))?
                }
                SpinComponent::Face(x, y) => {
                    let f = d.face_index.get(&(x, y)).ok_or_else(|| EnumError::ComponentNotFound(format!("face ({x},{y})")))?;
                    st.face[*f]
                }
            };
        }
        Ok(s)
    }
}

/// Signed sum Σ_S σ(components) x^{|S|}, i.e. Z·E[∏σ].
pub fn spin_moment(d: &Arc<DiscreteDomain>, bc: &BoundaryCondition, comps: &[SpinComponent]) -> Result<Q8, EnumError> {
    spin_moment_with(d, bc, comps, HalfWeight::Half)
}

pub fn spin_moment_with(
    d: &Arc<DiscreteDomain>,
    bc: &BoundaryCondition,
    comps: &[SpinComponent],
    hw: HalfWeight,
) -> Result<Q8, EnumError> {
    Ok(spin_moments(d, bc, &[comps.to_vec()], hw)?.remove(0))
}

/// Z·E[∏σ(γ_j)] for every subset of holes, indexed by the subset bitmask.
pub fn hole_moments(d: &Arc<DiscreteDomain>, bc: &BoundaryCondition) -> Result<Vec<Q8>, EnumError> {
    let m = d.holes.len();
    let sets: Vec<Vec<SpinComponent>> = (0..1usize << m)
        .map(|mask| (0..m).filter(|j| mask >> j & 1 == 1).map(SpinComponent::Hole).collect())
        .collect();
    spin_moments(d, bc, &sets, HalfWeight::Half)
}

/// Signed sums for several component lists in one pass over the coset.
pub fn spin_moments(
    d: &Arc<DiscreteDomain>,
    bc: &BoundaryCondition,
    sets: &[Vec<SpinComponent>],
    hw: HalfWeight,
) -> Result<Vec<Q8>, EnumError> {
    if *bc == BoundaryCondition::Free {
        return Err(EnumError::InvalidConfiguration("spin expectations need plus or marked boundary conditions".into()));
    }
    for c in sets.iter().flatten() {
        match *c {
            SpinComponent::Hole(j) if j >= d.holes.len() => return Err(EnumError::ComponentNotFound(format!("hole {j}"))),
            SpinComponent::Face(x, y) if !d.face_index.contains_key(&(x, y)) => {
                return Err(EnumError::ComponentNotFound(format!("face ({x},{y})")))
            }
            _ => {}
        }
    }
    let marked = bc.marked();
    for &m in &marked {
        if d.halves.get(m).map(|h| h.component) != Some(Component::Outer) {
            return Err(EnumError::InvalidConfiguration("marked points must lie on the outer boundary".into()));
        }
    }
    let marked = sort_ccw(d, &marked);
    let cs = CycleSpace::new(d)?;
    cs.check_dim()?;
    let hs: Vec<HalfSel> = marked.iter().map(|&h| HalfSel::Boundary(h)).collect();
    let rep = cs.representative(&odd_set(d, &hs)).ok_or(EnumError::InfeasibleSources)?;
    let rec = SpinReconstructor::new(d.clone());
    let nh = marked.len();
    let nl = 130 + nh;
    let ns = sets.len();
    let chunks = cs.chunks(rep, 6);
    let hist = chunks
        .par_iter()
        .map(|&(start, low)| -> Result<Vec<i128>, EnumError> {
            let mut h = vec![0i128; nl * ns];
            let mut err = None;
            cs.for_each_low(start, low, |s| {
                if err.is_some() {
                    return;
                }
                let st = match rec.spins(s, &marked) {
                    Ok(st) => st,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                };
                let l = weight_index(s, nh, hw);
                for (i, comps) in sets.iter().enumerate() {
                    match rec.value(&st, comps) {
                        Ok(sg) => h[i * nl + l] += sg as i128,
                        Err(e) => err = Some(e),
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(h),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = vec![0i128; nl * ns];
    for h in hist {
        for (x, y) in total.iter_mut().zip(h) {
            *x += y;
        }
    }
    Ok(total.chunks(nl).map(poly_in_x).collect())
}

/// Rotates a counterclockwise-ordered marked list so the caller's first
/// point stays first; validates the cyclic order.
fn sort_ccw(d: &DiscreteDomain, marked: &[usize]) -> Vec<usize> {
    if marked.is_empty() {
        return Vec::new();
    }
    let n = d.outer_walk.len() - 1;
    let p0 = d.outer_pos[&marked[0]];
    let mut m = marked.to_vec();
    m.sort_by_key(|h| (d.outer_pos[h] + n - p0) % n);
    m
}

/// E[∏σ] = Z·E[∏σ] / Z, exact.
pub fn spin_expectation(d: &Arc<DiscreteDomain>, bc: &BoundaryCondition, comps: &[SpinComponent]) -> Result<Q8, EnumError> {
    let num = spin_moment(d, bc, comps)?;
    if comps.is_empty() {
        return Ok(Q8::one());
    }
    let z = partition_fn(d, bc)?;
    num.checked_div(&z).ok_or(EnumError::InfeasibleSources)
}

/// Cells of a domain as spin components, for lookups by coordinates.
pub fn face_component(c: Cell) -> SpinComponent {
    SpinComponent::Face(c.0, c.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Dir, DoubleCover};

    fn arc_dom(faces: &[Cell]) -> Arc<DiscreteDomain> {
        Arc::new(DiscreteDomain::from_faces(faces).unwrap())
    }

    /// Raw filter over all edge subsets: the micro-oracle.
    fn raw_count(d: &DiscreteDomain, halves: &[usize]) -> Vec<u128> {
        let ne = d.edges.len();
        assert!(ne <= 12);
        let mut out = Vec::new();
        for s in 0u128..(1u128 << ne) {
            let mut deg = vec![0usize; d.vertices.len()];
            for e in bits(s) {
                deg[d.edges[e].u] += 1;
                deg[d.edges[e].w] += 1;
            }
            for &h in halves {
                deg[d.halves[h].v] += 1;
            }
            if deg.iter().all(|&k| k % 2 == 0) {
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn single_cell_plus_configs() {
        let d = DiscreteDomain::from_faces(&[(0, 0)]).unwrap();
        let c = enumerate_configs(&d, &[]).unwrap();
        let mut got: Vec<u128> = c.iter().map(|c| c.edges).collect();
        got.sort();
        assert_eq!(got, raw_count(&d, &[]));
        assert_eq!(got, vec![0, 0b1111]);
        let a = HalfSel::Boundary(0);
        assert_eq!(enumerate_configs(&d, &[a, a]).unwrap(), c);
    }

    #[test]
    fn two_halves_same_vertex_match_raw_filter() {
        let d = DiscreteDomain::from_faces(&[(0, 0)]).unwrap();
        let v0 = d.vertex_at((0, 0)).unwrap();
        let hs: Vec<usize> = (0..d.halves.len()).filter(|&h| d.halves[h].v == v0).collect();
        assert_eq!(hs.len(), 2);
        let sel: Vec<HalfSel> = hs.iter().map(|&h| HalfSel::Boundary(h)).collect();
        let mut got: Vec<u128> = enumerate_configs(&d, &sel).unwrap().iter().map(|c| c.edges).collect();
        got.sort();
        assert_eq!(got, raw_count(&d, &hs));
    }

    #[test]
    fn odd_sources_are_infeasible() {
        let d = DiscreteDomain::from_faces(&[(0, 0)]).unwrap();
        assert_eq!(enumerate_configs(&d, &[HalfSel::Boundary(0)]), Err(EnumError::InfeasibleSources));
    }

    #[test]
    fn plus_partition_single_cell() {
        let d = DiscreteDomain::from_faces(&[(0, 0)]).unwrap();
        let z = partition_fn(&d, &BoundaryCondition::Plus).unwrap();
        assert_eq!(z, Q8::from_ints([18, -12, 0, 12]));
    }

    #[test]
    fn free_partition_single_cell_matches_filter() {
        let d = DiscreteDomain::from_faces(&[(0, 0)]).unwrap();
        let nb = d.halves.len();
        let mut hist = vec![0i128; 20];
        for sub in 0u32..(1 << nb) {
            let hs: Vec<usize> = (0..nb).filter(|&h| sub >> h & 1 == 1).collect();
            for s in raw_count(&d, &hs) {
                hist[s.count_ones() as usize + hs.len() / 2] += 1;
            }
        }
        assert_eq!(partition_fn(&d, &BoundaryCondition::Free).unwrap(), poly_in_x(&hist));
    }

    #[test]
    fn decompose_empty_and_cycle() {
        let d = arc_dom(&[(0, 0)]);
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let empty = Configuration { edges: 0, halves: vec![] };
        let p = decompose(&d, &cov.cut_mask, &empty, a, Site::Half(a), Resolution::NeSw).unwrap();
        assert_eq!((p.path_wind, p.loops.len()), (0, 0));
        let cyc = Configuration { edges: 0b1111, halves: vec![] };
        let p = decompose(&d, &cov.cut_mask, &cyc, a, Site::Half(a), Resolution::NeSw).unwrap();
        assert_eq!(p.loops.len(), 1);
        assert_eq!(p.loops[0].wind.abs(), 4);
    }

    #[test]
    fn crossing_vertex_resolutions() {
        // 2x2 block, both unit squares touching the centre: degree 4 there
        let d = arc_dom(&DiscreteDomain::rectangle(2, 2));
        let cov = DoubleCover::trivial(d.clone());
        let e = |p, dir| d.edge_index[&(p, dir)];
        let mut m = 0u128;
        for (p, dir) in [((0, 0), Dir::E), ((1, 0), Dir::N), ((0, 1), Dir::E), ((0, 0), Dir::N)] {
            m |= 1 << e(p, dir);
        }
        for (p, dir) in [((1, 1), Dir::E), ((2, 1), Dir::N), ((1, 2), Dir::E), ((1, 1), Dir::N)] {
            m |= 1 << e(p, dir);
        }
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let c = Configuration { edges: m, halves: vec![] };
        let p1 = decompose(&d, &cov.cut_mask, &c, a, Site::Half(a), Resolution::NeSw).unwrap();
        let p2 = decompose(&d, &cov.cut_mask, &c, a, Site::Half(a), Resolution::NwSe).unwrap();
        assert_eq!(p1.loops.len(), 2);
        assert_eq!(p2.loops.len(), 1);
        assert_eq!(p1.phase_exp(0, false), p2.phase_exp(0, false));
    }

    #[test]
    fn spin_expectations_basic() {
        let d = arc_dom(&DiscreteDomain::rectangle(3, 3));
        assert_eq!(spin_expectation(&d, &BoundaryCondition::Plus, &[]).unwrap(), Q8::one());
        let e = spin_expectation(&d, &BoundaryCondition::Plus, &[SpinComponent::Face(1, 1)]).unwrap();
        let f = e.to_c64().re;
        assert!(f > 0.0 && f < 1.0);
        assert!(matches!(
            spin_expectation(&d, &BoundaryCondition::Plus, &[SpinComponent::Hole(0)]),
            Err(EnumError::ComponentNotFound(_))
        ));
    }

    #[test]
    fn dobrushin_rotation_symmetric_center_vanishes() {
        // rotation by pi swaps the two arcs; with a global flip the center spin is odd
        let d = arc_dom(&DiscreteDomain::rectangle(3, 3));
        let a = d.half_at((0, 1), Dir::W).unwrap();
        let b = d.half_at((3, 2), Dir::E).unwrap();
        let bc = BoundaryCondition::Dobrushin(a, b);
        assert!(!partition_fn(&d, &bc).unwrap().is_zero());
        assert!(spin_expectation(&d, &bc, &[SpinComponent::Face(1, 1)]).unwrap().is_zero());
        let off = spin_expectation(&d, &bc, &[SpinComponent::Face(0, 0)]).unwrap();
        assert!(off.to_c64().re < 0.0);
    }

    #[test]
    fn plus_center_matches_spin_sum() {
        // direct sum over the 2^9 face spins, outside fixed to +
        let spin = |s: u32, x: i64, y: i64| if (0..3).contains(&x) && (0..3).contains(&y) { 1 - 2 * (s >> (3 * y + x) & 1) as i64 } else { 1 };
        let (mut z, mut num) = (Q8::zero(), Q8::zero());
        for s in 0..1u32 << 9 {
            let mut k = 0;
            for x in -1..3 {
                for y in 0..3 {
                    k += (spin(s, x, y) != spin(s, x + 1, y)) as u32 + (spin(s, y, x) != spin(s, y, x + 1)) as u32;
                }
            }
            let w = Q8::x_crit().pow(k);
            num += Q8::from_int(spin(s, 1, 1)) * &w;
            z += w;
        }
        let d = arc_dom(&DiscreteDomain::rectangle(3, 3));
        let e = spin_expectation(&d, &BoundaryCondition::Plus, &[SpinComponent::Face(1, 1)]).unwrap();
        assert_eq!(e, num.checked_div(&z).unwrap());
    }
}
