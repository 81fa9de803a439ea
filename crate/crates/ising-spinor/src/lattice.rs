//! Square-lattice domains with holes, their corners, and double covers.
//!
//! Coordinates are integers in units of the mesh δ. A face is named by its
//! lower-left vertex. Directions are indexed counterclockwise from east.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcyc::Q8;

pub type Pt = (i64, i64);
pub type Cell = (i64, i64);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    E,
    N,
    W,
    S,
}

pub const DIRS: [Dir; 4] = [Dir::E, Dir::N, Dir::W, Dir::S];

impl Dir {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: i64) -> Dir {
        DIRS[i.rem_euclid(4) as usize]
    }

    pub fn rot(self, k: i64) -> Dir {
        Dir::from_index(self.index() as i64 + k)
    }

    pub fn opposite(self) -> Dir {
        self.rot(2)
    }

    pub fn vec(self) -> (i64, i64) {
        match self {
            Dir::E => (1, 0),
            Dir::N => (0, 1),
            Dir::W => (-1, 0),
            Dir::S => (0, -1),
        }
    }

    pub fn step(self, p: Pt) -> Pt {
        let (dx, dy) = self.vec();
        (p.0 + dx, p.1 + dy)
    }

    pub fn parse(s: &str) -> Option<Dir> {
        match s.trim() {
            "E" | "e" => Some(Dir::E),
            "N" | "n" => Some(Dir::N),
            "W" | "w" => Some(Dir::W),
            "S" | "s" => Some(Dir::S),
            _ => None,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Dir::E => "E",
            Dir::N => "N",
            Dir::W => "W",
            Dir::S => "S",
        }
    }
}

/// Signed quarter-turn difference `to − from`, in {−1, 0, 1, 2}.
pub fn quarter_turn(from: usize, to: usize) -> i64 {
    match (to as i64 - from as i64).rem_euclid(4) {
        0 => 0,
        1 => 1,
        3 => -1,
        _ => 2,
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Strand {
    Edge(usize),
    Half(usize),
}

/// Interior edge from `u` to `w = u + dir`, `dir ∈ {E, N}`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub w: usize,
    pub dir: Dir,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Outer,
    Hole(usize),
}

/// Boundary half-edge at inner vertex `v`, pointing outward along `dir`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct HalfEdge {
    pub v: usize,
    pub dir: Dir,
    pub component: Component,
}

/// An edge midpoint or a boundary half-edge tip.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Edge(usize),
    Half(usize),
}

/// A lift of a site to the double cover. The sheet label is relative to the
/// fundamental domain cut along the branch cuts.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoverPoint {
    pub site: Site,
    pub sheet: i8,
}

impl CoverPoint {
    pub fn new(site: Site, sheet: i8) -> Self {
        CoverPoint { site, sheet }
    }

    pub fn star(self) -> Self {
        CoverPoint { site: self.site, sheet: -self.sheet }
    }
}

/// The corner of `v` between strands `k` and `k+1`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Corner {
    pub v: usize,
    pub k: u8,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("face set is empty")]
    EmptyFaceSet,
    #[error("face set is not edge-connected (cell {0:?} unreachable)")]
    DisconnectedFaces(Cell),
    #[error("expected {expected} branch flags, got {got}")]
    FlagArityMismatch { expected: usize, got: usize },
    #[error("walk leaves the domain at vertex {0:?} going {1:?}")]
    WalkLeavesDomain(Pt, Dir),
    #[error("no vertex at {0:?}")]
    NoSuchVertex(Pt),
    #[error("no boundary half-edge at {0:?} pointing {1:?}")]
    NoSuchHalfEdge(Pt, Dir),
    #[error("mesh must be positive")]
    BadMesh,
    #[error("at most 64 holes are supported")]
    TooManyHoles,
}

/// The four defining set axioms, checked on raw sets.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("axiom 1: face {face:?} is missing {what}")]
    FaceIncomplete { face: Cell, what: String },
    #[error("axiom 2: vertex {vertex:?} has {count} incident edges or half-edges in direction {dir:?}")]
    VertexDegree { vertex: Pt, dir: Dir, count: usize },
    #[error("axiom 3: vertex {0:?} is used by an edge but not listed")]
    MissingVertex(Pt),
    #[error("axiom 4: interior edge at {0:?} {1:?} has no incident face")]
    OrphanEdge(Pt, Dir),
}

/// Unstructured vertex, face, edge and half-edge sets. Interior edges are
/// normalized to start at their lower/left end with direction E or N.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawDomain {
    pub vertices: BTreeSet<Pt>,
    pub faces: BTreeSet<Cell>,
    pub edges: BTreeSet<(Pt, Dir)>,
    pub half_edges: BTreeSet<(Pt, Dir)>,
}

pub fn normalize_edge(p: Pt, d: Dir) -> (Pt, Dir) {
    match d {
        Dir::E | Dir::N => (p, d),
        Dir::W | Dir::S => (d.step(p), d.opposite()),
    }
}

/// The two cells incident to the edge leaving `p` along `d`.
pub fn edge_cells(p: Pt, d: Dir) -> [Cell; 2] {
    let ((x, y), d) = normalize_edge(p, d);
    match d {
        Dir::E => [(x, y), (x, y - 1)],
        _ => [(x, y), (x - 1, y)],
    }
}

/// Cell containing corner `k` of vertex `p`.
pub fn corner_cell(p: Pt, k: u8) -> Cell {
    let (x, y) = p;
    match k % 4 {
        0 => (x, y),
        1 => (x - 1, y),
        2 => (x - 1, y - 1),
        _ => (x, y - 1),
    }
}

fn face_edges(c: Cell) -> [(Pt, Dir); 4] {
    let (x, y) = c;
    [((x, y), Dir::E), ((x, y + 1), Dir::E), ((x, y), Dir::N), ((x + 1, y), Dir::N)]
}

fn face_vertices(c: Cell) -> [Pt; 4] {
    let (x, y) = c;
    [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)]
}

pub fn validate(raw: &RawDomain) -> Result<(), ValidationError> {
    for &f in &raw.faces {
        for (p, d) in face_edges(f) {
            if !raw.edges.contains(&(p, d)) {
                return Err(ValidationError::FaceIncomplete { face: f, what: format!("edge {p:?} {d:?}") });
            }
        }
        for v in face_vertices(f) {
            if !raw.vertices.contains(&v) {
                return Err(ValidationError::FaceIncomplete { face: f, what: format!("vertex {v:?}") });
            }
        }
    }
    for &v in &raw.vertices {
        for d in DIRS {
            let full = raw.edges.contains(&normalize_edge(v, d)) as usize;
            let half = raw.half_edges.contains(&(v, d)) as usize;
            if full + half != 1 {
                return Err(ValidationError::VertexDegree { vertex: v, dir: d, count: full + half });
            }
        }
    }
    for &(p, d) in &raw.edges {
        for q in [p, d.step(p)] {
            if !raw.vertices.contains(&q) {
                return Err(ValidationError::MissingVertex(q));
            }
        }
        if !edge_cells(p, d).iter().any(|c| raw.faces.contains(c)) {
            return Err(ValidationError::OrphanEdge(p, d));
        }
    }
    for &(p, _) in &raw.half_edges {
        if !raw.vertices.contains(&p) {
            return Err(ValidationError::MissingVertex(p));
        }
    }
    Ok(())
}

/// One step of the counterclockwise corner walk around a boundary component.
#[derive(Copy, Clone, Debug)]
pub struct WalkStep {
    pub corner: Corner,
    /// Half-edge crossed or edge followed when leaving `corner`.
    pub strand: Strand,
    /// Tangent direction index of the boundary curve on this step.
    pub tangent: usize,
    /// Cumulative quarter-turns from the first step up to this step.
    pub wind: i64,
}

#[derive(Clone, Debug)]
pub struct DiscreteDomain {
    pub delta: BigRational,
    pub faces: Vec<Cell>,
    pub face_index: HashMap<Cell, usize>,
    pub vertices: Vec<Pt>,
    pub vertex_index: HashMap<Pt, usize>,
    pub edges: Vec<Edge>,
    pub edge_index: HashMap<(Pt, Dir), usize>,
    pub halves: Vec<HalfEdge>,
    pub half_index: HashMap<(Pt, Dir), usize>,
    pub strands: Vec<[Strand; 4]>,
    /// Cells of each hole, sorted; holes sorted by smallest cell.
    pub holes: Vec<Vec<Cell>>,
    /// Component of every non-face cell in the padded bounding box.
    pub complement: HashMap<Cell, Component>,
    /// Counterclockwise corner walk of the outer boundary.
    pub outer_walk: Vec<WalkStep>,
    /// Outer half-edges in counterclockwise order.
    pub outer_halves: Vec<usize>,
    /// Position in `outer_walk` at which each outer half-edge is crossed.
    pub outer_pos: HashMap<usize, usize>,
    /// Default branch cut per hole, as a list of crossed edges.
    pub cuts: Vec<Vec<usize>>,
}

impl DiscreteDomain {
    pub fn build(faces: &[Cell], delta: BigRational) -> Result<Self, LatticeError> {
        if !delta.is_positive() {
            return Err(LatticeError::BadMesh);
        }
        let face_set: BTreeSet<Cell> = faces.iter().copied().collect();
        let Some(&first) = face_set.iter().next() else {
            return Err(LatticeError::EmptyFaceSet);
        };
        // edge-connectivity
        let mut seen = BTreeSet::from([first]);
        let mut queue = VecDeque::from([first]);
        while let Some((x, y)) = queue.pop_front() {
            for d in DIRS {
                let n = d.step((x, y));
                if face_set.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        if let Some(&c) = face_set.iter().find(|c| !seen.contains(c)) {
            return Err(LatticeError::DisconnectedFaces(c));
        }

        let faces: Vec<Cell> = face_set.iter().copied().collect();
        let face_index: HashMap<Cell, usize> = faces.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let vset: BTreeSet<Pt> = faces.iter().flat_map(|&c| face_vertices(c)).collect();
        let vertices: Vec<Pt> = vset.into_iter().collect();
        let vertex_index: HashMap<Pt, usize> = vertices.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let eset: BTreeSet<(Pt, Dir)> = faces.iter().flat_map(|&c| face_edges(c)).collect();
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        for &(p, d) in &eset {
            edge_index.insert((p, d), edges.len());
            edges.push(Edge { u: vertex_index[&p], w: vertex_index[&d.step(p)], dir: d });
        }

        // complement components inside a padded bounding box
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &(x, y) in &faces {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (x0, y0, x1, y1) = (x0 - 1, y0 - 1, x1 + 1, y1 + 1);
        let inside = |c: Cell| c.0 >= x0 && c.0 <= x1 && c.1 >= y0 && c.1 <= y1;
        let mut comp_of: HashMap<Cell, usize> = HashMap::new();
        let mut comps: Vec<Vec<Cell>> = Vec::new();
        let mut outer_id = None;
        for x in x0..=x1 {
            for y in y0..=y1 {
                let c = (x, y);
                if face_set.contains(&c) || comp_of.contains_key(&c) {
                    continue;
                }
                let id = comps.len();
                let mut cells = vec![c];
                comp_of.insert(c, id);
                let mut q = VecDeque::from([c]);
                let mut touches_border = false;
                while let Some(cur) = q.pop_front() {
                    if cur.0 == x0 || cur.0 == x1 || cur.1 == y0 || cur.1 == y1 {
                        touches_border = true;
                    }
                    for d in DIRS {
                        let n = d.step(cur);
                        if inside(n) && !face_set.contains(&n) && !comp_of.contains_key(&n) {
                            comp_of.insert(n, id);
                            cells.push(n);
                            q.push_back(n);
                        }
                    }
                }
                if touches_border {
                    outer_id = Some(id);
                }
                cells.sort();
                comps.push(cells);
            }
        }
        let outer_id = outer_id.expect("padded box always has an outer component");
        let mut hole_ids: Vec<usize> = (0..comps.len()).filter(|&i| i != outer_id).collect();
        hole_ids.sort_by_key(|&i| comps[i][0]);
        if hole_ids.len() > 64 {
            return Err(LatticeError::TooManyHoles);
        }
        let mut rank = HashMap::new();
        for (j, &i) in hole_ids.iter().enumerate() {
            rank.insert(i, j);
        }
        let holes: Vec<Vec<Cell>> = hole_ids.iter().map(|&i| comps[i].clone()).collect();
        let complement: HashMap<Cell, Component> = comp_of
            .iter()
            .map(|(&c, &i)| (c, if i == outer_id { Component::Outer } else { Component::Hole(rank[&i]) }))
            .collect();

        let mut halves = Vec::new();
        let mut half_index = HashMap::new();
        let mut strands = Vec::with_capacity(vertices.len());
        for (vi, &p) in vertices.iter().enumerate() {
            let mut s = [Strand::Edge(0); 4];
            for d in DIRS {
                if let Some(&e) = edge_index.get(&normalize_edge(p, d)) {
                    s[d.index()] = Strand::Edge(e);
                } else {
                    let cell = corner_cell(p, d.index() as u8);
                    let component = complement[&cell];
                    half_index.insert((p, d), halves.len());
                    s[d.index()] = Strand::Half(halves.len());
                    halves.push(HalfEdge { v: vi, dir: d, component });
                }
            }
            strands.push(s);
        }

        let mut dom = DiscreteDomain {
            delta,
            faces,
            face_index,
            vertices,
            vertex_index,
            edges,
            edge_index,
            halves,
            half_index,
            strands,
            holes,
            complement,
            outer_walk: Vec::new(),
            outer_halves: Vec::new(),
            outer_pos: HashMap::new(),
            cuts: Vec::new(),
        };
        // start the outer walk at the lowest-then-leftmost outer half-edge
        let start = (0..dom.halves.len())
            .filter(|&h| dom.halves[h].component == Component::Outer)
            .min_by_key(|&h| {
                let p = dom.vertices[dom.halves[h].v];
                (p.1, p.0, dom.halves[h].dir)
            })
            .expect("outer boundary has half-edges");
        let walk = dom.corner_walk(start);
        debug_assert_eq!(walk.last().map(|s| s.wind), Some(4));
        for (i, st) in walk[..walk.len() - 1].iter().enumerate() {
            if let Strand::Half(h) = st.strand {
                dom.outer_pos.insert(h, i);
                dom.outer_halves.push(h);
            }
        }
        dom.outer_walk = walk;
        dom.cuts = (0..dom.holes.len()).map(|j| dom.cut(j, 0)).collect();
        Ok(dom)
    }

    pub fn from_faces(faces: &[Cell]) -> Result<Self, LatticeError> {
        Self::build(faces, BigRational::one())
    }

    /// `w × h` block of faces with lower-left cell at the origin.
    pub fn rectangle(w: i64, h: i64) -> Vec<Cell> {
        let mut out = Vec::new();
        for x in 0..w {
            for y in 0..h {
                out.push((x, y));
            }
        }
        out
    }

    pub fn raw(&self) -> RawDomain {
        RawDomain {
            vertices: self.vertices.iter().copied().collect(),
            faces: self.faces.iter().copied().collect(),
            edges: self.edge_index.keys().copied().collect(),
            half_edges: self.half_index.keys().copied().collect(),
        }
    }

    pub fn num_holes(&self) -> usize {
        self.holes.len()
    }

    pub fn other_end(&self, e: usize, v: usize) -> usize {
        let ed = self.edges[e];
        if ed.u == v {
            ed.w
        } else {
            ed.u
        }
    }

    /// Direction of strand `e` leaving `v`.
    pub fn edge_dir_from(&self, e: usize, v: usize) -> Dir {
        let ed = self.edges[e];
        if ed.u == v {
            ed.dir
        } else {
            ed.dir.opposite()
        }
    }

    pub fn vertex_at(&self, p: Pt) -> Result<usize, LatticeError> {
        self.vertex_index.get(&p).copied().ok_or(LatticeError::NoSuchVertex(p))
    }

    pub fn half_at(&self, p: Pt, d: Dir) -> Result<usize, LatticeError> {
        self.half_index.get(&(p, d)).copied().ok_or(LatticeError::NoSuchHalfEdge(p, d))
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.edges.len()).map(Site::Edge).chain((0..self.halves.len()).map(Site::Half))
    }

    /// Site position in lattice units, doubled to stay integral.
    pub fn site_pos2(&self, s: Site) -> (i64, i64) {
        let (p, d) = match s {
            Site::Edge(e) => (self.vertices[self.edges[e].u], self.edges[e].dir),
            Site::Half(h) => (self.vertices[self.halves[h].v], self.halves[h].dir),
        };
        let (dx, dy) = d.vec();
        (2 * p.0 + dx, 2 * p.1 + dy)
    }

    pub fn corners(&self) -> impl Iterator<Item = Corner> + '_ {
        (0..self.vertices.len()).flat_map(|v| (0..4u8).map(move |k| Corner { v, k }))
    }

    /// The two strands forming a corner: strand `k` and strand `k+1`.
    pub fn corner_strands(&self, c: Corner) -> (Strand, Strand) {
        let s = &self.strands[c.v];
        (s[c.k as usize], s[(c.k as usize + 1) % 4])
    }

    pub fn corner_cell(&self, c: Corner) -> Cell {
        corner_cell(self.vertices[c.v], c.k)
    }

    /// `None` for a face of the domain, else the complement component.
    pub fn cell_component(&self, c: Cell) -> Option<Component> {
        if self.face_index.contains_key(&c) {
            None
        } else {
            Some(self.complement.get(&c).copied().unwrap_or(Component::Outer))
        }
    }

    /// Counterclockwise walk (domain on the left) along the boundary
    /// component containing half-edge `h`, starting by crossing `h`.
    pub fn corner_walk(&self, h: usize) -> Vec<WalkStep> {
        let he = self.halves[h];
        let start = Corner { v: he.v, k: ((he.dir.index() + 3) % 4) as u8 };
        let mut out: Vec<WalkStep> = Vec::new();
        let mut c = start;
        let mut wind = 0i64;
        loop {
            let s = (c.k as usize + 1) % 4;
            let strand = self.strands[c.v][s];
            let (tangent, next) = match strand {
                Strand::Half(_) => ((s + 1) % 4, Corner { v: c.v, k: s as u8 }),
                Strand::Edge(e) => {
                    let w = self.other_end(e, c.v);
                    (s, Corner { v: w, k: ((c.k as usize + 3) % 4) as u8 })
                }
            };
            if let Some(prev) = out.last() {
                wind += quarter_turn(prev.tangent, tangent);
            }
            out.push(WalkStep { corner: c, strand, tangent, wind });
            c = next;
            if c == start {
                let t0 = out[0].tangent;
                let tl = out.last().unwrap().tangent;
                let close = wind + quarter_turn(tl, t0);
                out.push(WalkStep { corner: start, strand: out[0].strand, tangent: t0, wind: close });
                break;
            }
        }
        out
    }

    /// Counterclockwise arc winding from the crossing of outer half-edge `a`
    /// to that of `b`, in quarter-turns, measured along boundary tangents.
    pub fn outer_arc_wind(&self, a: usize, b: usize) -> Option<i64> {
        let pa = *self.outer_pos.get(&a)?;
        let pb = *self.outer_pos.get(&b)?;
        let total = self.outer_walk.last().unwrap().wind;
        let w = self.outer_walk[pb].wind - self.outer_walk[pa].wind;
        Some(if pb >= pa { w } else { w + total })
    }

    /// Interior edges followed by the counterclockwise boundary walk from
    /// outer half-edge `a` to outer half-edge `b`.
    pub fn outer_arc_edges(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let pa = *self.outer_pos.get(&a)?;
        let pb = *self.outer_pos.get(&b)?;
        let n = self.outer_walk.len() - 1;
        let mut out = Vec::new();
        let mut i = pa;
        while i != pb {
            if let Strand::Edge(e) = self.outer_walk[i].strand {
                out.push(e);
            }
            i = (i + 1) % n;
        }
        Some(out)
    }

    /// Edge id crossed when stepping from cell `c` to its neighbour along `d`.
    fn dual_edge(&self, c: Cell, d: Dir) -> usize {
        let (x, y) = c;
        let key = match d {
            Dir::E => ((x + 1, y), Dir::N),
            Dir::N => ((x, y + 1), Dir::E),
            Dir::W => ((x, y), Dir::N),
            Dir::S => ((x, y), Dir::E),
        };
        self.edge_index[&key]
    }

    /// A dual path from hole `j` through faces to the outer complement; returns
    /// the crossed interior edges. `variant` perturbs the search order.
    pub fn cut(&self, j: usize, variant: u64) -> Vec<usize> {
        let hole = &self.holes[j];
        let rot = (variant % 4) as i64;
        let mut prev: HashMap<Cell, (Cell, Dir)> = HashMap::new();
        let mut q = VecDeque::new();
        let mut order: Vec<Cell> = hole.clone();
        if variant > 0 {
            let k = (variant as usize / 4) % order.len();
            order.rotate_left(k);
        }
        let mut seen: BTreeSet<Cell> = order.iter().copied().collect();
        for c in order {
            q.push_back(c);
        }
        while let Some(c) = q.pop_front() {
            for i in 0..4 {
                let d = Dir::from_index(i + rot);
                let n = d.step(c);
                if seen.contains(&n) {
                    continue;
                }
                match self.cell_component(n) {
                    None => {
                        seen.insert(n);
                        prev.insert(n, (c, d));
                        q.push_back(n);
                    }
                    Some(Component::Outer) if self.face_index.contains_key(&c) => {
                        let mut out = vec![self.dual_edge(c, d)];
                        let mut cur = c;
                        while let Some(&(p, pd)) = prev.get(&cur) {
                            out.push(self.dual_edge(p, pd));
                            cur = p;
                        }
                        out.reverse();
                        return out;
                    }
                    _ => {}
                }
            }
        }
        unreachable!("every hole is separated from the outside only by faces")
    }

    /// Edge masks of the cut system: bit `j` set on edges crossed by cut `j`.
    pub fn cut_masks(&self, cuts: &[Vec<usize>]) -> Vec<u64> {
        let mut m = vec![0u64; self.edges.len()];
        for (j, cut) in cuts.iter().enumerate() {
            for &e in cut {
                m[e] ^= 1 << j;
            }
        }
        m
    }

    /// Spanning tree by BFS from vertex 0: parent edge of each vertex.
    pub fn spanning_tree(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.vertices.len()];
        let mut seen = vec![false; self.vertices.len()];
        seen[0] = true;
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            for s in self.strands[v] {
                if let Strand::Edge(e) = s {
                    let w = self.other_end(e, v);
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = Some(e);
                        q.push_back(w);
                    }
                }
            }
        }
        parent
    }

    /// Fundamental cycles of the spanning tree, as edge lists.
    pub fn fundamental_cycles(&self) -> Vec<Vec<usize>> {
        let parent = self.spanning_tree();
        let tree: BTreeSet<usize> = parent.iter().flatten().copied().collect();
        let root_path = |mut v: usize| {
            let mut p = BTreeSet::new();
            while let Some(e) = parent[v] {
                p.insert(e);
                v = self.other_end(e, v);
            }
            p
        };
        let mut out = Vec::new();
        for e in 0..self.edges.len() {
            if tree.contains(&e) {
                continue;
            }
            let a = root_path(self.edges[e].u);
            let b = root_path(self.edges[e].w);
            let mut cyc: Vec<usize> = a.symmetric_difference(&b).copied().collect();
            cyc.push(e);
            cyc.sort();
            out.push(cyc);
        }
        out
    }

    /// Closed walk through the edges of a simple cycle, as a start vertex
    /// and direction sequence.
    pub fn cycle_walk(&self, cycle: &[usize]) -> (Pt, Vec<Dir>) {
        let set: BTreeSet<usize> = cycle.iter().copied().collect();
        let start = self.edges[cycle[0]].u;
        let mut used = BTreeSet::new();
        let mut v = start;
        let mut dirs = Vec::new();
        loop {
            let next = DIRS.iter().find_map(|&d| match self.strands[v][d.index()] {
                Strand::Edge(e) if set.contains(&e) && !used.contains(&e) => Some((e, d)),
                _ => None,
            });
            let Some((e, d)) = next else { break };
            used.insert(e);
            dirs.push(d);
            v = self.other_end(e, v);
            if v == start && used.len() == set.len() {
                break;
            }
        }
        (self.vertices[start], dirs)
    }
}

/// The η table for boundary half-edges: η = (i·dir)^{-1/2} with the square
/// root branch taken from arg(i·dir) ∈ (−π/2, 3π/2].
pub fn eta_half(d: Dir) -> Q8 {
    match d {
        Dir::S => Q8::one(),
        Dir::E => Q8::zeta_pow(-1),
        Dir::N => Q8::zeta_pow(-2),
        Dir::W => Q8::zeta_pow(-3),
    }
}

/// Exponent m with η_d = ζ^m.
pub fn eta_half_exp(d: Dir) -> i64 {
    match d {
        Dir::S => 0,
        Dir::E => -1,
        Dir::N => -2,
        Dir::W => -3,
    }
}

/// η_c² for corner k, where η_c = (i·(c−v)/|c−v|)^{-1/2} and
/// c − v points along e^{iπ(2k+1)/4}.
pub fn eta_corner_sq(k: u8) -> Q8 {
    Q8::zeta_pow(-(2 * k as i64 + 3))
}

/// Double-precision η_c = e^{−iπ(2k+3)/8}.
pub fn eta_corner_f64(k: u8) -> Complex64 {
    Complex64::from_polar(1.0, -std::f64::consts::PI * (2.0 * k as f64 + 3.0) / 8.0)
}

#[derive(Clone, Debug)]
pub struct DoubleCover {
    pub domain: Arc<DiscreteDomain>,
    pub branch: Vec<bool>,
    pub branch_mask: u64,
    /// Per-edge bitmask of the cuts crossing it.
    pub cut_mask: Arc<Vec<u64>>,
    pub flip: Vec<bool>,
}

impl DoubleCover {
    pub fn new(domain: Arc<DiscreteDomain>, branch: &[bool]) -> Result<Self, LatticeError> {
        let masks = domain.cut_masks(&domain.cuts);
        Self::with_cut_masks(domain, branch, Arc::new(masks))
    }

    /// Cover whose cuts come from `DiscreteDomain::cut(j, variant)`.
    pub fn with_cut_variant(domain: Arc<DiscreteDomain>, branch: &[bool], variant: u64) -> Result<Self, LatticeError> {
        let cuts: Vec<Vec<usize>> = (0..domain.num_holes()).map(|j| domain.cut(j, variant)).collect();
        let masks = domain.cut_masks(&cuts);
        Self::with_cut_masks(domain, branch, Arc::new(masks))
    }

    pub fn with_cut_masks(domain: Arc<DiscreteDomain>, branch: &[bool], cut_mask: Arc<Vec<u64>>) -> Result<Self, LatticeError> {
        if branch.len() != domain.num_holes() {
            return Err(LatticeError::FlagArityMismatch { expected: domain.num_holes(), got: branch.len() });
        }
        let branch_mask = branch.iter().enumerate().fold(0u64, |m, (j, &b)| if b { m | 1 << j } else { m });
        let flip = cut_mask.iter().map(|&m| (m & branch_mask).count_ones() % 2 == 1).collect();
        Ok(DoubleCover { domain, branch: branch.to_vec(), branch_mask, cut_mask, flip })
    }

    pub fn trivial(domain: Arc<DiscreteDomain>) -> Self {
        let n = domain.num_holes();
        Self::new(domain, &vec![false; n]).expect("arity matches")
    }

    pub fn is_trivial(&self) -> bool {
        self.branch_mask == 0
    }

    /// Sign change along a set of traversed edges.
    pub fn parity(&self, mask: u64) -> i8 {
        if (mask & self.branch_mask).count_ones() % 2 == 1 {
            -1
        } else {
            1
        }
    }

    pub fn transport(&self, start: Pt, walk: &[Dir], start_sheet: i8) -> Result<i8, LatticeError> {
        let d = &self.domain;
        let mut v = d.vertex_at(start)?;
        let mut sheet = start_sheet;
        for &dir in walk {
            match d.strands[v][dir.index()] {
                Strand::Edge(e) => {
                    if self.flip[e] {
                        sheet = -sheet;
                    }
                    v = d.other_end(e, v);
                }
                Strand::Half(_) => return Err(LatticeError::WalkLeavesDomain(d.vertices[v], dir)),
            }
        }
        Ok(sheet)
    }
}

impl fmt::Display for DiscreteDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "domain: {} faces, {} vertices, {} interior edges, {} half-edges, {} holes",
            self.faces.len(),
            self.vertices.len(),
            self.edges.len(),
            self.halves.len(),
            self.holes.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(faces: &[Cell]) -> DiscreteDomain {
        DiscreteDomain::from_faces(faces).unwrap()
    }

    fn annulus() -> DiscreteDomain {
        let f: Vec<Cell> = DiscreteDomain::rectangle(3, 3).into_iter().filter(|&c| c != (1, 1)).collect();
        dom(&f)
    }

    #[test]
    fn single_cell_counts() {
        let d = dom(&[(0, 0)]);
        assert_eq!((d.vertices.len(), d.edges.len(), d.halves.len()), (4, 4, 8));
        assert!(validate(&d.raw()).is_ok());
    }

    #[test]
    fn block_counts() {
        let d = dom(&DiscreteDomain::rectangle(2, 2));
        assert_eq!((d.vertices.len(), d.edges.len(), d.halves.len()), (9, 12, 12));
    }

    #[test]
    fn annulus_has_one_hole() {
        let d = annulus();
        assert_eq!(d.holes, vec![vec![(1, 1)]]);
        assert_eq!(d.cuts.len(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(DiscreteDomain::from_faces(&[]).unwrap_err(), LatticeError::EmptyFaceSet);
        assert!(matches!(DiscreteDomain::from_faces(&[(0, 0), (1, 1)]), Err(LatticeError::DisconnectedFaces(_))));
        let d = Arc::new(annulus());
        assert!(matches!(DoubleCover::new(d, &[]), Err(LatticeError::FlagArityMismatch { .. })));
    }

    #[test]
    fn outer_walk_turns_once() {
        for faces in [vec![(0, 0)], DiscreteDomain::rectangle(3, 2), vec![(0, 0), (1, 0), (1, 1)]] {
            let d = dom(&faces);
            assert_eq!(d.outer_walk.last().unwrap().wind, 4);
            let outer = d.halves.iter().filter(|h| h.component == Component::Outer).count();
            assert_eq!(d.outer_halves.len(), outer);
        }
    }

    #[test]
    fn hole_walk_turns_backwards() {
        let d = annulus();
        let h = (0..d.halves.len()).find(|&h| d.halves[h].component == Component::Hole(0));
        // a single-face hole has no half-edges; use a 2x2 hole instead
        assert!(h.is_none());
        let f: Vec<Cell> = DiscreteDomain::rectangle(4, 4)
            .into_iter()
            .filter(|&(x, y)| !(1..3).contains(&x) || !(1..3).contains(&y))
            .collect();
        let d = dom(&f);
        let h = (0..d.halves.len()).find(|&h| d.halves[h].component == Component::Hole(0)).unwrap();
        assert_eq!(d.corner_walk(h).last().unwrap().wind, -4);
    }

    #[test]
    fn eta_table() {
        assert_eq!(eta_half(Dir::S), Q8::one());
        for d in DIRS {
            // η² = (i·dir)^{-1}
            let dirv = match d {
                Dir::E => Q8::one(),
                Dir::N => Q8::i(),
                Dir::W => Q8::from_int(-1),
                Dir::S => -Q8::i(),
            };
            assert_eq!(eta_half(d).pow(2) * Q8::i() * dirv, Q8::one());
        }
        // corner 0 sits at angle π/4
        assert_eq!(eta_corner_sq(0) * Q8::i() * Q8::zeta(), Q8::one());
        let f = eta_corner_f64(1);
        assert!((f * f - eta_corner_sq(1).to_c64()).norm() < 1e-15);
    }

    #[test]
    fn transport_basics() {
        let d = Arc::new(annulus());
        let cov = DoubleCover::new(d.clone(), &[true]).unwrap();
        assert_eq!(cov.transport((0, 0), &[], 1).unwrap(), 1);
        assert_eq!(cov.transport((0, 0), &[Dir::E, Dir::W], -1).unwrap(), -1);
        let around = [Dir::E, Dir::E, Dir::E, Dir::N, Dir::N, Dir::N, Dir::W, Dir::W, Dir::W, Dir::S, Dir::S, Dir::S];
        assert_eq!(cov.transport((0, 0), &around, 1).unwrap(), -1);
        let triv = DoubleCover::trivial(d);
        assert_eq!(triv.transport((0, 0), &around, 1).unwrap(), 1);
        assert!(matches!(triv.transport((0, 0), &[Dir::S], 1), Err(LatticeError::WalkLeavesDomain(..))));
    }
}
