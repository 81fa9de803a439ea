//! Spinor observables on double covers, computed by exact enumeration, and
//! the discrete identities they satisfy.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ising_enum::{
    enumerate_configs, hole_moments, partition_fn, ArcSpec, BoundaryCondition, Configuration, CycleSpace, Decomposer,
    EnumError, HalfSel, HalfWeight, PhaseDecomposition, Resolution, Target,
};
use crate::lattice::{
    eta_corner_sq, eta_half, Component, CoverPoint, DiscreteDomain, DoubleCover, LatticeError, Site, Strand,
};
use crate::qcyc::{poly_in_x, Q8};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObsError {
    #[error("{0}")]
    Enum(#[from] EnumError),
    #[error("{0}")]
    Lattice(#[from] LatticeError),
    #[error("marked points must be distinct outer boundary half-edges in counterclockwise order")]
    MarkedPointsNotOuterBoundary,
    #[error("source must be a boundary half-edge")]
    SourceNotOnBoundary,
    #[error("matrix is not antisymmetric")]
    NotAntisymmetric,
    #[error("covers must share one domain and one set of cuts")]
    CoverMismatch,
    #[error("η of marked point {0} is not a square root of its table value")]
    InconsistentEta(usize),
    #[error("division by zero")]
    ZeroDivision,
}

pub fn site_index(d: &DiscreteDomain, s: Site) -> usize {
    match s {
        Site::Edge(e) => e,
        Site::Half(h) => d.edges.len() + h,
    }
}

pub fn site_at(d: &DiscreteDomain, i: usize) -> Site {
    if i < d.edges.len() {
        Site::Edge(i)
    } else {
        Site::Half(i - d.edges.len())
    }
}

/// Values of an observable at every site, on the lift labelled +1 (an edge
/// midpoint carries the label of its `u` end; a tip that of its vertex).
#[derive(Clone, Debug)]
pub struct SpinorField {
    pub cover: DoubleCover,
    pub source: CoverPoint,
    pub eta: Q8,
    pub marked: Vec<usize>,
    pub arcs: ArcData,
    pub values: Vec<Q8>,
}

impl SpinorField {
    pub fn domain(&self) -> &DiscreteDomain {
        &self.cover.domain
    }

    pub fn at(&self, z: CoverPoint) -> Q8 {
        let v = &self.values[site_index(self.domain(), z.site)];
        if z.sheet < 0 {
            -v
        } else {
            v.clone()
        }
    }

    /// Value at the site of strand `s` of `v`, seen from the +1 sheet at `v`.
    pub fn local(&self, v: usize, s: usize) -> Q8 {
        let d = self.domain();
        match d.strands[v][s] {
            Strand::Edge(e) => {
                if d.edges[e].w == v && self.cover.flip[e] {
                    -&self.values[e]
                } else {
                    self.values[e].clone()
                }
            }
            Strand::Half(h) => self.values[d.edges.len() + h].clone(),
        }
    }

    pub fn to_c64(&self) -> Vec<num_complex::Complex64> {
        self.values.iter().map(Q8::to_c64).collect()
    }
}

/// Artificial arcs ν_s joining consecutive marked points outside the domain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ArcData {
    pub arcs: Vec<ArcSpec>,
}

impl ArcData {
    /// Arcs running outside along the counterclockwise boundary arcs
    /// (a_{2s−1}, a_{2s}); each lifts like the boundary arc it follows.
    pub fn following_boundary(d: &DiscreteDomain, cut_mask: &[u64], marked: &[usize]) -> Result<Self, ObsError> {
        if marked.len() % 2 == 1 {
            return Err(ObsError::MarkedPointsNotOuterBoundary);
        }
        let mut arcs = Vec::new();
        for p in marked.chunks(2) {
            let wind = d.outer_arc_wind(p[0], p[1]).ok_or(ObsError::MarkedPointsNotOuterBoundary)? + 2;
            let edges = d.outer_arc_edges(p[0], p[1]).ok_or(ObsError::MarkedPointsNotOuterBoundary)?;
            let mask = edges.iter().fold(0u64, |m, &e| m ^ cut_mask[e]);
            arcs.push(ArcSpec { from: p[0], to: p[1], wind, mask });
        }
        Ok(ArcData { arcs })
    }
}

/// Checks that `a0, marked...` are distinct outer half-edges met in this
/// order counterclockwise from `a0`.
pub fn check_marked(d: &DiscreteDomain, a0: usize, marked: &[usize]) -> Result<(), ObsError> {
    let n = d.outer_walk.len() - 1;
    let p0 = *d.outer_pos.get(&a0).ok_or(ObsError::MarkedPointsNotOuterBoundary)?;
    let mut last = 0;
    for &m in marked {
        let p = *d.outer_pos.get(&m).ok_or(ObsError::MarkedPointsNotOuterBoundary)?;
        let r = (p + n - p0) % n;
        if r <= last {
            return Err(ObsError::MarkedPointsNotOuterBoundary);
        }
        last = r;
    }
    Ok(())
}

/// Sheet label of outer half-edge `b` reached from `a0` (label +1) along
/// the counterclockwise boundary arc.
pub fn boundary_sheet(cover: &DoubleCover, a0: usize, b: usize) -> Option<i8> {
    let edges = cover.domain.outer_arc_edges(a0, b)?;
    Some(cover.parity(edges.iter().fold(0u64, |m, &e| m ^ cover.cut_mask[e])))
}

/// η values of a0, a1, ..., a_{2n}: table values for a0 and the odd points,
/// and η_{2s} = iη_{2s−1}·e^{−i·wind(ν_s)/2} for the even ones.
pub fn marked_etas(d: &DiscreteDomain, a0: usize, marked: &[usize], arcs: &ArcData) -> Result<Vec<Q8>, ObsError> {
    let mut eta = vec![eta_half(d.halves[a0].dir)];
    for (s, arc) in arcs.arcs.iter().enumerate() {
        let e1 = eta_half(d.halves[arc.from].dir);
        let e2 = &Q8::i() * &e1 * Q8::zeta_pow(-arc.wind);
        let table = eta_half(d.halves[arc.to].dir);
        if &e2 * &e2 != &table * &table {
            return Err(ObsError::InconsistentEta(2 * s + 2));
        }
        eta.push(e1);
        eta.push(e2);
    }
    debug_assert_eq!(eta.len(), marked.len() + 1);
    Ok(eta)
}

#[derive(Clone, Copy, Debug)]
pub struct ObsOptions {
    pub rule: Resolution,
    pub half_weight: HalfWeight,
}

impl Default for ObsOptions {
    fn default() -> Self {
        ObsOptions { rule: Resolution::NeSw, half_weight: HalfWeight::Half }
    }
}

/// Enumeration engine for one source set over several covers at once.
pub struct FieldEngine {
    domain: Arc<DiscreteDomain>,
    cut_mask: Arc<Vec<u64>>,
    cs: CycleSpace,
    dec: Decomposer,
    a0: usize,
    marked: Vec<usize>,
    hw: HalfWeight,
}

struct Acc {
    counts: Vec<i64>,
    present: Vec<bool>,
    pd: PhaseDecomposition,
    err: Option<EnumError>,
}

impl FieldEngine {
    pub fn new(
        domain: Arc<DiscreteDomain>,
        cut_mask: Arc<Vec<u64>>,
        a0: usize,
        marked: &[usize],
        arcs: &ArcData,
        opts: ObsOptions,
    ) -> Result<Self, ObsError> {
        if a0 >= domain.halves.len() {
            return Err(ObsError::SourceNotOnBoundary);
        }
        let cs = CycleSpace::new(&domain)?;
        cs.check_dim()?;
        let dec = Decomposer::new(domain.clone(), cut_mask.clone(), arcs.arcs.clone(), opts.rule);
        Ok(FieldEngine { domain, cut_mask, cs, dec, a0, marked: marked.to_vec(), hw: opts.half_weight })
    }

    fn nl(&self) -> usize {
        self.domain.edges.len() + self.domain.halves.len() + 3
    }

    /// Raw phase/length histogram: index ((cover·sites + site)·8 + k)·nl + L.
    pub fn counts(&self, branches: &[u64]) -> Result<Vec<i64>, ObsError> {
        let d = &*self.domain;
        let nsites = d.edges.len() + d.halves.len();
        let nl = self.nl();
        let size = branches.len() * nsites * 8 * nl;
        let with_i = !self.marked.is_empty();
        let mut h0 = vec![false; d.halves.len()];
        h0[self.a0] = true;
        for &m in &self.marked {
            h0[m] = true;
        }
        let nh0 = 1 + self.marked.len();
        let mut base_odd = vec![false; d.vertices.len()];
        for (h, &on) in h0.iter().enumerate() {
            if on {
                base_odd[d.halves[h].v] ^= true;
            }
        }
        let split = 4usize;
        let mut tasks = Vec::new();
        for u in 0..d.vertices.len() {
            let mut odd = base_odd.clone();
            odd[u] ^= true;
            if let Some(rep) = self.cs.representative(&odd) {
                for (start, low) in self.cs.chunks(rep, split) {
                    tasks.push((u, start, low));
                }
            }
        }
        let hw = self.hw;
        let weight = |s: u128, nh: usize| -> usize {
            let e = s.count_ones() as usize;
            match hw {
                HalfWeight::Half => e + nh / 2,
                HalfWeight::Full => e + nh,
            }
        };
        let acc = tasks
            .par_iter()
            .fold(
                || Acc { counts: vec![0; size], present: h0.clone(), pd: PhaseDecomposition::default(), err: None },
                |mut acc, &(u, start, low)| {
                    if acc.err.is_some() {
                        return acc;
                    }
                    self.cs.for_each_low(start, low, |s| {
                        if acc.err.is_some() {
                            return;
                        }
                        for st in 0..4 {
                            let (target, site, nh, toggle) = match d.strands[u][st] {
                                Strand::Edge(e) => {
                                    if s >> e & 1 == 1 {
                                        continue;
                                    }
                                    (Target::Inner { edge: e, at: u }, e, nh0 + 1, None)
                                }
                                Strand::Half(b) => {
                                    let t = if b == self.a0 { Target::Source } else { Target::Half(b) };
                                    let nh = if h0[b] { nh0 - 1 } else { nh0 + 1 };
                                    (t, d.edges.len() + b, nh, Some(b))
                                }
                            };
                            if let Some(b) = toggle {
                                acc.present[b] ^= true;
                            }
                            let r = self.dec.decompose(s, &acc.present, self.a0, target, false, &mut acc.pd);
                            if let Some(b) = toggle {
                                acc.present[b] ^= true;
                            }
                            if let Err(e) = r {
                                acc.err = Some(e);
                                return;
                            }
                            let l = weight(s, nh);
                            for (ci, &br) in branches.iter().enumerate() {
                                let k = acc.pd.phase_exp(br, with_i) as usize;
                                acc.counts[((ci * nsites + site) * 8 + k) * nl + l] += 1;
                            }
                        }
                    });
                    acc
                },
            )
            .map(|acc| match acc.err {
                Some(e) => Err(e),
                None => Ok(acc.counts),
            })
            .reduce(
                || Ok(vec![0; size]),
                |a, b| {
                    let mut a = a?;
                    for (x, y) in a.iter_mut().zip(b?) {
                        *x += y;
                    }
                    Ok(a)
                },
            )?;
        Ok(acc)
    }

    /// Fields for each cover; `prefactor[ci]` multiplies every value.
    pub fn fields(&self, covers: &[DoubleCover], eta: &Q8, sheets: &[i8]) -> Result<Vec<SpinorField>, ObsError> {
        let ieta = &Q8::i() * eta;
        let prefactor: Vec<Q8> = sheets.iter().map(|&s| if s < 0 { -&ieta } else { ieta.clone() }).collect();
        for c in covers {
            if !Arc::ptr_eq(&c.domain, &self.domain) && *c.domain.faces != *self.domain.faces {
                return Err(ObsError::CoverMismatch);
            }
            if *c.cut_mask != *self.cut_mask {
                return Err(ObsError::CoverMismatch);
            }
        }
        let branches: Vec<u64> = covers.iter().map(|c| c.branch_mask).collect();
        let counts = self.counts(&branches)?;
        let d = &*self.domain;
        let nsites = d.edges.len() + d.halves.len();
        let nl = self.nl();
        let zeta: Vec<Q8> = (0..8).map(Q8::zeta_pow).collect();
        let mut out = Vec::new();
        for (ci, c) in covers.iter().enumerate() {
            let values: Vec<Q8> = (0..nsites)
                .into_par_iter()
                .map(|site| {
                    let mut v = Q8::zero();
                    for (k, z) in zeta.iter().enumerate() {
                        let base = ((ci * nsites + site) * 8 + k) * nl;
                        let row = &counts[base..base + nl];
                        if row.iter().any(|&x| x != 0) {
                            let coeffs: Vec<i128> = row.iter().map(|&x| x as i128).collect();
                            v += z * poly_in_x(&coeffs);
                        }
                    }
                    &prefactor[ci] * v
                })
                .collect();
            out.push(SpinorField {
                cover: c.clone(),
                source: CoverPoint::new(Site::Half(self.a0), sheets[ci]),
                eta: eta.clone(),
                marked: self.marked.clone(),
                arcs: ArcData { arcs: self.dec.arcs.clone() },
                values,
            });
        }
        Ok(out)
    }
}

fn check_same_base(covers: &[DoubleCover]) -> Result<(), ObsError> {
    if let Some(c0) = covers.first() {
        for c in covers {
            if !Arc::ptr_eq(&c.domain, &c0.domain) || *c.cut_mask != *c0.cut_mask {
                return Err(ObsError::CoverMismatch);
            }
        }
    }
    Ok(())
}

/// F_ϖ(a, ·) on every cover, with `a` on sheet `a_sheet` of each cover and
/// prefactor iη (η from the table unless given).
pub fn observable_fields(
    covers: &[DoubleCover],
    a: usize,
    eta: Option<Q8>,
    a_sheet: &[i8],
    opts: ObsOptions,
) -> Result<Vec<SpinorField>, ObsError> {
    multi_fields_with(covers, a, &[], &ArcData::default(), eta, a_sheet, opts)
}

/// Multi-source fields F_ϖ(a0, A; ·) on every cover; a0 on sheet +1.
pub fn multi_fields(covers: &[DoubleCover], a0: usize, marked: &[usize], opts: ObsOptions) -> Result<Vec<SpinorField>, ObsError> {
    check_same_base(covers)?;
    let c0 = covers.first().ok_or(ObsError::CoverMismatch)?;
    let d = &*c0.domain;
    check_marked(d, a0, marked)?;
    let arcs = ArcData::following_boundary(d, &c0.cut_mask, marked)?;
    multi_fields_with(covers, a0, marked, &arcs, None, &vec![1; covers.len()], opts)
}

pub fn multi_fields_with(
    covers: &[DoubleCover],
    a0: usize,
    marked: &[usize],
    arcs: &ArcData,
    eta: Option<Q8>,
    a_sheet: &[i8],
    opts: ObsOptions,
) -> Result<Vec<SpinorField>, ObsError> {
    check_same_base(covers)?;
    let c0 = covers.first().ok_or(ObsError::CoverMismatch)?;
    let d = c0.domain.clone();
    if a0 >= d.halves.len() {
        return Err(ObsError::SourceNotOnBoundary);
    }
    let eta = eta.unwrap_or_else(|| eta_half(d.halves[a0].dir));
    let engine = FieldEngine::new(d, c0.cut_mask.clone(), a0, marked, arcs, opts)?;
    engine.fields(covers, &eta, a_sheet)
}

/// F_ϖ(a, z) for a single cover point.
pub fn observable(cover: &DoubleCover, a: CoverPoint, z: CoverPoint) -> Result<Q8, ObsError> {
    let Site::Half(h) = a.site else {
        return Err(ObsError::SourceNotOnBoundary);
    };
    let f = observable_fields(std::slice::from_ref(cover), h, None, &[a.sheet], ObsOptions::default())?;
    Ok(f[0].at(z))
}

/// F_ϖ(a0, A; z), with arcs following the boundary.
pub fn observable_multi(cover: &DoubleCover, a0: usize, marked: &[usize], z: CoverPoint) -> Result<Q8, ObsError> {
    let f = multi_fields(std::slice::from_ref(cover), a0, marked, ObsOptions::default())?;
    Ok(f[0].at(z))
}

/// W_ϖ(z, S) for a configuration S ∈ Conf_{a,z}, single source.
pub fn complex_phase(cover: &DoubleCover, a: CoverPoint, z: CoverPoint, s: &Configuration) -> Result<Q8, ObsError> {
    complex_phase_with(cover, a, z, s, Resolution::NeSw)
}

pub fn complex_phase_with(
    cover: &DoubleCover,
    a: CoverPoint,
    z: CoverPoint,
    s: &Configuration,
    rule: Resolution,
) -> Result<Q8, ObsError> {
    let Site::Half(ah) = a.site else {
        return Err(ObsError::SourceNotOnBoundary);
    };
    let pd = crate::ising_enum::decompose(&cover.domain, &cover.cut_mask, s, ah, z.site, rule)?;
    let k = pd.phase_exp(cover.branch_mask, false);
    let w = Q8::zeta_pow(k);
    Ok(if a.sheet * z.sheet < 0 { -w } else { w })
}

/// Direct definitional sum iη_a Σ_{S ∈ Conf_{a,z}} W(z,S) x^{|S|}.
pub fn observable_by_definition(cover: &DoubleCover, a: CoverPoint, z: CoverPoint) -> Result<Q8, ObsError> {
    let Site::Half(ah) = a.site else {
        return Err(ObsError::SourceNotOnBoundary);
    };
    let eta = eta_half(cover.domain.halves[ah].dir);
    multi_by_definition(cover, a, &[], &ArcData::default(), &eta, z)
}

/// Definitional sum over Conf_{a0,A,z} with the (−1)^{I(S)} sign, one
/// configuration at a time.
pub fn multi_by_definition(
    cover: &DoubleCover,
    a: CoverPoint,
    marked: &[usize],
    arcs: &ArcData,
    eta: &Q8,
    z: CoverPoint,
) -> Result<Q8, ObsError> {
    let d = &cover.domain;
    let Site::Half(ah) = a.site else {
        return Err(ObsError::SourceNotOnBoundary);
    };
    let mut base = vec![HalfSel::Boundary(ah)];
    base.extend(marked.iter().map(|&m| HalfSel::Boundary(m)));
    let (source_sets, target): (Vec<Vec<HalfSel>>, Vec<Target>) = match z.site {
        Site::Half(b) => {
            let t = if b == ah { Target::Source } else { Target::Half(b) };
            (vec![vec![HalfSel::Boundary(b)]], vec![t])
        }
        Site::Edge(e) => {
            let ed = d.edges[e];
            (
                vec![vec![HalfSel::Inner { edge: e, at: ed.u }], vec![HalfSel::Inner { edge: e, at: ed.w }]],
                vec![Target::Inner { edge: e, at: ed.u }, Target::Inner { edge: e, at: ed.w }],
            )
        }
    };
    let dec = Decomposer::new(d.clone(), cover.cut_mask.clone(), arcs.arcs.clone(), Resolution::NeSw);
    let mut hist: Vec<Vec<i128>> = vec![vec![0; d.edges.len() + d.halves.len() + 3]; 8];
    let mut pd = PhaseDecomposition::default();
    for (extra, t) in source_sets.into_iter().zip(target) {
        let mut src = base.clone();
        src.extend(extra);
        let confs = match enumerate_configs(d, &src) {
            Ok(c) => c,
            Err(EnumError::InfeasibleSources) => continue,
            Err(e) => return Err(e.into()),
        };
        for c in confs {
            let mut present = vec![false; d.halves.len()];
            for h in &c.halves {
                if let HalfSel::Boundary(b) = *h {
                    present[b] = true;
                }
            }
            dec.decompose(c.edges, &present, ah, t, false, &mut pd)?;
            let k = pd.phase_exp(cover.branch_mask, !marked.is_empty());
            hist[k as usize][c.weight_exponent(HalfWeight::Half) as usize] += 1;
        }
    }
    let mut v = Q8::zero();
    for (k, h) in hist.iter().enumerate() {
        v += Q8::zeta_pow(k as i64) * poly_in_x(h);
    }
    let v = &Q8::i() * eta * v;
    Ok(if a.sheet * z.sheet < 0 { -v } else { v })
}

/// Scalars admitted by the Pfaffian.
pub trait PfScalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    fn zero() -> Self;
    fn one() -> Self;
    fn negligible(&self, scale: f64) -> bool;
}

impl PfScalar for Q8 {
    fn zero() -> Self {
        Q8::zero()
    }
    fn one() -> Self {
        Q8::one()
    }
    fn negligible(&self, _: f64) -> bool {
        self.is_zero()
    }
}

impl PfScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn negligible(&self, scale: f64) -> bool {
        self.abs() <= 1e-12 * scale.max(1.0)
    }
}

/// Pfaffian by recursive expansion along the first row. Odd size gives 0.
pub fn pfaffian<T: PfScalar>(a: &[Vec<T>]) -> Result<T, ObsError> {
    let n = a.len();
    let scale = 1.0;
    for i in 0..n {
        if a[i].len() != n {
            return Err(ObsError::NotAntisymmetric);
        }
        for j in 0..=i {
            if !(a[i][j].clone() + a[j][i].clone()).negligible(scale) {
                return Err(ObsError::NotAntisymmetric);
            }
        }
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(pf_rec(a, &idx))
}

fn pf_rec<T: PfScalar>(a: &[Vec<T>], idx: &[usize]) -> T {
    match idx.len() {
        0 => return T::one(),
        n if n % 2 == 1 => return T::zero(),
        _ => {}
    }
    let i0 = idx[0];
    let mut total = T::zero();
    for p in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&k| k != idx[p]).collect();
        let term = a[i0][idx[p]].clone() * pf_rec(a, &rest);
        total = if p % 2 == 1 { total + term } else { total - term };
    }
    total
}

/// Removes rows and columns `ks`.
pub fn minor<T: Clone>(a: &[Vec<T>], ks: &[usize]) -> Vec<Vec<T>> {
    let keep: Vec<usize> = (0..a.len()).filter(|i| !ks.contains(i)).collect();
    keep.iter().map(|&i| keep.iter().map(|&j| a[i][j].clone()).collect()).collect()
}

pub fn det_f64(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]).determinant()
}

/// One line of an identity report.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct IdentityCheck {
    pub name: String,
    pub cover: Vec<bool>,
    pub pass: bool,
    pub checked: usize,
    pub locus: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Vec<&IdentityCheck> {
        self.checks.iter().filter(|c| c.name == name).collect()
    }
}

struct Tally {
    name: &'static str,
    cover: Vec<bool>,
    checked: usize,
    locus: Option<String>,
}

impl Tally {
    fn new(name: &'static str, cover: &DoubleCover) -> Self {
        Tally { name, cover: cover.branch.clone(), checked: 0, locus: None }
    }

    fn check(&mut self, ok: bool, locus: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.locus.is_none() {
            self.locus = Some(locus());
        }
    }

    fn done(self) -> IdentityCheck {
        IdentityCheck { name: self.name.to_string(), cover: self.cover, pass: self.locus.is_none(), checked: self.checked, locus: self.locus }
    }
}

fn half_name(d: &DiscreteDomain, h: usize) -> String {
    let he = d.halves[h];
    format!("half-edge {:?}{}", d.vertices[he.v], he.dir.letter())
}

fn site_name(d: &DiscreteDomain, s: Site) -> String {
    match s {
        Site::Edge(e) => {
            let ed = d.edges[e];
            format!("edge {:?}{}", d.vertices[ed.u], ed.dir.letter())
        }
        Site::Half(h) => half_name(d, h),
    }
}

/// s-holomorphicity at every corner: projections onto η_c·ℝ agree.
pub fn check_s_holomorphic(f: &SpinorField) -> IdentityCheck {
    let d = f.domain();
    let mut t = Tally::new("s_holomorphicity", &f.cover);
    for c in d.corners() {
        let e2 = eta_corner_sq(c.k);
        let f1 = f.local(c.v, c.k as usize);
        let f2 = f.local(c.v, (c.k as usize + 1) % 4);
        let p1 = &f1 + &e2 * f1.conj();
        let p2 = &f2 + &e2 * f2.conj();
        t.check(p1 == p2, || format!("corner {} of vertex {:?}: {} vs {}", c.k, d.vertices[c.v], f1, f2));
    }
    t.done()
}

/// F(b) ∥ η_b at every boundary half-edge not in `sources`.
pub fn check_boundary_condition(f: &SpinorField, sources: &[usize]) -> IdentityCheck {
    let d = f.domain();
    let mut t = Tally::new("boundary_condition", &f.cover);
    for (b, he) in d.halves.iter().enumerate() {
        if sources.contains(&b) {
            continue;
        }
        let e = eta_half(he.dir);
        let v = &f.values[d.edges.len() + b];
        t.check(v == &(&e * &e * v.conj()), || format!("{}: {}", half_name(d, b), v));
    }
    t.done()
}

/// F(z*) = −F(z), against the definitional sum on a sample of sites.
pub fn check_antisymmetry(f: &SpinorField, sample: usize) -> Result<IdentityCheck, ObsError> {
    let d = f.domain();
    let mut t = Tally::new("deck_antisymmetry", &f.cover);
    let n = d.edges.len() + d.halves.len();
    let step = (n / sample.max(1)).max(1);
    for i in (0..n).step_by(step) {
        let s = site_at(d, i);
        let star = multi_by_definition(&f.cover, f.source, &f.marked, &f.arcs, &f.eta, CoverPoint::new(s, -1))?;
        let direct = multi_by_definition(&f.cover, f.source, &f.marked, &f.arcs, &f.eta, CoverPoint::new(s, 1))?;
        let got = f.at(CoverPoint::new(s, 1));
        t.check(direct == got && star == -&got, || format!("{}: {} vs {}", site_name(d, s), star, got));
    }
    Ok(t.done())
}

/// Options for the identity suite.
#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    pub obs: ObsOptions,
    /// Sign applied to η of the observable's prefactor only (test hook).
    pub eta_sign: i8,
    /// Sites compared against the definitional sum per field.
    pub antisym_sample: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { obs: ObsOptions::default(), eta_sign: 1, antisym_sample: 6 }
    }
}

fn hole_set_mask(cover: &DoubleCover) -> usize {
    cover.branch_mask as usize
}

/// Full identity suite for a source a0 and (possibly empty) marked points
/// a1..a2n, over the given covers.
pub fn check_identities(covers: &[DoubleCover], a0: usize, marked: &[usize], opts: CheckOptions) -> Result<IdentityReport, ObsError> {
    check_same_base(covers)?;
    let c0 = covers.first().ok_or(ObsError::CoverMismatch)?;
    let d = c0.domain.clone();
    check_marked(&d, a0, marked)?;
    let arcs = ArcData::following_boundary(&d, &c0.cut_mask, marked)?;
    let etas = marked_etas(&d, a0, marked, &arcs)?;
    let sgn = |q: Q8| if opts.eta_sign < 0 { -q } else { q };
    let mut report = IdentityReport::default();

    // single-source fields for every marked point on its boundary-arc lift
    let points: Vec<usize> = std::iter::once(a0).chain(marked.iter().copied()).collect();
    let mut single: Vec<Vec<SpinorField>> = Vec::new();
    for (k, &p) in points.iter().enumerate() {
        let sheets: Vec<i8> = covers.iter().map(|c| boundary_sheet(c, a0, p).unwrap()).collect();
        single.push(observable_fields(covers, p, Some(sgn(etas[k].clone())), &sheets, opts.obs)?);
    }
    let multi = if marked.is_empty() {
        single[0].clone()
    } else {
        multi_fields_with(covers, a0, marked, &arcs, Some(sgn(etas[0].clone())), &vec![1; covers.len()], opts.obs)?
    };

    for (ci, cover) in covers.iter().enumerate() {
        for fs in single.iter().map(|s| &s[ci]).chain(if marked.is_empty() { None } else { Some(&multi[ci]) }) {
            report.checks.push(check_antisymmetry(fs, opts.antisym_sample)?);
            report.checks.push(check_s_holomorphic(fs));
        }
        for (k, &p) in points.iter().enumerate() {
            report.checks.push(check_boundary_condition(&single[k][ci], &[p]));
        }
        if !marked.is_empty() {
            report.checks.push(check_boundary_condition(&multi[ci], &points));
        }
        // positivity of (iη_a)^{-1} F(a, a)
        let mut t = Tally::new("positivity", cover);
        for (k, &p) in points.iter().enumerate() {
            let f = &single[k][ci];
            let r = f.at(CoverPoint::new(Site::Half(p), f.source.sheet))
                .checked_div(&(&Q8::i() * &etas[k]))
                .ok_or(ObsError::ZeroDivision)?;
            t.check(r.is_real() && r.real_sign() == Some(std::cmp::Ordering::Greater), || format!("{}: {}", half_name(&d, p), r));
        }
        report.checks.push(t.done());
    }

    // boundary values against spin correlations
    let plus = hole_moments(&d, &BoundaryCondition::Plus)?;
    let eta_a = eta_half(d.halves[a0].dir);
    let mut t_src: Vec<Tally> = covers.iter().map(|c| Tally::new("source_value_correlation", c)).collect();
    for (ci, c) in covers.iter().enumerate() {
        let f = &single[0][ci];
        let lhs = f.at(CoverPoint::new(Site::Half(a0), 1));
        let rhs = &Q8::i() * &eta_a * &plus[hole_set_mask(c)];
        t_src[ci].check(lhs == rhs, || format!("{}: {} vs {}", half_name(&d, a0), lhs, rhs));
    }
    report.checks.extend(t_src.into_iter().map(Tally::done));

    // outer b after the last marked point, counterclockwise from a0
    let n = d.outer_walk.len() - 1;
    let p0 = d.outer_pos[&a0];
    let last = marked.last().map(|m| (d.outer_pos[m] + n - p0) % n).unwrap_or(0);
    let name = if marked.is_empty() { "boundary_value_correlation" } else { "multi_boundary_correlation" };
    let mut t_b: Vec<Tally> = covers.iter().map(|c| Tally::new(name, c)).collect();
    for &b in &d.outer_halves {
        let r = (d.outer_pos[&b] + n - p0) % n;
        if b == a0 || r <= last {
            continue;
        }
        let mut pts = points.clone();
        pts.push(b);
        let mom = hole_moments(&d, &BoundaryCondition::Marked(pts))?;
        let wind = d.outer_arc_wind(a0, b).unwrap();
        for (ci, c) in covers.iter().enumerate() {
            let sheet = boundary_sheet(c, a0, b).unwrap();
            let lhs = multi[ci].at(CoverPoint::new(Site::Half(b), sheet));
            let rhs = -(&eta_a * Q8::zeta_pow(-wind) * &mom[hole_set_mask(c)]);
            t_b[ci].check(lhs == rhs, || format!("{}: {} vs {}", half_name(&d, b), lhs, rhs));
        }
    }
    report.checks.extend(t_b.into_iter().map(Tally::done));

    // on the cover branching around components with an odd number of marked
    // points, F(a, A; b) = ±η_b Z_{a,A,b}
    for (ci, c) in covers.iter().enumerate() {
        let mut t = Tally::new("branching_cover_partition", c);
        for b in 0..d.halves.len() {
            if points.contains(&b) {
                continue;
            }
            let want = match d.halves[b].component {
                Component::Outer => 0u64,
                Component::Hole(j) => 1u64 << j,
            };
            if c.branch_mask != want {
                continue;
            }
            let mut pts = points.clone();
            pts.push(b);
            let z = partition_fn(&d, &BoundaryCondition::Marked(pts))?;
            let v = multi[ci].at(CoverPoint::new(Site::Half(b), 1));
            let eb = eta_half(d.halves[b].dir);
            let r = v.checked_div(&eb).ok_or(ObsError::ZeroDivision)?;
            t.check(r == z || r == -&z, || format!("{}: {} vs ±{}", half_name(&d, b), r, z));
        }
        if t.checked > 0 {
            report.checks.push(t.done());
        }
    }

    if marked.is_empty() {
        return Ok(report);
    }

    for (ci, c) in covers.iter().enumerate() {
        let sheets: Vec<i8> = points.iter().map(|&p| boundary_sheet(c, a0, p).unwrap()).collect();
        let at_k = |f: &SpinorField, k: usize| f.at(CoverPoint::new(Site::Half(points[k]), sheets[k]));
        let m = points.len();
        let diag: Vec<Q8> = (0..m).map(|k| at_k(&single[k][ci], k)).collect();

        // recursion
        let coef: Vec<Q8> = (0..m)
            .map(|k| at_k(&multi[ci], k).checked_div(&diag[k]).ok_or(ObsError::ZeroDivision))
            .collect::<Result<_, _>>()?;
        let mut t = Tally::new("recursion", c);
        let nsites = d.edges.len() + d.halves.len();
        for i in 0..nsites {
            let mut rhs = Q8::zero();
            for k in 0..m {
                rhs += &coef[k] * &single[k][ci].values[i];
            }
            let lhs = &multi[ci].values[i];
            t.check(*lhs == rhs, || format!("{}: {} vs {}", site_name(&d, site_at(&d, i)), lhs, rhs));
        }
        report.checks.push(t.done());

        // G matrix
        let mut t = Tally::new("g_matrix_real_antisymmetric", c);
        let mut g = vec![vec![Q8::zero(); m]; m];
        for j in 0..m {
            for k in 0..m {
                if j == k {
                    continue;
                }
                let den = &Q8::i() * &diag[k];
                g[j][k] = at_k(&single[j][ci], k).checked_div(&den).ok_or(ObsError::ZeroDivision)?;
            }
        }
        for j in 0..m {
            for k in 0..m {
                let gjk = &g[j][k];
                t.check(gjk.is_real() && *gjk == -&g[k][j], || format!("G[{j}][{k}] = {gjk}, G[{k}][{j}] = {}", g[k][j]));
            }
        }
        report.checks.push(t.done());

        // Pfaffian expansion
        let mut t = Tally::new("pfaffian_expansion", c);
        let anti: Vec<Vec<Q8>> = (0..m)
            .map(|j| (0..m).map(|k| if j < k { g[j][k].clone() } else if j > k { -&g[k][j] } else { Q8::zero() }).collect())
            .collect();
        let pf: Vec<Q8> = (0..m).map(|k| pfaffian(&minor(&anti, &[k]))).collect::<Result<_, _>>()?;
        for i in 0..nsites {
            let mut rhs = Q8::zero();
            for k in 0..m {
                let term = &pf[k] * &single[k][ci].values[i];
                if k % 2 == 0 {
                    rhs += term;
                } else {
                    rhs -= &term;
                }
            }
            let lhs = &multi[ci].values[i];
            t.check(*lhs == rhs, || format!("{}: {} vs {}", site_name(&d, site_at(&d, i)), lhs, rhs));
        }
        report.checks.push(t.done());
    }

    // removing an arc: F(a0,A;a_k) = (−1)^k η_k/(iη_k') F(a0,A[k,k'];a_k')
    let ns = marked.len() / 2;
    let mut t_arc: Vec<Tally> = covers.iter().map(|c| Tally::new("arc_removal", c)).collect();
    for s in 0..ns {
        let reduced: Vec<usize> = marked.iter().enumerate().filter(|&(i, _)| i / 2 != s).map(|(_, &m)| m).collect();
        let red_arcs = ArcData { arcs: arcs.arcs.iter().enumerate().filter(|&(i, _)| i != s).map(|(_, a)| *a).collect() };
        let red = multi_fields_with(covers, a0, &reduced, &red_arcs, Some(sgn(etas[0].clone())), &vec![1; covers.len()], opts.obs)?;
        for (k, kp) in [(2 * s + 1, 2 * s + 2), (2 * s + 2, 2 * s + 1)] {
            for (ci, c) in covers.iter().enumerate() {
                let pk = CoverPoint::new(Site::Half(points[k]), boundary_sheet(c, a0, points[k]).unwrap());
                let pkp = CoverPoint::new(Site::Half(points[kp]), boundary_sheet(c, a0, points[kp]).unwrap());
                let lhs = multi[ci].at(pk);
                let fac = etas[k].checked_div(&(&Q8::i() * &etas[kp])).ok_or(ObsError::ZeroDivision)?;
                let mut rhs = fac * red[ci].at(pkp);
                if k % 2 == 1 {
                    rhs = -rhs;
                }
                t_arc[ci].check(lhs == rhs, || format!("{}: {} vs {}", half_name(&d, points[k]), lhs, rhs));
            }
        }
    }
    report.checks.extend(t_arc.into_iter().map(Tally::done));
    Ok(report)
}

/// Matrix Ĝ over the points a0..a_{2n+1} with entries
/// F(a_j; a_k)/(iF(a_k; a_k)) for j < k, antisymmetrized.
pub fn g_hat(fields: &[SpinorField], points: &[usize], sheets: &[i8]) -> Result<Vec<Vec<Q8>>, ObsError> {
    let m = points.len();
    let at = |f: &SpinorField, k: usize| f.at(CoverPoint::new(Site::Half(points[k]), sheets[k]));
    let mut g = vec![vec![Q8::zero(); m]; m];
    for k in 0..m {
        let den = &Q8::i() * at(&fields[k], k);
        for j in 0..k {
            let v = at(&fields[j], k).checked_div(&den).ok_or(ObsError::ZeroDivision)?;
            g[k][j] = -&v;
            g[j][k] = v;
        }
    }
    Ok(g)
}

/// Pf Ĝ_ϖ / Pf Ĝ_0 for outer points a0..a_{2n+1} in counterclockwise order.
pub fn discrete_pfaffian_ratio(cover: &DoubleCover, points: &[usize], opts: ObsOptions) -> Result<Q8, ObsError> {
    let d = &cover.domain;
    check_marked(d, points[0], &points[1..])?;
    let trivial = DoubleCover::with_cut_masks(cover.domain.clone(), &vec![false; d.num_holes()], cover.cut_mask.clone())?;
    let covers = [cover.clone(), trivial];
    let inner = &points[1..points.len() - 1];
    let arcs = ArcData::following_boundary(d, &cover.cut_mask, inner)?;
    let mut etas = marked_etas(d, points[0], inner, &arcs)?;
    etas.push(eta_half(d.halves[*points.last().unwrap()].dir));
    let mut per_cover: Vec<Vec<SpinorField>> = vec![Vec::new(), Vec::new()];
    for (k, &p) in points.iter().enumerate() {
        let sheets: Vec<i8> = covers.iter().map(|c| boundary_sheet(c, points[0], p).unwrap()).collect();
        let f = observable_fields(&covers, p, Some(etas[k].clone()), &sheets, opts)?;
        for (ci, fi) in f.into_iter().enumerate() {
            per_cover[ci].push(fi);
        }
    }
    let mut pf = Vec::new();
    for (ci, c) in covers.iter().enumerate() {
        let sheets: Vec<i8> = points.iter().map(|&p| boundary_sheet(c, points[0], p).unwrap()).collect();
        pf.push(pfaffian(&g_hat(&per_cover[ci], points, &sheets)?)?);
    }
    pf[0].checked_div(&pf[1]).ok_or(ObsError::ZeroDivision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising_enum::partition_fn;
    use crate::lattice::Dir;
    use proptest::prelude::*;

    fn dom(faces: &[(i64, i64)]) -> Arc<DiscreteDomain> {
        Arc::new(DiscreteDomain::from_faces(faces).unwrap())
    }

    fn annulus() -> Arc<DiscreteDomain> {
        let f: Vec<_> = DiscreteDomain::rectangle(3, 3).into_iter().filter(|&c| c != (1, 1)).collect();
        dom(&f)
    }

    #[test]
    fn pfaffian_small() {
        let a = vec![vec![0.0, 3.0], vec![-3.0, 0.0]];
        assert_eq!(pfaffian(&a).unwrap(), 3.0);
        let e: Vec<Vec<f64>> = Vec::new();
        assert_eq!(pfaffian(&e).unwrap(), 1.0);
        let up = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut m = vec![vec![0.0; 4]; 4];
        let mut it = up.iter();
        for i in 0..4 {
            for j in i + 1..4 {
                let v = *it.next().unwrap();
                m[i][j] = v;
                m[j][i] = -v;
            }
        }
        // cofactor oracle a12 a34 − a13 a24 + a14 a23
        assert_eq!(pfaffian(&m).unwrap(), 1.0 * 6.0 - 2.0 * 5.0 + 3.0 * 4.0);
        m[0][1] = 7.0;
        assert_eq!(pfaffian(&m), Err(ObsError::NotAntisymmetric));
    }

    proptest! {
        #[test]
        fn pfaffian_squared_is_det(vals in proptest::collection::vec(-3i32..4, 15)) {
            let n = 6;
            let mut m = vec![vec![0.0f64; n]; n];
            let mut it = vals.iter();
            for i in 0..n {
                for j in i + 1..n {
                    let v = *it.next().unwrap() as f64;
                    m[i][j] = v;
                    m[j][i] = -v;
                }
            }
            let pf = pfaffian(&m).unwrap();
            prop_assert!((pf * pf - det_f64(&m)).abs() < 1e-8);
        }
    }

    #[test]
    fn single_cell_source_value() {
        let d = dom(&[(0, 0)]);
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let pa = CoverPoint::new(Site::Half(a), 1);
        let v = observable(&cov, pa, pa).unwrap();
        let z = partition_fn(&d, &BoundaryCondition::Plus).unwrap();
        assert_eq!(v, &Q8::i() * eta_half(Dir::S) * z);
        assert_eq!(observable(&cov, pa, pa.star()).unwrap(), -v);
    }

    #[test]
    fn engine_matches_definition() {
        let d = annulus();
        let a = d.half_at((0, 1), Dir::W).unwrap();
        for br in [false, true] {
            let cov = DoubleCover::new(d.clone(), &[br]).unwrap();
            let f = observable_fields(std::slice::from_ref(&cov), a, None, &[1], ObsOptions::default()).unwrap();
            for i in (0..d.edges.len() + d.halves.len()).step_by(7) {
                let z = CoverPoint::new(site_at(&d, i), 1);
                let direct = observable_by_definition(&cov, CoverPoint::new(Site::Half(a), 1), z).unwrap();
                assert_eq!(f[0].at(z), direct);
            }
        }
    }

    #[test]
    fn single_cell_suite_passes() {
        let d = dom(&[(0, 0)]);
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let r = check_identities(&[cov], a, &[], CheckOptions::default()).unwrap();
        assert!(r.all_pass(), "{:?}", r.first_failure());
    }

    #[test]
    fn annulus_suite_passes() {
        let d = annulus();
        let covers = [DoubleCover::new(d.clone(), &[false]).unwrap(), DoubleCover::new(d.clone(), &[true]).unwrap()];
        let a = d.half_at((0, 1), Dir::W).unwrap();
        let r = check_identities(&covers, a, &[], CheckOptions::default()).unwrap();
        assert!(r.all_pass(), "{:?}", r.first_failure());
    }

    #[test]
    fn perturbed_field_fails_at_a_corner() {
        let d = dom(&DiscreteDomain::rectangle(2, 2));
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let mut f = observable_fields(&[cov], a, None, &[1], ObsOptions::default()).unwrap().remove(0);
        assert!(check_s_holomorphic(&f).pass);
        f.values[0] += Q8::one();
        let c = check_s_holomorphic(&f);
        assert!(!c.pass);
        assert!(c.locus.unwrap().starts_with("corner"));
    }

    #[test]
    fn resolution_rule_does_not_change_fields() {
        let d = dom(&DiscreteDomain::rectangle(2, 2));
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 1), Dir::W).unwrap();
        let alt = ObsOptions { rule: Resolution::NwSe, ..Default::default() };
        let f1 = observable_fields(std::slice::from_ref(&cov), a, None, &[1], ObsOptions::default()).unwrap();
        let f2 = observable_fields(std::slice::from_ref(&cov), a, None, &[1], alt).unwrap();
        assert_eq!(f1[0].values, f2[0].values);
    }

    #[test]
    fn full_half_weight_breaks_s_holomorphicity() {
        let d = dom(&[(0, 0)]);
        let cov = DoubleCover::trivial(d.clone());
        let a = d.half_at((0, 0), Dir::S).unwrap();
        let opts = ObsOptions { half_weight: HalfWeight::Full, ..Default::default() };
        let f = observable_fields(&[cov], a, None, &[1], opts).unwrap();
        assert!(!check_s_holomorphic(&f[0]).pass);
    }
}
