//! The discrete Riemann boundary value problem solved directly, and the
//! functions H_• and H_∘ built from an s-holomorphic field.
//!
//! Unknowns are one real projection X(c) = Re(η̄_c F) per corner, seen from
//! the +1 sheet at the corner's vertex. s-holomorphicity is then built in;
//! what remains are two consistency rows per interior edge, one boundary row
//! per half-edge and the two normalization rows at the source.

use std::collections::{HashMap, VecDeque};
use std::fmt::Debug;

use faer::linalg::solvers::SolveLstsq;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::BigRational;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{eta_corner_f64, eta_corner_sq, eta_half, Cell, Component, Corner, CoverPoint, DiscreteDomain, DoubleCover, Site, Strand};
use crate::qcyc::{rat_to_f64, Q8};
use crate::spinor_obs::SpinorField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear system is inconsistent: relative residual {0:e}")]
    SingularSystem(f64),
    #[error("solution vanishes (norm {0:e})")]
    ZeroSolution(f64),
    #[error("source must be a boundary half-edge")]
    SourceNotOnBoundary,
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("H does not close: defect {defect:e} at {locus}")]
    ClosureViolation { defect: f64, locus: String },
}

/// Unknowns at or above this count use the sparse solver.
pub const DENSE_LIMIT: usize = 2000;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Method {
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// A double-precision field on the +1 lifts of all sites.
#[derive(Clone, Debug)]
pub struct FloatField {
    pub cover: DoubleCover,
    pub source: CoverPoint,
    pub values: Vec<Complex64>,
}

impl FloatField {
    pub fn from_exact(f: &SpinorField) -> Self {
        FloatField { cover: f.cover.clone(), source: f.source, values: f.to_c64() }
    }

    pub fn domain(&self) -> &DiscreteDomain {
        &self.cover.domain
    }

    pub fn at(&self, z: CoverPoint) -> Complex64 {
        let d = self.domain();
        let i = match z.site {
            Site::Edge(e) => e,
            Site::Half(h) => d.edges.len() + h,
        };
        if z.sheet < 0 {
            -self.values[i]
        } else {
            self.values[i]
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        FloatField { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn max_abs_diff(&self, other: &[Complex64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Sparse rows of the corner system.
#[derive(Clone, Debug)]
pub struct CornerSystem {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

fn corner_col(v: usize, k: usize) -> usize {
    4 * v + k
}

fn c(z: Q8) -> Complex64 {
    z.to_c64()
}

/// F from its projections on the two corners flanking strand `s` at `v`,
/// as coefficient pairs: F = (p0·X_{s−1} + p1·X_s).
fn strand_inverse(s: usize) -> [Complex64; 2] {
    let e1 = eta_corner_f64(((s + 3) % 4) as u8);
    let e2 = eta_corner_f64(s as u8);
    // Re(η̄ F) = Re η·a + Im η·b
    let m = nalgebra::Matrix2::new(e1.re, e1.im, e2.re, e2.im);
    let inv = m.try_inverse().expect("adjacent corner directions differ");
    [Complex64::new(inv[(0, 0)], inv[(1, 0)]), Complex64::new(inv[(0, 1)], inv[(1, 1)])]
}

impl CornerSystem {
    /// Rows for F_ϖ(a, ·) with F(a) = iη_a; `homogeneous` imposes the
    /// boundary condition at `a` too and drops the normalization.
    pub fn assemble(cover: &DoubleCover, a: usize, homogeneous: bool) -> Self {
        let d = &*cover.domain;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let inv: Vec<[Complex64; 2]> = (0..4).map(strand_inverse).collect();
        for (e, ed) in d.edges.iter().enumerate() {
            let s = ed.dir.index();
            let [p0, p1] = inv[s];
            let sp = (s + 2) % 4;
            let sign = if cover.flip[e] { -1.0 } else { 1.0 };
            for k in [(sp + 3) % 4, sp] {
                let eta = eta_corner_f64(k as u8);
                // Re(η̄ ·σF) − X_w = 0 with F = p0 X1 + p1 X2
                let r0 = (eta.conj() * p0).re * sign;
                let r1 = (eta.conj() * p1).re * sign;
                rows.push(vec![
                    (corner_col(ed.u, (s + 3) % 4), r0),
                    (corner_col(ed.u, s), r1),
                    (corner_col(ed.w, k), -1.0),
                ]);
                rhs.push(0.0);
            }
        }
        for (b, he) in d.halves.iter().enumerate() {
            let s = he.dir.index();
            let e1 = eta_corner_f64(((s + 3) % 4) as u8);
            let e2 = eta_corner_f64(s as u8);
            let eb = c(eta_half(he.dir));
            if b == a && !homogeneous {
                let target = Complex64::i() * eb;
                rows.push(vec![(corner_col(he.v, (s + 3) % 4), 1.0)]);
                rhs.push((e1.conj() * target).re);
                rows.push(vec![(corner_col(he.v, s), 1.0)]);
                rhs.push((e2.conj() * target).re);
            } else {
                // F = t·η_b with t real
                rows.push(vec![(corner_col(he.v, (s + 3) % 4), (e2.conj() * eb).re), (corner_col(he.v, s), -(e1.conj() * eb).re)]);
                rhs.push(0.0);
            }
        }
        CornerSystem { ncols: 4 * d.vertices.len(), rows, rhs }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, &b)| {
                let ax: f64 = r.iter().map(|&(j, v)| v * x[j]).sum();
                (ax - b) * (ax - b)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    fn solve_dense(&self) -> Result<Vec<f64>, SolveError> {
        let a = self.dense();
        let n = self.ncols;
        let qr = a.qr();
        let mut qtb = DVector::from_vec(self.rhs.clone());
        qr.q_tr_mul(&mut qtb);
        let r = qr.r();
        let top = qtb.rows(0, n).into_owned();
        let x = r.solve_upper_triangular(&top).ok_or(SolveError::SingularSystem(f64::INFINITY))?;
        Ok(x.iter().copied().collect())
    }

    fn solve_sparse(&self) -> Result<Vec<f64>, SolveError> {
        let mut trips = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                trips.push(Triplet::new(i, j, v));
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.rows.len(), self.ncols, &trips)
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let qr = a.sp_qr().map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        let b = Mat::from_fn(self.rows.len(), 1, |i, _| self.rhs[i]);
        let x = qr.solve_lstsq(&b);
        Ok((0..self.ncols).map(|i| x[(i, 0)]).collect())
    }

    pub fn solve(&self, method: Method) -> Result<Vec<f64>, SolveError> {
        let dense = match method {
            Method::Dense => true,
            Method::Sparse => false,
            Method::Auto => self.ncols < DENSE_LIMIT,
        };
        if dense {
            self.solve_dense()
        } else {
            self.solve_sparse()
        }
    }
}

/// Field values recovered from corner projections.
pub fn field_from_corners(cover: &DoubleCover, x: &[f64]) -> Vec<Complex64> {
    let d = &*cover.domain;
    let inv: Vec<[Complex64; 2]> = (0..4).map(strand_inverse).collect();
    let at = |v: usize, s: usize| {
        let [p0, p1] = inv[s];
        p0 * x[corner_col(v, (s + 3) % 4)] + p1 * x[corner_col(v, s)]
    };
    let mut out: Vec<Complex64> = d.edges.iter().map(|ed| at(ed.u, ed.dir.index())).collect();
    out.extend(d.halves.iter().map(|he| at(he.v, he.dir.index())));
    out
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: FloatField,
    pub relative_residual: f64,
    pub method: Method,
    pub unknowns: usize,
}

pub fn solve_bvp(cover: &DoubleCover, a: CoverPoint) -> Result<Solution, SolveError> {
    solve_bvp_with(cover, a, Method::Auto)
}

pub fn solve_bvp_with(cover: &DoubleCover, a: CoverPoint, method: Method) -> Result<Solution, SolveError> {
    let Site::Half(ah) = a.site else {
        return Err(SolveError::SourceNotOnBoundary);
    };
    let sys = CornerSystem::assemble(cover, ah, false);
    let x = sys.solve(method)?;
    let rel = sys.residual(&x) / sys.rhs_norm();
    if !(rel <= RESIDUAL_TOL) {
        return Err(SolveError::SingularSystem(rel));
    }
    let mut values = field_from_corners(cover, &x);
    let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(SolveError::ZeroSolution(norm));
    }
    if a.sheet < 0 {
        for v in &mut values {
            *v = -*v;
        }
    }
    let used = match method {
        Method::Auto if sys.ncols < DENSE_LIMIT => Method::Dense,
        Method::Auto => Method::Sparse,
        m => m,
    };
    Ok(Solution { field: FloatField { cover: cover.clone(), source: a, values }, relative_residual: rel, method: used, unknowns: sys.ncols })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogeneousReport {
    /// Norm of the least-squares solution with zero right-hand side.
    pub solution_norm: f64,
    /// Smallest singular value of the over-constrained system.
    pub sigma_min: f64,
}

/// The boundary condition imposed at `a` as well, with no normalization:
/// the only solution is zero.
pub fn homogeneous_check(cover: &DoubleCover, a: usize) -> HomogeneousReport {
    let sys = CornerSystem::assemble(cover, a, true);
    let m = sys.dense();
    let svd = m.svd(true, true);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let b = DVector::zeros(sys.rows.len());
    let x = svd.solve(&b, 1e-12).map(|x| x.norm()).unwrap_or(f64::NAN);
    HomogeneousReport { solution_norm: x, sigma_min }
}

/// Arithmetic needed to integrate H from a field.
pub trait HScalar: Clone + Send + Sync {
    type R: Clone + Debug + Send + Sync + Serialize;
    fn zero() -> Self::R;
    fn add(a: &Self::R, b: &Self::R) -> Self::R;
    fn sub(a: &Self::R, b: &Self::R) -> Self::R;
    fn scale_delta(a: &Self::R, delta: &BigRational) -> Self::R;
    /// |R| ≤ tol, exact zero test for exact values.
    fn small(a: &Self::R, tol: f64) -> bool;
    /// a ≥ −tol.
    fn nonneg(a: &Self::R, tol: f64) -> bool;
    fn to_f64(a: &Self::R) -> f64;
    /// √2·(Re(η̄_c F))², computed from η_c² only.
    fn corner_term(f: &Self, k: u8) -> Self::R;
    /// Im[F²·(dx + i·dy)].
    fn im_sq_disp(f: &Self, dx: i64, dy: i64) -> Self::R;
    fn neg(f: &Self) -> Self;
    fn tolerance() -> f64;
}

impl HScalar for Q8 {
    type R = Q8;
    fn zero() -> Q8 {
        Q8::zero()
    }
    fn add(a: &Q8, b: &Q8) -> Q8 {
        a + b
    }
    fn sub(a: &Q8, b: &Q8) -> Q8 {
        a - b
    }
    fn scale_delta(a: &Q8, delta: &BigRational) -> Q8 {
        a.scale(delta)
    }
    fn small(a: &Q8, _: f64) -> bool {
        a.is_zero()
    }
    fn nonneg(a: &Q8, _: f64) -> bool {
        a.real_sign() != Some(std::cmp::Ordering::Less)
    }
    fn to_f64(a: &Q8) -> f64 {
        a.to_c64().re
    }
    fn corner_term(f: &Q8, k: u8) -> Q8 {
        let e2 = eta_corner_sq(k);
        let fb = f.conj();
        let s = &e2.conj() * f * f + Q8::from_int(2) * f * &fb + &e2 * &fb * &fb;
        (Q8::sqrt2() * s).scale(&BigRational::new(1.into(), 4.into()))
    }
    fn im_sq_disp(f: &Q8, dx: i64, dy: i64) -> Q8 {
        (f * f * Q8::from_ints([dx, 0, dy, 0])).im()
    }
    fn neg(f: &Q8) -> Q8 {
        -f
    }
    fn tolerance() -> f64 {
        0.0
    }
}

impl HScalar for Complex64 {
    type R = f64;
    fn zero() -> f64 {
        0.0
    }
    fn add(a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn scale_delta(a: &f64, delta: &BigRational) -> f64 {
        a * rat_to_f64(delta)
    }
    fn small(a: &f64, tol: f64) -> bool {
        a.abs() <= tol
    }
    fn nonneg(a: &f64, tol: f64) -> bool {
        *a >= -tol
    }
    fn to_f64(a: &f64) -> f64 {
        *a
    }
    fn corner_term(f: &Complex64, k: u8) -> f64 {
        let p = (eta_corner_f64(k).conj() * f).re;
        std::f64::consts::SQRT_2 * p * p
    }
    fn im_sq_disp(f: &Complex64, dx: i64, dy: i64) -> f64 {
        (f * f * Complex64::new(dx as f64, dy as f64)).im
    }
    fn neg(f: &Complex64) -> Complex64 {
        -f
    }
    fn tolerance() -> f64 {
        1e-9
    }
}

/// Nodes of the incidence structure carrying H.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum HNode {
    /// A vertex of the domain.
    Vertex(usize),
    /// The outer endpoint of a boundary half-edge, one step away.
    Tip(usize),
    /// A face of the domain or an adjacent cell outside it.
    Cell(Cell),
}

#[derive(Clone, Debug, Serialize)]
pub struct HField<R> {
    pub nodes: Vec<HNode>,
    pub values: Vec<R>,
    pub index: HashMap<HNode, usize>,
    /// Value of H_∘ on each complement component, outer first.
    pub constants: Vec<(Component, R)>,
    pub max_defect: f64,
    pub worst_link: Option<String>,
    pub source: usize,
}

impl<R: Clone> HField<R> {
    pub fn get(&self, n: HNode) -> Option<&R> {
        self.index.get(&n).map(|&i| &self.values[i])
    }
}

struct Link<R> {
    a: usize,
    b: usize,
    /// H(a) − H(b)
    inc: R,
    what: String,
}

/// Local value of the field at strand `s` of vertex `v` on the +1 sheet at v.
fn local<T: HScalar>(cover: &DoubleCover, values: &[T], v: usize, s: usize) -> T {
    let d = &*cover.domain;
    match d.strands[v][s] {
        Strand::Edge(e) => {
            if d.edges[e].w == v && cover.flip[e] {
                T::neg(&values[e])
            } else {
                values[e].clone()
            }
        }
        Strand::Half(h) => values[d.edges.len() + h].clone(),
    }
}

/// Integrates H over a spanning tree of the corner links and half-edge links.
pub fn build_h<T: HScalar>(cover: &DoubleCover, values: &[T], source: usize) -> Result<HField<T::R>, SolveError> {
    let d = &*cover.domain;
    let mut nodes: Vec<HNode> = Vec::new();
    let mut index: HashMap<HNode, usize> = HashMap::new();
    let mut id = |n: HNode, nodes: &mut Vec<HNode>| -> usize {
        *index.entry(n).or_insert_with(|| {
            nodes.push(n);
            nodes.len() - 1
        })
    };
    for v in 0..d.vertices.len() {
        id(HNode::Vertex(v), &mut nodes);
    }
    let mut links: Vec<Link<T::R>> = Vec::new();
    for corner in d.corners() {
        let Corner { v, k } = corner;
        let cell = d.corner_cell(corner);
        let ci = id(HNode::Cell(cell), &mut nodes);
        let f = local(cover, values, v, k as usize);
        // value must agree with the other strand by s-holomorphicity
        let inc = T::corner_term(&f, k);
        links.push(Link { a: v, b: ci, inc, what: format!("corner {k} of {:?}", d.vertices[v]) });
        let g = local(cover, values, v, (k as usize + 1) % 4);
        let inc2 = T::corner_term(&g, k);
        links.push(Link { a: v, b: ci, inc: inc2, what: format!("corner {k} of {:?} (second strand)", d.vertices[v]) });
    }
    for (b, he) in d.halves.iter().enumerate() {
        let ti = id(HNode::Tip(b), &mut nodes);
        let f = &values[d.edges.len() + b];
        let (dx, dy) = he.dir.vec();
        links.push(Link { a: he.v, b: ti, inc: T::im_sq_disp(f, -dx, -dy), what: format!("half-edge at {:?}", d.vertices[he.v]) });
    }
    // spanning tree by BFS
    let n = nodes.len();
    let mut adj: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); n];
    for (li, l) in links.iter().enumerate() {
        adj[l.a].push((l.b, li, true));
        adj[l.b].push((l.a, li, false));
    }
    let mut val: Vec<Option<T::R>> = vec![None; n];
    val[0] = Some(T::zero());
    let mut q = VecDeque::from([0usize]);
    while let Some(x) = q.pop_front() {
        for &(y, li, fwd) in &adj[x] {
            if val[y].is_none() {
                let hx = val[x].clone().unwrap();
                // fwd: x = a, H(b) = H(a) − inc
                let hy = if fwd { T::sub(&hx, &links[li].inc) } else { T::add(&hx, &links[li].inc) };
                val[y] = Some(hy);
                q.push_back(y);
            }
        }
    }
    let mut values_h: Vec<T::R> = val.into_iter().map(|v| v.expect("incidence graph is connected")).collect();
    let mut max_defect = 0.0f64;
    let mut worst = None;
    for l in &links {
        let diff = T::sub(&T::sub(&values_h[l.a], &values_h[l.b]), &l.inc);
        let df = T::to_f64(&diff).abs();
        let bad = !T::small(&diff, 0.0);
        if bad && (df > max_defect || worst.is_none()) {
            max_defect = max_defect.max(df);
            worst = Some(l.what.clone());
        }
    }
    // fix H_∘ = 0 on the component containing the source
    let src_comp = d.halves[source].component;
    let s = d.halves[source].dir.index();
    let src_cell = crate::lattice::corner_cell(d.vertices[d.halves[source].v], s as u8);
    debug_assert_eq!(d.cell_component(src_cell), Some(src_comp));
    let shift = values_h[index[&HNode::Cell(src_cell)]].clone();
    for v in &mut values_h {
        *v = T::sub(v, &shift);
    }
    for v in &mut values_h {
        *v = T::scale_delta(v, &d.delta);
    }
    let mut constants: Vec<(Component, T::R)> = Vec::new();
    let mut comps = vec![Component::Outer];
    comps.extend((0..d.holes.len()).map(Component::Hole));
    for comp in comps {
        if let Some(node) = nodes.iter().position(|n| matches!(n, HNode::Cell(c) if d.cell_component(*c) == Some(comp))) {
            constants.push((comp, values_h[node].clone()));
        }
    }
    let out = HField { nodes, values: values_h, index, constants, max_defect: max_defect * rat_to_f64(&d.delta), worst_link: worst.clone(), source };
    if worst.is_some() && !(T::tolerance() > 0.0 && out.max_defect <= T::tolerance()) {
        return Err(SolveError::ClosureViolation { defect: out.max_defect, locus: worst.unwrap() });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct HProperty {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub locus: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HReport {
    pub closure_defect: f64,
    pub properties: Vec<HProperty>,
}

impl HReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

struct PropTally {
    name: &'static str,
    checked: usize,
    locus: Option<String>,
}

impl PropTally {
    fn new(name: &'static str) -> Self {
        PropTally { name, checked: 0, locus: None }
    }
    fn check(&mut self, ok: bool, locus: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.locus.is_none() {
            self.locus = Some(locus());
        }
    }
    fn done(self) -> HProperty {
        HProperty { name: self.name.into(), pass: self.locus.is_none(), checked: self.checked, locus: self.locus }
    }
}

/// Weight of a boundary neighbour in the modified Laplacian: 2(√2 − 1).
pub fn tip_weight() -> Q8 {
    (Q8::sqrt2() - Q8::one()).scale(&BigRational::from_integer(2.into()))
}

/// Superharmonicity on faces, subharmonicity on vertices, boundary
/// monotonicity, constancy on each boundary component and the modified
/// Laplacian with boundary values set to those constants.
pub fn check_h_properties<T: HScalar>(cover: &DoubleCover, h: &HField<T::R>, tip_w: &T::R, mul: impl Fn(&T::R, &T::R) -> T::R) -> HReport {
    let d = &*cover.domain;
    let scale = h.values.iter().map(|v| T::to_f64(v).abs()).fold(1.0, f64::max);
    let tol = T::tolerance() * scale;
    let hv = |n: HNode| h.get(n).expect("node exists").clone();
    let mut props = Vec::new();

    let mut t = PropTally::new("face_superharmonic");
    for &f in &d.faces {
        let (x, y) = f;
        let mut s = T::zero();
        for nb in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            s = T::add(&s, &T::sub(&hv(HNode::Cell(nb)), &hv(HNode::Cell(f))));
        }
        t.check(T::nonneg(&T::sub(&T::zero(), &s), tol), || format!("face {f:?}: {:e}", T::to_f64(&s)));
    }
    props.push(t.done());

    let nbr = |v: usize, s: usize| match d.strands[v][s] {
        Strand::Edge(e) => HNode::Vertex(d.other_end(e, v)),
        Strand::Half(b) => HNode::Tip(b),
    };
    let mut t = PropTally::new("vertex_subharmonic");
    for v in 0..d.vertices.len() {
        let mut s = T::zero();
        for st in 0..4 {
            s = T::add(&s, &T::sub(&hv(nbr(v, st)), &hv(HNode::Vertex(v))));
        }
        t.check(T::nonneg(&s, tol), || format!("vertex {:?}: {:e}", d.vertices[v], T::to_f64(&s)));
    }
    props.push(t.done());

    let mut t = PropTally::new("boundary_monotone");
    for (b, he) in d.halves.iter().enumerate() {
        if b == h.source {
            continue;
        }
        let diff = T::sub(&hv(HNode::Vertex(he.v)), &hv(HNode::Tip(b)));
        t.check(T::nonneg(&diff, tol), || format!("half-edge at {:?}: {:e}", d.vertices[he.v], T::to_f64(&diff)));
    }
    props.push(t.done());

    let mut t = PropTally::new("boundary_constant");
    let constant = |comp: Component| h.constants.iter().find(|(c, _)| *c == comp).map(|(_, v)| v.clone());
    for (i, n) in h.nodes.iter().enumerate() {
        if let HNode::Cell(cell) = *n {
            if let Some(comp) = d.cell_component(cell) {
                let cj = constant(comp).expect("component constant");
                let diff = T::sub(&h.values[i], &cj);
                t.check(T::small(&diff, tol), || format!("cell {cell:?}: {:e}", T::to_f64(&diff)));
            }
        }
    }
    let outer = constant(Component::Outer).expect("outer constant");
    t.check(T::small(&outer, tol), || format!("outer constant {:e}", T::to_f64(&outer)));
    props.push(t.done());

    let mut t = PropTally::new("modified_laplacian");
    for v in 0..d.vertices.len() {
        let has_tip = (0..4).any(|s| matches!(d.strands[v][s], Strand::Half(b) if b != h.source));
        if !has_tip {
            continue;
        }
        let hv0 = hv(HNode::Vertex(v));
        let mut s = T::zero();
        for st in 0..4 {
            let term = match d.strands[v][st] {
                Strand::Half(b) if b != h.source => {
                    let cj = constant(d.halves[b].component).expect("component constant");
                    let diff = T::sub(&hv0, &cj);
                    t.check(T::nonneg(&diff, tol), || format!("boundary values at {:?}", d.vertices[v]));
                    mul(tip_w, &T::sub(&cj, &hv0))
                }
                _ => T::sub(&hv(nbr(v, st)), &hv0),
            };
            s = T::add(&s, &term);
        }
        t.check(T::nonneg(&s, tol), || format!("vertex {:?}: {:e}", d.vertices[v], T::to_f64(&s)));
    }
    props.push(t.done());

    HReport { closure_defect: h.max_defect, properties: props }
}

/// H-report for an exact enumeration field.
pub fn h_report_exact(f: &SpinorField) -> Result<HReport, SolveError> {
    let Site::Half(a) = f.source.site else {
        return Err(SolveError::SourceNotOnBoundary);
    };
    let h = build_h::<Q8>(&f.cover, &f.values, a)?;
    Ok(check_h_properties::<Q8>(&f.cover, &h, &tip_weight(), |a, b| a * b))
}

/// H-report for a solver field.
pub fn h_report_float(f: &FloatField) -> Result<HReport, SolveError> {
    let Site::Half(a) = f.source.site else {
        return Err(SolveError::SourceNotOnBoundary);
    };
    let h = build_h::<Complex64>(&f.cover, &f.values, a)?;
    let w = tip_weight().to_c64().re;
    Ok(check_h_properties::<Complex64>(&f.cover, &h, &w, |a, b| a * b))
}

/// [F_ϖ(a,b)/F_ϖ(a,a)]·[F₀(a,a)/F₀(a,b)] from two solver runs, b on the
/// lift reached along the counterclockwise boundary arc.
pub fn boundary_ratio(cover: &DoubleCover, trivial: &DoubleCover, a: usize, b: usize) -> Result<f64, SolveError> {
    let fa = solve_bvp(cover, CoverPoint::new(Site::Half(a), 1))?;
    let f0 = solve_bvp(trivial, CoverPoint::new(Site::Half(a), 1))?;
    Ok(ratio_from_fields(&fa.field, &f0.field, a, b))
}

pub fn ratio_from_fields(f: &FloatField, f0: &FloatField, a: usize, b: usize) -> f64 {
    let sheet = crate::spinor_obs::boundary_sheet(&f.cover, a, b).unwrap_or(1);
    let sa = CoverPoint::new(Site::Half(a), 1);
    let r = (f.at(CoverPoint::new(Site::Half(b), sheet)) / f.at(sa)) * (f0.at(sa) / f0.at(CoverPoint::new(Site::Half(b), 1)));
    r.re
}

/// The same double ratio from exact enumeration fields.
pub fn boundary_ratio_exact(f: &SpinorField, f0: &SpinorField, a: usize, b: usize) -> Option<Q8> {
    let sheet = crate::spinor_obs::boundary_sheet(&f.cover, a, b)?;
    let sa = CoverPoint::new(Site::Half(a), 1);
    let num = f.at(CoverPoint::new(Site::Half(b), sheet)) * f0.at(sa);
    let den = f.at(sa) * f0.at(CoverPoint::new(Site::Half(b), 1));
    num.checked_div(&den)
}

/// Enumeration field rescaled so that F(a) = iη_a.
pub fn normalized_exact(f: &SpinorField) -> Vec<Complex64> {
    let d = f.domain();
    let Site::Half(a) = f.source.site else { return f.to_c64() };
    let target = c(&Q8::i() * eta_half(d.halves[a].dir));
    let fa = f.at(CoverPoint::new(Site::Half(a), f.source.sheet)).to_c64();
    let s = target / fa;
    f.to_c64().into_iter().map(|v| v * s).collect()
}
