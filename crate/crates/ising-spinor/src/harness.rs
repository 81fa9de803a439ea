//! Orchestration behind the command line: JSON inputs, the fixed domain
//! catalogue with its identity suites, and the mesh-refinement experiment.

use std::sync::Arc;
use std::time::Instant;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuum::{hm_numeric, ContinuumError, RectilinearPolygon, Segment};
use crate::ising_enum::EnumError;
use crate::lattice::{normalize_edge, Cell, CoverPoint, Dir, DiscreteDomain, DoubleCover, LatticeError, Pt, Site};
use crate::qcyc::{parse_rational, Q8};
use crate::shol_solve::{self, h_report_exact, h_report_float, homogeneous_check, normalized_exact, FloatField, HReport, HomogeneousReport, Method, SolveError};
use crate::spinor_obs::{check_identities, observable_fields, CheckOptions, IdentityReport, ObsError, ObsOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
    #[error("puncture ({0}, {1}) is not strictly inside the domain")]
    PunctureOnBoundary(f64, f64),
    #[error("mesh n = {0} too coarse: puncture faces touch the boundary")]
    MeshTooCoarse(usize),
}

/// `{"delta": "p/q", "faces": [[x,y],...], "branch_flags": [bool,...]}`
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainInput {
    #[serde(default)]
    pub delta: Option<String>,
    pub faces: Vec<[i64; 2]>,
    #[serde(default)]
    pub branch_flags: Option<Vec<bool>>,
}

/// A boundary half-edge `{"vertex": [x,y], "dir": "W", "sheet": 1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfRef {
    pub vertex: [i64; 2],
    pub dir: String,
    #[serde(default)]
    pub sheet: Option<i8>,
}

/// A site: either a half-edge or an interior edge given by an endpoint and a
/// direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SiteRef {
    pub vertex: [i64; 2],
    pub dir: String,
    #[serde(default)]
    pub edge: bool,
    #[serde(default)]
    pub sheet: Option<i8>,
}

fn parse_dir(s: &str) -> Result<Dir, HarnessError> {
    Dir::parse(s).ok_or_else(|| HarnessError::Input(format!("bad direction {s:?}")))
}

impl DomainInput {
    pub fn build(&self) -> Result<Arc<DiscreteDomain>, HarnessError> {
        let faces: Vec<Cell> = self.faces.iter().map(|f| (f[0], f[1])).collect();
        let delta = match &self.delta {
            Some(s) => parse_rational(s).ok_or_else(|| HarnessError::Input(format!("bad delta {s:?}")))?,
            None => BigRational::from_integer(1.into()),
        };
        Ok(Arc::new(DiscreteDomain::build(&faces, delta)?))
    }

    pub fn cover(&self, d: &Arc<DiscreteDomain>) -> Result<DoubleCover, HarnessError> {
        let flags = self.branch_flags.clone().unwrap_or_else(|| vec![false; d.num_holes()]);
        Ok(DoubleCover::new(d.clone(), &flags)?)
    }
}

impl HalfRef {
    pub fn resolve(&self, d: &DiscreteDomain) -> Result<CoverPoint, HarnessError> {
        let h = d.half_at((self.vertex[0], self.vertex[1]), parse_dir(&self.dir)?)?;
        Ok(CoverPoint::new(Site::Half(h), self.sheet.unwrap_or(1)))
    }

    pub fn half(&self, d: &DiscreteDomain) -> Result<usize, HarnessError> {
        match self.resolve(d)?.site {
            Site::Half(h) => Ok(h),
            Site::Edge(_) => unreachable!(),
        }
    }
}

impl SiteRef {
    pub fn resolve(&self, d: &DiscreteDomain) -> Result<CoverPoint, HarnessError> {
        let p = (self.vertex[0], self.vertex[1]);
        let dir = parse_dir(&self.dir)?;
        let site = if self.edge {
            let key = normalize_edge(p, dir);
            Site::Edge(*d.edge_index.get(&key).ok_or_else(|| HarnessError::Input(format!("no interior edge at {p:?} {dir:?}")))?)
        } else {
            Site::Half(d.half_at(p, dir)?)
        };
        Ok(CoverPoint::new(site, self.sheet.unwrap_or(1)))
    }
}

/// Cartesian position of a site in units of the mesh.
pub fn site_xy(d: &DiscreteDomain, s: Site) -> (f64, f64) {
    let (x, y) = d.site_pos2(s);
    let delta = crate::qcyc::rat_to_f64(&d.delta);
    (x as f64 * delta / 2.0, y as f64 * delta / 2.0)
}

#[derive(Clone, Debug)]
pub struct CatalogueEntry {
    pub name: String,
    pub faces: Vec<Cell>,
    pub covers: Vec<Vec<bool>>,
    pub source: (Pt, Dir),
    /// Offsets into the counterclockwise list of outer half-edges, counted
    /// from the source; empty for single-source entries.
    pub marked_steps: Vec<usize>,
}

fn all_flags(m: usize) -> Vec<Vec<bool>> {
    (0..1usize << m).map(|mask| (0..m).map(|j| mask >> j & 1 == 1).collect()).collect()
}

fn without(w: i64, h: i64, holes: &[Cell]) -> Vec<Cell> {
    DiscreteDomain::rectangle(w, h).into_iter().filter(|c| !holes.contains(c)).collect()
}

/// Eight domains, fourteen cover instances.
pub fn catalogue() -> Vec<CatalogueEntry> {
    let e = |name: &str, faces: Vec<Cell>, holes: usize, source: (Pt, Dir), marked_steps: Vec<usize>| CatalogueEntry {
        name: name.into(),
        faces,
        covers: all_flags(holes),
        source,
        marked_steps,
    };
    vec![
        e("1x1", without(1, 1, &[]), 0, ((0, 0), Dir::S), vec![]),
        e("2x2", without(2, 2, &[]), 0, ((0, 1), Dir::W), vec![]),
        e("3x3", without(3, 3, &[]), 0, ((0, 1), Dir::W), vec![]),
        e("3x3-center", without(3, 3, &[(1, 1)]), 1, ((0, 1), Dir::W), vec![]),
        e("4x4-one", without(4, 4, &[(1, 2)]), 1, ((0, 2), Dir::W), vec![]),
        e("4x4-two", without(4, 4, &[(1, 1), (2, 2)]), 2, ((0, 2), Dir::W), vec![]),
        e("2x2-marked", without(2, 2, &[]), 0, ((0, 1), Dir::W), vec![2, 4]),
        e("3x3-center-marked", without(3, 3, &[(1, 1)]), 1, ((0, 1), Dir::W), vec![3, 6]),
    ]
}

impl CatalogueEntry {
    pub fn domain(&self) -> Result<Arc<DiscreteDomain>, HarnessError> {
        Ok(Arc::new(DiscreteDomain::from_faces(&self.faces)?))
    }

    pub fn covers(&self, d: &Arc<DiscreteDomain>) -> Result<Vec<DoubleCover>, HarnessError> {
        self.covers.iter().map(|f| Ok(DoubleCover::new(d.clone(), f)?)).collect()
    }

    pub fn source(&self, d: &DiscreteDomain) -> Result<usize, HarnessError> {
        Ok(d.half_at(self.source.0, self.source.1)?)
    }

    /// Marked half-edges a1, ..., a2n located by their outer boundary steps.
    pub fn boundary_points(&self, d: &DiscreteDomain) -> Result<Vec<usize>, HarnessError> {
        let a = self.source(d)?;
        let k0 = d.outer_halves.iter().position(|&h| h == a).ok_or_else(|| HarnessError::Input("source not on the outer boundary".into()))?;
        let n = d.outer_halves.len();
        Ok(self.marked_steps.iter().map(|s| d.outer_halves[(k0 + s) % n]).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntryReport {
    pub name: String,
    pub covers: usize,
    pub identities: IdentityReport,
    pub h_reports: Vec<HReport>,
    /// Max-norm distance between solver and normalized enumeration fields.
    pub solver_max_diff: f64,
    pub homogeneous: Vec<HomogeneousReport>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl EntryReport {
    pub fn pass(&self) -> bool {
        self.error.is_none()
            && self.identities.all_pass()
            && self.h_reports.iter().all(|h| h.all_pass() && h.closure_defect == 0.0)
            && self.solver_max_diff < 1e-8
            && self.homogeneous.iter().all(|h| h.solution_norm < 1e-10)
    }

    pub fn first_failure(&self) -> Option<String> {
        if let Some(e) = &self.error {
            return Some(e.clone());
        }
        if let Some(c) = self.identities.first_failure() {
            return Some(format!("{} on cover {:?}: {}", c.name, c.cover, c.locus.clone().unwrap_or_default()));
        }
        for h in &self.h_reports {
            if let Some(p) = h.properties.iter().find(|p| !p.pass) {
                return Some(format!("{}: {}", p.name, p.locus.clone().unwrap_or_default()));
            }
        }
        if !(self.solver_max_diff < 1e-8) {
            return Some(format!("solver differs from enumeration by {:e}", self.solver_max_diff));
        }
        self.homogeneous.iter().find(|h| !(h.solution_norm < 1e-10)).map(|h| format!("homogeneous solution norm {:e}", h.solution_norm))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogueReport {
    pub entries: Vec<EntryReport>,
    pub domains: usize,
    pub cover_instances: usize,
    pub all_pass: bool,
    pub seconds: f64,
}

fn run_entry(e: &CatalogueEntry, opts: CheckOptions) -> Result<EntryReport, HarnessError> {
    let t = Instant::now();
    let d = e.domain()?;
    let covers = e.covers(&d)?;
    let a = e.source(&d)?;
    let marked = e.boundary_points(&d)?;
    let identities = check_identities(&covers, a, &marked, opts)?;
    let fields = observable_fields(&covers, a, None, &vec![1; covers.len()], opts.obs)?;
    let mut h_reports = Vec::new();
    let mut diff = 0.0f64;
    let mut homogeneous = Vec::new();
    for (cov, f) in covers.iter().zip(&fields) {
        h_reports.push(h_report_exact(f)?);
        let s = shol_solve::solve_bvp(cov, CoverPoint::new(Site::Half(a), 1))?;
        diff = diff.max(s.field.max_abs_diff(&normalized_exact(f)));
        homogeneous.push(homogeneous_check(cov, a));
    }
    Ok(EntryReport {
        name: e.name.clone(),
        covers: covers.len(),
        identities,
        h_reports,
        solver_max_diff: diff,
        homogeneous,
        seconds: t.elapsed().as_secs_f64(),
        error: None,
    })
}

/// Runs every catalogue entry concurrently; failures are part of the report.
pub fn run_catalogue(opts: CheckOptions) -> CatalogueReport {
    let t = Instant::now();
    let cat = catalogue();
    let entries: Vec<EntryReport> = cat
        .par_iter()
        .map(|e| {
            run_entry(e, opts).unwrap_or_else(|err| EntryReport {
                name: e.name.clone(),
                covers: e.covers.len(),
                identities: IdentityReport::default(),
                h_reports: vec![],
                solver_max_diff: f64::NAN,
                homogeneous: vec![],
                seconds: 0.0,
                error: Some(err.to_string()),
            })
        })
        .collect();
    let all_pass = entries.iter().all(EntryReport::pass);
    CatalogueReport {
        domains: cat.len(),
        cover_instances: cat.iter().map(|e| e.covers.len()).sum(),
        entries,
        all_pass,
        seconds: t.elapsed().as_secs_f64(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioMethod {
    #[default]
    Solver,
    Enumeration,
}

impl RatioMethod {
    pub fn name(self) -> &'static str {
        match self {
            RatioMethod::Solver => "solver",
            RatioMethod::Enumeration => "enumeration",
        }
    }
}

/// Refinement experiment on the unit square with one puncture.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub puncture: (f64, f64),
    pub ns: Vec<usize>,
    #[serde(default)]
    pub method: RatioMethod,
    /// Base grid of the harmonic measure oracle.
    #[serde(default = "default_hm_grid")]
    pub hm_grid: usize,
}

fn default_hm_grid() -> usize {
    64
}

impl ConvergenceSpec {
    pub fn symmetric(ns: Vec<usize>) -> Self {
        ConvergenceSpec { a: (0.0, 0.5), b: (1.0, 0.5), puncture: (0.5, 0.5), ns, method: RatioMethod::Solver, hm_grid: 64 }
    }

    pub fn off_center(ns: Vec<usize>) -> Self {
        ConvergenceSpec { puncture: (0.5, 0.25), ..Self::symmetric(ns) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub delta: f64,
    pub ratio: f64,
    pub theta: f64,
    pub abs_error: f64,
    pub method: RatioMethod,
    pub seconds: f64,
    /// Faces removed for the puncture and their centroid.
    pub puncture_faces: Vec<Cell>,
    pub snapped: (f64, f64),
}

/// Position along the counterclockwise boundary of the unit square,
/// starting at the origin: bottom, right, top, left.
fn square_param(p: (f64, f64)) -> Result<f64, HarnessError> {
    let tol = 1e-12;
    let (x, y) = p;
    let on = |v: f64| (0.0 - tol..=1.0 + tol).contains(&v);
    if y.abs() < tol && on(x) {
        Ok(x)
    } else if (x - 1.0).abs() < tol && on(y) {
        Ok(1.0 + y)
    } else if (y - 1.0).abs() < tol && on(x) {
        Ok(3.0 - x)
    } else if x.abs() < tol && on(y) {
        Ok(4.0 - y)
    } else {
        Err(HarnessError::Input(format!("({x}, {y}) is not on the unit square boundary")))
    }
}

fn square_point(s: f64) -> (f64, f64) {
    let s = s.rem_euclid(4.0);
    match s {
        s if s <= 1.0 => (s, 0.0),
        s if s <= 2.0 => (1.0, s - 1.0),
        s if s <= 3.0 => (3.0 - s, 1.0),
        s => (0.0, 4.0 - s),
    }
}

/// The counterclockwise boundary arc of the unit square from `a` to `b`.
pub fn square_arc(a: (f64, f64), b: (f64, f64)) -> Result<Vec<Segment>, HarnessError> {
    let sa = square_param(a)?;
    let mut sb = square_param(b)?;
    if sb <= sa {
        sb += 4.0;
    }
    let mut pts = vec![sa];
    let mut k = sa.floor() + 1.0;
    while k < sb {
        pts.push(k);
        k += 1.0;
    }
    pts.push(sb);
    Ok(pts.windows(2).map(|w| (square_point(w[0]), square_point(w[1]))).collect())
}

/// Boundary half-edge of the n×n square closest to a continuum boundary point.
pub fn snap_boundary(d: &DiscreteDomain, n: usize, p: (f64, f64)) -> Result<usize, HarnessError> {
    let s = square_param(p)?;
    let nf = n as f64;
    let r = |t: f64| (t * nf).round() as i64;
    let ni = n as i64;
    let (v, dir) = match s {
        s if s > 0.0 && s < 1.0 => ((r(p.0), 0), Dir::S),
        s if s > 1.0 && s < 2.0 => ((ni, r(p.1)), Dir::E),
        s if s > 2.0 && s < 3.0 => ((r(p.0), ni), Dir::N),
        s if s > 3.0 && s < 4.0 => ((0, r(p.1)), Dir::W),
        _ => return Err(HarnessError::Input(format!("marked point ({}, {}) is a corner", p.0, p.1))),
    };
    Ok(d.half_at(v, dir)?)
}

/// Faces of the n×n square whose centers are nearest to `p`, ties included.
pub fn snap_puncture(n: usize, p: (f64, f64)) -> Result<(Vec<Cell>, (f64, f64)), HarnessError> {
    if !(p.0 > 0.0 && p.0 < 1.0 && p.1 > 0.0 && p.1 < 1.0) {
        return Err(HarnessError::PunctureOnBoundary(p.0, p.1));
    }
    let nf = n as f64;
    let (cx, cy) = (p.0 * nf - 0.5, p.1 * nf - 0.5);
    let near = |c: f64| -> Vec<i64> {
        let lo = c.floor();
        if (c - lo - 0.5).abs() < 1e-9 {
            vec![lo as i64, lo as i64 + 1]
        } else {
            vec![c.round() as i64]
        }
    };
    let mut faces = Vec::new();
    for &x in &near(cx) {
        for &y in &near(cy) {
            faces.push((x, y));
        }
    }
    let ni = n as i64;
    if faces.iter().any(|&(x, y)| x < 1 || y < 1 || x > ni - 2 || y > ni - 2) {
        return Err(HarnessError::MeshTooCoarse(n));
    }
    let k = faces.len() as f64;
    let centroid = (
        faces.iter().map(|f| (f.0 as f64 + 0.5) / nf).sum::<f64>() / k,
        faces.iter().map(|f| (f.1 as f64 + 0.5) / nf).sum::<f64>() / k,
    );
    Ok((faces, centroid))
}

/// E_ab[σ]/E_+[σ] for the punctured n×n square, through the double ratio.
pub fn discrete_ratio(n: usize, spec: &ConvergenceSpec) -> Result<(f64, Vec<Cell>, (f64, f64)), HarnessError> {
    let (hole, snapped) = snap_puncture(n, spec.puncture)?;
    let ni = n as i64;
    let d = Arc::new(DiscreteDomain::build(&without(ni, ni, &hole), BigRational::new(1.into(), (n as i64).into()))?);
    let a = snap_boundary(&d, n, spec.a)?;
    let b = snap_boundary(&d, n, spec.b)?;
    let cover = DoubleCover::new(d.clone(), &[true])?;
    let trivial = DoubleCover::trivial(d.clone());
    let ratio = match spec.method {
        RatioMethod::Solver => shol_solve::boundary_ratio(&cover, &trivial, a, b)?,
        RatioMethod::Enumeration => {
            let f = observable_fields(&[cover, trivial], a, None, &[1, 1], ObsOptions::default())?;
            let r: Q8 = shol_solve::boundary_ratio_exact(&f[0], &f[1], a, b).ok_or(SolveError::ZeroSolution(0.0))?;
            r.to_c64().re
        }
    };
    Ok((ratio, hole, snapped))
}

pub fn run_convergence(spec: &ConvergenceSpec) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let arc = square_arc(spec.a, spec.b)?;
    let square = RectilinearPolygon::unit_square();
    spec.ns
        .par_iter()
        .map(|&n| {
            let t = Instant::now();
            let (ratio, faces, snapped) = discrete_ratio(n, spec)?;
            let hm = hm_numeric(&square, &arc, snapped, spec.hm_grid)?;
            let theta = (std::f64::consts::PI * hm.value).cos();
            Ok(ConvergenceRow {
                n,
                delta: 1.0 / n as f64,
                ratio,
                theta,
                abs_error: (ratio - theta).abs(),
                method: spec.method,
                seconds: t.elapsed().as_secs_f64(),
                puncture_faces: faces,
                snapped,
            })
        })
        .collect()
}

/// Seventeen significant digits, so every double round-trips.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn convergence_csv(rows: &[ConvergenceRow], with_time: bool) -> String {
    let mut out = String::from("n,delta,ratio,theta,abs_error,method,seconds\n");
    for r in rows {
        let secs = if with_time { fmt17(r.seconds) } else { "0".into() };
        out.push_str(&format!("{},{},{},{},{},{},{}\n", r.n, fmt17(r.delta), fmt17(r.ratio), fmt17(r.theta), fmt17(r.abs_error), r.method.name(), secs));
    }
    out
}

/// Float field dump: one CSV row per site.
pub fn field_csv(f: &FloatField) -> String {
    let d = f.domain();
    let mut out = String::from("kind,index,x,y,re,im\n");
    for s in d.sites() {
        let (x, y) = site_xy(d, s);
        let (kind, i) = match s {
            Site::Edge(e) => ("edge", e),
            Site::Half(h) => ("half", h),
        };
        let v = f.at(CoverPoint::new(s, 1));
        out.push_str(&format!("{kind},{i},{},{},{},{}\n", fmt17(x), fmt17(y), fmt17(v.re), fmt17(v.im)));
    }
    out
}

/// Exact values as CSV: the four rational coefficients and the double image.
pub fn q8_row(label: &str, q: &Q8) -> String {
    let j = crate::qcyc::Q8Json::from(q);
    format!("{label},{},{},{},{},{},{}\n", j.coeffs[0], j.coeffs[1], j.coeffs[2], j.coeffs[3], fmt17(j.re), fmt17(j.im))
}

pub const Q8_HEADER: &str = "quantity,c0,c1,c2,c3,re,im\n";

/// H-report of a solver field, for the `solve` subcommand.
pub fn solve_report(f: &FloatField) -> Result<HReport, HarnessError> {
    Ok(h_report_float(f)?)
}

pub fn method_from(s: Option<&str>) -> Result<Method, HarnessError> {
    match s.unwrap_or("auto") {
        "auto" => Ok(Method::Auto),
        "dense" => Ok(Method::Dense),
        "sparse" => Ok(Method::Sparse),
        m => Err(HarnessError::Input(format!("unknown method {m:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_counts() {
        let c = catalogue();
        assert_eq!(c.len(), 8);
        assert!(c.iter().map(|e| e.covers.len()).sum::<usize>() >= 14);
    }

    #[test]
    fn square_arc_lower_half() {
        let arc = square_arc((0.0, 0.5), (1.0, 0.5)).unwrap();
        assert_eq!(arc, vec![((0.0, 0.5), (0.0, 0.0)), ((0.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (1.0, 0.5))]);
        let top = square_arc((1.0, 0.5), (0.0, 0.5)).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[1], ((1.0, 1.0), (0.0, 1.0)));
    }

    #[test]
    fn puncture_snapping() {
        let (f, c) = snap_puncture(8, (0.5, 0.5)).unwrap();
        assert_eq!(f, vec![(3, 3), (3, 4), (4, 3), (4, 4)]);
        assert_eq!(c, (0.5, 0.5));
        let (f, _) = snap_puncture(9, (0.5, 0.5)).unwrap();
        assert_eq!(f, vec![(4, 4)]);
        assert!(matches!(snap_puncture(8, (0.0, 0.5)), Err(HarnessError::PunctureOnBoundary(..))));
        assert!(matches!(snap_puncture(2, (0.5, 0.5)), Err(HarnessError::MeshTooCoarse(2))));
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-12, 12345.678] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
