//! Continuum objects in the upper half-plane: the spinor solving the
//! punctured boundary problem, the ratios ϑ, harmonic measure and the
//! Pfaffian ratio for several marked boundary points.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::spinor_obs::pfaffian;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuumError {
    #[error("point {0} is not in the upper half-plane")]
    NotInUpperHalfPlane(Complex64),
    #[error("near-degenerate puncture configuration: {0}")]
    NearDegenerate(String),
    #[error("polygon is not rectilinear at vertex {0}")]
    NonRectilinear(usize),
    #[error("coordinate {0} is not on the grid of spacing {1}")]
    OffGrid(f64, f64),
    #[error("point ({0}, {1}) is not inside the domain")]
    PointOutside(f64, f64),
    #[error("denominator Pfaffian {0:e} is too small")]
    DegenerateDenominator(f64),
    #[error("need an even number ≥ 2 of strictly increasing boundary points")]
    BadBoundaryPoints,
    #[error("linear solve failed: {0}")]
    Solver(String),
}

pub const COLLISION_TOL: f64 = 1e-9;
pub const CONDITION_LIMIT: f64 = 1e12;

/// Harmonic measure of the negative real axis seen from `w` in ℂ₊.
pub fn hm_half_plane(w: Complex64) -> Result<f64, ContinuumError> {
    if !(w.im > 0.0) {
        return Err(ContinuumError::NotInUpperHalfPlane(w));
    }
    Ok(w.arg() / PI)
}

/// B_w(z) = (z − Re w)/[(z − w̄)(z − w)]^{1/2}, principal root.
pub fn b_factor(w: Complex64, z: Complex64) -> Complex64 {
    (z - w.re) / ((z - w.conj()) * (z - w)).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaResult {
    pub lambda: Vec<f64>,
    pub residual: f64,
    pub theta: f64,
    pub condition: f64,
}

/// Checks the puncture list: upper half-plane, no shared real parts, none
/// on the imaginary axis.
pub fn validate_punctures(w: &[Complex64]) -> Result<(), ContinuumError> {
    for &p in w {
        if !(p.im > 0.0) || !p.re.is_finite() {
            return Err(ContinuumError::NotInUpperHalfPlane(p));
        }
        if p.re.abs() < COLLISION_TOL {
            return Err(ContinuumError::NearDegenerate(format!("Re w = {} on the imaginary axis", p.re)));
        }
    }
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            if (w[i].re - w[j].re).abs() < COLLISION_TOL {
                return Err(ContinuumError::NearDegenerate(format!("Re w{} ≈ Re w{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// R_k = (Im w_k)^{1/2} ∏_{j≠k} B_{w_j}(w_k); the overall sign is immaterial.
pub fn residue_roots(w: &[Complex64]) -> Vec<Complex64> {
    (0..w.len())
        .map(|k| {
            let mut r = Complex64::new(w[k].im.sqrt(), 0.0);
            for (j, &wj) in w.iter().enumerate() {
                if j != k {
                    r *= b_factor(wj, w[k]);
                }
            }
            r
        })
        .collect()
}

/// g(z) = 1 + Σ λ_j/(t_j − z), t_j = Re w_j.
pub fn g_fn(w: &[Complex64], lambda: &[f64], z: Complex64) -> Complex64 {
    let mut g = Complex64::new(1.0, 0.0);
    for (wj, l) in w.iter().zip(lambda) {
        g += *l / (wj.re - z);
    }
    g
}

/// ϑ(w₁,…,w_m) for ℂ₊ with a = ∞, b = 0.
pub fn theta(w: &[Complex64]) -> Result<ThetaResult, ContinuumError> {
    validate_punctures(w)?;
    let m = w.len();
    if m == 0 {
        return Ok(ThetaResult { lambda: vec![], residual: 0.0, theta: 1.0, condition: 1.0 });
    }
    let r = residue_roots(w);
    // normalized rows: the condition is scale free in R_k
    let rn: Vec<Complex64> = r.iter().map(|x| x / x.norm()).collect();
    let a = DMatrix::from_fn(m, m, |k, j| (rn[k] / (w[j].re - w[k])).im);
    let rhs = nalgebra::DVector::from_fn(m, |k, _| -rn[k].im);
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(ContinuumError::NearDegenerate(format!("condition estimate {condition:e}")));
    }
    let lambda: Vec<f64> = a.lu().solve(&rhs).ok_or_else(|| ContinuumError::NearDegenerate("singular λ system".into()))?.iter().copied().collect();
    let residual = (0..m).map(|k| (rn[k] * g_fn(w, &lambda, w[k])).im.abs()).fold(0.0, f64::max);
    let mut th = 1.0 + w.iter().zip(&lambda).map(|(wj, l)| l / wj.re).sum::<f64>();
    for wj in w {
        th *= wj.re / wj.norm();
    }
    Ok(ThetaResult { lambda, residual, theta: th, condition })
}

/// Orientation-preserving Möbius map of ℂ₊ sending `a` to ∞ and `b` to 0.
pub fn mobius_to_standard(a: f64, b: f64) -> impl Fn(Complex64) -> Complex64 {
    let s = (b - a).signum();
    move |z| s * (z - b) / (z - a)
}

/// ϑ for a simply connected domain given its conformal map to ℂ₊.
pub fn theta_general_simply_connected(phi: impl Fn(Complex64) -> Complex64, z: &[Complex64]) -> Result<f64, ContinuumError> {
    let w: Vec<Complex64> = z.iter().map(|&p| phi(p)).collect();
    Ok(theta(&w)?.theta)
}

/// ϑ_{ab}(w⃗) in ℂ₊ for real boundary points a, b.
pub fn theta_ab(a: f64, b: f64, w: &[Complex64]) -> Result<f64, ContinuumError> {
    theta_general_simply_connected(mobius_to_standard(a, b), w)
}

#[derive(Clone, Debug, Serialize)]
pub struct PfRatio {
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// ϑ_{a_j a_k}, upper triangle.
    pub thetas: Vec<Vec<f64>>,
}

/// Pf[ϑ_{a_j a_k}/ζ_{a_j a_k}] / Pf[1/ζ_{a_j a_k}] with ζ_{a,b} = √π|b − a|.
pub fn pfaffian_ratio(points: &[f64], w: &[Complex64]) -> Result<PfRatio, ContinuumError> {
    let n = points.len();
    if n < 2 || n % 2 == 1 || points.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(ContinuumError::BadBoundaryPoints);
    }
    let mut num = vec![vec![0.0; n]; n];
    let mut den = vec![vec![0.0; n]; n];
    let mut thetas = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in j + 1..n {
            let zeta = PI.sqrt() * (points[k] - points[j]).abs();
            let t = theta_ab(points[j], points[k], w)?;
            thetas[j][k] = t;
            num[j][k] = t / zeta;
            num[k][j] = -t / zeta;
            den[j][k] = 1.0 / zeta;
            den[k][j] = -1.0 / zeta;
        }
    }
    let pn = pfaffian(&num).map_err(|e| ContinuumError::Solver(e.to_string()))?;
    let pd = pfaffian(&den).map_err(|e| ContinuumError::Solver(e.to_string()))?;
    if pd.abs() < 1e-14 {
        return Err(ContinuumError::DegenerateDenominator(pd));
    }
    Ok(PfRatio { ratio: pn / pd, numerator: pn, denominator: pd, thetas })
}

/// Simple closed rectilinear polygon, counterclockwise.
#[derive(Clone, Debug, Serialize)]
pub struct RectilinearPolygon {
    pub vertices: Vec<(f64, f64)>,
}

pub type Segment = ((f64, f64), (f64, f64));

impl RectilinearPolygon {
    pub fn unit_square() -> Self {
        RectilinearPolygon { vertices: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        RectilinearPolygon { vertices: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)] }
    }

    pub fn check(&self) -> Result<(), ContinuumError> {
        let n = self.vertices.len();
        if n < 4 {
            return Err(ContinuumError::NonRectilinear(0));
        }
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if (p.0 != q.0) == (p.1 != q.1) {
                return Err(ContinuumError::NonRectilinear(i));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> Vec<Segment> {
        let n = self.vertices.len();
        (0..n).map(|i| (self.vertices[i], self.vertices[(i + 1) % n])).collect()
    }

    /// Even-odd test; points on the boundary count as outside.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        if self.segments().iter().any(|s| on_segment(*s, p, 1e-12)) {
            return false;
        }
        let mut inside = false;
        for ((x0, y0), (x1, y1)) in self.segments() {
            if (y0 > p.1) != (y1 > p.1) {
                let x = x0 + (p.1 - y0) * (x1 - x0) / (y1 - y0);
                if x > p.0 {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn on_segment(((x0, y0), (x1, y1)): Segment, p: (f64, f64), tol: f64) -> bool {
    let within = |a: f64, b: f64, t: f64| t >= a.min(b) - tol && t <= a.max(b) + tol;
    let cross = (x1 - x0) * (p.1 - y0) - (y1 - y0) * (p.0 - x0);
    cross.abs() <= tol * (1.0 + (x1 - x0).abs() + (y1 - y0).abs()) && within(x0, x1, p.0) && within(y0, y1, p.1)
}

#[derive(Clone, Debug, Serialize)]
pub struct HmEstimate {
    pub value: f64,
    pub error: f64,
    pub coarse: f64,
    pub fine: f64,
    pub n: usize,
}

/// Boundary value: 1 on the arc, 0 off it, 1/2 at a free endpoint.
fn arc_value(arc: &[Segment], p: (f64, f64), tol: f64) -> f64 {
    let on: Vec<&Segment> = arc.iter().filter(|s| on_segment(**s, p, tol)).collect();
    if on.is_empty() {
        return 0.0;
    }
    let near = |a: (f64, f64)| (a.0 - p.0).abs() <= tol && (a.1 - p.1).abs() <= tol;
    let ends = on.iter().filter(|s| near(s.0) || near(s.1)).count();
    if on.iter().any(|s| !near(s.0) && !near(s.1)) || ends >= 2 {
        1.0
    } else {
        0.5
    }
}

/// Discrete harmonic measure on the grid of spacing 1/n, bilinear at `point`.
pub fn hm_grid(poly: &RectilinearPolygon, arc: &[Segment], point: (f64, f64), n: usize) -> Result<f64, ContinuumError> {
    poly.check()?;
    let h = 1.0 / n as f64;
    let snap = |t: f64| -> Result<i64, ContinuumError> {
        let k = (t / h).round();
        if (k * h - t).abs() > 1e-9 * h.max(t.abs()) {
            return Err(ContinuumError::OffGrid(t, h));
        }
        Ok(k as i64)
    };
    for &(x, y) in &poly.vertices {
        snap(x)?;
        snap(y)?;
    }
    if !poly.contains(point) {
        return Err(ContinuumError::PointOutside(point.0, point.1));
    }
    let xs: Vec<i64> = poly.vertices.iter().map(|v| snap(v.0).unwrap()).collect();
    let ys: Vec<i64> = poly.vertices.iter().map(|v| snap(v.1).unwrap()).collect();
    let (ix0, ix1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
    let (iy0, iy1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
    let w = (ix1 - ix0 + 1) as usize;
    let hgt = (iy1 - iy0 + 1) as usize;
    let pos = |i: usize, j: usize| ((ix0 + i as i64) as f64 * h, (iy0 + j as i64) as f64 * h);
    let mut idx = vec![usize::MAX; w * hgt];
    let mut bval = vec![0.0; w * hgt];
    let mut count = 0;
    for j in 0..hgt {
        for i in 0..w {
            let p = pos(i, j);
            if poly.contains(p) {
                idx[j * w + i] = count;
                count += 1;
            } else {
                bval[j * w + i] = arc_value(arc, p, 1e-9 * h);
            }
        }
    }
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; count];
    for j in 0..hgt {
        for i in 0..w {
            let r = idx[j * w + i];
            if r == usize::MAX {
                continue;
            }
            trips.push(Triplet::new(r, r, 4.0));
            for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                let c = idx[nj * w + ni];
                if c == usize::MAX {
                    rhs[r] += bval[nj * w + ni];
                } else {
                    trips.push(Triplet::new(r, c, -1.0));
                }
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(count, count, &trips).map_err(|e| ContinuumError::Solver(format!("{e:?}")))?;
    let llt = a.sp_cholesky(Side::Lower).map_err(|e| ContinuumError::Solver(format!("{e:?}")))?;
    let b = Mat::from_fn(count, 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    let node = |i: usize, j: usize| {
        let k = idx[j * w + i];
        if k == usize::MAX {
            bval[j * w + i]
        } else {
            x[(k, 0)]
        }
    };
    let fx = point.0 / h - ix0 as f64;
    let fy = point.1 / h - iy0 as f64;
    let (i0, j0) = (fx.floor().min((w - 2) as f64) as usize, fy.floor().min((hgt - 2) as f64) as usize);
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    Ok((1.0 - tx) * (1.0 - ty) * node(i0, j0) + tx * (1.0 - ty) * node(i0 + 1, j0) + (1.0 - tx) * ty * node(i0, j0 + 1) + tx * ty * node(i0 + 1, j0 + 1))
}

/// Harmonic measure on grids n and 2n with Richardson extrapolation.
pub fn hm_numeric(poly: &RectilinearPolygon, arc: &[Segment], point: (f64, f64), n: usize) -> Result<HmEstimate, ContinuumError> {
    let coarse = hm_grid(poly, arc, point, n)?;
    let fine = hm_grid(poly, arc, point, 2 * n)?;
    Ok(HmEstimate { value: (4.0 * fine - coarse) / 3.0, error: (fine - coarse).abs() / 3.0, coarse, fine, n })
}

/// The counterclockwise arc of the unit square from the middle of the left
/// side to the middle of the right side.
pub fn square_lower_arc() -> Vec<Segment> {
    vec![((0.0, 0.5), (0.0, 0.0)), ((0.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (1.0, 0.5))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn half_plane_hm_examples() {
        assert!((hm_half_plane(c(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!((hm_half_plane(c(1.0, 1.0)).unwrap() - 0.25).abs() < 1e-15);
        assert!((hm_half_plane(c(-1.0, 1.0)).unwrap() - 0.75).abs() < 1e-15);
        assert!(hm_half_plane(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn theta_single_puncture() {
        let r = theta(&[c(1.0, 1.0)]).unwrap();
        assert!(r.lambda[0].abs() < 1e-15);
        assert!((r.theta - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert_eq!(theta(&[]).unwrap().theta, 1.0);
    }

    #[test]
    fn theta_rejects_degenerate() {
        assert!(matches!(theta(&[c(1.0, 1.0), c(1.0, 2.0)]), Err(ContinuumError::NearDegenerate(_))));
        assert!(matches!(theta(&[c(0.0, 1.0)]), Err(ContinuumError::NearDegenerate(_))));
        assert!(matches!(theta(&[c(1.0, -1.0)]), Err(ContinuumError::NotInUpperHalfPlane(_))));
    }

    #[test]
    fn theta_pair_solves_system() {
        let w = [c(1.0, 1.0), c(-1.0, 2.0)];
        let r = theta(&w).unwrap();
        assert!(r.residual < 1e-12);
        // unnormalized residue condition, straight from g and R_k
        let rk = residue_roots(&w);
        for k in 0..2 {
            assert!((rk[k] * g_fn(&w, &r.lambda, w[k])).im.abs() < 1e-12);
        }
        for s in [0.5, 2.0] {
            let ws: Vec<_> = w.iter().map(|z| z * s).collect();
            assert!((theta(&ws).unwrap().theta - r.theta).abs() < 1e-10);
        }
    }

    #[test]
    fn general_map_examples() {
        let id = |z: Complex64| z;
        assert!(theta_general_simply_connected(id, &[c(0.0001, 1.0)]).unwrap().abs() < 1e-3);
        let t = theta_general_simply_connected(id, &[c(1.0, 1.0)]).unwrap();
        assert!((t - theta(&[c(1.0, 1.0)]).unwrap().theta).abs() < 1e-14);
    }

    #[test]
    fn mobius_sends_marked_points() {
        let f = mobius_to_standard(-1.0, 2.0);
        assert!(f(c(2.0, 0.0)).norm() < 1e-15);
        assert!(f(c(-1.0 + 1e-9, 0.0)).norm() > 1e8);
        assert!(f(c(0.3, 0.7)).im > 0.0);
        let g = mobius_to_standard(3.0, 1.0);
        assert!(g(c(0.3, 0.7)).im > 0.0);
    }

    #[test]
    fn pfaffian_ratio_reductions() {
        let p = [-1.0, 0.5, 2.0, 3.5];
        assert!((pfaffian_ratio(&p, &[]).unwrap().ratio - 1.0).abs() < 1e-14);
        let w = [c(0.3, 0.8)];
        let r = pfaffian_ratio(&[-1.0, 2.0], &w).unwrap();
        assert!((r.ratio - theta_ab(-1.0, 2.0, &w).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn pfaffian_ratio_four_points_by_expansion() {
        let p = [-1.0, 0.5, 2.0, 3.5];
        let w = [c(0.7, 0.9)];
        let r = pfaffian_ratio(&p, &w).unwrap();
        let z = |j: usize, k: usize| PI.sqrt() * (p[k] - p[j]);
        let t = |j: usize, k: usize| theta_ab(p[j], p[k], &w).unwrap();
        let m = |j: usize, k: usize| t(j, k) / z(j, k);
        let d = |j: usize, k: usize| 1.0 / z(j, k);
        let num = m(0, 1) * m(2, 3) - m(0, 2) * m(1, 3) + m(0, 3) * m(1, 2);
        let den = d(0, 1) * d(2, 3) - d(0, 2) * d(1, 3) + d(0, 3) * d(1, 2);
        assert!((r.ratio - num / den).abs() < 1e-13);
    }

    /// sinh(a)/sinh(b) for 0 ≤ a ≤ b without overflow.
    fn sinh_ratio(a: f64, b: f64) -> f64 {
        (a - b).exp() * (1.0 - (-2.0 * a).exp()) / (1.0 - (-2.0 * b).exp())
    }

    /// Sine/sinh series for the lower arc of the unit square.
    fn square_lower_series(x: f64, y: f64) -> f64 {
        let mut u = 0.0;
        for k in 1..400 {
            let kf = k as f64;
            let kp = kf * PI;
            // bottom side
            if k % 2 == 1 {
                u += 4.0 / kp * (kp * x).sin() * sinh_ratio(kp * (1.0 - y), kp);
            }
            // left and right sides, y ∈ [0, 1/2]
            let ck = 2.0 * (1.0 - (kp / 2.0).cos()) / kp;
            u += ck * (kp * y).sin() * (sinh_ratio(kp * (1.0 - x), kp) + sinh_ratio(kp * x, kp));
        }
        u
    }

    #[test]
    fn hm_numeric_symmetric_center() {
        let r = hm_numeric(&RectilinearPolygon::unit_square(), &square_lower_arc(), (0.5, 0.5), 16).unwrap();
        assert!((r.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn hm_numeric_matches_series() {
        let sq = RectilinearPolygon::unit_square();
        let top = vec![((1.0, 1.0), (0.0, 1.0))];
        let r = hm_numeric(&sq, &top, (0.5, 0.25), 32).unwrap();
        assert!(r.error < 1e-4);
        let mut exact = 0.0;
        for k in (1..400).step_by(2) {
            let kp = k as f64 * PI;
            exact += 4.0 / kp * (kp * 0.5).sin() * sinh_ratio(kp * 0.25, kp);
        }
        assert!((r.value - exact).abs() < 1e-4, "{} vs {exact}", r.value);
        let low = hm_numeric(&sq, &square_lower_arc(), (0.5, 0.25), 32).unwrap();
        assert!((low.value - square_lower_series(0.5, 0.25)).abs() < 1e-3, "{low:?} {}", square_lower_series(0.5, 0.25));
    }

    #[test]
    fn hm_numeric_large_box_approximates_half_plane() {
        let poly = RectilinearPolygon::rectangle(-40.0, 0.0, 40.0, 40.0);
        let arc = vec![((0.0, 0.0), (-40.0, 0.0)), ((-40.0, 0.0), (-40.0, 40.0))];
        let r = hm_numeric(&poly, &arc, (0.0, 1.0), 4).unwrap();
        assert!((r.value - 0.5).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn non_rectilinear_rejected() {
        let p = RectilinearPolygon { vertices: vec![(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.5)] };
        assert!(matches!(hm_grid(&p, &[], (0.2, 0.6), 4), Err(ContinuumError::NonRectilinear(_))));
    }

    fn puncture() -> impl Strategy<Value = Complex64> {
        (-3.0f64..3.0, 0.1f64..3.0).prop_map(|(x, y)| c(x, y))
    }

    fn spread(w: &[Complex64]) -> bool {
        w.iter().all(|p| p.re.abs() > 0.05) && (0..w.len()).all(|i| (i + 1..w.len()).all(|j| (w[i].re - w[j].re).abs() > 0.05))
    }

    proptest! {
        #[test]
        fn single_puncture_closed_form(w in puncture()) {
            prop_assume!(w.re.abs() > 1e-6);
            let t = theta(&[w]).unwrap().theta;
            prop_assert!((t - w.re / w.norm()).abs() < 1e-14);
            prop_assert!((t - (PI * hm_half_plane(w).unwrap()).cos()).abs() < 1e-14);
        }

        #[test]
        fn theta_residual_dilation_permutation(w in proptest::collection::vec(puncture(), 2..=4), s in 0.2f64..5.0) {
            prop_assume!(spread(&w));
            if let Ok(r) = theta(&w) {
                prop_assert!(r.residual < 1e-12);
                let ws: Vec<_> = w.iter().map(|z| z * s).collect();
                prop_assert!((theta(&ws).unwrap().theta - r.theta).abs() < 1e-10);
                let mut wr = w.clone();
                wr.reverse();
                prop_assert!((theta(&wr).unwrap().theta - r.theta).abs() < 1e-12);
            }
        }
    }
}
