//! Coarea factors of the fibered spaces `Sigma` and `Sigma_hat`, and the slice-mass
//! functionals `phi`, `Z` and `Y` estimated through them.
//!
//! `Sigma` is parametrized by `F(x, t) = (x, x + sum t_i w_i(x))` in `R^{2n}`, and
//! `Sigma_hat` by `F_hat(x, t, y) = (x, x + sum t_i w_i(x) + sum y_l v_l(x), y)` in
//! `R^{3n-m}`.

use serde::Serialize;

use crate::bbox::AxisBox;
use crate::error::{GmtError, Result};
use crate::grassmann::binomial;
use crate::linalg::coarea_factor;
use crate::planefield::{g_differential, jacobian_of, pi_u, FrameField, FrameJet};
use crate::rng::RngKey;
use crate::setlib::{alpha, cube_mean, slice_measure_in, MeasureEstimate, Sampler, SetOracle};
use crate::Vector;
use rand::Rng;

/// Tolerance of every Jacobian bound check.
pub const JACOBIAN_TOL: f64 = 1e-5;
/// Largest `Lambda * diam` accepted by the sandwich and lower-bound checks.
pub const SMALL_DIAMETER_GATE: f64 = 0.05;
/// Rejection attempts before a set is declared empty.
pub const MAX_ATTEMPTS: u64 = 1_000_000;
/// Padding of the `t`-box covering all slices of `B`.
const T_BOX_PADDING: f64 = 1.1;
/// QMC samples per inner slice estimate when `m >= 2`.
const INNER_SLICE_SAMPLES: usize = 512;

/// A point of `Sigma` (`y = None`) or of `Sigma_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoint {
    pub x: Vector,
    pub t: Vector,
    pub u: Vector,
    pub y: Option<Vector>,
}

impl SigmaPoint {
    pub fn on_sigma(ff: &FrameField, x: Vector, t: Vector) -> Result<Self> {
        let f = ff.frame_at(&x)?;
        check_len("t", ff.m(), t.len())?;
        let mut u = x.clone();
        for (c, w) in t.iter().zip(&f.w) {
            u.axpy(*c, w, 1.0);
        }
        Ok(Self { x, t, u, y: None })
    }

    pub fn on_sigma_hat(ff: &FrameField, x: Vector, t: Vector, y: Vector) -> Result<Self> {
        let f = ff.frame_at(&x)?;
        check_len("t", ff.m(), t.len())?;
        check_len("y", ff.n() - ff.m(), y.len())?;
        let mut u = x.clone();
        for (c, w) in t.iter().zip(&f.w) {
            u.axpy(*c, w, 1.0);
        }
        for (c, v) in y.iter().zip(&f.v) {
            u.axpy(*c, v, 1.0);
        }
        Ok(Self { x, t, u, y: Some(y) })
    }

    /// `|u - x|`.
    pub fn separation(&self) -> f64 {
        (&self.u - &self.x).norm()
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(GmtError::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianReport {
    pub value: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub within_bounds: bool,
    pub fd_step: f64,
    /// Area factor of the parametrization at the same point.
    pub area_factor: f64,
}

impl JacobianReport {
    fn new(value: f64, lower_bound: f64, fd_step: f64, area_factor: f64) -> Self {
        Self {
            value,
            lower_bound,
            upper_bound: 1.0,
            within_bounds: lower_bound - JACOBIAN_TOL <= value && value <= 1.0 + JACOBIAN_TOL,
            fd_step,
            area_factor,
        }
    }
}

/// `(1 + m^2 L^2 d^2)^{-m/2} (2 + 2 m L d + m^2 L^2 d^2)^{-(n-m)/2}`.
pub fn pi1_lower_bound(n: usize, m: usize, lambda: f64, d: f64) -> f64 {
    let mld = m as f64 * lambda * d;
    (1.0 + mld * mld).powf(-(m as f64) / 2.0) * (2.0 + 2.0 * mld + mld * mld).powf(-((n - m) as f64) / 2.0)
}

/// `(C(n, n-m)^{-1/2} - m (n-m) L d (1 + m L d)^{n-m-1}) / (2 + 2 m L d + m^2 L^2 d^2)^{(n-m)/2}`.
pub fn pi2_lower_bound(n: usize, m: usize, lambda: f64, d: f64) -> f64 {
    let k = n - m;
    let mld = m as f64 * lambda * d;
    let num = (binomial(n, k) as f64).powf(-0.5) - (m * k) as f64 * lambda * d * (1.0 + mld).powi(k as i32 - 1);
    num / (2.0 + 2.0 * mld + mld * mld).powf(k as f64 / 2.0)
}

/// `2^{-(n-m)} (1 + 2 n L d + 2 n^2 L^2 d^2)^{-n/2}`.
pub fn pi13_lower_bound(n: usize, m: usize, lambda: f64, d: f64) -> f64 {
    let nld = n as f64 * lambda * d;
    0.5f64.powi((n - m) as i32) * (1.0 + 2.0 * nld + 2.0 * nld * nld).powf(-(n as f64) / 2.0)
}

/// Columns `dF/dx_p = (e_p, e_p + sum t_i dw_i/dx_p)` and `dF/dt_k = (0, w_k)`.
fn sigma_tangent(jet: &FrameJet, t: &Vector) -> crate::Matrix {
    let n = jet.frame.w[0].len();
    let m = jet.frame.w.len();
    let mut tan = crate::Matrix::zeros(2 * n, n + m);
    for p in 0..n {
        tan[(p, p)] = 1.0;
        tan[(n + p, p)] = 1.0;
        for (i, ti) in t.iter().enumerate() {
            for r in 0..n {
                tan[(n + r, p)] += ti * jet.dw[i][(r, p)];
            }
        }
    }
    for k in 0..m {
        for r in 0..n {
            tan[(n + r, n + k)] = jet.frame.w[k][r];
        }
    }
    tan
}

/// Columns `dF_hat/dx_j = (e_j, e_j + sum t dw/dx_j + sum y dv/dx_j, 0)`,
/// `dF_hat/dt_k = (0, w_k, 0)` and `dF_hat/dy_l = (0, v_l, e_l)`.
fn sigma_hat_tangent(jet: &FrameJet, t: &Vector, y: &Vector) -> crate::Matrix {
    let n = jet.frame.w[0].len();
    let m = jet.frame.w.len();
    let k = n - m;
    let mut tan = crate::Matrix::zeros(3 * n - m, 2 * n);
    for p in 0..n {
        tan[(p, p)] = 1.0;
        tan[(n + p, p)] = 1.0;
        for r in 0..n {
            let mut s = 0.0;
            for (i, ti) in t.iter().enumerate() {
                s += ti * jet.dw[i][(r, p)];
            }
            for (l, yl) in y.iter().enumerate() {
                s += yl * jet.dv[l][(r, p)];
            }
            tan[(n + r, p)] += s;
        }
    }
    for j in 0..m {
        for r in 0..n {
            tan[(n + r, n + j)] = jet.frame.w[j][r];
        }
    }
    for l in 0..k {
        for r in 0..n {
            tan[(n + r, n + m + l)] = jet.frame.v[l][r];
        }
        tan[(2 * n + l, n + m + l)] = 1.0;
    }
    tan
}

fn range(a: usize, b: usize) -> Vec<usize> {
    (a..b).collect()
}

/// `(JF, J pi_1, J pi_2)` at `(x, x + sum t_i w_i(x))`.
fn sigma_factors(jet: &FrameJet, t: &Vector) -> Result<(f64, f64, f64)> {
    let n = jet.frame.w[0].len();
    let tan = sigma_tangent(jet, t);
    let (area, j1) = coarea_factor(&tan, &range(0, n), n)?;
    let (_, j2) = coarea_factor(&tan, &range(n, 2 * n), n)?;
    Ok((area, j1, j2))
}

/// `(JF_hat, J(pi_1 x pi_3), J(pi_2 x pi_3))`.
fn sigma_hat_factors(jet: &FrameJet, t: &Vector, y: &Vector) -> Result<(f64, f64, f64)> {
    let n = jet.frame.w[0].len();
    let m = jet.frame.w.len();
    let tan = sigma_hat_tangent(jet, t, y);
    let mut rows13 = range(0, n);
    rows13.extend(2 * n..3 * n - m);
    let (area, j13) = coarea_factor(&tan, &rows13, 2 * n - m)?;
    let (_, j23) = coarea_factor(&tan, &range(n, 3 * n - m), 2 * n - m)?;
    Ok((area, j13, j23))
}

/// Coarea factor of `pi_1(x, u) = x` on `Sigma`.
pub fn jacobian_pi1(ff: &FrameField, p: &SigmaPoint) -> Result<JacobianReport> {
    let jet = ff.jet(&p.x)?;
    let (area, j1, _) = sigma_factors(&jet, &p.t)?;
    let lb = pi1_lower_bound(ff.n(), ff.m(), ff.lambda_eff(), p.separation());
    Ok(JacobianReport::new(j1, lb, ff.fd_step(), area))
}

/// Coarea factor of `pi_2(x, u) = u` on `Sigma`.
pub fn jacobian_pi2(ff: &FrameField, p: &SigmaPoint) -> Result<JacobianReport> {
    let jet = ff.jet(&p.x)?;
    let (area, _, j2) = sigma_factors(&jet, &p.t)?;
    let lb = pi2_lower_bound(ff.n(), ff.m(), ff.lambda_eff(), p.separation());
    Ok(JacobianReport::new(j2, lb, ff.fd_step(), area))
}

/// Both `Sigma` factors from one tangent basis.
pub fn jacobians_sigma(ff: &FrameField, p: &SigmaPoint) -> Result<(JacobianReport, JacobianReport)> {
    let jet = ff.jet(&p.x)?;
    let (area, j1, j2) = sigma_factors(&jet, &p.t)?;
    let (n, m, l, d) = (ff.n(), ff.m(), ff.lambda_eff(), p.separation());
    Ok((
        JacobianReport::new(j1, pi1_lower_bound(n, m, l, d), ff.fd_step(), area),
        JacobianReport::new(j2, pi2_lower_bound(n, m, l, d), ff.fd_step(), area),
    ))
}

fn hat_parts(p: &SigmaPoint) -> Result<&Vector> {
    p.y.as_ref()
        .ok_or_else(|| GmtError::InvalidArgument("point of Sigma_hat needs a height y".into()))
}

/// Both `Sigma_hat` factors: `pi_1 x pi_3` with its lower bound, `pi_2 x pi_3` checked
/// only against the upper bound 1 (its lower bound is reported as 0).
pub fn jacobians_sigma_hat(ff: &FrameField, p: &SigmaPoint) -> Result<(JacobianReport, JacobianReport)> {
    let y = hat_parts(p)?;
    let jet = ff.jet(&p.x)?;
    let (area, j13, j23) = sigma_hat_factors(&jet, &p.t, y)?;
    let lb = pi13_lower_bound(ff.n(), ff.m(), ff.lambda_eff(), p.separation());
    Ok((
        JacobianReport::new(j13, lb, ff.fd_step(), area),
        JacobianReport::new(j23, 0.0, ff.fd_step(), area),
    ))
}

pub fn jacobian_pi13(ff: &FrameField, p: &SigmaPoint) -> Result<JacobianReport> {
    Ok(jacobians_sigma_hat(ff, p)?.0)
}

pub fn jacobian_pi23(ff: &FrameField, p: &SigmaPoint) -> Result<JacobianReport> {
    Ok(jacobians_sigma_hat(ff, p)?.1)
}

/// Both sides of a coarea identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoareaComparison {
    pub lhs: MeasureEstimate,
    pub rhs: MeasureEstimate,
    pub z_score: f64,
    pub agrees: bool,
}

impl CoareaComparison {
    fn new(lhs: MeasureEstimate, rhs: MeasureEstimate) -> Self {
        let z_score = lhs.z_score(&rhs);
        Self {
            lhs,
            rhs,
            z_score,
            agrees: z_score <= 3.0,
        }
    }
}

fn ensure_inside(ff: &FrameField, b: &AxisBox) -> Result<()> {
    let distance = b.max_distance_from(ff.x0());
    if distance > ff.radius() * (1.0 + 1e-12) {
        return Err(GmtError::OutOfNeighborhood {
            distance,
            radius: ff.radius(),
        });
    }
    Ok(())
}

/// Product box `a x [-r, r]^k x [-h, h]^j`.
fn param_box(a: &AxisBox, r: f64, k: usize, h: f64, j: usize) -> AxisBox {
    let mut lo = a.lo().to_vec();
    let mut hi = a.hi().to_vec();
    lo.extend(std::iter::repeat_n(-r, k));
    hi.extend(std::iter::repeat_n(r, k));
    lo.extend(std::iter::repeat_n(-h, j));
    hi.extend(std::iter::repeat_n(h, j));
    AxisBox::new(lo, hi).expect("ordered parameter box")
}

/// `vol(region) * mean of f` over the region.
fn integrate<F>(region: &AxisBox, sampler: &Sampler, f: F) -> Result<MeasureEstimate>
where
    F: Fn(&Vector) -> Option<(f64, f64)> + Sync,
{
    let vol = region.volume();
    if !(vol > 0.0) {
        return Ok(MeasureEstimate::zero());
    }
    let est = cube_mean(region.dim(), sampler, |p| f(&region.from_unit(p)))?;
    Ok(est.scaled(vol))
}

/// Errors that drop a single sample instead of the whole estimate.
fn skippable<T>(r: Result<T>) -> std::result::Result<Option<T>, GmtError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(GmtError::FdUnstable { .. } | GmtError::TangentDegenerate { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn point_key(key: &RngKey, x: &Vector) -> RngKey {
    x.iter().fold(*key, |k, c| k.child(c.to_bits()))
}

/// `phi_{E,W}(B) = int_E H^m(B cap W(x)) dx`, with the inner slice taken over a ball
/// covering `B`'s bounding box.
pub fn phi_measure(e: &SetOracle, b: &SetOracle, ff: &FrameField, sampler: &Sampler) -> Result<MeasureEstimate> {
    let eb = e.bbox();
    if !(eb.volume() > 0.0) {
        return Ok(MeasureEstimate::zero());
    }
    ensure_inside(ff, &eb)?;
    let bb = b.bbox();
    let inner_key = sampler.key.named("phi.inner");
    integrate(&eb, sampler, |x| {
        if !e.contains(x) {
            return Some((0.0, 0.0));
        }
        let r = bb.max_distance_from(x);
        if !(r > 0.0) {
            return Some((0.0, 0.0));
        }
        let f = ff.frame_at(x).ok()?;
        let inner = Sampler::exact(point_key(&inner_key, x)).with_samples(INNER_SLICE_SAMPLES);
        let s = slice_measure_in(b, x, &f.w, r, &inner).ok()?;
        Some((s.value, s.std_error * s.std_error))
    })
}

/// Both sides of `int_{Sigma_B} J pi_1 dH^{n+m} = phi_{E,W}(B)`.
///
/// The left side integrates `1_E(x) 1_B(F_2(x,t)) J pi_1 JF` over `bbox(E) x [-R, R]^m`,
/// with `R` 10% beyond the largest distance between the two bounding boxes.
pub fn coarea_check_pi1(e: &SetOracle, b: &SetOracle, ff: &FrameField, sampler: &Sampler) -> Result<CoareaComparison> {
    let eb = e.bbox();
    if !(eb.volume() > 0.0) {
        return Ok(CoareaComparison::new(MeasureEstimate::zero(), MeasureEstimate::zero()));
    }
    ensure_inside(ff, &eb)?;
    let (n, m) = (ff.n(), ff.m());
    let r = T_BOX_PADDING * eb.max_distance_to(&b.bbox());
    let region = param_box(&eb, r, m, 0.0, 0);
    let lhs = integrate(&region, &sampler.with_key(sampler.key.named("pi1.lhs")), |p| {
        let x = p.rows(0, n).into_owned();
        if !e.contains(&x) {
            return Some((0.0, 0.0));
        }
        let t = p.rows(n, m).into_owned();
        let f = ff.frame_at(&x).ok()?;
        let mut u = x.clone();
        for (c, w) in t.iter().zip(&f.w) {
            u.axpy(*c, w, 1.0);
        }
        if !b.contains(&u) {
            return Some((0.0, 0.0));
        }
        let jet = skippable(ff.jet(&x)).ok()??;
        let (area, j1, _) = skippable(sigma_factors(&jet, &t)).ok()??;
        Some((j1 * area, 0.0))
    })?;
    let rhs = phi_measure(e, b, ff, &sampler.with_key(sampler.key.named("pi1.rhs")))?;
    Ok(CoareaComparison::new(lhs, rhs))
}

/// Integrand selector for the `Sigma_hat` parametrization.
#[derive(Clone, Copy)]
enum HatSide {
    /// `J(pi_2 x pi_3) JF_hat`.
    Fibered,
    /// `Jg_u(x)`, the Euclidean coarea side.
    Level,
}

/// `int_{E x R^m x C_delta} 1_B(u) * integrand`, `u = x + sum t w(x) + sum y v(x)`.
fn hat_integral(e: &SetOracle, b: &SetOracle, ff: &FrameField, delta: f64, side: HatSide, sampler: &Sampler) -> Result<MeasureEstimate> {
    if !(delta > 0.0) {
        return Err(GmtError::InvalidArgument("delta must be positive".into()));
    }
    let eb = e.bbox();
    if !(eb.volume() > 0.0) {
        return Ok(MeasureEstimate::zero());
    }
    ensure_inside(ff, &eb)?;
    let (n, m) = (ff.n(), ff.m());
    let k = n - m;
    let r = T_BOX_PADDING * eb.max_distance_to(&b.bbox());
    let region = param_box(&eb, r, m, delta, k);
    integrate(&region, sampler, |p| {
        let x = p.rows(0, n).into_owned();
        let t = p.rows(n, m).into_owned();
        let y = p.rows(n + m, k).into_owned();
        if y.norm() > delta || !e.contains(&x) {
            return Some((0.0, 0.0));
        }
        let f = ff.frame_at(&x).ok()?;
        let mut u = x.clone();
        for (c, w) in t.iter().zip(&f.w) {
            u.axpy(*c, w, 1.0);
        }
        for (c, v) in y.iter().zip(&f.v) {
            u.axpy(*c, v, 1.0);
        }
        if !b.contains(&u) {
            return Some((0.0, 0.0));
        }
        let jet = skippable(ff.jet(&x)).ok()??;
        let value = match side {
            HatSide::Fibered => {
                let (area, _, j23) = skippable(sigma_hat_factors(&jet, &t, &y)).ok()??;
                j23 * area
            }
            HatSide::Level => jacobian_of(&g_differential(&jet, &u, &x)),
        };
        Some((value, 0.0))
    })
}

/// Both sides of `int_{Sigma_hat_B, |y| <= delta} J(pi_2 x pi_3) dH^{2n}
/// = int_B du int_{C_delta} H^m(E cap g_u^{-1}{y}) dy`, the right side evaluated through
/// `int_{E cap {|g_u| <= delta}} Jg_u dx`.
pub fn coarea_check_pi2(e: &SetOracle, b: &SetOracle, ff: &FrameField, delta: f64, sampler: &Sampler) -> Result<CoareaComparison> {
    let lhs = hat_integral(e, b, ff, delta, HatSide::Fibered, &sampler.with_key(sampler.key.named("pi2.lhs")))?;
    let rhs = hat_integral(e, b, ff, delta, HatSide::Level, &sampler.with_key(sampler.key.named("pi2.rhs")))?;
    Ok(CoareaComparison::new(lhs, rhs))
}

/// `int_B Y_delta(u) du`, with `Y_delta(u)` the `delta`-average of `H^m(E cap g_u^{-1}{y})`.
pub fn y_integral(e: &SetOracle, b: &SetOracle, ff: &FrameField, delta: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    let k = ff.n() - ff.m();
    let est = hat_integral(e, b, ff, delta, HatSide::Level, sampler)?;
    Ok(est.scaled(1.0 / (alpha(k) * delta.powi(k as i32))))
}

/// Orthonormal frame of `W_0(u)` and its complement (defined for any `u` in the domain).
fn frame_of_field(ff: &FrameField, u: &Vector) -> (Vec<Vector>, Vec<Vector>) {
    let p = ff.field().evaluate(u);
    (p.basis().into_vectors(), p.complement().basis().into_vectors())
}

/// Slab `u + [-r, r]^m (W_0(u)) + [-h, h]^{n-m} (W_0(u)^perp)` in frame coordinates.
fn slab(ff: &FrameField, r: f64, h: f64) -> AxisBox {
    let (m, k) = (ff.m(), ff.n() - ff.m());
    param_box(&AxisBox::cube(&[], 0.0), r, m, h, k)
}

fn slab_point(u: &Vector, w: &[Vector], v: &[Vector], p: &Vector) -> Vector {
    let mut x = u.clone();
    for (j, wj) in w.iter().enumerate() {
        x.axpy(p[j], wj, 1.0);
    }
    for (l, vl) in v.iter().enumerate() {
        x.axpy(p[w.len() + l], vl, 1.0);
    }
    x
}

/// `Y_delta(u) = (alpha(n-m) delta^{n-m})^{-1} int 1_E 1_{|g_u| <= delta} Jg_u dL^n`.
///
/// Points with `|g_u(x)| <= delta` and `|x - u| <= R` lie in the slab of half-height
/// `delta + Lambda R^2` around `u + W_0(u)`, which is the sampled region.
pub fn y_estimate(e: &SetOracle, ff: &FrameField, u: &Vector, delta: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    if !(delta > 0.0) {
        return Err(GmtError::InvalidArgument("delta must be positive".into()));
    }
    let eb = e.bbox();
    if !(eb.volume() > 0.0) {
        return Ok(MeasureEstimate::zero());
    }
    ensure_inside(ff, &eb)?;
    let k = ff.n() - ff.m();
    let r = eb.max_distance_from(u);
    let h = (delta + ff.lambda_eff() * r * r).min(r);
    let (w0, v0) = frame_of_field(ff, u);
    let est = integrate(&slab(ff, r, h), sampler, |p| {
        let x = slab_point(u, &w0, &v0, p);
        if !e.contains(&x) {
            return Some((0.0, 0.0));
        }
        let f = ff.frame_at(&x).ok()?;
        if pi_u(&f, u, &x).norm() > delta {
            return Some((0.0, 0.0));
        }
        let jet = skippable(ff.jet(&x)).ok()??;
        Some((jacobian_of(&g_differential(&jet, u, &x)), 0.0))
    })?;
    Ok(est.scaled(1.0 / (alpha(k) * delta.powi(k as i32))))
}

/// `y_estimate` over a decreasing grid of `delta`.
pub fn y_profile(e: &SetOracle, ff: &FrameField, u: &Vector, deltas: &[f64], sampler: &Sampler) -> Result<Vec<MeasureEstimate>> {
    deltas
        .iter()
        .enumerate()
        .map(|(i, d)| y_estimate(e, ff, u, *d, &sampler.with_key(sampler.key.child(i as u64))))
        .collect()
}

/// `phi_{E,W}(B(u, rho)) / L^n(B(u, rho))`.
///
/// The slice of `B(u, rho)` by `W(x)` is an `m`-ball of radius
/// `sqrt(rho^2 - dist(u, W(x))^2)`, so the integrand is exact.
pub fn z_estimate(e: &SetOracle, ff: &FrameField, u: &Vector, rho: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    if !(rho > 0.0) {
        return Err(GmtError::InvalidArgument("rho must be positive".into()));
    }
    let eb = e.bbox();
    if !(eb.volume() > 0.0) {
        return Ok(MeasureEstimate::zero());
    }
    let (n, m) = (ff.n(), ff.m());
    let r = eb.max_distance_from(u);
    let h = (rho + ff.lambda_eff() * r * r).min(r.max(rho));
    let (w0, v0) = frame_of_field(ff, u);
    let am = alpha(m);
    let field = ff.field();
    let est = integrate(&slab(ff, r, h), sampler, |p| {
        let x = slab_point(u, &w0, &v0, p);
        if !e.contains(&x) {
            return Some((0.0, 0.0));
        }
        let q = field.evaluate(&x).complement();
        let d2 = q.project(&(&x - u)).norm_squared();
        if d2 >= rho * rho {
            return Some((0.0, 0.0));
        }
        Some((am * (rho * rho - d2).powf(m as f64 / 2.0), 0.0))
    })?;
    Ok(est.scaled(1.0 / (alpha(n) * rho.powi(n as i32))))
}

/// `z_estimate` over a decreasing grid of `rho`.
pub fn z_profile(e: &SetOracle, ff: &FrameField, u: &Vector, rhos: &[f64], sampler: &Sampler) -> Result<Vec<MeasureEstimate>> {
    rhos.iter()
        .enumerate()
        .map(|(i, r)| z_estimate(e, ff, u, *r, &sampler.with_key(sampler.key.child(i as u64))))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub u: Vec<f64>,
    pub y: MeasureEstimate,
    pub z: MeasureEstimate,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    pub violations: usize,
    pub epsilon: f64,
    /// `Lambda_eff * diam(bbox E)`.
    pub gate_value: f64,
    pub gate_limit: f64,
    /// Fraction of sampled `u` whose `Y` estimate is within 3 sigma of zero.
    pub near_zero_fraction: f64,
}

fn diameter_gate(ff: &FrameField, b: &AxisBox) -> Result<f64> {
    let g = ff.lambda_eff() * b.diameter();
    if g > SMALL_DIAMETER_GATE {
        return Err(GmtError::HypothesisFailed(format!(
            "small-diameter gate: Lambda * diam = {g:.4} exceeds {SMALL_DIAMETER_GATE}"
        )));
    }
    Ok(g)
}

/// Points `u` of `E` with `B(u, margin)` inside `E`, by rejection from the bounding box.
pub fn sample_interior(e: &SetOracle, count: usize, margin: f64, key: RngKey) -> Result<Vec<Vector>> {
    let eb = e.bbox();
    let mut rng = key.rng(0);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        if attempts >= MAX_ATTEMPTS {
            return Err(GmtError::EmptySet { attempts });
        }
        attempts += 1;
        let u = eb.sample(&mut rng);
        if e.contains_ball(&u, margin) {
            out.push(u);
        }
    }
    Ok(out)
}

/// `(1-eps) 2^{-(n-m)/2} Y <= Z <= (1+eps) 2^{(n-m)/2} C(n,n-m)^{1/2} Y` at sampled
/// interior points, each side with 3 sigma of slack.
pub fn check_z_sandwich(
    e: &SetOracle,
    ff: &FrameField,
    u_samples: usize,
    delta: f64,
    rho: f64,
    epsilon: f64,
    sampler: &Sampler,
) -> Result<SandwichReport> {
    use rayon::prelude::*;
    let gate_value = diameter_gate(ff, &e.bbox())?;
    let (n, m) = (ff.n(), ff.m());
    let k = (n - m) as f64;
    let lo_c = (1.0 - epsilon) * 2f64.powf(-k / 2.0);
    let hi_c = (1.0 + epsilon) * 2f64.powf(k / 2.0) * (binomial(n, n - m) as f64).sqrt();
    let us = sample_interior(e, u_samples, rho.max(delta), sampler.key.named("sandwich.u"))?;
    let rows = us
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let key = sampler.key.named("sandwich").child(i as u64);
            let y = y_estimate(e, ff, u, delta, &sampler.with_key(key.named("y")))?;
            let z = z_estimate(e, ff, u, rho, &sampler.with_key(key.named("z")))?;
            let lower = lo_c * y.value;
            let upper = hi_c * y.value;
            let lower_ok = z.value + 3.0 * z.std_error.hypot(lo_c * y.std_error) >= lower;
            let upper_ok = z.value - 3.0 * z.std_error.hypot(hi_c * y.std_error) <= upper;
            Ok(SandwichRow {
                u: u.iter().copied().collect(),
                y,
                z,
                lower,
                upper,
                lower_ok,
                upper_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = rows.iter().filter(|r| !(r.lower_ok && r.upper_ok)).count();
    let near_zero = rows.iter().filter(|r| r.y.indistinguishable_from_zero()).count();
    Ok(SandwichReport {
        near_zero_fraction: if rows.is_empty() { 0.0 } else { near_zero as f64 / rows.len() as f64 },
        rows,
        violations,
        epsilon,
        gate_value,
        gate_limit: SMALL_DIAMETER_GATE,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub lhs: MeasureEstimate,
    pub y_integral: MeasureEstimate,
    /// `(1 - eps) 2^{-(n-m)} int_B Y`.
    pub bound: f64,
    pub holds: bool,
    pub epsilon: f64,
    pub gate_value: f64,
}

/// `int_E H^m(B cap W(x)) dx >= (1 - eps) 2^{-(n-m)} int_B Y_E dL^n`, with 3 sigma slack.
pub fn check_phi_lower_bound(e: &SetOracle, b: &SetOracle, ff: &FrameField, delta: f64, epsilon: f64, sampler: &Sampler) -> Result<LowerBoundReport> {
    let hull = e.bbox().hull(&b.bbox());
    let gate_value = diameter_gate(ff, &hull)?;
    let lhs = phi_measure(e, b, ff, &sampler.with_key(sampler.key.named("phi_lower.lhs")))?;
    let yi = y_integral(e, b, ff, delta, &sampler.with_key(sampler.key.named("phi_lower.rhs")))?;
    let c = (1.0 - epsilon) * 0.5f64.powi((ff.n() - ff.m()) as i32);
    let bound = c * yi.value;
    let holds = lhs.value + 3.0 * lhs.std_error.hypot(c * yi.std_error) >= bound;
    Ok(LowerBoundReport {
        lhs,
        y_integral: yi,
        bound,
        holds,
        epsilon,
        gate_value,
    })
}

/// Uniform random point of `B(0, r)` in `R^k`.
pub fn sample_ball<R: Rng + ?Sized>(k: usize, r: f64, rng: &mut R) -> Vector {
    loop {
        let p = Vector::from_fn(k, |_, _| r * (2.0 * rng.random::<f64>() - 1.0));
        if p.norm() <= r {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::Plane;
    use crate::planefield::PlaneField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn constant_ff(n: usize, m: usize, radius: f64) -> FrameField {
        let axes: Vec<usize> = (0..m).collect();
        let dom = AxisBox::cube(&vec![0.5; n], 2.0);
        let f = PlaneField::constant(Plane::coordinate(n, &axes).unwrap(), dom).unwrap();
        FrameField::new(f, Vector::from_element(n, 0.5), radius).unwrap()
    }

    fn rotation_ff() -> FrameField {
        let f = PlaneField::rotation_2d(1.0, [0.6, 0.8], AxisBox::cube(&[0.0, 0.0], 1.0)).unwrap();
        FrameField::new(f, v(&[0.0, 0.0]), 0.2).unwrap()
    }

    #[test]
    fn constant_field_factors_equal_inverse_sqrt_two_power() {
        for (n, m) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
            let ff = constant_ff(n, m, 0.5);
            let x = Vector::from_element(n, 0.5);
            for t in [0.0, 0.3] {
                let p = SigmaPoint::on_sigma(&ff, x.clone(), Vector::from_element(m, t)).unwrap();
                let (a, b) = jacobians_sigma(&ff, &p).unwrap();
                let expect = 2f64.powf(-((n - m) as f64) / 2.0);
                assert!((a.value - expect).abs() < 1e-9, "{n} {m} {a:?}");
                assert!((b.value - expect).abs() < 1e-9);
                assert!(a.within_bounds && b.within_bounds);
            }
        }
    }

    #[test]
    fn bounds_at_zero_separation() {
        assert!((pi1_lower_bound(3, 1, 2.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((pi2_lower_bound(2, 1, 2.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((pi13_lower_bound(4, 2, 1.0, 0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sigma_hat_constant_field_by_hand() {
        // n = 2, m = 1: det of the restricted Gram inverse is 1/3
        let ff = constant_ff(2, 1, 0.5);
        let p = SigmaPoint::on_sigma_hat(&ff, v(&[0.5, 0.5]), v(&[0.0]), v(&[0.0])).unwrap();
        let (j13, j23) = jacobians_sigma_hat(&ff, &p).unwrap();
        assert!((j13.value - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!(j13.value >= 0.5 && j13.within_bounds);
        assert!(j23.value <= 1.0 + 1e-6);
        // area factor of F_hat is sqrt(det Gram) = sqrt(3)
        assert!((j13.area_factor - 3f64.sqrt()).abs() < 1e-9);
        // J(pi_2 x pi_3) JF_hat = 1 since (t, y) -> u is an isometry for fixed x
        assert!((j23.value * j23.area_factor - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_field_points_within_bounds() {
        let ff = rotation_ff();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..300 {
            let x = v(&[0.1 * (rng.random::<f64>() - 0.5), 0.1 * (rng.random::<f64>() - 0.5)]);
            let t = v(&[0.1 * (rng.random::<f64>() - 0.5)]);
            let p = SigmaPoint::on_sigma(&ff, x.clone(), t.clone()).unwrap();
            assert!((p.separation() - t.norm()).abs() < 1e-12);
            let (a, b) = jacobians_sigma(&ff, &p).unwrap();
            assert!(a.within_bounds, "{a:?}");
            assert!(b.within_bounds && b.value > 1e-8, "{b:?}");
            let y = v(&[0.05 * (rng.random::<f64>() - 0.5)]);
            let q = SigmaPoint::on_sigma_hat(&ff, x, t, y).unwrap();
            let (c, d) = jacobians_sigma_hat(&ff, &q).unwrap();
            assert!(c.within_bounds && d.within_bounds, "{c:?} {d:?}");
        }
    }

    #[test]
    fn phi_of_unit_square() {
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        let e = phi_measure(&sq, &sq, &ff, &Sampler::mc(20_000, RngKey::new(1))).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        let empty = SetOracle::empty(2);
        assert_eq!(phi_measure(&sq, &empty, &ff, &Sampler::mc(1000, RngKey::new(1))).unwrap().value, 0.0);
        let flat = SetOracle::boxed(vec![0.0, 0.5], vec![1.0, 0.5]).unwrap();
        assert_eq!(phi_measure(&flat, &sq, &ff, &Sampler::mc(1000, RngKey::new(1))).unwrap().value, 0.0);
    }

    #[test]
    fn phi_of_shrinking_slabs_is_linear_in_width() {
        // horizontal field, E = [0,1]^2, B = [0,1] x [0.5, 0.5 + w]: phi(B) = w exactly
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        for w in [0.1, 0.01, 0.001] {
            let b = SetOracle::boxed(vec![0.0, 0.5], vec![1.0, 0.5 + w]).unwrap();
            let e = phi_measure(&sq, &b, &ff, &Sampler::mc(100_000, RngKey::new(2))).unwrap();
            assert!((e.value - w).abs() <= 3.0 * e.std_error + 1e-12, "{w} {e:?}");
        }
    }

    #[test]
    fn coarea_pi1_constant_square() {
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        let c = coarea_check_pi1(&sq, &sq, &ff, &Sampler::mc(100_000, RngKey::new(3))).unwrap();
        assert!(c.agrees, "{c:?}");
        assert!((c.lhs.value - 1.0).abs() <= 3.0 * c.lhs.std_error);
    }

    #[test]
    fn coarea_checks_on_rotation_square() {
        let ff = rotation_ff();
        let sq = SetOracle::boxed(vec![-0.1, -0.1], vec![0.1, 0.1]).unwrap();
        let s = Sampler::mc(100_000, RngKey::new(4));
        let c1 = coarea_check_pi1(&sq, &sq, &ff, &s).unwrap();
        assert!(c1.agrees, "{c1:?}");
        let c2 = coarea_check_pi2(&sq, &sq, &ff, 0.02, &s).unwrap();
        assert!(c2.agrees, "{c2:?}");
        assert!(c2.lhs.value > 0.0);
    }

    #[test]
    fn coarea_pi2_with_empty_b() {
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        let c = coarea_check_pi2(&sq, &SetOracle::empty(2), &ff, 0.1, &Sampler::mc(10_000, RngKey::new(5))).unwrap();
        assert_eq!((c.lhs.value, c.rhs.value), (0.0, 0.0));
    }

    #[test]
    fn y_and_z_on_constant_field() {
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        let s = Sampler::mc(100_000, RngKey::new(6));
        let u = v(&[0.5, 0.5]);
        let y = y_estimate(&sq, &ff, &u, 0.05, &s).unwrap();
        assert!((y.value - 1.0).abs() <= 3.0 * y.std_error + 1e-12, "{y:?}");
        let z = z_estimate(&sq, &ff, &u, 0.02, &s).unwrap();
        assert!((z.value - 1.0).abs() <= 3.0 * z.std_error + 1e-12, "{z:?}");
        let far = v(&[0.5, 1.5]);
        assert_eq!(y_estimate(&sq, &ff, &far, 0.05, &s).unwrap().value, 0.0);
    }

    #[test]
    fn y_and_z_chord_of_disk() {
        let dom = AxisBox::cube(&[0.0, 0.0], 2.0);
        let f = PlaneField::constant(Plane::coordinate(2, &[0]).unwrap(), dom).unwrap();
        let ff = FrameField::new(f, v(&[0.0, 0.0]), 1.5).unwrap();
        let disk = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let u = v(&[0.0, 0.6]);
        let s = Sampler::mc(200_000, RngKey::new(7));
        let y = y_estimate(&disk, &ff, &u, 0.02, &s).unwrap();
        // the delta-average of chord lengths differs from 1.6 by O(delta^2)
        assert!((y.value - 1.6).abs() <= 3.0 * y.std_error + 1e-3, "{y:?}");
        let z = z_estimate(&disk, &ff, &u, 0.02, &s).unwrap();
        assert!((z.value - 1.6).abs() <= 3.0 * z.std_error + 1e-3, "{z:?}");
    }

    #[test]
    fn sandwich_and_lower_bound_on_rotation_square() {
        let ff = rotation_ff();
        let sq = SetOracle::boxed(vec![-0.015, -0.015], vec![0.015, 0.015]).unwrap();
        let s = Sampler::mc(20_000, RngKey::new(8));
        let rep = check_z_sandwich(&sq, &ff, 10, 0.002, 0.002, 0.1, &s).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
        assert_eq!(rep.near_zero_fraction, 0.0);
        let lb = check_phi_lower_bound(&sq, &sq, &ff, 0.002, 0.1, &s).unwrap();
        assert!(lb.holds, "{lb:?}");
    }

    #[test]
    fn sandwich_gate() {
        let ff = rotation_ff();
        let sq = SetOracle::boxed(vec![-0.1, -0.1], vec![0.1, 0.1]).unwrap();
        let r = check_z_sandwich(&sq, &ff, 5, 0.01, 0.01, 0.1, &Sampler::mc(1000, RngKey::new(0)));
        assert!(matches!(r, Err(GmtError::HypothesisFailed(_))));
    }

    #[test]
    fn lower_bound_constant_square() {
        let ff = constant_ff(2, 1, 0.75);
        let sq = SetOracle::Box(AxisBox::unit(2));
        let lb = check_phi_lower_bound(&sq, &sq, &ff, 0.05, 0.1, &Sampler::mc(100_000, RngKey::new(9))).unwrap();
        assert!((lb.lhs.value - 1.0).abs() < 1e-9);
        assert!((lb.bound - 0.45).abs() < 0.02, "{lb:?}");
        assert!(lb.holds);
        let empty = check_phi_lower_bound(&sq, &SetOracle::empty(2), &ff, 0.05, 0.1, &Sampler::mc(1000, RngKey::new(9))).unwrap();
        assert_eq!(empty.lhs.value, 0.0);
        assert!(empty.holds);
    }
}
