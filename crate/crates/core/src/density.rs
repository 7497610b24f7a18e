//! Polyballs, the bow-tie and stripe inequalities, and the density experiments.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bbox::AxisBox;
use crate::error::{GmtError, Result};
use crate::fibration::{sample_ball, y_integral, MAX_ATTEMPTS};
use crate::grassmann::{gaussian_vector, Plane};
use crate::linalg::operator_norm;
use crate::planefield::{pi_u, FrameField, PlaneField};
use crate::rng::RngKey;
use crate::setlib::{
    alpha, cube_mean, density_ratio, lebesgue_measure, lebesgue_or_zero, polyball_nu, MeasureEstimate, Method,
    Sampler, SetOracle,
};
use crate::{Matrix, Vector};

/// Default `Lambda * r` gate for the polyball statements.
pub const LAMBDA_R_GATE: f64 = 0.01;
/// Default constant in the polyball lower bound `(1 - c eps)`.
pub const C_LOWER_BOUND: f64 = 8.0;
/// Margin below `2^-n` counted as a density failure.
pub const DENSITY_MARGIN: f64 = 0.1;

/// `C_W(x0, r) = {x : |P(x - x0)| <= r, |(I - P)(x - x0)| <= r}` with `P = P_{W_0(x0)}`.
#[derive(Debug, Clone)]
pub struct Polyball {
    x0: Vector,
    r: f64,
    w0: Plane,
}

impl Polyball {
    pub fn new(x0: Vector, r: f64, w0: Plane) -> Result<Self> {
        if !(r > 0.0) {
            return Err(GmtError::InvalidArgument("polyball radius must be positive".into()));
        }
        if x0.len() != w0.n() {
            return Err(GmtError::DimensionMismatch {
                what: "polyball center",
                expected: w0.n(),
                found: x0.len(),
            });
        }
        Ok(Self { x0, r, w0 })
    }

    /// Polyball of `field` at `x0`.
    pub fn of_field(field: &PlaneField, x0: Vector, r: f64) -> Result<Self> {
        let w0 = field.evaluate(&x0);
        Self::new(x0, r, w0)
    }

    pub fn center(&self) -> &Vector {
        &self.x0
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn plane(&self) -> &Plane {
        &self.w0
    }

    /// `alpha(m) alpha(n-m) r^n`.
    pub fn volume(&self) -> f64 {
        let (n, m) = (self.w0.n(), self.w0.m());
        alpha(m) * alpha(n - m) * self.r.powi(n as i32)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        polyball_norm(self, x) <= self.r
    }

    pub fn as_set(&self) -> SetOracle {
        SetOracle::Polyball {
            center: self.x0.clone(),
            proj: self.w0.proj().clone(),
            radius: self.r,
        }
    }

    /// Uniform point: independent uniform points of the two `r`-balls.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let (n, m) = (self.w0.n(), self.w0.m());
        let w = self.w0.basis();
        let v = self.w0.complement().basis();
        let z = sample_ball(m, self.r, rng);
        let y = sample_ball(n - m, self.r, rng);
        let mut x = self.x0.clone();
        for (c, e) in z.iter().zip(w.vectors()) {
            x.axpy(*c, e, 1.0);
        }
        for (c, e) in y.iter().zip(v.vectors()) {
            x.axpy(*c, e, 1.0);
        }
        x
    }
}

/// `nu_{x0}(x - x0) = max(|P(x - x0)|, |(I - P)(x - x0)|)`.
pub fn polyball_norm(pb: &Polyball, x: &Vector) -> f64 {
    polyball_nu(pb.w0.proj(), &(x - &pb.x0))
}

/// Central-difference gradient norm of `nu` at `x`.
pub fn polyball_norm_gradient(pb: &Polyball, x: &Vector, h: f64) -> f64 {
    let n = x.len();
    let g = Vector::from_fn(n, |p, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[p] += h;
        b[p] -= h;
        (polyball_norm(pb, &a) - polyball_norm(pb, &b)) / (2.0 * h)
    });
    g.norm()
}

/// Closed-form volume with an independent Monte Carlo estimate.
pub fn polyball_measure(pb: &Polyball, sampler: &Sampler) -> Result<(f64, MeasureEstimate)> {
    let mc = lebesgue_measure(&pb.as_set(), sampler)?;
    Ok((pb.volume(), mc))
}

fn ensure_in_ball(ff: &FrameField, center: &Vector, reach: f64) -> Result<()> {
    let distance = (center - ff.x0()).norm() + reach;
    if distance > ff.radius() {
        return Err(GmtError::OutOfNeighborhood {
            distance,
            radius: ff.radius(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionReport {
    /// `nu(x - x0) / r`.
    pub t: f64,
    /// `r (1 + t) + 8 m Lambda r^2 + tol`.
    pub bound: f64,
    pub samples: usize,
    pub max_distance: f64,
    pub violations: usize,
}

/// Samples `C_W(x0, r) cap W(x)` and checks that it lies in `B(x, r(1+t) + 8 m Lambda r^2)`.
pub fn pb_inclusion_check(pb: &Polyball, ff: &FrameField, x: &Vector, samples: usize, key: RngKey) -> Result<InclusionReport> {
    let r = pb.r;
    ensure_in_ball(ff, &pb.x0, r * 2f64.sqrt())?;
    let nu = polyball_norm(pb, x);
    if nu > r {
        return Err(GmtError::InvalidArgument("x must lie in the polyball".into()));
    }
    let t = nu / r;
    let m = pb.w0.m();
    let bound = r * (1.0 + t) + 8.0 * m as f64 * ff.lambda_eff() * r * r + 1e-12 * r;
    let w = ff.frame_at(x)?.w;
    let reach = 2.0 * 2f64.sqrt() * r;
    let mut rng = key.rng(0);
    let (mut got, mut max_distance, mut violations) = (0usize, 0.0f64, 0usize);
    let mut attempts = 0u64;
    while got < samples && attempts < MAX_ATTEMPTS {
        attempts += 1;
        let mut p = x.clone();
        for e in &w {
            p.axpy(reach * (2.0 * rng.random::<f64>() - 1.0), e, 1.0);
        }
        if !pb.contains(&p) {
            continue;
        }
        got += 1;
        let d = (&p - x).norm();
        max_distance = max_distance.max(d);
        if d > bound {
            violations += 1;
        }
    }
    Ok(InclusionReport {
        t,
        bound,
        samples: got,
        max_distance,
        violations,
    })
}

/// `S = {c + W z + W^perp Gamma(z) : |z| <= rho}` with
/// `Gamma(z) = T z + a sin(k <b, z>) e`.
#[derive(Debug, Clone)]
pub struct GraphPatch {
    center: Vector,
    plane: Plane,
    w: Vec<Vector>,
    v: Vec<Vector>,
    rho: f64,
    tilt: Matrix,
    amp: f64,
    freq: f64,
    dir: Vector,
    axis: Vector,
}

impl GraphPatch {
    /// Affine patch `Gamma(z) = T z`.
    pub fn affine(center: Vector, plane: Plane, rho: f64, tilt: Matrix) -> Result<Self> {
        let (n, m) = (plane.n(), plane.m());
        if tilt.nrows() != n - m || tilt.ncols() != m {
            return Err(GmtError::DimensionMismatch {
                what: "graph tilt",
                expected: (n - m) * m,
                found: tilt.len(),
            });
        }
        Ok(Self {
            center,
            w: plane.basis().into_vectors(),
            v: plane.complement().basis().into_vectors(),
            plane,
            rho,
            tilt,
            amp: 0.0,
            freq: 0.0,
            dir: Vector::from_element(m, 0.0),
            axis: Vector::from_element(n - m, 0.0),
        })
    }

    /// Random patch whose graph map has Lipschitz constant at most `tau / sqrt(1 - tau^2)`:
    /// a linear tilt of norm `0.8 L` plus a sine wiggle with `a k = 0.2 L`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, tau: f64, rho: f64, rng: &mut R) -> Self {
        let plane = Plane::random(n, m, rng);
        let l = tau / (1.0 - tau * tau).sqrt();
        let raw = Matrix::from_fn(n - m, m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let tilt = raw.clone() * (0.8 * l / operator_norm(&raw).max(f64::MIN_POSITIVE));
        let center = gaussian_vector(n, rng);
        let mut p = Self::affine(center, plane, rho, tilt).expect("consistent shapes");
        p.freq = (1.0 + 9.0 * rng.random::<f64>()) / rho;
        p.amp = 0.2 * l / p.freq;
        p.dir = gaussian_vector(m, rng).normalize();
        p.axis = gaussian_vector(n - m, rng).normalize();
        p
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn point(&self, z: &Vector) -> Vector {
        let gamma = &self.tilt * z + &self.axis * (self.amp * (self.freq * self.dir.dot(z)).sin());
        let mut x = self.center.clone();
        for (c, e) in z.iter().zip(&self.w) {
            x.axpy(*c, e, 1.0);
        }
        for (c, e) in gamma.iter().zip(&self.v) {
            x.axpy(*c, e, 1.0);
        }
        x
    }

    /// `sqrt(det(DG^T DG))` of the graph map `G(z)` by central differences.
    fn area_element(&self, z: &Vector) -> f64 {
        let m = z.len();
        let h = 1e-6 * self.rho;
        let cols: Vec<Vector> = (0..m)
            .map(|j| {
                let mut a = z.clone();
                let mut b = z.clone();
                a[j] += h;
                b[j] -= h;
                (self.point(&a) - self.point(&b)) / (2.0 * h)
            })
            .collect();
        let dg = Matrix::from_columns(&cols);
        (dg.transpose() * dg).determinant().max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BowtieReport {
    pub tau: f64,
    pub area: MeasureEstimate,
    pub diameter: f64,
    /// `(1 - tau^2)^{-m/2} alpha(m) diam^m`.
    pub bound: f64,
    pub holds: bool,
    /// Smallest `|P_W(x - x')| / |x - x'|` over sampled pairs.
    pub min_projected_ratio: f64,
    pub injective: bool,
}

/// Bow-tie bound `H^m(S) <= (1 - tau^2)^{-m/2} alpha(m) (diam S)^m` on a sampled patch.
///
/// The cone condition `|P_{W^perp}(x - x')| <= tau |x - x'|` is verified on all pairs of
/// `points` sampled points; a violation is a `HypothesisFailed` error.
pub fn bowtie_check(patch: &GraphPatch, tau: f64, points: usize, sampler: &Sampler) -> Result<BowtieReport> {
    let m = patch.plane.m();
    let q = patch.plane.complement();
    let mut rng = sampler.key.named("bowtie.points").rng(0);
    let mut pts: Vec<Vector> = (0..points).map(|_| patch.point(&sample_ball(m, patch.rho, &mut rng))).collect();
    // boundary points fix the diameter estimate
    let rim = if m == 1 { 1 } else { 64 * m };
    for k in 0..rim {
        let z = if m == 1 {
            Vector::from_element(1, patch.rho)
        } else {
            let mut z = gaussian_vector(m, &mut rng);
            if k == 0 {
                z = Vector::from_element(m, 1.0);
            }
            z.normalize() * patch.rho
        };
        pts.push(patch.point(&z));
        pts.push(patch.point(&-z));
    }
    let mut diameter = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = &pts[i] - &pts[j];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            diameter = diameter.max(len);
            let vert = q.project(&d).norm();
            if vert > tau * len + 1e-12 * len {
                return Err(GmtError::HypothesisFailed(format!(
                    "cone condition: |Q(x - x')| / |x - x'| = {:.6} exceeds tau = {tau}",
                    vert / len
                )));
            }
            min_ratio = min_ratio.min(patch.plane.project(&d).norm() / len);
        }
    }
    let rho = patch.rho;
    let est = cube_mean(m, sampler, |p| {
        let z = Vector::from_iterator(m, p.iter().map(|u| rho * (2.0 * u - 1.0)));
        if z.norm() > rho {
            return Some((0.0, 0.0));
        }
        Some((patch.area_element(&z), 0.0))
    })?;
    let area = est.scaled((2.0 * rho).powi(m as i32));
    let bound = (1.0 - tau * tau).powf(-(m as f64) / 2.0) * alpha(m) * diameter.powi(m as i32);
    Ok(BowtieReport {
        tau,
        holds: area.value - 3.0 * area.std_error <= bound,
        area,
        diameter,
        bound,
        injective: min_ratio >= (1.0 - tau * tau).sqrt() - 1e-12,
        min_projected_ratio: min_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StripeReport {
    pub volume: MeasureEstimate,
    /// `alpha(m) r^m L^{n-m}(C) / (1 + eps)`.
    pub bound: f64,
    /// `alpha(m) r^m L^{n-m}(C)`, exact for constant fields.
    pub flat_volume: f64,
    pub holds: bool,
    pub height: f64,
    pub lambda_r: f64,
}

/// `L^n(C_W(x0, r) cap g_u^{-1}(C_c)) >= alpha(m) r^m L^{n-m}(C_c) / (1 + eps)`.
///
/// Hypotheses: `eps < 1/3`, `u` in the polyball, `|g_u(x0)| <= (1 - 3 eps) r`,
/// `c <= eps r` and `Lambda r <= gate`. Points are sampled as
/// `x0 + W_0(x0) z + W_0(x0)^perp y` with `y` restricted to the slab
/// `|y_i - y_u,i| <= c + 4 Lambda r^2` that contains the stripe.
pub fn stripe_check(
    pb: &Polyball,
    ff: &FrameField,
    u: &Vector,
    c: f64,
    epsilon: f64,
    gate: f64,
    sampler: &Sampler,
) -> Result<StripeReport> {
    let (n, m) = (pb.w0.n(), pb.w0.m());
    let k = n - m;
    let r = pb.r;
    let lambda = ff.lambda_eff();
    if !(0.0 < epsilon && epsilon < 1.0 / 3.0) {
        return Err(GmtError::HypothesisFailed(format!("stripe needs 0 < eps < 1/3, got {epsilon}")));
    }
    if lambda * r > gate {
        return Err(GmtError::HypothesisFailed(format!(
            "stripe gate: Lambda * r = {:.4e} exceeds {gate}",
            lambda * r
        )));
    }
    if !pb.contains(u) {
        return Err(GmtError::HypothesisFailed("stripe needs u in the polyball".into()));
    }
    if !(0.0..=epsilon * r).contains(&c) {
        return Err(GmtError::HypothesisFailed(format!("stripe needs 0 <= c <= eps r, got c = {c}")));
    }
    ensure_in_ball(ff, &pb.x0, r * 2f64.sqrt())?;
    let f0 = ff.frame_at(&pb.x0)?;
    let height = pi_u(&f0, u, &pb.x0).norm();
    if height > (1.0 - 3.0 * epsilon) * r {
        return Err(GmtError::HypothesisFailed(format!(
            "stripe height |g_u(x0)| = {height:.4e} exceeds (1 - 3 eps) r"
        )));
    }
    let flat_volume = alpha(m) * r.powi(m as i32) * alpha(k) * c.powi(k as i32);
    let bound = flat_volume / (1.0 + epsilon);
    if c == 0.0 {
        return Ok(StripeReport {
            volume: MeasureEstimate::zero(),
            bound,
            flat_volume,
            holds: true,
            height,
            lambda_r: lambda * r,
        });
    }
    let y_u = Vector::from_iterator(k, f0.v.iter().map(|v| v.dot(&(u - &pb.x0))));
    let h = c + 4.0 * lambda * r * r;
    let mut lo = vec![-r; m];
    let mut hi = vec![r; m];
    lo.extend(y_u.iter().map(|y| y - h));
    hi.extend(y_u.iter().map(|y| y + h));
    let region = AxisBox::new(lo, hi)?;
    let est = cube_mean(n, sampler, |p| {
        let q = region.from_unit(p);
        let z = q.rows(0, m);
        let y = q.rows(m, k);
        if z.norm() > r || y.norm() > r {
            return Some((0.0, 0.0));
        }
        let mut x = pb.x0.clone();
        for (j, w) in f0.w.iter().enumerate() {
            x.axpy(z[j], w, 1.0);
        }
        for (l, v) in f0.v.iter().enumerate() {
            x.axpy(y[l], v, 1.0);
        }
        let f = ff.frame_at(&x).ok()?;
        Some((if pi_u(&f, u, &x).norm() <= c { 1.0 } else { 0.0 }, 0.0))
    })?;
    let volume = est.scaled(region.volume());
    Ok(StripeReport {
        holds: volume.value + 3.0 * volume.std_error >= bound,
        volume,
        bound,
        flat_volume,
        height,
        lambda_r: lambda * r,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityRow {
    pub index: usize,
    pub x: Vec<f64>,
    /// `Theta(x, r)` for each radius of the grid.
    pub theta: Vec<f64>,
    pub theta_se: Vec<f64>,
    pub max_theta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrefixSummary {
    pub r_min: f64,
    /// Fraction of points whose largest `Theta` over radii `>= r_min` is below threshold.
    pub below_fraction: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityExperiment {
    pub threshold: f64,
    pub rows: Vec<DensityRow>,
    pub prefixes: Vec<PrefixSummary>,
    /// Prefix fractions never increase by more than two standard errors.
    pub nonincreasing: bool,
}

/// Samples `x_count` points of `A` and computes `Theta(x, r)` along `W(x)` for each
/// radius of the strictly decreasing grid `r_grid`.
pub fn density_experiment(
    a: &SetOracle,
    field: &PlaneField,
    x_count: usize,
    r_grid: &[f64],
    r_floor: f64,
    margin: f64,
    key: RngKey,
) -> Result<DensityExperiment> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GmtError::InvalidArgument("r_grid must be nonempty and strictly decreasing".into()));
    }
    if *r_grid.last().expect("nonempty") < r_floor {
        return Err(GmtError::InvalidArgument(format!("r_grid goes below the floor {r_floor}")));
    }
    let n = field.n();
    let threshold = (1.0 - margin) / 2f64.powi(n as i32);
    let rows = (0..x_count)
        .into_par_iter()
        .map(|i| {
            let pkey = key.named("density.x").child(i as u64);
            let x = a.sample_point(&mut pkey.rng(0), MAX_ATTEMPTS)?;
            let w = field.evaluate(&x);
            let mut theta = Vec::with_capacity(r_grid.len());
            let mut theta_se = Vec::with_capacity(r_grid.len());
            for (j, r) in r_grid.iter().enumerate() {
                let s = Sampler::exact(pkey.child(j as u64)).with_samples(4096);
                let d = density_ratio(a, &x, &w, *r, &s)?;
                theta.push(d.value);
                theta_se.push(d.std_error);
            }
            Ok(DensityRow {
                index: i,
                x: x.iter().copied().collect(),
                max_theta: theta.iter().copied().fold(0.0, f64::max),
                theta,
                theta_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = rows.len().max(1) as f64;
    let prefixes: Vec<PrefixSummary> = (0..r_grid.len())
        .map(|k| {
            let below = rows
                .iter()
                .filter(|row| row.theta[..=k].iter().copied().fold(0.0, f64::max) < threshold)
                .count() as f64;
            let p = below / count;
            PrefixSummary {
                r_min: r_grid[k],
                below_fraction: p,
                std_error: (p * (1.0 - p) / count).sqrt(),
            }
        })
        .collect();
    let nonincreasing = prefixes
        .windows(2)
        .all(|w| w[1].below_fraction <= w[0].below_fraction + 2.0 * w[0].std_error.hypot(w[1].std_error));
    Ok(DensityExperiment {
        threshold,
        rows,
        prefixes,
        nonincreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FubiniReport {
    pub lebesgue: MeasureEstimate,
    /// Mean over the domain of the `delta`-averaged slice mass of `A`.
    pub mean_slice_mass: MeasureEstimate,
    pub lebesgue_zero: bool,
    pub slice_zero: bool,
    pub vanish_together: bool,
}

/// `L^n(A)` against the domain average of `Y_delta(A)`; both must vanish together.
pub fn fubini_equivalence_check(a: &SetOracle, ff: &FrameField, delta: f64, sampler: &Sampler) -> Result<FubiniReport> {
    let lebesgue = lebesgue_or_zero(a, &sampler.with_key(sampler.key.named("fubini.volume")))?;
    let dom = ff.field().domain().clone();
    let vol = dom.volume();
    let mean_slice_mass = y_integral(a, &SetOracle::Box(dom), ff, delta, &sampler.with_key(sampler.key.named("fubini.slices")))?
        .scaled(1.0 / vol);
    let lebesgue_zero = lebesgue.indistinguishable_from_zero();
    let slice_zero = mean_slice_mass.indistinguishable_from_zero();
    Ok(FubiniReport {
        lebesgue,
        mean_slice_mass,
        lebesgue_zero,
        slice_zero,
        vanish_together: lebesgue_zero == slice_zero,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PolyballLowerReport {
    pub occupancy: MeasureEstimate,
    pub lhs: MeasureEstimate,
    /// `(1 - c eps) alpha(m) r^m L^n(C_W)`.
    pub rhs: f64,
    pub c: f64,
    pub epsilon: f64,
    pub holds: bool,
}

/// `int_{A cap C_W} Y_{A cap C_W} dL^n >= (1 - c eps) alpha(m) r^m L^n(C_W)`.
#[allow(clippy::too_many_arguments)]
pub fn check_polyball_lower_bound(
    pb: &Polyball,
    a: &SetOracle,
    ff: &FrameField,
    epsilon: f64,
    c: f64,
    gate: f64,
    delta: f64,
    sampler: &Sampler,
) -> Result<PolyballLowerReport> {
    let m = pb.w0.m();
    if !(0.0 < epsilon && epsilon < 1.0 / 3.0) {
        return Err(GmtError::HypothesisFailed(format!("needs 0 < eps < 1/3, got {epsilon}")));
    }
    let lr = ff.lambda_eff() * pb.r;
    if lr > gate {
        return Err(GmtError::HypothesisFailed(format!("polyball gate: Lambda * r = {lr:.4e} exceeds {gate}")));
    }
    ensure_in_ball(ff, &pb.x0, pb.r * 2f64.sqrt())?;
    let e = SetOracle::intersection(vec![a.clone(), pb.as_set()])?;
    let vol = pb.volume();
    let occ_sampler = Sampler {
        method: Method::Mc,
        ..sampler.with_key(sampler.key.named("polyball_lower.occupancy"))
    };
    let occupancy = lebesgue_or_zero(&e, &occ_sampler)?;
    if occupancy.value + 3.0 * occupancy.std_error < (1.0 - epsilon) * vol {
        return Err(GmtError::HypothesisFailed(format!(
            "occupancy L(A cap C_W) = {:.4e} is below (1 - eps) L(C_W) = {:.4e}",
            occupancy.value,
            (1.0 - epsilon) * vol
        )));
    }
    let lhs = y_integral(&e, &e, ff, delta, &sampler.with_key(sampler.key.named("polyball_lower.lhs")))?;
    let rhs = (1.0 - c * epsilon) * alpha(m) * pb.r.powi(m as i32) * vol;
    Ok(PolyballLowerReport {
        holds: lhs.value + 3.0 * lhs.std_error >= rhs,
        occupancy,
        lhs,
        rhs,
        c,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn rotation_ff(kappa: f64, radius: f64) -> FrameField {
        let f = PlaneField::rotation_2d(kappa, [0.0, 1.0], AxisBox::cube(&[0.0, 0.0], 1.0)).unwrap();
        FrameField::new(f, v(&[0.0, 0.0]), radius).unwrap()
    }

    fn constant_ff(n: usize, radius: f64) -> FrameField {
        let f = PlaneField::constant(Plane::coordinate(n, &[0]).unwrap(), AxisBox::cube(&vec![0.0; n], 1.0)).unwrap();
        FrameField::new(f, Vector::zeros(n), radius).unwrap()
    }

    #[test]
    fn norm_examples() {
        let pb = Polyball::new(v(&[1.0, 2.0]), 0.5, Plane::line_2d(0.3)).unwrap();
        assert_eq!(polyball_norm(&pb, &v(&[1.0, 2.0])), 0.0);
        let w = v(&[0.3f64.cos(), 0.3f64.sin()]);
        assert!((polyball_norm(&pb, &(v(&[1.0, 2.0]) + &w * 0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn norm_is_one_lipschitz_with_unit_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let pb = Polyball::new(v(&[0.0, 0.0, 0.0]), 1.0, Plane::random(3, 1, &mut rng)).unwrap();
        for _ in 0..2000 {
            let x = gaussian_vector(3, &mut rng);
            let y = gaussian_vector(3, &mut rng);
            assert!((polyball_norm(&pb, &x) - polyball_norm(&pb, &y)).abs() <= (&x - &y).norm() * (1.0 + 1e-9));
            let p = pb.plane().project(&x).norm();
            let q = (&x - pb.plane().project(&x)).norm();
            if (p - q).abs() > 1e-3 {
                assert!((polyball_norm_gradient(&pb, &x, 1e-6) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn volumes() {
        let pb = Polyball::new(v(&[0.0, 0.0]), 1.0, Plane::line_2d(0.0)).unwrap();
        assert_eq!(pb.volume(), 4.0);
        let pb3 = Polyball::new(v(&[0.0, 0.0, 0.0]), 1.0, Plane::coordinate(3, &[0]).unwrap()).unwrap();
        assert!((pb3.volume() - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pb4 = Polyball::new(v(&[0.1, 0.2, 0.3, 0.4]), 0.7, Plane::random(4, 2, &mut rng)).unwrap();
        let (exact, mc) = polyball_measure(&pb4, &Sampler::mc(200_000, RngKey::new(3))).unwrap();
        assert!((mc.value - exact).abs() <= 3.0 * mc.std_error, "{exact} {mc:?}");
        for _ in 0..100 {
            assert!(pb4.contains(&pb4.sample(&mut rng)));
        }
    }

    #[test]
    fn inclusion_constant_field() {
        let ff = constant_ff(2, 0.9);
        let pb = Polyball::new(v(&[0.0, 0.0]), 0.5, Plane::coordinate(2, &[0]).unwrap()).unwrap();
        let center = pb_inclusion_check(&pb, &ff, &v(&[0.0, 0.0]), 2000, RngKey::new(1)).unwrap();
        assert_eq!(center.violations, 0);
        assert!(center.max_distance <= 0.5 + 1e-12);
        let edge = pb_inclusion_check(&pb, &ff, &v(&[0.5, 0.3]), 2000, RngKey::new(1)).unwrap();
        assert_eq!(edge.t, 1.0);
        assert_eq!(edge.violations, 0);
        assert!(edge.max_distance > 0.99 && edge.max_distance <= 1.0 + 1e-12);
    }

    #[test]
    fn inclusion_rotation_field() {
        let ff = rotation_ff(0.1, 0.5);
        let pb = Polyball::of_field(ff.field(), v(&[0.0, 0.05]), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for i in 0..20 {
            let x = pb.sample(&mut rng);
            let rep = pb_inclusion_check(&pb, &ff, &x, 500, RngKey::new(i)).unwrap();
            assert_eq!(rep.violations, 0, "{rep:?}");
        }
    }

    #[test]
    fn bowtie_flat_disk_and_segment() {
        let s = Sampler::mc(20_000, RngKey::new(2));
        let flat = GraphPatch::affine(v(&[0.0, 0.0, 0.0]), Plane::coordinate(3, &[0, 1]).unwrap(), 0.5, Matrix::zeros(1, 2)).unwrap();
        let rep = bowtie_check(&flat, 0.0, 200, &s).unwrap();
        assert!((rep.area.value - alpha(2) * 0.25).abs() <= 3.0 * rep.area.std_error + 1e-12);
        assert!((rep.diameter - 1.0).abs() < 1e-3);
        assert!(rep.holds && rep.injective);
        // segment at slope angle phi with sin phi = tau
        let tau: f64 = 0.6;
        let tilt = Matrix::from_element(1, 1, tau / (1.0 - tau * tau).sqrt());
        let seg = GraphPatch::affine(v(&[0.0, 0.0]), Plane::coordinate(2, &[0]).unwrap(), 1.0, tilt).unwrap();
        let rep = bowtie_check(&seg, tau, 50, &s).unwrap();
        let length = 2.0 / (1.0 - tau * tau).sqrt();
        assert!((rep.area.value - length).abs() < 1e-6);
        assert!((rep.diameter - length).abs() < 1e-9);
        assert!((rep.area.value / rep.bound - (1.0 - tau * tau).sqrt() / 2.0).abs() < 1e-6);
    }

    #[test]
    fn bowtie_cone_violation_is_reported() {
        let tilt = Matrix::from_element(1, 1, 2.0);
        let seg = GraphPatch::affine(v(&[0.0, 0.0]), Plane::coordinate(2, &[0]).unwrap(), 1.0, tilt).unwrap();
        let r = bowtie_check(&seg, 0.5, 20, &Sampler::mc(100, RngKey::new(0)));
        assert!(matches!(r, Err(GmtError::HypothesisFailed(_))));
    }

    #[test]
    fn bowtie_random_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for i in 0..10 {
            let tau = 0.9 * rng.random::<f64>();
            let p = GraphPatch::random(3, 2, tau, 0.3, &mut rng);
            let rep = bowtie_check(&p, tau, 100, &Sampler::mc(4000, RngKey::new(i))).unwrap();
            assert!(rep.holds && rep.injective, "{rep:?}");
        }
    }

    #[test]
    fn stripe_constant_field_matches_flat_volume() {
        let ff = constant_ff(2, 0.9);
        let pb = Polyball::of_field(ff.field(), v(&[0.0, 0.0]), 0.4).unwrap();
        let u = v(&[0.1, 0.1]);
        let rep = stripe_check(&pb, &ff, &u, 0.03, 0.1, LAMBDA_R_GATE, &Sampler::mc(200_000, RngKey::new(4))).unwrap();
        assert!((rep.volume.value - rep.flat_volume).abs() <= 3.0 * rep.volume.std_error + 1e-12, "{rep:?}");
        assert!(rep.holds);
        let zero = stripe_check(&pb, &ff, &u, 0.0, 0.1, LAMBDA_R_GATE, &Sampler::mc(100, RngKey::new(4))).unwrap();
        assert_eq!((zero.volume.value, zero.bound), (0.0, 0.0));
    }

    #[test]
    fn stripe_rotation_field() {
        let ff = rotation_ff(0.05, 0.5);
        let pb = Polyball::of_field(ff.field(), v(&[0.0, 0.0]), 0.1).unwrap();
        let u = v(&[0.02, 0.03]);
        let rep = stripe_check(&pb, &ff, &u, 0.01, 0.1, LAMBDA_R_GATE, &Sampler::mc(200_000, RngKey::new(5))).unwrap();
        assert!(rep.holds, "{rep:?}");
        let bad = stripe_check(&pb, &ff, &u, 0.05, 0.1, LAMBDA_R_GATE, &Sampler::mc(100, RngKey::new(5)));
        assert!(matches!(bad, Err(GmtError::HypothesisFailed(_))));
    }

    #[test]
    fn density_on_box_control() {
        let field = PlaneField::constant(Plane::line_2d(0.2), AxisBox::unit(2)).unwrap();
        let a = SetOracle::Box(AxisBox::unit(2));
        let exp = density_experiment(&a, &field, 50, &[0.1, 0.05, 0.01], 1e-4, DENSITY_MARGIN, RngKey::new(6)).unwrap();
        assert_eq!(exp.prefixes.last().unwrap().below_fraction, 0.0);
        assert!(exp.nonincreasing);
        assert!(exp.rows.iter().all(|r| r.max_theta >= 0.25));
    }

    #[test]
    fn density_grid_validation() {
        let field = PlaneField::constant(Plane::line_2d(0.2), AxisBox::unit(2)).unwrap();
        let a = SetOracle::Box(AxisBox::unit(2));
        assert!(density_experiment(&a, &field, 5, &[0.1, 0.1], 1e-4, 0.1, RngKey::new(0)).is_err());
        assert!(density_experiment(&a, &field, 5, &[0.1, 1e-5], 1e-4, 0.1, RngKey::new(0)).is_err());
        let r = density_experiment(&SetOracle::empty(2), &field, 1, &[0.1], 1e-4, 0.1, RngKey::new(0));
        assert!(matches!(r, Err(GmtError::EmptySet { .. })));
    }

    #[test]
    fn fubini_on_empty_and_box() {
        let ff = constant_ff(2, 1.5);
        let s = Sampler::mc(50_000, RngKey::new(7));
        let e = fubini_equivalence_check(&SetOracle::empty(2), &ff, 0.01, &s).unwrap();
        assert!(e.lebesgue_zero && e.slice_zero && e.vanish_together);
        let b = SetOracle::boxed(vec![-0.3, -0.3], vec![0.3, 0.3]).unwrap();
        let r = fubini_equivalence_check(&b, &ff, 0.01, &s).unwrap();
        assert!(!r.lebesgue_zero && !r.slice_zero && r.vanish_together);
    }

    #[test]
    fn polyball_lower_bound_constant_field() {
        let ff = constant_ff(2, 0.9);
        let pb = Polyball::of_field(ff.field(), v(&[0.0, 0.0]), 0.3).unwrap();
        let a = SetOracle::Box(AxisBox::cube(&[0.0, 0.0], 0.5));
        let s = Sampler::mc(200_000, RngKey::new(8));
        let rep = check_polyball_lower_bound(&pb, &a, &ff, 0.05, C_LOWER_BOUND, LAMBDA_R_GATE, 0.003, &s).unwrap();
        assert!(rep.holds, "{rep:?}");
        // A contains the polyball: LHS is alpha(m) r^m L(C_W) up to an O(delta / r) rim
        let full = alpha(1) * 0.3 * pb.volume();
        assert!((rep.lhs.value - full).abs() <= 3.0 * rep.lhs.std_error + full * 0.003 / 0.3);
    }

    #[test]
    fn polyball_lower_bound_rotation_field() {
        let ff = rotation_ff(0.05, 0.5);
        let pb = Polyball::of_field(ff.field(), v(&[0.0, 0.0]), 0.1).unwrap();
        let a = SetOracle::ComplementWithin {
            inner: Box::new(SetOracle::ball(v(&[0.1, 0.1]), 0.02).unwrap()),
            container: AxisBox::cube(&[0.0, 0.0], 0.5),
        };
        let s = Sampler::mc(200_000, RngKey::new(9));
        let rep = check_polyball_lower_bound(&pb, &a, &ff, 0.05, C_LOWER_BOUND, LAMBDA_R_GATE, 0.002, &s).unwrap();
        assert!(rep.holds, "{rep:?}");
    }
}
