//! Set oracles and estimators of Lebesgue measure, affine slice measure and density ratios.

mod qmc;
mod shape;

use serde::Serialize;

pub use shape::{polyball_nu, total_length, Intervals, SetOracle};

use crate::error::{GmtError, Result};
use crate::grassmann::Plane;
use crate::rng::RngKey;
use crate::Vector;
use rand::Rng;

/// Number of Cranley–Patterson shifts behind every QMC error estimate.
pub const QMC_SHIFTS: usize = 8;
/// Default sample count for slice estimates.
pub const DEFAULT_SLICE_SAMPLES: usize = 100_000;
/// Default sample count for Lebesgue estimates.
pub const DEFAULT_VOLUME_SAMPLES: usize = 1_000_000;

/// `alpha(m) = pi^{m/2} / Gamma(m/2 + 1)`, the volume of the unit `m`-ball.
pub fn alpha(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => alpha(m - 2) * 2.0 * std::f64::consts::PI / m as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    Mc,
    Qmc,
    ClosedForm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::Mc => "mc",
            Self::Qmc => "qmc",
            Self::ClosedForm => "closed_form",
        }
    }
}

/// A measure estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub method: Method,
    /// Samples dropped because a finite-difference derivative was unstable there.
    pub skipped: u64,
}

impl MeasureEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n_samples: 0,
            method: Method::ClosedForm,
            skipped: 0,
        }
    }

    pub fn zero() -> Self {
        Self::exact(0.0)
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
            ..self
        }
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`; zero when both are exact and equal.
    pub fn z_score(&self, other: &MeasureEstimate) -> f64 {
        let diff = (self.value - other.value).abs();
        let se = self.std_error.hypot(other.std_error);
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Value within three standard errors of zero.
    pub fn indistinguishable_from_zero(&self) -> bool {
        self.value <= 3.0 * self.std_error
    }
}

/// How an integral is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampler {
    pub method: Method,
    pub samples: usize,
    pub key: RngKey,
}

impl Sampler {
    pub fn mc(samples: usize, key: RngKey) -> Self {
        Self {
            method: Method::Mc,
            samples,
            key,
        }
    }

    pub fn qmc(samples: usize, key: RngKey) -> Self {
        Self {
            method: Method::Qmc,
            samples,
            key,
        }
    }

    pub fn grid(samples: usize) -> Self {
        Self {
            method: Method::Grid,
            samples,
            key: RngKey::new(0),
        }
    }

    /// Exact oracles where available, QMC otherwise.
    pub fn exact(key: RngKey) -> Self {
        Self {
            method: Method::ClosedForm,
            samples: DEFAULT_SLICE_SAMPLES,
            key,
        }
    }

    pub fn with_key(self, key: RngKey) -> Self {
        Self { key, ..self }
    }

    pub fn with_samples(self, samples: usize) -> Self {
        Self { samples, ..self }
    }
}

/// Running sums of sample values and of per-sample inner variances.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: u64,
    pub skipped: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub sum_inner_var: f64,
}

impl Moments {
    pub fn push(&mut self, sample: Option<(f64, f64)>) {
        match sample {
            Some((x, inner)) => {
                self.n += 1;
                self.sum += x;
                self.sum_sq += x * x;
                self.sum_inner_var += inner;
            }
            None => self.skipped += 1,
        }
    }

    pub fn merge(mut self, o: &Moments) -> Self {
        self.n += o.n;
        self.skipped += o.skipped;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.sum_inner_var += o.sum_inner_var;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Two-stage variance of the mean: `sample var / N + mean inner var / N`.
    pub fn var_of_mean(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var + self.sum_inner_var / n) / n
    }
}

/// Mean of `f` over `n` points of `[0,1)^dim`, each sample optionally carrying an inner
/// variance. `None` samples are skipped and counted. MC draws iid points from keyed
/// batches; QMC uses shifted Halton points.
pub(crate) fn cube_mean<F>(dim: usize, sampler: &Sampler, f: F) -> Result<MeasureEstimate>
where
    F: Fn(&[f64]) -> Option<(f64, f64)> + Sync,
{
    let n = sampler.samples.max(2);
    match sampler.method {
        Method::Qmc | Method::ClosedForm => {
            if dim > qmc::MAX_DIM {
                return Err(GmtError::InvalidArgument(format!("QMC supports at most {} dimensions", qmc::MAX_DIM)));
            }
            let per = n.div_ceil(QMC_SHIFTS);
            let mut means = Vec::with_capacity(QMC_SHIFTS);
            let mut total = Moments::default();
            for s in 0..QMC_SHIFTS {
                let key = sampler.key.child(s as u64);
                let mut rng = key.rng(u64::MAX);
                let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                let parts = key.map_batches(per, |_, start, len| {
                    let mut m = Moments::default();
                    let mut p = vec![0.0; dim];
                    for i in start..start + len {
                        qmc::halton_shifted(i as u64, &shift, &mut p);
                        m.push(f(&p));
                    }
                    m
                });
                let m = parts.iter().fold(Moments::default(), |a, b| a.merge(b));
                means.push(m.mean());
                total = total.merge(&m);
            }
            let k = QMC_SHIFTS as f64;
            let mean = means.iter().sum::<f64>() / k;
            let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
            Ok(MeasureEstimate {
                value: mean,
                std_error: (var / k).sqrt(),
                n_samples: total.n,
                method: Method::Qmc,
                skipped: total.skipped,
            })
        }
        Method::Mc => {
            let parts = sampler.key.map_batches(n, |rng, _, len| {
                let mut m = Moments::default();
                let mut p = vec![0.0; dim];
                for _ in 0..len {
                    for x in p.iter_mut() {
                        *x = rng.random::<f64>();
                    }
                    m.push(f(&p));
                }
                m
            });
            let m = parts.iter().fold(Moments::default(), |a, b| a.merge(b));
            Ok(MeasureEstimate {
                value: m.mean(),
                std_error: m.var_of_mean().sqrt(),
                n_samples: m.n,
                method: Method::Mc,
                skipped: m.skipped,
            })
        }
        Method::Grid => {
            let k = grid_side(n, dim);
            let fine = grid_mean(dim, 2 * k, &f);
            let coarse = grid_mean(dim, k, &f);
            Ok(MeasureEstimate {
                value: fine.mean(),
                std_error: (fine.mean() - coarse.mean()).abs(),
                n_samples: fine.n + coarse.n,
                method: Method::Grid,
                skipped: fine.skipped + coarse.skipped,
            })
        }
    }
}

fn grid_side(n: usize, dim: usize) -> usize {
    ((n as f64).powf(1.0 / dim as f64).round() as usize).max(2)
}

/// Midpoint rule on a `k^dim` grid; the refinement difference serves as error estimate.
fn grid_mean<F>(dim: usize, k: usize, f: &F) -> Moments
where
    F: Fn(&[f64]) -> Option<(f64, f64)> + Sync,
{
    let total = k.pow(dim as u32);
    let parts = RngKey::new(0).map_batches(total, |_, start, len| {
        let mut m = Moments::default();
        let mut p = vec![0.0; dim];
        for idx in start..start + len {
            let mut r = idx;
            for x in p.iter_mut() {
                *x = ((r % k) as f64 + 0.5) / k as f64;
                r /= k;
            }
            m.push(f(&p));
        }
        m
    });
    parts.iter().fold(Moments::default(), |a, b| a.merge(b))
}

fn closed_form_volume(a: &SetOracle) -> Option<f64> {
    match a {
        SetOracle::Empty { .. } => Some(0.0),
        SetOracle::Ball { center, radius } => Some(alpha(center.len()) * radius.powi(center.len() as i32)),
        SetOracle::Box(b) => Some(b.volume()),
        SetOracle::Polyball { center, proj, radius } => {
            let n = center.len();
            let m = proj.trace().round() as usize;
            Some(alpha(m) * alpha(n - m) * radius.powi(n as i32))
        }
        _ => None,
    }
}

/// Estimate of `L^n(A)`: `vol(bbox) * hit fraction`.
///
/// Fails with `EmptyBox` when the bounding box has zero volume.
pub fn lebesgue_measure(a: &SetOracle, sampler: &Sampler) -> Result<MeasureEstimate> {
    let b = a.bbox();
    let vol = b.volume();
    if !(vol > 0.0) {
        return Err(GmtError::EmptyBox);
    }
    if sampler.method == Method::ClosedForm {
        if let Some(v) = closed_form_volume(a) {
            return Ok(MeasureEstimate::exact(v));
        }
    }
    let sampler = if sampler.method == Method::ClosedForm {
        Sampler { method: Method::Mc, ..*sampler }
    } else {
        *sampler
    };
    let est = cube_mean(b.dim(), &sampler, |p| {
        Some((if a.contains(&b.from_unit(p)) { 1.0 } else { 0.0 }, 0.0))
    })?;
    let mut est = est.scaled(vol);
    if est.method == Method::Mc {
        let p = est.value / vol;
        est.std_error = vol * (p * (1.0 - p) / est.n_samples as f64).sqrt();
    }
    Ok(est)
}

/// `L^n(A)`, taking zero-volume bounding boxes as measure zero.
pub fn lebesgue_or_zero(a: &SetOracle, sampler: &Sampler) -> Result<MeasureEstimate> {
    match lebesgue_measure(a, sampler) {
        Err(GmtError::EmptyBox) => Ok(MeasureEstimate::zero()),
        other => other,
    }
}

/// Exact `H^m(A cap B(x, r) cap (x + W))` when it is available from the oracle:
/// always for lines, and for planes whose ball is inside `A` or misses it.
pub fn slice_exact(a: &SetOracle, x: &Vector, basis: &[Vector], r: f64) -> Option<f64> {
    let m = basis.len();
    if m == 1 {
        return Some(total_length(&a.line_intervals(x, &basis[0], -r, r)));
    }
    if !a.may_intersect_ball(x, r) {
        return Some(0.0);
    }
    if a.contains_ball(x, r) {
        return Some(alpha(m) * r.powi(m as i32));
    }
    None
}

/// Estimate of `H^m(A cap B(x, r) cap (x + W))`.
///
/// `ClosedForm` uses exact line traces: directly for `m = 1`, and for `m >= 2` integrates
/// exact chords along the last basis vector over the remaining `m - 1` coordinates with
/// QMC. `Mc`, `Qmc` and `Grid` integrate the membership indicator over the `m`-ball.
pub fn slice_measure(a: &SetOracle, x: &Vector, w: &Plane, r: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    if !(r > 0.0) {
        return Err(GmtError::InvalidArgument("slice radius must be positive".into()));
    }
    if x.len() != a.n() || w.n() != a.n() {
        return Err(GmtError::DimensionMismatch {
            what: "slice",
            expected: a.n(),
            found: w.n(),
        });
    }
    let basis = w.basis().into_vectors();
    slice_measure_in(a, x, &basis, r, sampler)
}

/// As [`slice_measure`], with an explicit orthonormal basis of the plane.
pub fn slice_measure_in(a: &SetOracle, x: &Vector, basis: &[Vector], r: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    let m = basis.len();
    if sampler.method == Method::ClosedForm {
        if let Some(v) = slice_exact(a, x, basis, r) {
            return Ok(MeasureEstimate::exact(v));
        }
        let last = &basis[m - 1];
        let est = cube_mean(m - 1, sampler, |p| {
            let mut q = x.clone();
            let mut s2 = 0.0;
            for (j, u) in p.iter().enumerate() {
                let s = r * (2.0 * u - 1.0);
                s2 += s * s;
                q.axpy(s, &basis[j], 1.0);
            }
            if s2 >= r * r {
                return Some((0.0, 0.0));
            }
            let half = (r * r - s2).sqrt();
            Some((total_length(&a.line_intervals(&q, last, -half, half)), 0.0))
        })?;
        return Ok(est.scaled((2.0 * r).powi(m as i32 - 1)));
    }
    let est = cube_mean(m, sampler, |p| {
        let mut q = x.clone();
        let mut s2 = 0.0;
        for (j, u) in p.iter().enumerate() {
            let s = r * (2.0 * u - 1.0);
            s2 += s * s;
            q.axpy(s, &basis[j], 1.0);
        }
        Some((if s2 <= r * r && a.contains(&q) { 1.0 } else { 0.0 }, 0.0))
    })?;
    let cube = (2.0 * r).powi(m as i32);
    let mut est = est.scaled(cube);
    if est.method == Method::Mc {
        let p = est.value / cube;
        est.std_error = cube * (p * (1.0 - p) / est.n_samples as f64).sqrt();
    }
    Ok(est)
}

/// `Theta(x, r) = H^m(A cap B(x, r) cap (x + W)) / (alpha(m) r^m)`.
pub fn density_ratio(a: &SetOracle, x: &Vector, w: &Plane, r: f64, sampler: &Sampler) -> Result<MeasureEstimate> {
    let s = slice_measure(a, x, w, r, sampler)?;
    Ok(s.scaled(1.0 / (alpha(w.m()) * r.powi(w.m() as i32))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::AxisBox;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(1), 2.0);
        assert!((alpha(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((alpha(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
        // Gamma(1/2) = sqrt(pi): alpha(5) = 8 pi^2 / 15
        assert!((alpha(5) - 8.0 * std::f64::consts::PI.powi(2) / 15.0).abs() < 1e-14);
    }

    #[test]
    fn unit_square_has_full_hit_fraction() {
        let a = SetOracle::Box(AxisBox::unit(2));
        let e = lebesgue_measure(&a, &Sampler::mc(10_000, RngKey::new(1))).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn disk_area() {
        let a = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        for s in [Sampler::mc(1_000_000, RngKey::new(2)), Sampler::qmc(200_000, RngKey::new(2))] {
            let e = lebesgue_measure(&a, &s).unwrap();
            assert!((e.value - std::f64::consts::PI).abs() <= 3.0 * e.std_error, "{e:?}");
            assert!(e.std_error > 0.0);
        }
        let g = lebesgue_measure(&a, &Sampler::grid(40_000)).unwrap();
        assert!((g.value - std::f64::consts::PI).abs() < 1e-2);
    }

    #[test]
    fn additivity_of_disjoint_squares() {
        let a = SetOracle::union(vec![
            SetOracle::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            SetOracle::boxed(vec![2.0, 0.0], vec![3.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let e = lebesgue_measure(&a, &Sampler::mc(400_000, RngKey::new(3))).unwrap();
        assert!((e.value - 2.0).abs() <= 3.0 * e.std_error);
    }

    #[test]
    fn zero_volume_box() {
        let a = SetOracle::boxed(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(lebesgue_measure(&a, &Sampler::mc(10, RngKey::new(0))), Err(GmtError::EmptyBox));
        assert_eq!(lebesgue_or_zero(&a, &Sampler::mc(10, RngKey::new(0))).unwrap().value, 0.0);
    }

    #[test]
    fn slice_examples() {
        let sq = SetOracle::Box(AxisBox::unit(2));
        let e1 = Plane::coordinate(2, &[0]).unwrap();
        let ex = Sampler::exact(RngKey::new(0));
        let s = slice_measure(&sq, &v(&[0.5, 0.5]), &e1, 0.25, &ex).unwrap();
        assert_eq!(s, MeasureEstimate::exact(0.5));
        let disk = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let s = slice_measure(&disk, &v(&[0.0, 0.6]), &e1, 1.0, &ex).unwrap();
        assert!((s.value - 1.6).abs() < 1e-12);
        let d = density_ratio(&disk, &v(&[0.0, 0.6]), &e1, 1.0, &ex).unwrap();
        assert!((d.value - 0.8).abs() < 1e-12);
        let far = slice_measure(&disk, &v(&[0.0, 3.0]), &e1, 1.0, &ex).unwrap();
        assert_eq!(far.value, 0.0);
    }

    #[test]
    fn mc_slices_match_exact() {
        let disk = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let w = Plane::line_2d(0.3);
        let x = v(&[0.2, 0.5]);
        let exact = slice_measure(&disk, &x, &w, 0.9, &Sampler::exact(RngKey::new(0))).unwrap();
        for s in [Sampler::mc(100_000, RngKey::new(5)), Sampler::qmc(100_000, RngKey::new(5))] {
            let e = slice_measure(&disk, &x, &w, 0.9, &s).unwrap();
            assert!(e.z_score(&exact) <= 3.0, "{e:?} vs {exact:?}");
        }
        let g = slice_measure(&disk, &x, &w, 0.9, &Sampler::grid(20_000)).unwrap();
        assert!((g.value - exact.value).abs() < 1e-3);
    }

    #[test]
    fn planar_slices_of_a_ball() {
        // x = 0, plane z = 0 through a ball of radius 1 centered at (0, 0, 0.6): disk of
        // radius 0.8 intersected with B(0, 0.5) is the full disk of radius 0.5
        let ball = SetOracle::ball(v(&[0.0, 0.0, 0.6]), 1.0).unwrap();
        let w = Plane::coordinate(3, &[0, 1]).unwrap();
        let x = v(&[0.0, 0.0, 0.0]);
        let ex = Sampler::exact(RngKey::new(1)).with_samples(20_000);
        let s = slice_measure(&ball, &x, &w, 0.5, &ex).unwrap();
        assert!((s.value - std::f64::consts::PI * 0.25).abs() < 1e-3);
        let s = slice_measure(&ball, &x, &w, 1.0, &ex).unwrap();
        let exact = std::f64::consts::PI * 0.64;
        assert!((s.value - exact).abs() <= 3.0 * s.std_error + 1e-6, "{s:?}");
        let m = slice_measure(&ball, &x, &w, 1.0, &Sampler::mc(200_000, RngKey::new(2))).unwrap();
        assert!((m.value - exact).abs() <= 3.0 * m.std_error);
    }

    #[test]
    fn half_space_boundary_density_is_half_or_one() {
        // a boundary point with W parallel to the boundary sees a full chord
        let clip = AxisBox::cube(&[0.0, 0.0], 2.0);
        let h = SetOracle::half_space(v(&[0.0, 1.0]), 0.0, clip).unwrap();
        let w = Plane::coordinate(2, &[0]).unwrap();
        for r in [0.5, 0.1, 0.01] {
            let d = density_ratio(&h, &v(&[0.0, 0.0]), &w, r, &Sampler::exact(RngKey::new(0))).unwrap();
            assert_eq!(d.value, 1.0);
        }
    }

    #[test]
    fn mc_error_shrinks_by_sqrt_two_when_doubling() {
        let disk = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let a = lebesgue_measure(&disk, &Sampler::mc(100_000, RngKey::new(9))).unwrap();
        let b = lebesgue_measure(&disk, &Sampler::mc(200_000, RngKey::new(9))).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let disk = SetOracle::ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let run = |t: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| {
                let a = lebesgue_measure(&disk, &Sampler::mc(50_000, RngKey::new(4))).unwrap();
                let b = lebesgue_measure(&disk, &Sampler::qmc(50_000, RngKey::new(4))).unwrap();
                (a.value.to_bits(), a.std_error.to_bits(), b.value.to_bits(), b.std_error.to_bits())
            })
        };
        assert_eq!(run(1), run(4));
    }
}
