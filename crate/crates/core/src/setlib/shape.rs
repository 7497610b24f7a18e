use rand::Rng;

use crate::bbox::AxisBox;
use crate::error::{GmtError, Result};
use crate::rng::RngKey;
use crate::{Matrix, Vector};

/// Sorted, pairwise disjoint closed intervals.
pub type Intervals = Vec<(f64, f64)>;

/// A bounded Borel set given by membership, a bounding box and exact line traces.
#[derive(Debug, Clone)]
pub enum SetOracle {
    Empty { n: usize },
    Ball { center: Vector, radius: f64 },
    Box(AxisBox),
    /// `{x : <normal, x> <= offset}` clipped to a box.
    HalfSpace { normal: Vector, offset: f64, clip: AxisBox },
    /// `{x : max(|P(x - center)|, |(I - P)(x - center)|) <= radius}`.
    Polyball { center: Vector, proj: Matrix, radius: f64 },
    Union(Vec<SetOracle>),
    Intersection(Vec<SetOracle>),
    ComplementWithin { inner: Box<SetOracle>, container: AxisBox },
}

impl SetOracle {
    pub fn empty(n: usize) -> Self {
        Self::Empty { n }
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(GmtError::InvalidArgument("ball radius must be nonnegative".into()));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Ok(Self::Box(AxisBox::new(lo, hi)?))
    }

    pub fn half_space(normal: Vector, offset: f64, clip: AxisBox) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0) || normal.len() != clip.dim() {
            return Err(GmtError::InvalidArgument("half-space normal must be nonzero, matching the clip box".into()));
        }
        Ok(Self::HalfSpace {
            normal: normal / len,
            offset: offset / len,
            clip,
        })
    }

    pub fn union(parts: Vec<SetOracle>) -> Result<Self> {
        check_same_dim(&parts)?;
        Ok(Self::Union(parts))
    }

    pub fn intersection(parts: Vec<SetOracle>) -> Result<Self> {
        check_same_dim(&parts)?;
        Ok(Self::Intersection(parts))
    }

    pub fn complement_within_box(inner: SetOracle, container: AxisBox) -> Result<Self> {
        if inner.n() != container.dim() {
            return Err(GmtError::DimensionMismatch {
                what: "complement container",
                expected: inner.n(),
                found: container.dim(),
            });
        }
        Ok(Self::ComplementWithin {
            inner: Box::new(inner),
            container,
        })
    }

    /// `count` balls with radii uniform in `[r_min, r_max]`, centers uniform in the
    /// container shrunk by the radius (so every ball lies inside it).
    pub fn random_ball_union(count: usize, r_min: f64, r_max: f64, container: &AxisBox, key: RngKey) -> Result<Self> {
        if !(0.0 < r_min && r_min <= r_max) {
            return Err(GmtError::InvalidArgument("need 0 < r_min <= r_max".into()));
        }
        let mut rng = key.named("random_ball_union").rng(0);
        let balls = (0..count)
            .map(|_| {
                let r = r_min + (r_max - r_min) * rng.random::<f64>();
                Self::Ball {
                    center: container.shrink(r).sample(&mut rng),
                    radius: r,
                }
            })
            .collect();
        Ok(Self::Union(balls))
    }

    /// `K x [0,1]^{n-1}` where `K` is the depth-`depth` stage of the fat Cantor set
    /// (stage `k` removes an open middle interval of length `4^-k` from each piece).
    pub fn cantor_slab(depth: u32, n: usize) -> Result<Self> {
        if depth > 14 || n < 2 {
            return Err(GmtError::InvalidArgument("cantor_slab needs depth <= 14 and n >= 2".into()));
        }
        let mut pieces = vec![(0.0f64, 1.0f64)];
        for k in 1..=depth {
            let gap = 0.25f64.powi(k as i32);
            pieces = pieces
                .into_iter()
                .flat_map(|(a, b)| {
                    let mid = 0.5 * (a + b);
                    [(a, mid - 0.5 * gap), (mid + 0.5 * gap, b)]
                })
                .collect();
        }
        let boxes = pieces
            .into_iter()
            .map(|(a, b)| {
                let mut lo = vec![0.0; n];
                let mut hi = vec![1.0; n];
                lo[0] = a;
                hi[0] = b;
                Self::Box(AxisBox::new(lo, hi).expect("ordered cantor piece"))
            })
            .collect();
        Ok(Self::Union(boxes))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Empty { n } => *n,
            Self::Ball { center, .. } | Self::Polyball { center, .. } => center.len(),
            Self::Box(b) => b.dim(),
            Self::HalfSpace { clip, .. } => clip.dim(),
            Self::Union(p) | Self::Intersection(p) => p.first().map(|s| s.n()).unwrap_or(0),
            Self::ComplementWithin { container, .. } => container.dim(),
        }
    }

    /// A box containing the set. Empty sets get a zero-volume box at the origin.
    pub fn bbox(&self) -> AxisBox {
        match self {
            Self::Empty { n } => AxisBox::cube(&vec![0.0; *n], 0.0),
            Self::Ball { center, radius } => AxisBox::cube(center.as_slice(), *radius),
            Self::Box(b) => b.clone(),
            Self::HalfSpace { clip, .. } => clip.clone(),
            Self::Polyball { center, proj, radius } => {
                let n = center.len();
                let q = Matrix::identity(n, n) - proj;
                let half: Vec<f64> = (0..n)
                    .map(|k| radius * (proj.column(k).norm() + q.column(k).norm()))
                    .collect();
                AxisBox::new(
                    center.iter().zip(&half).map(|(c, h)| c - h).collect(),
                    center.iter().zip(&half).map(|(c, h)| c + h).collect(),
                )
                .expect("finite polyball box")
            }
            Self::Union(parts) => {
                let mut it = parts.iter().filter(|p| !matches!(p, Self::Empty { .. }));
                match it.next() {
                    Some(first) => it.fold(first.bbox(), |acc, p| acc.hull(&p.bbox())),
                    None => Self::Empty { n: self.n() }.bbox(),
                }
            }
            Self::Intersection(parts) => {
                let mut it = parts.iter();
                match it.next() {
                    Some(first) => it.fold(first.bbox(), |acc, p| acc.meet(&p.bbox())),
                    None => Self::Empty { n: 0 }.bbox(),
                }
            }
            Self::ComplementWithin { container, .. } => container.clone(),
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            Self::Empty { .. } => false,
            Self::Ball { center, radius } => (x - center).norm_squared() <= radius * radius,
            Self::Box(b) => b.contains(x),
            Self::HalfSpace { normal, offset, clip } => clip.contains(x) && normal.dot(x) <= *offset,
            Self::Polyball { center, proj, radius } => polyball_nu(proj, &(x - center)) <= *radius,
            Self::Union(parts) => parts.iter().any(|p| p.contains(x)),
            Self::Intersection(parts) => !parts.is_empty() && parts.iter().all(|p| p.contains(x)),
            Self::ComplementWithin { inner, container } => container.contains(x) && !inner.contains(x),
        }
    }

    /// True only if `B(c, r)` is contained in the set (conservative).
    pub fn contains_ball(&self, c: &Vector, r: f64) -> bool {
        match self {
            Self::Empty { .. } => false,
            Self::Ball { center, radius } => (c - center).norm() + r <= *radius,
            Self::Box(b) => box_contains_ball(b, c, r),
            Self::HalfSpace { normal, offset, clip } => {
                box_contains_ball(clip, c, r) && normal.dot(c) + r <= *offset
            }
            Self::Polyball { center, proj, radius } => polyball_nu(proj, &(c - center)) + r <= *radius,
            Self::Union(parts) => parts.iter().any(|p| p.contains_ball(c, r)),
            Self::Intersection(parts) => !parts.is_empty() && parts.iter().all(|p| p.contains_ball(c, r)),
            Self::ComplementWithin { inner, container } => {
                box_contains_ball(container, c, r) && !inner.may_intersect_ball(c, r)
            }
        }
    }

    /// False only if `B(c, r)` misses the set (conservative).
    pub fn may_intersect_ball(&self, c: &Vector, r: f64) -> bool {
        match self {
            Self::Empty { .. } => false,
            Self::Ball { center, radius } => (c - center).norm() <= radius + r,
            Self::Union(parts) => parts.iter().any(|p| p.may_intersect_ball(c, r)),
            Self::Intersection(parts) => {
                !parts.is_empty() && parts.iter().all(|p| p.may_intersect_ball(c, r))
            }
            _ => self.bbox().distance_from(c) <= r,
        }
    }

    /// `{t in [lo, hi] : p + t d in A}` for a unit direction `d`, as exact intervals.
    pub fn line_intervals(&self, p: &Vector, d: &Vector, lo: f64, hi: f64) -> Intervals {
        if lo > hi {
            return Vec::new();
        }
        match self {
            Self::Empty { .. } => Vec::new(),
            Self::Ball { center, radius } => {
                let a = p - center;
                quadratic_interval(d.norm_squared(), 2.0 * a.dot(d), a.norm_squared() - radius * radius, lo, hi)
            }
            Self::Box(b) => box_interval(b, p, d, lo, hi),
            Self::HalfSpace { normal, offset, clip } => {
                let (l, h) = match box_interval(clip, p, d, lo, hi).first() {
                    Some(&iv) => iv,
                    None => return Vec::new(),
                };
                linear_interval(normal.dot(d), normal.dot(p) - offset, l, h)
            }
            Self::Polyball { center, proj, radius } => {
                let a = p - center;
                let (pa, pd) = (proj * &a, proj * d);
                let (qa, qd) = (&a - &pa, d - &pd);
                let r2 = radius * radius;
                let first = quadratic_interval(pd.norm_squared(), 2.0 * pa.dot(&pd), pa.norm_squared() - r2, lo, hi);
                match first.first() {
                    Some(&(l, h)) => {
                        quadratic_interval(qd.norm_squared(), 2.0 * qa.dot(&qd), qa.norm_squared() - r2, l, h)
                    }
                    None => Vec::new(),
                }
            }
            Self::Union(parts) => {
                let mut all: Intervals = parts.iter().flat_map(|s| s.line_intervals(p, d, lo, hi)).collect();
                merge(&mut all)
            }
            Self::Intersection(parts) => {
                let mut it = parts.iter();
                let mut acc = match it.next() {
                    Some(s) => s.line_intervals(p, d, lo, hi),
                    None => return Vec::new(),
                };
                for s in it {
                    if acc.is_empty() {
                        break;
                    }
                    acc = intersect(&acc, &s.line_intervals(p, d, lo, hi));
                }
                acc
            }
            Self::ComplementWithin { inner, container } => {
                let outer = box_interval(container, p, d, lo, hi);
                match outer.first() {
                    Some(&(l, h)) => subtract(l, h, &inner.line_intervals(p, d, l, h)),
                    None => Vec::new(),
                }
            }
        }
    }

    /// Uniform point of the set by rejection from its bounding box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: u64) -> Result<Vector> {
        let b = self.bbox();
        for _ in 0..max_attempts {
            let x = b.sample(rng);
            if self.contains(&x) {
                return Ok(x);
            }
        }
        Err(GmtError::EmptySet { attempts: max_attempts })
    }
}

fn check_same_dim(parts: &[SetOracle]) -> Result<()> {
    if let Some(first) = parts.first() {
        for p in parts {
            if p.n() != first.n() {
                return Err(GmtError::DimensionMismatch {
                    what: "set combination",
                    expected: first.n(),
                    found: p.n(),
                });
            }
        }
        Ok(())
    } else {
        Err(GmtError::InvalidArgument("combination of zero sets".into()))
    }
}

/// `max(|P z|, |(I - P) z|)`.
pub fn polyball_nu(proj: &Matrix, z: &Vector) -> f64 {
    let pz = proj * z;
    let a = pz.norm_squared();
    let b = (z - &pz).norm_squared();
    a.max(b).sqrt()
}

fn box_contains_ball(b: &AxisBox, c: &Vector, r: f64) -> bool {
    (0..b.dim()).all(|k| b.lo()[k] + r <= c[k] && c[k] + r <= b.hi()[k])
}

fn box_interval(b: &AxisBox, p: &Vector, d: &Vector, lo: f64, hi: f64) -> Intervals {
    let (mut l, mut h) = (lo, hi);
    for k in 0..b.dim() {
        if d[k] == 0.0 {
            if p[k] < b.lo()[k] || p[k] > b.hi()[k] {
                return Vec::new();
            }
        } else {
            let t1 = (b.lo()[k] - p[k]) / d[k];
            let t2 = (b.hi()[k] - p[k]) / d[k];
            l = l.max(t1.min(t2));
            h = h.min(t1.max(t2));
        }
        if l > h {
            return Vec::new();
        }
    }
    vec![(l, h)]
}

/// `{t in [lo, hi] : a t + b <= 0}`.
fn linear_interval(a: f64, b: f64, lo: f64, hi: f64) -> Intervals {
    let (l, h) = if a > 0.0 {
        (lo, hi.min(-b / a))
    } else if a < 0.0 {
        (lo.max(-b / a), hi)
    } else if b <= 0.0 {
        (lo, hi)
    } else {
        return Vec::new();
    };
    if l <= h {
        vec![(l, h)]
    } else {
        Vec::new()
    }
}

/// `{t in [lo, hi] : a t^2 + b t + c <= 0}` for `a >= 0`.
fn quadratic_interval(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> Intervals {
    if a == 0.0 {
        return linear_interval(b, c, lo, hi);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (t1, t2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let (l, h) = (t1.min(t2).max(lo), t1.max(t2).min(hi));
    if l <= h {
        vec![(l, h)]
    } else {
        Vec::new()
    }
}

fn merge(all: &mut Intervals) -> Intervals {
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Intervals = Vec::with_capacity(all.len());
    for &(l, h) in all.iter() {
        match out.last_mut() {
            Some(last) if l <= last.1 => last.1 = last.1.max(h),
            _ => out.push((l, h)),
        }
    }
    out
}

fn intersect(a: &Intervals, b: &Intervals) -> Intervals {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let l = a[i].0.max(b[j].0);
        let h = a[i].1.min(b[j].1);
        if l <= h {
            out.push((l, h));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn subtract(lo: f64, hi: f64, holes: &Intervals) -> Intervals {
    let mut out = Vec::new();
    let mut cur = lo;
    for &(l, h) in holes {
        if l > cur {
            out.push((cur, l.min(hi)));
        }
        cur = cur.max(h);
        if cur >= hi {
            break;
        }
    }
    if cur < hi {
        out.push((cur, hi));
    }
    out
}

pub fn total_length(iv: &Intervals) -> f64 {
    iv.iter().map(|(l, h)| h - l).sum()
}
