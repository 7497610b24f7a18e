//! Planes of the Grassmannian `G(n,m)` stored as orthogonal projections.

use itertools::Itertools;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GmtError, Result};
use crate::linalg::{operator_norm, singular_values};
use crate::{Matrix, Vector};

/// Entrywise tolerance of the projection invariants.
const PLANE_TOL: f64 = 1e-10;
/// Smallest admissible singular value of a normalized spanning set.
const SPAN_TOL: f64 = 1e-8;
/// `local_frame` requires `d(W_ref, W)` strictly below this radius.
pub const FRAME_BASE_RADIUS: f64 = 0.5;

/// An `m`-plane through the origin of `R^n`, identified with `P_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    n: usize,
    m: usize,
    proj: Matrix,
}

impl Plane {
    /// Plane spanned by linearly independent vectors.
    pub fn from_span(vectors: &[Vector]) -> Result<Self> {
        let q = vectors.len();
        let n = vectors.first().map(|v| v.len()).unwrap_or(0);
        if q == 0 || n < 2 {
            return Err(GmtError::InvalidPlane("empty spanning set".into()));
        }
        let mut a = Matrix::zeros(n, q);
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(GmtError::DimensionMismatch {
                    what: "spanning vector",
                    expected: n,
                    found: v.len(),
                });
            }
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(GmtError::DegenerateSpan { sigma_min: 0.0 });
            }
            a.set_column(j, &(v / norm));
        }
        if q >= n {
            return Err(GmtError::InvalidPlane(format!(
                "{q} vectors cannot span a proper plane of R^{n}"
            )));
        }
        let svd = a.svd(true, false);
        let sigma_min = svd.singular_values.min();
        if sigma_min <= SPAN_TOL {
            return Err(GmtError::DegenerateSpan { sigma_min });
        }
        let u = svd.u.expect("u requested");
        let proj = &u * u.transpose();
        Ok(Self { n, m: q, proj })
    }

    /// Plane with the given projection matrix, after checking the projection invariants.
    pub fn from_projection(proj: Matrix) -> Result<Self> {
        let n = proj.nrows();
        if proj.ncols() != n || n < 2 {
            return Err(GmtError::InvalidPlane("projection must be square, n >= 2".into()));
        }
        let tr = proj.trace();
        let m = tr.round();
        if (tr - m).abs() > PLANE_TOL || m < 1.0 || m > (n - 1) as f64 {
            return Err(GmtError::InvalidPlane(format!("trace {tr} is not in 1..n-1")));
        }
        if (&proj * &proj - &proj).amax() > PLANE_TOL {
            return Err(GmtError::InvalidPlane("projection is not idempotent".into()));
        }
        if (proj.transpose() - &proj).amax() > PLANE_TOL {
            return Err(GmtError::InvalidPlane("projection is not symmetric".into()));
        }
        Ok(Self { n, m: m as usize, proj })
    }

    /// Line in `R^2` at angle `theta` from the first axis.
    pub fn line_2d(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            n: 2,
            m: 1,
            proj: Matrix::from_row_slice(2, 2, &[c * c, c * s, c * s, s * s]),
        }
    }

    /// Coordinate plane spanned by `e_k`, `k` in `axes` (0-based).
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        let vectors: Vec<Vector> = axes.iter().map(|&k| unit(n, k)).collect();
        Self::from_span(&vectors)
    }

    /// Uniformly distributed plane (span of `m` Gaussian vectors).
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Self {
        loop {
            let vs: Vec<Vector> = (0..m).map(|_| gaussian_vector(n, rng)).collect();
            if let Ok(p) = Self::from_span(&vs) {
                return p;
            }
        }
    }

    /// Random plane at distance exactly `dist < 1` from `self`.
    ///
    /// Built as the graph `{w + A w}` of a random map `A: W -> W^perp` rescaled so that
    /// `tan(largest principal angle) = |A|`, i.e. `d = |A| / sqrt(1 + |A|^2)`.
    pub fn random_at_distance<R: Rng + ?Sized>(&self, dist: f64, rng: &mut R) -> Self {
        assert!((0.0..1.0).contains(&dist), "distance must lie in [0, 1)");
        let w = self.basis();
        let v = self.complement().basis();
        let k = self.n - self.m;
        let a = Matrix::from_fn(k, self.m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = operator_norm(&a);
        let target = dist / (1.0 - dist * dist).sqrt();
        let a = if norm > 0.0 { a * (target / norm) } else { a };
        let vectors: Vec<Vector> = (0..self.m)
            .map(|j| {
                let mut x = w.vectors[j].clone();
                for i in 0..k {
                    x += &v.vectors[i] * a[(i, j)];
                }
                x
            })
            .collect();
        Self::from_span(&vectors).expect("graph of a linear map is a plane")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn proj(&self) -> &Matrix {
        &self.proj
    }

    pub fn project(&self, x: &Vector) -> Vector {
        &self.proj * x
    }

    /// `W^perp`, with projection `I - P_W`.
    pub fn complement(&self) -> Self {
        Self {
            n: self.n,
            m: self.n - self.m,
            proj: Matrix::identity(self.n, self.n) - &self.proj,
        }
    }

    /// Operator-norm distance `|P_W1 - P_W2|`.
    pub fn distance(&self, other: &Plane) -> Result<f64> {
        if self.n != other.n || self.m != other.m {
            return Err(GmtError::DimensionMismatch {
                what: "grassmann_distance",
                expected: self.n * 100 + self.m,
                found: other.n * 100 + other.m,
            });
        }
        Ok(operator_norm(&(&self.proj - &other.proj)))
    }

    /// A deterministic orthonormal basis: eigenvectors of `P_W` with eigenvalue 1, each
    /// signed so its largest-magnitude entry is positive.
    pub fn basis(&self) -> Frame {
        let eig = self.proj.clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..self.n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let vectors = idx[..self.m]
            .iter()
            .map(|&k| {
                let mut v: Vector = eig.eigenvectors.column(k).into_owned();
                let big = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                if big < 0.0 {
                    v = -v;
                }
                v
            })
            .collect();
        Frame {
            n: self.n,
            vectors: gram_schmidt(vectors).expect("eigenvectors of a projection are independent"),
        }
    }

    /// Largest entrywise difference of the two projections.
    pub fn residual(&self, other: &Plane) -> f64 {
        (&self.proj - &other.proj).amax()
    }
}

/// An ordered orthonormal family in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    n: usize,
    vectors: Vec<Vector>,
}

impl Frame {
    pub fn new(vectors: Vec<Vector>) -> Result<Self> {
        let n = vectors.first().map(|v| v.len()).unwrap_or(0);
        if vectors.is_empty() {
            return Err(GmtError::InvalidFrame("empty frame".into()));
        }
        for (i, a) in vectors.iter().enumerate() {
            if a.len() != n {
                return Err(GmtError::DimensionMismatch {
                    what: "frame vector",
                    expected: n,
                    found: a.len(),
                });
            }
            for (j, b) in vectors.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (a.dot(b) - target).abs() > PLANE_TOL {
                    return Err(GmtError::InvalidFrame(format!(
                        "Gram entry ({i},{j}) = {}",
                        a.dot(b)
                    )));
                }
            }
        }
        Ok(Self { n, vectors })
    }

    /// Random orthonormal `q`-frame (Gram–Schmidt of Gaussian vectors).
    pub fn random<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Self {
        loop {
            let vs: Vec<Vector> = (0..q).map(|_| gaussian_vector(n, rng)).collect();
            if let Ok(vectors) = gram_schmidt(vs) {
                return Self { n, vectors };
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vector> {
        self.vectors
    }

    /// `n x q` matrix with the frame vectors as columns.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_columns(&self.vectors)
    }

    pub fn span(&self) -> Plane {
        let q = self.matrix();
        Plane {
            n: self.n,
            m: self.vectors.len(),
            proj: &q * q.transpose(),
        }
    }

    /// Largest entrywise deviation of the Gram matrix from the identity.
    pub fn gram_residual(&self) -> f64 {
        let q = self.matrix();
        (q.transpose() * &q - Matrix::identity(self.len(), self.len())).amax()
    }
}

/// Modified Gram–Schmidt, two passes, in input order.
fn gram_schmidt(vectors: Vec<Vector>) -> Result<Vec<Vector>> {
    let mut out: Vec<Vector> = Vec::with_capacity(vectors.len());
    for p in vectors {
        let mut u = p.clone();
        for _ in 0..2 {
            for e in &out {
                let c = u.dot(e);
                u.axpy(-c, e, 1.0);
            }
        }
        let norm = u.norm();
        if norm < SPAN_TOL {
            return Err(GmtError::DegenerateSpan { sigma_min: norm });
        }
        u /= norm;
        if u.dot(&p) < 0.0 {
            u = -u;
        }
        out.push(u);
    }
    Ok(out)
}

/// Gram–Schmidt frame of `proj` started from `P basis_ref`, without the distance check.
pub(crate) fn local_frame_unchecked(basis_ref: &[Vector], proj: &Matrix) -> Result<Vec<Vector>> {
    gram_schmidt(basis_ref.iter().map(|b| proj * b).collect())
}

/// Orthonormal frame of `w` obtained from `P_W(basis_ref)` by Gram–Schmidt.
///
/// The result depends only on `(basis_ref, w)` and is Lipschitz in `w` on the ball
/// `d(w_ref, w) < 1/2`, where `|P_W b| >= |b|/2` for every `b` in `w_ref`.
pub fn local_frame(w_ref: &Plane, basis_ref: &Frame, w: &Plane) -> Result<Frame> {
    if basis_ref.len() != w_ref.m() || basis_ref.n() != w_ref.n() {
        return Err(GmtError::DimensionMismatch {
            what: "reference basis",
            expected: w_ref.m(),
            found: basis_ref.len(),
        });
    }
    let distance = w_ref.distance(w)?;
    if distance >= FRAME_BASE_RADIUS {
        return Err(GmtError::FrameBaseTooFar {
            distance,
            limit: FRAME_BASE_RADIUS,
        });
    }
    Ok(Frame {
        n: w.n(),
        vectors: local_frame_unchecked(basis_ref.vectors(), w.proj())?,
    })
}

/// A reference plane with its chosen basis; the cell of an anchor net.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub plane: Plane,
    pub basis: Frame,
}

impl Anchor {
    pub fn new(plane: Plane) -> Self {
        let basis = plane.basis();
        Self { plane, basis }
    }
}

/// Evenly spaced lines `theta_k = k pi / count` in `R^2`.
pub fn line_anchors(count: usize) -> Vec<Anchor> {
    (0..count)
        .map(|k| Anchor::new(Plane::line_2d(k as f64 * std::f64::consts::PI / count as f64)))
        .collect()
}

/// Frame of `w` taken from the nearest anchor (lowest index on ties).
pub fn global_frame(w: &Plane, anchors: &[Anchor]) -> Result<Frame> {
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in anchors.iter().enumerate() {
        let d = a.plane.distance(w)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    match best {
        Some((i, d)) if d < FRAME_BASE_RADIUS => local_frame(&anchors[i].plane, &anchors[i].basis, w),
        Some((_, d)) => Err(GmtError::NetTooSparse { distance: d }),
        None => Err(GmtError::NetTooSparse { distance: f64::INFINITY }),
    }
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Largest `|det(<v_k, e_lambda(j)>)|` over increasing index lists `lambda` (0-based),
/// by enumeration of all `C(n, q)` minors. Ties keep the lexicographically first list.
pub fn binet_cauchy_best_minor(frame: &Frame) -> (Vec<usize>, f64) {
    let q = frame.len();
    let mut best: (Vec<usize>, f64) = (Vec::new(), -1.0);
    for lambda in (0..frame.n()).combinations(q) {
        let minor = Matrix::from_fn(q, q, |k, j| frame.vectors[k][lambda[j]]);
        let value = minor.determinant().abs();
        if value > best.1 {
            best = (lambda, value);
        }
    }
    best
}

pub fn unit(n: usize, k: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[k] = 1.0;
    e
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Smallest singular value of the matrix with columns `vectors`.
pub fn smallest_singular_value(vectors: &[Vector]) -> f64 {
    singular_values(&Matrix::from_columns(vectors)).last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn span_of_axis() {
        let p = Plane::from_span(&[v(&[1.0, 0.0])]).unwrap();
        assert!((p.proj() - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn span_of_diagonal_is_half_matrix() {
        let p = Plane::from_span(&[v(&[1.0, 1.0])]).unwrap();
        assert!(p.proj().iter().all(|x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn span_of_coordinate_plane() {
        let p = Plane::from_span(&[v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])]).unwrap();
        let d = Matrix::from_diagonal(&v(&[1.0, 1.0, 0.0]));
        assert!((p.proj() - d).amax() < 1e-15);
    }

    #[test]
    fn dependent_span_is_rejected() {
        let r = Plane::from_span(&[v(&[1.0, 2.0, 0.0]), v(&[2.0, 4.0, 0.0])]);
        assert!(matches!(r, Err(GmtError::DegenerateSpan { .. })));
    }

    #[test]
    fn distance_between_axes_is_one() {
        let a = Plane::coordinate(2, &[0]).unwrap();
        let b = Plane::coordinate(2, &[1]).unwrap();
        assert!((a.distance(&b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(a.distance(&a).unwrap(), 0.0);
    }

    #[test]
    fn distance_of_lines_is_abs_sine() {
        for theta in [0.1, 0.5, 1.0] {
            let d = Plane::line_2d(theta).distance(&Plane::line_2d(0.0)).unwrap();
            assert!((d - f64::sin(theta).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_rejects_mixed_dimensions() {
        let a = Plane::coordinate(3, &[0]).unwrap();
        let b = Plane::coordinate(3, &[0, 1]).unwrap();
        assert!(matches!(a.distance(&b), Err(GmtError::DimensionMismatch { .. })));
    }

    #[test]
    fn complement_of_axis() {
        let a = Plane::coordinate(2, &[0]).unwrap();
        let c = a.complement();
        assert_eq!(c.m(), 1);
        assert!((c.proj() - Plane::coordinate(2, &[1]).unwrap().proj()).amax() < 1e-15);
        assert!((a.proj() + c.proj() - Matrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn complement_is_an_isometric_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Plane::random(4, 2, &mut rng);
            let b = Plane::random(4, 2, &mut rng);
            let d = a.distance(&b).unwrap();
            let dc = a.complement().distance(&b.complement()).unwrap();
            assert!((d - dc).abs() < 1e-10);
            assert!((a.complement().complement().proj() - a.proj()).amax() < 1e-10);
        }
    }

    #[test]
    fn random_at_distance_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Plane::random(5, 2, &mut rng);
        for d in [0.0, 0.1, 0.3, 0.45, 0.9] {
            let x = w.random_at_distance(d, &mut rng);
            assert!((w.distance(&x).unwrap() - d).abs() < 1e-10);
        }
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = Plane::random(3, 1, &mut rng);
            let b = Plane::random(3, 1, &mut rng);
            let c = Plane::random(3, 1, &mut rng);
            let ab = a.distance(&b).unwrap();
            let bc = b.distance(&c).unwrap();
            let ac = a.distance(&c).unwrap();
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn from_projection_validates() {
        assert!(Plane::from_projection(Matrix::identity(3, 3)).is_err());
        let p = Plane::from_projection(Plane::line_2d(0.7).proj().clone()).unwrap();
        assert_eq!(p.m(), 1);
        assert!(Plane::from_projection(Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.0])).is_err());
    }

    #[test]
    fn local_frame_at_base_is_base() {
        let w = Plane::coordinate(2, &[0]).unwrap();
        let b = Frame::new(vec![v(&[1.0, 0.0])]).unwrap();
        let f = local_frame(&w, &b, &w).unwrap();
        assert!((&f.vectors()[0] - v(&[1.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn local_frame_of_tilted_line() {
        let w_ref = Plane::coordinate(2, &[0]).unwrap();
        let b = Frame::new(vec![v(&[1.0, 0.0])]).unwrap();
        let f = local_frame(&w_ref, &b, &Plane::line_2d(0.3)).unwrap();
        let expect = v(&[0.3f64.cos(), 0.3f64.sin()]);
        assert!((&f.vectors()[0] - expect).amax() < 1e-14);
        let far = local_frame(&w_ref, &b, &Plane::line_2d(0.6));
        assert!(matches!(far, Err(GmtError::FrameBaseTooFar { .. })));
    }

    #[test]
    fn local_frame_spans_nearby_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w_ref = Plane::random(4, 2, &mut rng);
        let basis = w_ref.basis();
        for _ in 0..100 {
            let d = 0.4 * rng.random::<f64>();
            let w = w_ref.random_at_distance(d, &mut rng);
            let f = local_frame(&w_ref, &basis, &w).unwrap();
            assert!(f.gram_residual() < 1e-12);
            assert!(f.span().residual(&w) <= 1e-9);
        }
    }

    #[test]
    fn global_frame_sweep_of_lines() {
        let anchors = line_anchors(4);
        for k in 0..400 {
            let theta = k as f64 * std::f64::consts::PI / 400.0;
            let w = Plane::line_2d(theta);
            let f = global_frame(&w, &anchors).unwrap();
            assert!(f.span().residual(&w) <= 1e-9);
        }
        let f = global_frame(&anchors[2].plane, &anchors).unwrap();
        assert!((&f.vectors()[0] - &anchors[2].basis.vectors()[0]).amax() < 1e-12);
    }

    #[test]
    fn global_frame_needs_a_dense_net() {
        let anchors = line_anchors(1);
        let w = Plane::line_2d(1.2);
        assert!(matches!(global_frame(&w, &anchors), Err(GmtError::NetTooSparse { .. })));
    }

    #[test]
    fn best_minor_examples() {
        let f = Frame::new(vec![v(&[1.0, 0.0])]).unwrap();
        assert_eq!(binet_cauchy_best_minor(&f), (vec![0], 1.0));
        let s = 0.5f64.sqrt();
        let f = Frame::new(vec![v(&[s, s])]).unwrap();
        let (lambda, value) = binet_cauchy_best_minor(&f);
        assert_eq!(lambda, vec![0]);
        assert!((value - s).abs() < 1e-15);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(2, 3), 0);
    }
}
