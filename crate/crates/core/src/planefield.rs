//! Lipschitz plane fields, adapted frame fields and the level-set maps `g_u`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::bbox::AxisBox;
use crate::error::{GmtError, Result};
use crate::grassmann::{self, gaussian_vector, Plane};
use crate::linalg::singular_values;
use crate::rng::RngKey;
use crate::{Matrix, Vector};

/// `d(W_0(x), W_0(x0))` must stay below this on the frame ball.
pub const FRAME_BALL_GATE: f64 = 0.25;
/// Richardson disagreement above which a finite-difference derivative is rejected.
pub const FD_UNSTABLE: f64 = 1e-4;
/// Default FD step as a fraction of the frame radius.
pub const FD_STEP_FRACTION: f64 = 1e-5;
/// Largest admissible FD step for `g_jacobian`, as a fraction of the radius.
pub const MAX_STEP_FRACTION: f64 = 1e-3;

pub type FieldFn = Arc<dyn Fn(&Vector) -> Plane + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    Constant(Plane),
    /// Lines at angle `kappa <a, x>` in `R^2`.
    Rotation2d { kappa: f64, a: [f64; 2] },
    /// `span{(cos phi, 0, -sin phi)}` with `phi = kappa x_3`.
    Tilt3d { kappa: f64 },
    Custom(FieldFn),
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(p) => f.debug_tuple("Constant").field(p.proj()).finish(),
            Self::Rotation2d { kappa, a } => f
                .debug_struct("Rotation2d")
                .field("kappa", kappa)
                .field("a", a)
                .finish(),
            Self::Tilt3d { kappa } => f.debug_struct("Tilt3d").field("kappa", kappa).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `x -> W_0(x)` with a declared Lipschitz constant on a domain box.
#[derive(Debug, Clone)]
pub struct PlaneField {
    n: usize,
    m: usize,
    kind: FieldKind,
    complemented: bool,
    lambda_decl: f64,
    domain: AxisBox,
}

impl PlaneField {
    pub fn constant(plane: Plane, domain: AxisBox) -> Result<Self> {
        check_domain(plane.n(), &domain)?;
        Ok(Self {
            n: plane.n(),
            m: plane.m(),
            kind: FieldKind::Constant(plane),
            complemented: false,
            lambda_decl: 0.0,
            domain,
        })
    }

    pub fn rotation_2d(kappa: f64, a: [f64; 2], domain: AxisBox) -> Result<Self> {
        check_domain(2, &domain)?;
        Ok(Self {
            n: 2,
            m: 1,
            kind: FieldKind::Rotation2d { kappa, a },
            complemented: false,
            lambda_decl: kappa.abs() * a[0].hypot(a[1]),
            domain,
        })
    }

    pub fn tilt_3d(kappa: f64, domain: AxisBox) -> Result<Self> {
        check_domain(3, &domain)?;
        Ok(Self {
            n: 3,
            m: 1,
            kind: FieldKind::Tilt3d { kappa },
            complemented: false,
            lambda_decl: kappa.abs(),
            domain,
        })
    }

    /// Field given by a closure; `lambda_decl` is trusted as stated.
    pub fn custom(n: usize, m: usize, lambda_decl: f64, domain: AxisBox, f: FieldFn) -> Result<Self> {
        check_domain(n, &domain)?;
        if m == 0 || m >= n {
            return Err(GmtError::InvalidArgument(format!("plane dimension {m} not in 1..{n}")));
        }
        Ok(Self {
            n,
            m,
            kind: FieldKind::Custom(f),
            complemented: false,
            lambda_decl,
            domain,
        })
    }

    /// `x -> W_0(x)^perp`; same Lipschitz constant since complementation is an isometry.
    pub fn complement(&self) -> Self {
        Self {
            m: self.n - self.m,
            complemented: !self.complemented,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lambda_decl(&self) -> f64 {
        self.lambda_decl
    }

    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn evaluate(&self, x: &Vector) -> Plane {
        let p = match &self.kind {
            FieldKind::Constant(p) => p.clone(),
            FieldKind::Rotation2d { kappa, a } => Plane::line_2d(kappa * (a[0] * x[0] + a[1] * x[1])),
            FieldKind::Tilt3d { kappa } => {
                let (s, c) = (kappa * x[2]).sin_cos();
                let w = Vector::from_vec(vec![c, 0.0, -s]);
                Plane::from_projection(&w * w.transpose()).expect("rank-one projection")
            }
            FieldKind::Custom(f) => f(x),
        };
        if self.complemented {
            p.complement()
        } else {
            p
        }
    }

    /// Default frame radius: `0.24 / Lambda`, capped by the distance from `x0` to the
    /// domain boundary.
    pub fn default_radius(&self, x0: &Vector) -> f64 {
        let margin = (0..self.n)
            .map(|k| (x0[k] - self.domain.lo()[k]).min(self.domain.hi()[k] - x0[k]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        if self.lambda_decl > 0.0 {
            margin.min(0.24 / self.lambda_decl)
        } else {
            margin
        }
    }
}

fn check_domain(n: usize, domain: &AxisBox) -> Result<()> {
    if n < 2 {
        return Err(GmtError::InvalidArgument("ambient dimension must be at least 2".into()));
    }
    if domain.dim() != n {
        return Err(GmtError::DimensionMismatch {
            what: "field domain",
            expected: n,
            found: domain.dim(),
        });
    }
    Ok(())
}

/// Pair `(x, x')` with log-uniform separation in `[1e-4, 1] * scale`, both inside `accept`.
fn sample_pair<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    scale: f64,
    draw: &dyn Fn(&mut R) -> Vector,
    accept: &dyn Fn(&Vector) -> bool,
) -> (Vector, Vector) {
    let x = draw(rng);
    let dir = gaussian_vector(n, rng).normalize();
    let mut s = scale * 10f64.powf(-4.0 * rng.random::<f64>());
    loop {
        let y = &x + &dir * s;
        if accept(&y) || s < 1e-12 * scale {
            return (x, y);
        }
        s *= 0.5;
    }
}

/// Largest `d(W_0(x), W_0(x')) / |x - x'|` over `pairs` sampled pairs of the domain.
///
/// Pairs are drawn from one sequential stream, so the estimate for `k` pairs is the
/// maximum over a prefix of the pairs used for any larger count.
pub fn lipschitz_estimate(field: &PlaneField, pairs: usize, key: RngKey) -> f64 {
    let dom = field.domain();
    let mut rng = key.rng(0);
    let mut best = 0.0f64;
    for _ in 0..pairs {
        let (x, y) = sample_pair(&mut rng, field.n, dom.diameter(), &|r| dom.sample(r), &|p| {
            dom.contains(p)
        });
        let sep = (&x - &y).norm();
        if sep > 0.0 {
            let d = field.evaluate(&x).distance(&field.evaluate(&y)).expect("same field");
            best = best.max(d / sep);
        }
    }
    best
}

/// Orthonormal basis `(w_1..w_m, v_1..v_{n-m})` adapted to `W_0(x)`.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub w: Vec<Vector>,
    pub v: Vec<Vector>,
}

/// An adapted frame together with its partial derivatives.
///
/// Column `p` of `dw[i]` is `d w_i / d x_p`.
#[derive(Debug, Clone)]
pub struct FrameJet {
    pub frame: AdaptedFrame,
    pub dw: Vec<Matrix>,
    pub dv: Vec<Matrix>,
}

/// Gram–Schmidt frame field on the ball `B(x0, radius)`.
#[derive(Debug, Clone)]
pub struct FrameField {
    field: PlaneField,
    x0: Vector,
    radius: f64,
    w_base: Vec<Vector>,
    v_base: Vec<Vector>,
    h: f64,
    lambda_field_hat: f64,
    lambda_frame_hat: f64,
}

impl FrameField {
    pub fn new(field: PlaneField, x0: Vector, radius: f64) -> Result<Self> {
        if x0.len() != field.n() {
            return Err(GmtError::DimensionMismatch {
                what: "frame anchor",
                expected: field.n(),
                found: x0.len(),
            });
        }
        if !(radius > 0.0) {
            return Err(GmtError::InvalidArgument("frame radius must be positive".into()));
        }
        let reach = field.lambda_decl() * radius;
        if reach >= FRAME_BALL_GATE {
            return Err(GmtError::FrameBaseTooFar {
                distance: reach,
                limit: FRAME_BALL_GATE,
            });
        }
        let base = field.evaluate(&x0);
        let w_base = base.basis().into_vectors();
        let v_base = base.complement().basis().into_vectors();
        Ok(Self {
            field,
            x0,
            radius,
            w_base,
            v_base,
            h: FD_STEP_FRACTION * radius,
            lambda_field_hat: 0.0,
            lambda_frame_hat: 0.0,
        })
    }

    /// Replaces the declared constant by empirical estimates where they are larger.
    pub fn with_lambda_estimates(mut self, pairs: usize, key: RngKey) -> Self {
        let n = self.field.n();
        let mut rng = key.named("lambda").rng(0);
        let ball = AxisBox::cube(self.x0.as_slice(), self.radius);
        let draw = |r: &mut rand_chacha::ChaCha8Rng| loop {
            let p = ball.sample(r);
            if self.in_ball(&p) {
                return p;
            }
        };
        let (mut lf, mut lw) = (0.0f64, 0.0f64);
        for _ in 0..pairs {
            let (x, y) = sample_pair(&mut rng, n, self.radius, &draw, &|p| self.in_ball(p));
            let sep = (&x - &y).norm();
            if sep == 0.0 {
                continue;
            }
            let (px, py) = (self.field.evaluate(&x), self.field.evaluate(&y));
            lf = lf.max(px.distance(&py).expect("same field") / sep);
            let (fx, fy) = (self.frame_of(&px), self.frame_of(&py));
            for (a, b) in fx.w.iter().chain(&fx.v).zip(fy.w.iter().chain(&fy.v)) {
                lw = lw.max((a - b).norm() / sep);
            }
        }
        self.lambda_field_hat = lf;
        self.lambda_frame_hat = lw;
        self
    }

    pub fn field(&self) -> &PlaneField {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn m(&self) -> usize {
        self.field.m()
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn fd_step(&self) -> f64 {
        self.h
    }

    pub fn lambda_field_hat(&self) -> f64 {
        self.lambda_field_hat
    }

    pub fn lambda_frame_hat(&self) -> f64 {
        self.lambda_frame_hat
    }

    /// Lipschitz constant used in bound formulas: the largest of the declared constant
    /// and the empirical field and frame estimates.
    pub fn lambda_eff(&self) -> f64 {
        self.field
            .lambda_decl()
            .max(self.lambda_field_hat)
            .max(self.lambda_frame_hat)
    }

    pub fn in_ball(&self, x: &Vector) -> bool {
        (x - &self.x0).norm() <= self.radius * (1.0 + 1e-12)
    }

    fn check(&self, x: &Vector) -> Result<()> {
        let distance = (x - &self.x0).norm();
        if distance > self.radius * (1.0 + 1e-12) {
            return Err(GmtError::OutOfNeighborhood {
                distance,
                radius: self.radius,
            });
        }
        Ok(())
    }

    fn frame_of(&self, plane: &Plane) -> AdaptedFrame {
        let w = grassmann::local_frame_unchecked(&self.w_base, plane.proj())
            .expect("pivots stay above 1/2 on the frame ball");
        let q = Matrix::identity(self.n(), self.n()) - plane.proj();
        let v = grassmann::local_frame_unchecked(&self.v_base, &q)
            .expect("pivots stay above 1/2 on the frame ball");
        AdaptedFrame { w, v }
    }

    fn frame_unchecked(&self, x: &Vector) -> AdaptedFrame {
        self.frame_of(&self.field.evaluate(x))
    }

    /// `(w(x), v(x))`.
    pub fn frame_at(&self, x: &Vector) -> Result<AdaptedFrame> {
        self.check(x)?;
        Ok(self.frame_unchecked(x))
    }

    /// Frame and derivatives by central differences at steps `h` and `h/2`.
    pub fn jet(&self, x: &Vector) -> Result<FrameJet> {
        self.check(x)?;
        let n = self.n();
        let frame = self.frame_unchecked(x);
        let mut dw = vec![Matrix::zeros(n, n); frame.w.len()];
        let mut dv = vec![Matrix::zeros(n, n); frame.v.len()];
        let h = self.h;
        let mut worst = 0.0f64;
        for p in 0..n {
            let eval = |s: f64| {
                let mut y = x.clone();
                y[p] += s;
                self.frame_unchecked(&y)
            };
            let (a1, b1, a2, b2) = (eval(h), eval(-h), eval(0.5 * h), eval(-0.5 * h));
            let mut fill = |out: &mut [Matrix], f1: &[Vector], g1: &[Vector], f2: &[Vector], g2: &[Vector]| {
                for i in 0..out.len() {
                    let d1 = (&f1[i] - &g1[i]) / (2.0 * h);
                    let d2 = (&f2[i] - &g2[i]) / h;
                    worst = worst.max((&d1 - &d2).amax());
                    out[i].set_column(p, &((&d2 * 4.0 - &d1) / 3.0));
                }
            };
            fill(&mut dw, &a1.w, &b1.w, &a2.w, &b2.w);
            fill(&mut dv, &a1.v, &b1.v, &a2.v, &b2.v);
        }
        if worst > FD_UNSTABLE {
            return Err(GmtError::FdUnstable { disagreement: worst });
        }
        Ok(FrameJet { frame, dw, dv })
    }
}

/// `pi_{xi(x), u}(p) = (<v_i(x), p - u>)_i`.
pub fn pi_u(frame: &AdaptedFrame, u: &Vector, p: &Vector) -> Vector {
    let d = p - u;
    Vector::from_iterator(frame.v.len(), frame.v.iter().map(|v| v.dot(&d)))
}

/// `g_u(x) = (<v_i(x), x - u>)_i`.
pub fn g_eval(ff: &FrameField, u: &Vector, x: &Vector) -> Result<Vector> {
    let f = ff.frame_at(x)?;
    Ok(pi_u(&f, u, x))
}

/// `Dg_u(x)` from a frame jet: row `i` is `Dv_i(x)^T (x - u) + v_i(x)`.
pub fn g_differential(jet: &FrameJet, u: &Vector, x: &Vector) -> Matrix {
    let d = x - u;
    let k = jet.frame.v.len();
    let n = x.len();
    let mut out = Matrix::zeros(k, n);
    for i in 0..k {
        let row = jet.dv[i].tr_mul(&d) + &jet.frame.v[i];
        out.set_row(i, &row.transpose());
    }
    out
}

/// Jacobian `|wedge_{n-m} Dg_u(x)|` of a differential.
pub fn jacobian_of(dg: &Matrix) -> f64 {
    singular_values(dg).iter().product()
}

/// `Jg_u(x)` by central differences of `g_u` with step `h`.
pub fn g_jacobian(ff: &FrameField, u: &Vector, x: &Vector, h: f64) -> Result<f64> {
    let limit = MAX_STEP_FRACTION * ff.radius();
    if h > limit {
        return Err(GmtError::StepTooLarge { step: h, limit });
    }
    ff.check(x)?;
    let n = ff.n();
    let k = n - ff.m();
    let mut dg = Matrix::zeros(k, n);
    for p in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[p] += h;
        xm[p] -= h;
        let gp = pi_u(&ff.frame_unchecked(&xp), u, &xp);
        let gm = pi_u(&ff.frame_unchecked(&xm), u, &xm);
        dg.set_column(p, &((gp - gm) / (2.0 * h)));
    }
    Ok(jacobian_of(&dg))
}

/// `eps(Lambda, rho) = (n-m)^2 Lambda rho (1 + Lambda rho)^{n-m-1}`: with
/// `|x - u| <= rho`, `Jg_u(x) >= 1 - eps`.
pub fn g_jacobian_epsilon(n: usize, m: usize, lambda: f64, rho: f64) -> f64 {
    let k = (n - m) as f64;
    let lr = lambda * rho;
    k * k * lr * (1.0 + lr).powi((n - m) as i32 - 1)
}

/// Affine plane `base + span(directions)`.
#[derive(Debug, Clone, Serialize)]
pub struct AffinePlane {
    pub base: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl AffinePlane {
    pub fn point(&self, s: &[f64]) -> Vector {
        let mut p = Vector::from_column_slice(&self.base);
        for (c, d) in s.iter().zip(&self.directions) {
            p += Vector::from_column_slice(d) * *c;
        }
        p
    }

    pub fn plane(&self) -> Plane {
        let vs: Vec<Vector> = self.directions.iter().map(|d| Vector::from_column_slice(d)).collect();
        Plane::from_span(&vs).expect("frame directions are orthonormal")
    }
}

/// Solution set of `pi_{xi(x), u}(.) = y`: `u + sum y_i v_i(x) + span{w_i(x)}`.
pub fn pi_u_fiber(ff: &FrameField, u: &Vector, x: &Vector, y: &Vector) -> Result<AffinePlane> {
    let f = ff.frame_at(x)?;
    if y.len() != f.v.len() {
        return Err(GmtError::DimensionMismatch {
            what: "fiber height",
            expected: f.v.len(),
            found: y.len(),
        });
    }
    let mut base = u.clone();
    for (c, v) in y.iter().zip(&f.v) {
        base += v * *c;
    }
    Ok(AffinePlane {
        base: base.iter().copied().collect(),
        directions: f.w.iter().map(|w| w.iter().copied().collect()).collect(),
    })
}
