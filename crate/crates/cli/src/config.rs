//! TOML experiment configuration.

use std::path::Path;

use anyhow::{bail, Context};
use gmtlab_core::grassmann::Plane;
use gmtlab_core::planefield::FRAME_BALL_GATE;
use gmtlab_core::{AxisBox, FrameField, PlaneField, RngKey, SetOracle, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Frames,
    Jacobians,
    Coarea,
    Sandwich,
    Stripe,
    Bowtie,
    Density,
    Fubini,
    Polyball,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Frames => "frames",
            Self::Jacobians => "jacobians",
            Self::Coarea => "coarea",
            Self::Sandwich => "sandwich",
            Self::Stripe => "stripe",
            Self::Bowtie => "bowtie",
            Self::Density => "density",
            Self::Fubini => "fubini",
            Self::Polyball => "polyball",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Constant plane spanned by coordinate axes, or the line at `angle` when `n = 2`.
    Constant {
        n: usize,
        #[serde(default)]
        axes: Option<Vec<usize>>,
        #[serde(default)]
        angle: Option<f64>,
        domain: AxisBox,
    },
    #[serde(rename = "rotation_2d")]
    Rotation2d { kappa: f64, a: [f64; 2], domain: AxisBox },
    #[serde(rename = "tilt_3d")]
    Tilt3d { kappa: f64, domain: AxisBox },
}

impl FieldSpec {
    pub fn build(&self) -> anyhow::Result<PlaneField> {
        Ok(match self {
            Self::Constant { n, axes, angle, domain } => {
                let plane = match (angle, axes) {
                    (Some(theta), None) if *n == 2 => Plane::line_2d(*theta),
                    (None, Some(axes)) => Plane::coordinate(*n, axes)?,
                    (None, None) => Plane::coordinate(*n, &[0])?,
                    _ => bail!("constant field takes either `axes` or `angle` (n = 2 only)"),
                };
                PlaneField::constant(plane, domain.clone())?
            }
            Self::Rotation2d { kappa, a, domain } => PlaneField::rotation_2d(*kappa, *a, domain.clone())?,
            Self::Tilt3d { kappa, domain } => PlaneField::tilt_3d(*kappa, domain.clone())?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub x0: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Empty { n: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    HalfSpace { normal: Vec<f64>, offset: f64, clip: AxisBox },
    /// Box whose extent along `axis` is `[lo[axis], lo[axis] + width]`.
    Slab { lo: Vec<f64>, hi: Vec<f64>, axis: usize, width: f64 },
    RandomBallUnion { count: usize, r_min: f64, r_max: f64, container: AxisBox },
    CantorSlab { depth: u32, n: usize },
}

impl SetSpec {
    /// Random sets draw from a stream of `key` reserved for set construction.
    pub fn build(&self, key: RngKey) -> anyhow::Result<SetOracle> {
        Ok(match self {
            Self::Empty { n } => SetOracle::empty(*n),
            Self::Box { lo, hi } => SetOracle::boxed(lo.clone(), hi.clone())?,
            Self::Ball { center, radius } => SetOracle::ball(Vector::from_vec(center.clone()), *radius)?,
            Self::HalfSpace { normal, offset, clip } => {
                SetOracle::half_space(Vector::from_vec(normal.clone()), *offset, clip.clone())?
            }
            Self::Slab { lo, hi, axis, width } => slab(lo, hi, *axis, *width)?,
            Self::RandomBallUnion {
                count,
                r_min,
                r_max,
                container,
            } => SetOracle::random_ball_union(*count, *r_min, *r_max, container, key.named("set"))?,
            Self::CantorSlab { depth, n } => SetOracle::cantor_slab(*depth, *n)?,
        })
    }
}

pub fn slab(lo: &[f64], hi: &[f64], axis: usize, width: f64) -> anyhow::Result<SetOracle> {
    if axis >= lo.len() {
        bail!("slab axis {axis} out of range");
    }
    let mut top = hi.to_vec();
    top[axis] = lo[axis] + width;
    Ok(SetOracle::boxed(lo.to_vec(), top)?)
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.01
}
fn default_max_distance() -> f64 {
    0.45
}
fn default_dims() -> Vec<[usize; 2]> {
    vec![[2, 1], [3, 1], [3, 2], [4, 2]]
}
fn default_r_grid() -> Vec<f64> {
    vec![0.1, 0.05, 0.02, 0.01]
}
fn default_r_floor() -> f64 {
    1e-4
}
fn default_margin() -> f64 {
    gmtlab_core::density::DENSITY_MARGIN
}
fn default_max_fraction() -> f64 {
    0.05
}
fn default_tau_max() -> f64 {
    0.9
}
fn default_patch_radius() -> f64 {
    0.5
}
fn default_bowtie_dims() -> [usize; 2] {
    [3, 2]
}
fn default_gate() -> f64 {
    gmtlab_core::density::LAMBDA_R_GATE
}
fn default_t_gate() -> f64 {
    gmtlab_core::fibration::SMALL_DIAMETER_GATE
}
fn default_c() -> f64 {
    gmtlab_core::density::C_LOWER_BOUND
}
fn default_lambda_pairs() -> usize {
    1000
}
fn default_slope_tol() -> f64 {
    0.1
}

/// Numeric parameters; each experiment reads the ones it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Monte Carlo samples per estimate; `--samples` overrides it.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Sampled items: planes, points, `u`, patches or density points.
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_max_distance")]
    pub max_distance: f64,
    #[serde(default = "default_dims")]
    pub dims: Vec<[usize; 2]>,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_r_floor")]
    pub r_floor: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_max_fraction")]
    pub max_fraction: f64,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_patch_radius")]
    pub patch_radius: f64,
    #[serde(default = "default_bowtie_dims")]
    pub patch_dims: [usize; 2],
    /// Polyball radius; defaults to `gate / Lambda_eff` capped by the frame ball.
    #[serde(default)]
    pub r: Option<f64>,
    /// Polyball center; defaults to the frame anchor.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Stripe base point `u`; defaults to the polyball center.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    /// Stripe radii `c`; defaults to `eps r / 2`.
    #[serde(default)]
    pub stripe_c: Vec<f64>,
    /// Upper limit on `Lambda * r` for the polyball statements.
    #[serde(default = "default_gate")]
    pub lambda_r_gate: f64,
    /// Upper limit on `Lambda * |t|` for sampled fiber points.
    #[serde(default = "default_t_gate")]
    pub lambda_t_gate: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub widths: Vec<f64>,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    /// Random pairs for the empirical Lipschitz constants; 0 keeps the declared one.
    #[serde(default = "default_lambda_pairs")]
    pub lambda_pairs: usize,
}

impl Default for Params {
    fn default() -> Self {
        toml::from_str("").expect("all parameters have defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub frame: Option<FrameSpec>,
    #[serde(default)]
    pub set: Option<SetSpec>,
    #[serde(default)]
    pub params: Params,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Config = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load-time gates.
    pub fn validate(&self) -> anyhow::Result<()> {
        if let (Some(field), Some(frame)) = (&self.field, &self.frame) {
            let f = field.build()?;
            let reach = f.lambda_decl() * frame.radius;
            if reach >= FRAME_BALL_GATE {
                bail!(
                    "frame gate violated: Lambda * radius = {reach} must be below 1/4 so that \
                     d(W(x), W_0(x0)) < 1/4 on the frame ball"
                );
            }
        }
        let p = &self.params;
        if !(0.0 < p.epsilon && p.epsilon < 1.0 / 3.0) {
            bail!("epsilon = {} must lie in (0, 1/3)", p.epsilon);
        }
        if p.r_grid.windows(2).any(|w| w[1] >= w[0]) {
            bail!("r_grid must be strictly decreasing");
        }
        if !(0.0..1.0).contains(&p.tau_max) {
            bail!("tau_max = {} must lie in [0, 1)", p.tau_max);
        }
        Ok(())
    }

    pub fn field(&self) -> anyhow::Result<PlaneField> {
        self.field.as_ref().context("this experiment needs a [field] section")?.build()
    }

    /// Frame field on the configured ball, with empirical Lipschitz estimates.
    pub fn frame_field(&self, key: RngKey) -> anyhow::Result<FrameField> {
        let field = self.field()?;
        let spec = self.frame.as_ref().context("this experiment needs a [frame] section")?;
        let ff = FrameField::new(field, Vector::from_vec(spec.x0.clone()), spec.radius)?;
        Ok(if self.params.lambda_pairs > 0 {
            ff.with_lambda_estimates(self.params.lambda_pairs, key.named("lambda"))
        } else {
            ff
        })
    }

    pub fn set(&self, key: RngKey) -> anyhow::Result<SetOracle> {
        self.set.as_ref().context("this experiment needs a [set] section")?.build(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROTATION: &str = r#"
[field]
kind = "rotation_2d"
kappa = 0.5
a = [1.0, 0.0]
domain = { lo = [0.0, 0.0], hi = [1.0, 1.0] }

[frame]
x0 = [0.5, 0.5]
radius = 0.2

[set]
kind = "box"
lo = [0.4, 0.4]
hi = [0.6, 0.6]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = Config::parse(ROTATION).unwrap();
        assert_eq!(c.params.epsilon, 0.1);
        assert_eq!(c.params.r_grid, vec![0.1, 0.05, 0.02, 0.01]);
        assert_eq!(c.field().unwrap().lambda_decl(), 0.5);
        assert!(c.set(RngKey::new(0)).is_ok());
    }

    #[test]
    fn rejects_wide_frame_ball() {
        let text = ROTATION.replace("radius = 0.2", "radius = 0.6");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("d(W(x), W_0(x0)) < 1/4"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(Config::parse("[params]\nepsilon_typo = 0.1\n").is_err());
    }

    #[test]
    fn slab_replaces_extent() {
        let s = slab(&[0.0, 0.5], &[1.0, 1.0], 1, 0.01).unwrap();
        assert_eq!(s.bbox().hi(), &[1.0, 0.51]);
    }
}
