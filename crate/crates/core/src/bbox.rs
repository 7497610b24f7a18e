use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GmtError, Result};
use crate::Vector;

/// Closed axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(GmtError::DimensionMismatch {
                what: "box corners",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(GmtError::InvalidArgument("box of dimension 0".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(GmtError::InvalidArgument(format!(
                    "box side [{a}, {b}] is not a finite interval"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Cube of half-width `half` around `center`.
    pub fn cube(center: &[f64], half: f64) -> Self {
        Self {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn unit(n: usize) -> Self {
        Self {
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn center(&self) -> Vector {
        Vector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)))
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Largest distance from `p` to a point of the box.
    pub fn max_distance_from(&self, p: &Vector) -> f64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| {
                let d = (v - a).abs().max((b - v).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Distance from `p` to the box (0 inside).
    pub fn distance_from(&self, p: &Vector) -> f64 {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| {
                let d = (a - v).max(0.0).max(v - b);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest distance between a point of `self` and a point of `other`.
    pub fn max_distance_to(&self, other: &AxisBox) -> f64 {
        (0..self.dim())
            .map(|k| {
                let d = (self.hi[k] - other.lo[k]).abs().max((other.hi[k] - self.lo[k]).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    /// Intersection; sides may collapse to a point but never invert.
    pub fn meet(&self, other: &AxisBox) -> AxisBox {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .zip(&lo)
            .map(|((a, b), l)| a.min(*b).max(*l))
            .collect();
        AxisBox { lo, hi }
    }

    /// Box shrunk by `margin` on every side (collapsing to the center when too thin).
    pub fn shrink(&self, margin: f64) -> AxisBox {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for k in 0..self.dim() {
            let c = 0.5 * (lo[k] + hi[k]);
            lo[k] = (lo[k] + margin).min(c);
            hi[k] = (hi[k] - margin).max(c);
        }
        AxisBox { lo, hi }
    }

    /// Maps a point of `[0,1)^n` affinely onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vector {
        Vector::from_iterator(
            self.dim(),
            unit.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(s, (a, b))| a + s * (b - a)),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(a, b)| a + rng.random::<f64>() * (b - a)),
        )
    }
}
