//! Fixtures shared by the benchmarks.

use gmtlab_core::{AxisBox, FrameField, PlaneField, Vector};

/// Rotation field `kappa = 1`, `a = (0.6, 0.8)` on the ball of radius 0.2 at the origin.
pub fn rotation_frame_field() -> FrameField {
    let f = PlaneField::rotation_2d(1.0, [0.6, 0.8], AxisBox::cube(&[0.0, 0.0], 1.0)).expect("valid domain");
    FrameField::new(f, Vector::zeros(2), 0.2).expect("inside the frame gate")
}
