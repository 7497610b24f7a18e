//! Small dense helpers shared by the geometry modules.

use crate::error::{GmtError, Result};
use crate::Matrix;
#[cfg(test)]
use crate::Vector;

/// Relative convergence tolerance handed to the SVD iteration.
const SVD_REL_EPS: f64 = 1e-12;

/// Condition number above which an FD tangent basis is rejected.
pub(crate) const MAX_TANGENT_CONDITION: f64 = 1e8;

/// Singular values in decreasing order.
pub(crate) fn singular_values(a: &Matrix) -> Vec<f64> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let svd = a
        .clone()
        .try_svd(false, false, SVD_REL_EPS * scale, 0)
        .expect("svd with unlimited iterations converges");
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub(crate) fn operator_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Area factor of a tangent map together with the coarea factor of a coordinate projection.
///
/// `tangent` holds the `k` tangent vectors as columns. The columns of `U` from its thin
/// SVD are an orthonormal basis of the tangent space; the coarea factor of the projection
/// onto the coordinates in `rows` is the product of the `target_dim` largest singular
/// values of the corresponding row block of `U`.
pub(crate) fn coarea_factor(tangent: &Matrix, rows: &[usize], target_dim: usize) -> Result<(f64, f64)> {
    let k = tangent.ncols();
    let scale = tangent.amax().max(f64::MIN_POSITIVE);
    let svd = tangent
        .clone()
        .try_svd(true, false, SVD_REL_EPS * scale, 0)
        .expect("svd with unlimited iterations converges");
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if !(smin > 0.0) || smax / smin > MAX_TANGENT_CONDITION {
        return Err(GmtError::TangentDegenerate {
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let area = s.iter().product::<f64>();
    let u = svd.u.expect("u requested");
    let mut block = Matrix::zeros(rows.len(), k);
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..k {
            block[(i, j)] = u[(r, j)];
        }
    }
    let sv = singular_values(&block);
    let j = sv.iter().take(target_dim).product::<f64>();
    Ok((area, j))
}
