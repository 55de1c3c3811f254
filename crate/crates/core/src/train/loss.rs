//! One-step prediction loss: mean squared error over every phase-space
//! number (2N position + 2N velocity components), with position residuals
//! taken under the minimum image so a prediction just across the seam from
//! the truth is a small error, not a box-sized one.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::gn::tape::{Tape, Var};
use crate::models::features::positions_matrix;
use crate::sim::pbc::min_image_coord;
use crate::sim::ParticleSystem;

/// Targets shifted to the predicted point's side of the seam: subtracting the
/// result from `pred_q` yields the minimum-image residual. Both the tape and
/// plain losses route through this so their arithmetic is identical.
fn seam_adjusted_targets(pred_q: &Array2<f64>, target_q: &Array2<f64>, cell: f64) -> Array2<f64> {
    Array2::from_shape_fn(pred_q.dim(), |(i, j)| {
        pred_q[(i, j)] - min_image_coord(pred_q[(i, j)] - target_q[(i, j)], cell)
    })
}

fn check_shapes(q: (usize, usize), v: (usize, usize), target: &ParticleSystem) -> Result<usize> {
    let n = target.len();
    if q != (n, 2) || v != (n, 2) {
        return Err(Error::ShapeMismatch(format!(
            "prediction {q:?}/{v:?} vs target with {n} particles"
        )));
    }
    Ok(n)
}

/// Tape MSE between an on-tape prediction (unwrapped positions are fine) and
/// a target snapshot. The seam adjustment is a constant, so gradients flow
/// through the residual as identity.
pub fn one_step_loss_t(
    tape: &mut Tape,
    pred_q: Var,
    pred_v: Var,
    target: &ParticleSystem,
    cell: f64,
) -> Result<Var> {
    let n = check_shapes(tape.value(pred_q).dim(), tape.value(pred_v).dim(), target)?;
    let adj = seam_adjusted_targets(tape.value(pred_q), &positions_matrix(&target.positions), cell);
    let adj = tape.leaf(adj);
    let tv = tape.leaf(positions_matrix(&target.velocities));
    let dq = tape.sub(pred_q, adj);
    let dv = tape.sub(pred_v, tv);
    let dq2 = tape.mul(dq, dq);
    let dv2 = tape.mul(dv, dv);
    let sq = tape.sum_all(dq2);
    let sv = tape.sum_all(dv2);
    let total = tape.add(sq, sv);
    Ok(tape.scale(total, 1.0 / (4 * n) as f64))
}

/// Off-tape version of the same loss, bit-identical to the tape value.
pub fn one_step_loss_plain(
    pred: &ParticleSystem,
    target: &ParticleSystem,
    cell: f64,
) -> Result<f64> {
    let pq = positions_matrix(&pred.positions);
    let pv = positions_matrix(&pred.velocities);
    let n = check_shapes(pq.dim(), pv.dim(), target)?;
    let adj = seam_adjusted_targets(&pq, &positions_matrix(&target.positions), cell);
    let tv = positions_matrix(&target.velocities);
    let dq = &pq - &adj;
    let dv = &pv - &tv;
    let sq = (&dq * &dq).sum();
    let sv = (&dv * &dv).sum();
    Ok((sq + sv) * (1.0 / (4 * n) as f64))
}
