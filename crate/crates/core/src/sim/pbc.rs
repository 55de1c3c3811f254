//! Periodic box geometry: coordinate wrapping and minimum-image displacements.
//!
//! The simulation domain is the half-open square `[0, L) x [0, L)` with
//! toroidal topology. All pair interactions use the minimum-image convention:
//! each displacement component lies in `[-L/2, L/2)`, with the exact tie
//! `+L/2` mapped to `-L/2` so the representative is unique.

use crate::error::{Error, Result};

/// Wraps a scalar coordinate into `[0, cell)`.
#[inline]
pub fn wrap_coord(x: f64, cell: f64) -> f64 {
    // fmod is exact, so this holds for any finite x — including magnitudes
    // where ulp(x) dwarfs the cell and a mul/floor scheme drifts out of the
    // box (a diverging model can produce such positions).
    let w = x.rem_euclid(cell);
    // Guard the floating-point edge where x is a tiny negative number and
    // x + cell rounds back up to cell itself.
    if w >= cell {
        w - cell
    } else {
        w
    }
}

/// Wraps both components of a position into the primary box.
#[inline]
pub fn wrap_pos(q: [f64; 2], cell: f64) -> [f64; 2] {
    [wrap_coord(q[0], cell), wrap_coord(q[1], cell)]
}

/// Minimum-image representative of a scalar separation, in `[-cell/2, cell/2)`.
#[inline]
pub fn min_image_coord(d: f64, cell: f64) -> f64 {
    let w = d - cell * (d / cell + 0.5).floor();
    if w >= 0.5 * cell {
        w - cell
    } else if w < -0.5 * cell {
        w + cell
    } else {
        w
    }
}

/// Minimum-image displacement `to - from`, each component in `[-cell/2, cell/2)`.
///
/// Callers inside hot loops that have already validated their state use this
/// directly; [`min_image_disp`] is the checked entry point.
#[inline]
pub fn min_image_unchecked(to: [f64; 2], from: [f64; 2], cell: f64) -> [f64; 2] {
    [
        min_image_coord(to[0] - from[0], cell),
        min_image_coord(to[1] - from[1], cell),
    ]
}

/// Checked minimum-image displacement `to - from`.
pub fn min_image_disp(to: [f64; 2], from: [f64; 2], cell: f64) -> Result<[f64; 2]> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::invalid(format!("cell size must be positive, got {cell}")));
    }
    if !(to[0].is_finite() && to[1].is_finite() && from[0].is_finite() && from[1].is_finite()) {
        return Err(Error::NonFinite("position passed to min_image_disp".into()));
    }
    Ok(min_image_unchecked(to, from, cell))
}
