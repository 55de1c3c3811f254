//! Classic fourth-order Runge-Kutta over (q, p) array pairs — the plain
//! (non-tape) form used by oracles and reference integrations.

use ndarray::Array2;

use crate::error::{Error, Result};

/// One RK4 step of the system (q̇, ṗ) = f(q, p).
pub fn rk4_step<F>(
    q: &Array2<f64>,
    p: &Array2<f64>,
    dt: f64,
    mut f: F,
) -> Result<(Array2<f64>, Array2<f64>)>
where
    F: FnMut(&Array2<f64>, &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)>,
{
    let (k1q, k1p) = f(q, p)?;
    let (k2q, k2p) = f(&(q + &(&k1q * (dt / 2.0))), &(p + &(&k1p * (dt / 2.0))))?;
    let (k3q, k3p) = f(&(q + &(&k2q * (dt / 2.0))), &(p + &(&k2p * (dt / 2.0))))?;
    let (k4q, k4p) = f(&(q + &(&k3q * dt)), &(p + &(&k3p * dt)))?;
    let q1 = q + &((k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0));
    let p1 = p + &((k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0));
    if q1.iter().chain(p1.iter()).all(|v| v.is_finite()) {
        Ok((q1, p1))
    } else {
        Err(Error::NonFinite("rk4 step".into()))
    }
}
