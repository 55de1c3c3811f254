//! Rollout evaluation metrics.
//!
//! RMSE pools the squared residuals of every phase-space number — particles x
//! coordinates x steps 1..=tau (x trajectories for the summary row) — and
//! takes one root at the end, with position residuals under the minimum
//! image. Relative energy error is `(H_0 - H_tau) / H_0` per trajectory,
//! signed, averaged over the test set; the mean absolute value is reported
//! alongside it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForwardOpts, GraphPolicy, ModelParams};
use crate::sim::forces::hamiltonian;
use crate::sim::pbc::min_image_coord;
use crate::sim::{SimConfig, TrajStatus, Trajectory};

use super::rollout::rollout_model;

/// Squared-residual sum and element count for one prediction/truth pair.
fn rmse_parts(
    pred: &Trajectory,
    truth: &Trajectory,
    tau: usize,
    cell: f64,
) -> Result<(f64, usize)> {
    if tau == 0 {
        return Err(Error::invalid("rollout RMSE needs tau >= 1"));
    }
    if pred.steps_recorded() < tau || truth.steps_recorded() < tau {
        return Err(Error::invalid(format!(
            "tau {tau} exceeds recorded steps ({} predicted, {} true)",
            pred.steps_recorded(),
            truth.steps_recorded()
        )));
    }
    let n = truth.n_particles();
    if pred.n_particles() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted particles vs {n} true",
            pred.n_particles()
        )));
    }
    let mut sq = 0.0;
    for s in 1..=tau {
        let (p, t) = (&pred.snapshots[s], &truth.snapshots[s]);
        for i in 0..n {
            for d in 0..2 {
                let dq = min_image_coord(p.positions[i][d] - t.positions[i][d], cell);
                let dv = p.velocities[i][d] - t.velocities[i][d];
                sq += dq * dq + dv * dv;
            }
        }
    }
    Ok((sq, tau * n * 4))
}

/// RMSE between predicted and true phase-space coordinates over steps
/// `1..=tau` of a single trajectory pair.
pub fn rollout_rmse(pred: &Trajectory, truth: &Trajectory, tau: usize, cell: f64) -> Result<f64> {
    let (sq, count) = rmse_parts(pred, truth, tau, cell)?;
    Ok((sq / count as f64).sqrt())
}

/// One trajectory's relative energy error `(H_0 - H_tau) / H_0` evaluated on
/// the predicted states. An exactly conserved Hamiltonian scores 0 even when
/// `H_0 = 0` (a static free particle); a changed Hamiltonian with `H_0 = 0`
/// has no relative error and is an input error.
pub fn energy_term(pred: &Trajectory, config: &SimConfig, tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::invalid("energy error needs tau >= 1"));
    }
    if pred.steps_recorded() < tau {
        return Err(Error::invalid(format!(
            "tau {tau} exceeds {} recorded steps",
            pred.steps_recorded()
        )));
    }
    let h0 = hamiltonian(&pred.snapshots[0], config)?;
    let ht = hamiltonian(&pred.snapshots[tau], config)?;
    if h0 - ht == 0.0 {
        return Ok(0.0);
    }
    if h0 == 0.0 {
        return Err(Error::invalid("relative energy error undefined: H_0 = 0"));
    }
    Ok((h0 - ht) / h0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyError {
    pub mean_signed: f64,
    pub mean_abs: f64,
}

/// Mean (and mean-absolute) relative energy error over a set of predicted
/// trajectories.
pub fn energy_error(preds: &[Trajectory], config: &SimConfig, tau: usize) -> Result<EnergyError> {
    if preds.is_empty() {
        return Err(Error::invalid("energy error over an empty test set"));
    }
    let mut signed = 0.0;
    let mut abs = 0.0;
    for p in preds {
        let term = energy_term(p, config, tau)?;
        signed += term;
        abs += term.abs();
    }
    let k = preds.len() as f64;
    Ok(EnergyError { mean_signed: signed / k, mean_abs: abs / k })
}

/// Metrics for one (trajectory, tau) pair; `None` when the rollout truncated
/// before reaching tau.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauMetrics {
    pub tau: usize,
    pub rmse: Option<f64>,
    pub energy_signed: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajEval {
    pub trajectory: usize,
    /// First bad base step if the rollout blew up.
    pub truncated_at: Option<usize>,
    pub wall_seconds: f64,
    pub metrics: Vec<TauMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauSummary {
    pub tau: usize,
    /// Pooled over all evaluated trajectories (one root at the end).
    pub rmse: Option<f64>,
    pub energy_mean_signed: Option<f64>,
    pub energy_mean_abs: Option<f64>,
    /// Trajectories whose rollout reached this tau.
    pub n_evaluated: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config_hash: u64,
    pub taus: Vec<usize>,
    pub trajectories: Vec<TrajEval>,
    pub summary: Vec<TauSummary>,
    pub wall_seconds_total: f64,
    pub graph_builds_total: usize,
}

/// Rolls the model out from each test trajectory's initial state and scores
/// it at every requested tau.
pub fn evaluate(
    params: &ModelParams,
    policy: &GraphPolicy,
    tests: &[Trajectory],
    taus: &[usize],
    opts: &ForwardOpts,
    seed: u64,
    config_hash: u64,
) -> Result<EvalReport> {
    if tests.is_empty() {
        return Err(Error::invalid("evaluation needs at least one test trajectory"));
    }
    if taus.is_empty() || taus.contains(&0) {
        return Err(Error::invalid("evaluation taus must be nonempty and >= 1"));
    }
    let max_tau = *taus.iter().max().expect("nonempty");
    for (i, t) in tests.iter().enumerate() {
        if t.steps_recorded() < max_tau {
            return Err(Error::invalid(format!(
                "test trajectory {i} has {} steps, need {max_tau}",
                t.steps_recorded()
            )));
        }
    }

    let t_all = Instant::now();
    let mut rows = Vec::with_capacity(tests.len());
    let mut graph_builds_total = 0;
    // Pooled accumulators per tau: (squared sum, count, energy sum, |energy| sum, evaluated).
    let mut acc = vec![(0.0f64, 0usize, 0.0f64, 0.0f64, 0usize); taus.len()];

    for (i, truth) in tests.iter().enumerate() {
        let t_one = Instant::now();
        let out = rollout_model(
            params, policy, &truth.snapshots[0], &truth.config, seed, max_tau, opts,
        )?;
        let wall_seconds = t_one.elapsed().as_secs_f64();
        graph_builds_total += out.graph_builds;
        let pred = out.trajectory;
        let truncated_at = match pred.status {
            TrajStatus::Complete => None,
            TrajStatus::Truncated { at_base_step } => Some(at_base_step),
        };
        let mut metrics = Vec::with_capacity(taus.len());
        for (k, &tau) in taus.iter().enumerate() {
            if pred.steps_recorded() >= tau {
                let (sq, count) = rmse_parts(&pred, truth, tau, truth.config.cell_size)?;
                let e = energy_term(&pred, &truth.config, tau)?;
                acc[k].0 += sq;
                acc[k].1 += count;
                acc[k].2 += e;
                acc[k].3 += e.abs();
                acc[k].4 += 1;
                metrics.push(TauMetrics {
                    tau,
                    rmse: Some((sq / count as f64).sqrt()),
                    energy_signed: Some(e),
                });
            } else {
                metrics.push(TauMetrics { tau, rmse: None, energy_signed: None });
            }
        }
        rows.push(TrajEval { trajectory: i, truncated_at, wall_seconds, metrics });
    }

    let summary = taus
        .iter()
        .zip(&acc)
        .map(|(&tau, &(sq, count, e, ea, k))| TauSummary {
            tau,
            rmse: (count > 0).then(|| (sq / count as f64).sqrt()),
            energy_mean_signed: (k > 0).then(|| e / k as f64),
            energy_mean_abs: (k > 0).then(|| ea / k as f64),
            n_evaluated: k,
        })
        .collect();

    Ok(EvalReport {
        seed,
        config_hash,
        taus: taus.to_vec(),
        trajectories: rows,
        summary,
        wall_seconds_total: t_all.elapsed().as_secs_f64(),
        graph_builds_total,
    })
}
