//! The learned dynamics models: a direct state-change GN (delta) and a
//! Hamiltonian GN (hogn), each runnable on a full, k-NN, or hierarchical
//! interaction graph, plus the shared step-prediction entry points used by
//! training and rollout.

pub mod deltagn;
pub mod features;
pub mod hier;
pub mod hogn;
pub mod params;
pub mod rk4;

use ndarray::Array2;

pub use features::{build_model_graph, GraphPolicy, ModelGraph};
pub use params::{ModelParams, ModelVariant, ModelVars};

use crate::error::{Error, Result};
use crate::gn::tape::{Tape, Var};
use crate::sim::pbc::wrap_pos;
use crate::sim::ParticleSystem;

/// Forward-pass knobs. `force_zero_cell_edges` suppresses the hierarchy's
/// appended cell-to-particle edges — a testing knob for reduction checks
/// (softplus maps zeroed parameters to a nonzero constant, so zeroing the
/// MLPs alone cannot switch the hogn hierarchy off). `chunk_rows` bounds the
/// edge rows materialized at once on the plain path.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOpts {
    pub force_zero_cell_edges: bool,
    pub chunk_rows: usize,
}

impl Default for ForwardOpts {
    fn default() -> Self {
        ForwardOpts { force_zero_cell_edges: false, chunk_rows: 65_536 }
    }
}

/// Phase-space state as dense arrays; velocities are canonical and momenta
/// are derived as p = m·q̇ where needed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    /// [N x 2]
    pub positions: Array2<f64>,
    /// [N x 2]
    pub velocities: Array2<f64>,
}

impl PhaseState {
    pub fn of_system(sys: &ParticleSystem) -> Self {
        PhaseState {
            positions: features::positions_matrix(&sys.positions),
            velocities: features::positions_matrix(&sys.velocities),
        }
    }

    pub fn momenta(&self, masses: &[f64]) -> Array2<f64> {
        let mut p = self.velocities.clone();
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            row *= masses[i];
        }
        p
    }

    /// Writes this state into a copy of `template`, wrapping positions into
    /// the box. Fails if any coordinate is non-finite.
    pub fn into_system(self, template: &ParticleSystem, cell_size: f64) -> Result<ParticleSystem> {
        if self.positions.nrows() != template.len() {
            return Err(Error::ShapeMismatch(format!(
                "state has {} particles, template {}",
                self.positions.nrows(),
                template.len()
            )));
        }
        if !self.positions.iter().chain(self.velocities.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("predicted state".into()));
        }
        let mut out = template.clone();
        for i in 0..out.len() {
            out.positions[i] =
                wrap_pos([self.positions[(i, 0)], self.positions[(i, 1)]], cell_size);
            out.velocities[i] = [self.velocities[(i, 0)], self.velocities[(i, 1)]];
        }
        Ok(out)
    }
}

/// A one-step prediction living on a tape: parameter leaves plus the
/// unwrapped predicted positions/velocities. Loss construction and
/// backward happen on the same tape.
pub struct StepPrediction {
    pub vars: ModelVars,
    pub q: Var,
    pub v: Var,
}

/// Builds the one-step prediction subgraph for either variant.
pub fn predict_step_t(
    tape: &mut Tape,
    params: &ModelParams,
    sys: &ParticleSystem,
    cell_size: f64,
    dt: f64,
    graph: &ModelGraph,
    opts: &ForwardOpts,
) -> Result<StepPrediction> {
    match params.variant {
        ModelVariant::Delta => {
            let (vars, delta) =
                deltagn::deltagn_delta_t(tape, params, sys, cell_size, dt, graph, opts)?;
            let (q, v) = deltagn::delta_prediction_t(tape, sys, delta);
            Ok(StepPrediction { vars, q, v })
        }
        ModelVariant::Hogn => {
            let (vars, q, v) =
                hogn::hogn_predict_t(tape, params, sys, cell_size, dt, graph, opts)?;
            Ok(StepPrediction { vars, q, v })
        }
    }
}

/// One predicted step as a new wrapped `ParticleSystem` (no parameter
/// gradients). The delta variant runs entirely off-tape; the Hamiltonian
/// variant needs a tape for its own input gradients.
pub fn predict_step_plain(
    params: &ModelParams,
    sys: &ParticleSystem,
    cell_size: f64,
    dt: f64,
    graph: &ModelGraph,
    opts: &ForwardOpts,
) -> Result<ParticleSystem> {
    match params.variant {
        ModelVariant::Delta => {
            let delta = deltagn::deltagn_forward_plain(params, sys, cell_size, dt, graph, opts)?;
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("predicted delta".into()));
            }
            deltagn::apply_delta(sys, &delta, cell_size)
        }
        ModelVariant::Hogn => {
            let mut tape = Tape::new();
            let (_, q, v) = hogn::hogn_predict_t(&mut tape, params, sys, cell_size, dt, graph, opts)?;
            let state = PhaseState {
                positions: tape.value(q).clone(),
                velocities: tape.value(v).clone(),
            };
            state.into_system(sys, cell_size)
        }
    }
}
