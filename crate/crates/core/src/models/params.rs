//! Model parameters: the GN block MLPs, the decoder, and (for hierarchical
//! variants) the six hierarchy MLPs, with a fixed naming/ordering scheme
//! shared by checkpoints, the optimizer state, and the tape gradient list.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gn::mlp::{Activation, MlpParams, MlpSpec, MlpVars};
use crate::gn::tape::{Tape, Var};
use crate::rng::{domain, stream_rng};
use crate::sim::ForceLaw;

/// Output width of the edge MLP and of the cell-edge MLPs that feed the same
/// aggregation slot.
pub const EDGE_WIDTH: usize = 150;
/// Output width of the node MLP (decoder input).
pub const NODE_WIDTH: usize = 100;
/// Output width of the global MLP.
pub const GLOBAL_WIDTH: usize = 100;
/// Output width of the upward-pass message MLPs; cell embeddings are the raw
/// summary features with one such message sum appended.
pub const CELL_MSG_WIDTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Predicts (Δq, Δq̇) directly; one GN pass, ReLU activations.
    Delta,
    /// Predicts a scalar Hamiltonian; dynamics via its gradients, RK4
    /// integration, Softplus activations (ReLU's piecewise-constant
    /// derivative would make the induced field piecewise constant).
    Hogn,
}

impl ModelVariant {
    pub fn activation(self) -> Activation {
        match self {
            ModelVariant::Delta => Activation::Relu,
            ModelVariant::Hogn => Activation::Softplus,
        }
    }

    /// Width of the global feature row: Δt for the delta variant, nothing
    /// for the Hamiltonian one (time enters only through the integrator).
    pub fn global_dim(self) -> usize {
        match self {
            ModelVariant::Delta => 1,
            ModelVariant::Hogn => 0,
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::Delta => "delta",
            ModelVariant::Hogn => "hogn",
        })
    }
}

/// Per-node feature width: mass, two velocity/momentum components, and the
/// charge when the force law has one.
pub fn node_dim(force_law: ForceLaw) -> usize {
    if force_law.has_charges() {
        4
    } else {
        3
    }
}

/// The six hierarchy MLPs. `cc2cp` is shared by every upper level of the
/// upward pass, and `c2c`/`cp2cc` by every level of the downward pass.
#[derive(Debug, Clone)]
pub struct HierParams {
    /// particle -> finest cell (upward)
    pub p2c: MlpParams,
    /// child cell -> parent cell (upward, shared across levels)
    pub cc2cp: MlpParams,
    /// near-neighbour cell -> cell (downward, shared across levels)
    pub c2c: MlpParams,
    /// parent cell -> child cell (downward, shared across levels)
    pub cp2cc: MlpParams,
    /// cell feature update after the downward aggregation
    pub phic: MlpParams,
    /// parent cell -> particle, producing the appended particle edge
    pub c2p: MlpParams,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub variant: ModelVariant,
    pub force_law: ForceLaw,
    pub edge: MlpParams,
    pub node: MlpParams,
    /// Present only for the Hamiltonian variant.
    pub global: Option<MlpParams>,
    /// Linear read-out: node width -> 4 (delta) or global width -> 1 (hogn).
    pub decoder: MlpParams,
    pub hier: Option<HierParams>,
}

impl ModelParams {
    /// Builds the MLP shape set for a variant. Cell embeddings are
    /// `node_dim + CELL_MSG_WIDTH` wide at every level, which is what lets
    /// one `cc2cp`/`c2c`/`cp2cc` parameter set serve all levels.
    fn specs(variant: ModelVariant, force_law: ForceLaw, with_hier: bool) -> ModelSpecs {
        let dv = node_dim(force_law);
        let du = variant.global_dim();
        let emb = dv + CELL_MSG_WIDTH;
        ModelSpecs {
            edge: MlpSpec::block(2 + 2 * dv + du, EDGE_WIDTH, 2),
            node: MlpSpec::block(EDGE_WIDTH + dv + du, NODE_WIDTH, 3),
            global: (variant == ModelVariant::Hogn)
                .then(|| MlpSpec::block(EDGE_WIDTH + NODE_WIDTH, GLOBAL_WIDTH, 2)),
            decoder: match variant {
                ModelVariant::Delta => MlpSpec::linear(NODE_WIDTH, 4),
                ModelVariant::Hogn => MlpSpec::linear(GLOBAL_WIDTH, 1),
            },
            hier: with_hier.then(|| HierSpecs {
                p2c: MlpSpec::block(2 * dv + 2 + du, CELL_MSG_WIDTH, 2),
                cc2cp: MlpSpec::block(dv + emb + 2 + du, CELL_MSG_WIDTH, 2),
                c2c: MlpSpec::block(2 * emb + 2 + du, EDGE_WIDTH, 2),
                cp2cc: MlpSpec::block(2 * emb + 2 + du, EDGE_WIDTH, 2),
                phic: MlpSpec::block(emb + EDGE_WIDTH + du, NODE_WIDTH, 3),
                c2p: MlpSpec::block(dv + emb + 2 + du, EDGE_WIDTH, 2),
            }),
        }
    }

    /// Random initialization. Groups are drawn in the fixed order
    /// edge, node, global, decoder, p2c, cc2cp, c2c, cp2cc, phic, c2p.
    pub fn init(
        variant: ModelVariant,
        force_law: ForceLaw,
        with_hier: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let s = Self::specs(variant, force_law, with_hier);
        ModelParams {
            variant,
            force_law,
            edge: MlpParams::init(s.edge, rng),
            node: MlpParams::init(s.node, rng),
            global: s.global.map(|g| MlpParams::init(g, rng)),
            decoder: MlpParams::init(s.decoder, rng),
            hier: s.hier.map(|h| HierParams {
                p2c: MlpParams::init(h.p2c, rng),
                cc2cp: MlpParams::init(h.cc2cp, rng),
                c2c: MlpParams::init(h.c2c, rng),
                cp2cc: MlpParams::init(h.cp2cc, rng),
                phic: MlpParams::init(h.phic, rng),
                c2p: MlpParams::init(h.c2p, rng),
            }),
        }
    }

    /// Seeded initialization on the parameter RNG stream.
    pub fn seeded(
        variant: ModelVariant,
        force_law: ForceLaw,
        with_hier: bool,
        seed: u64,
    ) -> Self {
        Self::init(variant, force_law, with_hier, &mut stream_rng(seed, domain::PARAMS, 0))
    }

    /// All-zero parameters for a variant; checkpoint loading fills these in.
    pub fn zeros(variant: ModelVariant, force_law: ForceLaw, with_hier: bool) -> Self {
        let s = Self::specs(variant, force_law, with_hier);
        ModelParams {
            variant,
            force_law,
            edge: MlpParams::zeros(s.edge),
            node: MlpParams::zeros(s.node),
            global: s.global.map(MlpParams::zeros),
            decoder: MlpParams::zeros(s.decoder),
            hier: s.hier.map(|h| HierParams {
                p2c: MlpParams::zeros(h.p2c),
                cc2cp: MlpParams::zeros(h.cc2cp),
                c2c: MlpParams::zeros(h.c2c),
                cp2cc: MlpParams::zeros(h.cp2cc),
                phic: MlpParams::zeros(h.phic),
                c2p: MlpParams::zeros(h.c2p),
            }),
        }
    }

    /// All-zero parameters with the same shapes (used by tests and as the
    /// Adam moment-state template).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mlp) in out.groups_mut() {
            mlp.zero_out();
        }
        out
    }

    /// Named parameter groups in canonical order. Checkpoint tensor names
    /// derive from these as `<group>.w<i>` / `<group>.b<i>`.
    pub fn groups(&self) -> Vec<(&'static str, &MlpParams)> {
        let mut g: Vec<(&'static str, &MlpParams)> =
            vec![("edge", &self.edge), ("node", &self.node)];
        if let Some(u) = &self.global {
            g.push(("global", u));
        }
        g.push(("decoder", &self.decoder));
        if let Some(h) = &self.hier {
            g.extend([
                ("p2c", &h.p2c),
                ("cc2cp", &h.cc2cp),
                ("c2c", &h.c2c),
                ("cp2cc", &h.cp2cc),
                ("phic", &h.phic),
                ("c2p", &h.c2p),
            ]);
        }
        g
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut MlpParams)> {
        let mut g: Vec<(&'static str, &mut MlpParams)> =
            vec![("edge", &mut self.edge), ("node", &mut self.node)];
        if let Some(u) = &mut self.global {
            g.push(("global", u));
        }
        g.push(("decoder", &mut self.decoder));
        if let Some(h) = &mut self.hier {
            g.extend([
                ("p2c", &mut h.p2c),
                ("cc2cp", &mut h.cc2cp),
                ("c2c", &mut h.c2c),
                ("cp2cc", &mut h.cp2cc),
                ("phic", &mut h.phic),
                ("c2p", &mut h.c2p),
            ]);
        }
        g
    }

    /// Zeroes every hierarchy MLP (weights and biases). With ReLU this makes
    /// the cell-to-particle features exactly zero, reducing the hierarchical
    /// model to its base GN.
    pub fn zero_hierarchy(&mut self) {
        if let Some(h) = &mut self.hier {
            for mlp in [&mut h.p2c, &mut h.cc2cp, &mut h.c2c, &mut h.cp2cc, &mut h.phic, &mut h.c2p]
            {
                mlp.zero_out();
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.groups().iter().map(|(_, m)| m.n_params()).sum()
    }

    /// Registers every parameter tensor as a tape leaf, in `groups()` order.
    pub fn leaf_on(&self, tape: &mut Tape) -> ModelVars {
        let act = self.variant.activation();
        ModelVars {
            edge: self.edge.leaf_on(tape, act),
            node: self.node.leaf_on(tape, act),
            global: self.global.as_ref().map(|g| g.leaf_on(tape, act)),
            decoder: self.decoder.leaf_on(tape, act),
            hier: self.hier.as_ref().map(|h| HierVars {
                p2c: h.p2c.leaf_on(tape, act),
                cc2cp: h.cc2cp.leaf_on(tape, act),
                c2c: h.c2c.leaf_on(tape, act),
                cp2cc: h.cp2cc.leaf_on(tape, act),
                phic: h.phic.leaf_on(tape, act),
                c2p: h.c2p.leaf_on(tape, act),
            }),
        }
    }
}

struct ModelSpecs {
    edge: MlpSpec,
    node: MlpSpec,
    global: Option<MlpSpec>,
    decoder: MlpSpec,
    hier: Option<HierSpecs>,
}

struct HierSpecs {
    p2c: MlpSpec,
    cc2cp: MlpSpec,
    c2c: MlpSpec,
    cp2cc: MlpSpec,
    phic: MlpSpec,
    c2p: MlpSpec,
}

#[derive(Debug, Clone)]
pub struct HierVars {
    pub p2c: MlpVars,
    pub cc2cp: MlpVars,
    pub c2c: MlpVars,
    pub cp2cc: MlpVars,
    pub phic: MlpVars,
    pub c2p: MlpVars,
}

/// Tape-side handles for every parameter tensor of a model.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub edge: MlpVars,
    pub node: MlpVars,
    pub global: Option<MlpVars>,
    pub decoder: MlpVars,
    pub hier: Option<HierVars>,
}

impl ModelVars {
    /// Flat tensor list aligned with [`ModelParams::groups`] +
    /// per-group layer order; gradients returned by the tape line up with
    /// the optimizer's tensor traversal.
    pub fn all_vars(&self) -> Vec<Var> {
        let mut vars = Vec::new();
        vars.extend(self.edge.all_vars());
        vars.extend(self.node.all_vars());
        if let Some(g) = &self.global {
            vars.extend(g.all_vars());
        }
        vars.extend(self.decoder.all_vars());
        if let Some(h) = &self.hier {
            for m in [&h.p2c, &h.cc2cp, &h.c2c, &h.cp2cc, &h.phic, &h.c2p] {
                vars.extend(m.all_vars());
            }
        }
        vars
    }
}
