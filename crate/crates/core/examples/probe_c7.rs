//! Scratch probe for the learning smoke test: target variance and the
//! one-step MSE of a pre-trained checkpoint on the held-out trajectories.

use hiernb_core::hierarchy::DepthPolicy;
use hiernb_core::io::load_checkpoint;
use hiernb_core::models::{build_model_graph, predict_step_plain, ForwardOpts, GraphPolicy};
use hiernb_core::sim::init::generate_trajectory;
use hiernb_core::sim::{ForceLaw, SimConfig, Trajectory};
use hiernb_core::train::one_step_loss_plain;

fn min_image(d: f64, cell: f64) -> f64 {
    d - cell * (d / cell).round()
}

fn main() {
    let cfg = SimConfig::for_particle_count(20, ForceLaw::Gravity);
    let test20: Vec<Trajectory> =
        (100..110).map(|i| generate_trajectory(20, &cfg, 700, i).unwrap()).collect();

    let mut vals = Vec::new();
    for t in &test20 {
        for w in t.snapshots.windows(2) {
            for i in 0..w[0].len() {
                for d in 0..2 {
                    vals.push(min_image(
                        w[1].positions[i][d] - w[0].positions[i][d],
                        cfg.cell_size,
                    ));
                    vals.push(w[1].velocities[i][d] - w[0].velocities[i][d]);
                }
            }
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    println!("one-step change variance: {var:.6e} (mean {mean:.3e}), threshold {:.6e}", 0.1 * var);

    let policy = GraphPolicy::Hier { depth: DepthPolicy::Fixed(3), periodic: true };
    let opts = ForwardOpts::default();
    let mse_of = |params: &hiernb_core::models::ModelParams| {
        let mut total = 0.0;
        let mut count = 0usize;
        for t in &test20 {
            for w in t.snapshots.windows(2) {
                let graph = build_model_graph(&w[0], cfg.cell_size, &policy).unwrap();
                let pred = predict_step_plain(
                    params, &w[0], cfg.cell_size, cfg.dt_base, &graph, &opts,
                )
                .unwrap();
                total += one_step_loss_plain(&pred, &w[1], cfg.cell_size).unwrap();
                count += 1;
            }
        }
        total / count as f64
    };

    if let Some(path) = std::env::args().nth(1) {
        let ckpt = load_checkpoint(path).unwrap();
        println!("checkpoint one-step mse: {:.6e}", mse_of(&ckpt.params));
        return;
    }

    // Exact acceptance configuration: same data, seed, and schedule.
    let data: Vec<Trajectory> =
        (0..100).map(|i| generate_trajectory(20, &cfg, 700, i).unwrap()).collect();
    let tcfg = hiernb_core::train::TrainConfig {
        total_steps: 10_000,
        batch_size: 10,
        lr_decay_every: 4_000,
        log_every: 500,
        seed: 42,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let hier = hiernb_core::train::train(
        hiernb_core::models::ModelVariant::Delta,
        ForceLaw::Gravity,
        &policy,
        &data,
        &tcfg,
    )
    .unwrap();
    println!("trained in {:.1} min, {} skipped", t0.elapsed().as_secs_f64() / 60.0, hier.skipped_steps);
    for p in &hier.curve {
        if p.step % 2000 == 0 {
            println!("  step {} loss {:.4e} lr {:.1e}", p.step, p.loss, p.lr);
        }
    }
    println!("acceptance-config hier one-step mse: {:.6e}", mse_of(&hier.params));
}
