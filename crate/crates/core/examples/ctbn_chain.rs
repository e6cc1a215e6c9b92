//! The shipped five-node chain: node-wise Gibbs on a model with 5^5 joint
//! states, reporting posterior occupancy of the leaf.

use std::fs::File;

use mjpgibbs::ctbn::{run_ctbn_chain_with, CtbnGibbsConfig, CtbnModel, CtbnObservations};
use mjpgibbs::TimeInterval;

fn main() -> mjpgibbs::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let model = CtbnModel::from_json(File::open(format!("{dir}/chain5x5.json"))?)?;
    let obs = CtbnObservations::read_csv(File::open(format!("{dir}/chain5x5_obs.csv"))?, &model)?;
    let interval = TimeInterval::new(0.0, 20.0)?;
    let leaf = model.n_nodes() - 1;
    let card = model.node(leaf).cardinality();

    let config = CtbnGibbsConfig {
        n_burnin: 200,
        n_samples: 2_000,
        seed: 8,
        ..Default::default()
    };
    let mut dwell = vec![0.0; card];
    let mut jumps = 0usize;
    run_ctbn_chain_with(&model, &obs, interval, None, &config, |_, traj| {
        let path = traj.node_path(leaf);
        for seg in path.segments() {
            dwell[seg.state] += seg.duration();
        }
        jumps += traj.n_jumps();
    })?;
    let n = config.n_samples as f64;
    println!("mean jumps per path: {:.2}", jumps as f64 / n);
    for (s, d) in dwell.iter().enumerate() {
        println!(
            "leaf {}: expected time in state {s} = {:.2}",
            model.node(leaf).name(),
            d / n
        );
    }
    Ok(())
}
