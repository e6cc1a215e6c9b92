//! Building a CTBN in code, writing it as JSON and sampling from the
//! reloaded model. Also loads the drug-effect network topology.

use std::fs::File;

use mjpgibbs::ctbn::{ctbn_simulate, CtbnInitial, CtbnModel, CtbnNode};
use mjpgibbs::{InitialDistribution, RateMatrix, TimeInterval};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let flip = |r: f64| RateMatrix::from_rows(&[vec![-r, r], vec![r, -r]]);
    let nodes = vec![
        CtbnNode::dense("switch", 2, vec![], vec![flip(0.2)?]),
        // the lamp follows the switch quickly
        CtbnNode::dense(
            "lamp",
            2,
            vec![0],
            vec![
                RateMatrix::from_rows(&[vec![0.0, 5.0], vec![0.0, -5.0]])?,
                RateMatrix::from_rows(&[vec![-5.0, 0.0], vec![5.0, 0.0]])?,
            ],
        ),
    ];
    let init = CtbnInitial::Product(vec![
        InitialDistribution::point_mass(2, 0),
        InitialDistribution::point_mass(2, 0),
    ]);
    let model = CtbnModel::new(nodes, init)?;
    let json = model.to_json_pretty();
    println!("{json}");

    let again = CtbnModel::from_json(json.as_bytes())?;
    let traj = ctbn_simulate(
        &again,
        TimeInterval::new(0.0, 10.0)?,
        &mut ChaCha8Rng::seed_from_u64(9),
    );
    for ((t, k), s) in traj
        .jump_times()
        .iter()
        .zip(traj.jump_nodes())
        .zip(traj.jump_states())
    {
        println!("t = {t:7.3}  {} -> {s}", again.node(*k).name());
    }

    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/models");
    let drug = CtbnModel::from_json(File::open(format!("{dir}/drug_effect.json"))?)?;
    for (k, node) in drug.nodes().iter().enumerate() {
        let parents: Vec<&str> = drug
            .parents(k)
            .iter()
            .map(|&p| drug.node(p).name())
            .collect();
        println!(
            "{:<14} {} states, parents {parents:?}",
            node.name(),
            node.cardinality()
        );
    }
    Ok(())
}
