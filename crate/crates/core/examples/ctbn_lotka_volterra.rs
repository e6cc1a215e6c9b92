//! Predator-prey smoothing on a capped Lotka-Volterra CTBN. Observations
//! stop at t = 150; the 90% band should widen afterwards.

use mjpgibbs::ctbn::{run_ctbn_chain_with, CtbnGibbsConfig, LotkaVolterraExperiment};
use mjpgibbs::diagnostics::stats::quantile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let exp = LotkaVolterraExperiment::default();
    let (model, truth, obs) = exp.generate(&mut ChaCha8Rng::seed_from_u64(7))?;
    let interval = exp.interval()?;
    let grid: Vec<f64> = (0..=45).map(|i| i as f64 * 5.0).collect();
    let config = CtbnGibbsConfig {
        n_burnin: 200,
        n_samples: 500,
        seed: 7,
        ..Default::default()
    };
    let mut draws = vec![vec![Vec::new(); grid.len()]; 2];
    run_ctbn_chain_with(&model, &obs, interval, Some(&truth), &config, |_, traj| {
        for (g, &t) in grid.iter().enumerate() {
            let s = traj.state_at(t);
            draws[0][g].push(s[0] as f64);
            draws[1][g].push(s[1] as f64);
        }
    })?;
    println!(
        "{:>6} {:>5} {:>13} {:>5} {:>13}",
        "t", "prey", "band", "pred", "band"
    );
    for (g, &t) in grid.iter().enumerate().step_by(3) {
        let s = truth.state_at(t);
        let band = |k: usize| {
            format!(
                "[{:.0}, {:.0}]",
                quantile(&draws[k][g], 0.05),
                quantile(&draws[k][g], 0.95)
            )
        };
        println!(
            "{t:>6} {:>5} {:>13} {:>5} {:>13}",
            s[0],
            band(0),
            s[1],
            band(1)
        );
    }
    Ok(())
}
