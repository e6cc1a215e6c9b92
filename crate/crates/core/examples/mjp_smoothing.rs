//! Posterior state marginals of a noisily observed chain: Gibbs estimates
//! against the exact forward-backward answer.

use mjpgibbs::diagnostics::exact_smoothed_marginals;
use mjpgibbs::{
    initial_trajectory, run_chain_with, DiscreteObservations, GibbsConfig, InitialDistribution,
    RateMatrix, TimeInterval,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let a = RateMatrix::from_rows(&[
        vec![-1.0, 0.5, 0.2],
        vec![0.6, -1.5, 0.8],
        vec![0.4, 1.0, -1.0],
    ])?;
    let pi0 = InitialDistribution::uniform(3);
    let interval = TimeInterval::new(0.0, 4.0)?;
    let emission = vec![
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
    ];
    let obs = DiscreteObservations::with_emission(vec![0.5, 2.0, 3.5], &[0, 2, 2], &emission)?;
    let query = [1.0, 2.75];

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let init = initial_trajectory(&a, &pi0, &obs, interval, &mut rng);
    let config = GibbsConfig {
        n_samples: 20_000,
        seed: 4,
        ..Default::default()
    };
    let mut counts = vec![vec![0usize; 3]; query.len()];
    run_chain_with(&init, &a, &pi0, &obs, &config, |_, traj| {
        for (c, &t) in counts.iter_mut().zip(&query) {
            c[traj.state_at(t)] += 1;
        }
    })?;
    let exact = exact_smoothed_marginals(&a, &pi0, &obs, interval, &query)?;
    for (q, &t) in query.iter().enumerate() {
        let est: Vec<f64> = counts[q]
            .iter()
            .map(|&c| c as f64 / config.n_samples as f64)
            .collect();
        println!("t = {t}: gibbs {est:.3?} exact {:.3?}", exact[q]);
    }
    Ok(())
}
