//! A Markov-modulated Poisson process: simulate events, then learn the
//! generator and the per-state event rates jointly with the hidden path.

use mjpgibbs::bayes::RatePrior;
use mjpgibbs::mmpp::{mmpp_bayes_chain_with, mmpp_simulate, EmissionPrior, MmppModel};
use mjpgibbs::{GibbsConfig, InitialDistribution, RateMatrix, TimeInterval};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let a = RateMatrix::from_rows(&[vec![-0.2, 0.3], vec![0.2, -0.3]])?;
    let model = MmppModel::new(a, InitialDistribution::uniform(2), vec![0.5, 4.0])?;
    let interval = TimeInterval::new(0.0, 100.0)?;
    let (truth, events) = mmpp_simulate(&model, interval, &mut ChaCha8Rng::seed_from_u64(6));
    println!("{} events, {} true switches", events.len(), truth.n_jumps());

    let config = GibbsConfig {
        n_burnin: 500,
        n_samples: 2_000,
        seed: 6,
        ..Default::default()
    };
    let rate_prior = RatePrior::symmetric(1.0, 1.0, 1.0, 2)?;
    let (mut lambda, mut agree) = (vec![0.0; 2], 0.0);
    let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
    mmpp_bayes_chain_with(
        &events,
        interval,
        &model.pi0,
        &rate_prior,
        &EmissionPrior::increasing(2),
        &config,
        |_, _, rates, traj| {
            for (l, r) in lambda.iter_mut().zip(rates) {
                *l += r;
            }
            agree += grid
                .iter()
                .filter(|&&t| traj.state_at(t) == truth.state_at(t))
                .count() as f64
                / grid.len() as f64;
        },
    )?;
    let n = config.n_samples as f64;
    println!(
        "posterior mean event rates {:.3?} (true [0.5, 4.0])",
        lambda.iter().map(|l| l / n).collect::<Vec<_>>()
    );
    println!(
        "fraction of time the sampled path matches the truth: {:.3}",
        agree / n
    );
    Ok(())
}
