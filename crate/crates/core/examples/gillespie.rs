//! Forward simulation of a three-state chain, checked against `expm(A t)`.

use mjpgibbs::diagnostics::stats::{empirical_distribution, total_variation};
use mjpgibbs::diagnostics::transition_probabilities;
use mjpgibbs::{gillespie_sample, InitialDistribution, RateMatrix, TimeInterval};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let a = RateMatrix::from_rows(&[
        vec![-1.0, 0.5, 0.2],
        vec![0.6, -1.5, 0.8],
        vec![0.4, 1.0, -1.0],
    ])?;
    let pi0 = InitialDistribution::point_mass(3, 0);
    let interval = TimeInterval::new(0.0, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let paths: Vec<_> = (0..20_000)
        .map(|_| gillespie_sample(&a, &pi0, interval, &mut rng))
        .collect();
    let jumps = paths.iter().map(|p| p.n_jumps()).sum::<usize>() as f64 / paths.len() as f64;
    let empirical = empirical_distribution(paths.iter().map(|p| p.final_state()), 3);
    let p = transition_probabilities(&a, 2.0);
    let exact: Vec<f64> = (0..3).map(|to| p[(to, 0)]).collect();

    println!("mean jumps per path: {jumps:.3}");
    println!("P(X_2 = s | X_0 = 0) empirical {empirical:.4?}");
    println!("                     exact     {exact:.4?}");
    println!(
        "total variation: {:.4}",
        total_variation(&empirical, &exact)
    );
    Ok(())
}
