//! Forward filtering and backward sampling on a small discrete-time HMM.

use mjpgibbs::diagnostics::enumerate_hmm_posterior;
use mjpgibbs::ffbs::{ffbs_sample, forward_marginals, HmmProblem};
use mjpgibbs::InitialDistribution;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let b = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]);
    let ll = DMatrix::from_row_slice(
        5,
        2,
        &[
            0.9f64.ln(),
            0.1f64.ln(),
            0.8f64.ln(),
            0.3f64.ln(),
            0.2f64.ln(),
            0.7f64.ln(),
            0.1f64.ln(),
            0.9f64.ln(),
            0.5f64.ln(),
            0.5f64.ln(),
        ],
    );
    let problem = HmmProblem::new(InitialDistribution::uniform(2), vec![b; 4], ll)?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        for (c, &s) in counts
            .iter_mut()
            .zip(&ffbs_sample(&problem, &mut rng)?.states)
        {
            *c += s;
        }
    }
    let exact = enumerate_hmm_posterior(&problem)?.marginals();
    println!(
        "log p(y) = {:.6}",
        forward_marginals(&problem)?.log_marginal
    );
    println!("step  sampled P(s=1)  exact");
    for (t, c) in counts.iter().enumerate() {
        println!("{t:>4}  {:>14.4}  {:.4}", *c as f64 / n as f64, exact[t][1]);
    }
    Ok(())
}
