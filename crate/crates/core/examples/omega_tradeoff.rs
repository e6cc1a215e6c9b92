//! Effective samples per second as a function of the uniformization
//! multiplier `k`, on a random three-state MMPP.

use mjpgibbs::experiments::{ess_run, ScalingProblem, StudyMode};

fn main() -> mjpgibbs::Result<()> {
    let problem = ScalingProblem::generate(3, 20.0, 10)?;
    println!(
        "{:>5} {:>7} {:>10} {:>12} {:>10}",
        "k", "mode", "median ESS", "s per sweep", "ESS per s"
    );
    for mode in [StudyMode::Fixed, StudyMode::Joint] {
        for k in [1.5, 2.0, 3.0, 5.0, 10.0] {
            let run = ess_run(&problem, k, mode, 200, 2_000, 10)?;
            println!(
                "{k:>5} {:>7} {:>10.1} {:>12.2e} {:>10.1}",
                mode.as_str(),
                run.median_ess,
                run.seconds_per_sweep,
                run.ess_per_second
            );
        }
    }
    Ok(())
}
