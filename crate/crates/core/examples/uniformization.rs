//! The uniformized construction: a Poisson grid at rate `Omega` with
//! subordinated transitions, thinned back to an ordinary path.

use mjpgibbs::uniformization::{
    augment, sample_uniformized, sample_virtual_jumps, subordinated_transition_matrix, thin,
};
use mjpgibbs::{InitialDistribution, RateMatrix, TimeInterval};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mjpgibbs::Result<()> {
    let a = RateMatrix::from_rows(&[vec![-2.0, 1.0], vec![2.0, -1.0]])?;
    let omega = 2.0 * a.max_exit_rate();
    println!(
        "B = I + A / Omega with Omega = {omega}:\n{}",
        subordinated_transition_matrix(&a, omega)?
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let interval = TimeInterval::new(0.0, 5.0)?;
    let grid = sample_uniformized(
        &a,
        &InitialDistribution::uniform(2),
        interval,
        omega,
        &mut rng,
    )?;
    let path = thin(&grid);
    println!(
        "{} grid points, {} real jumps",
        grid.times.len(),
        path.n_jumps()
    );

    // going the other way: add virtual jumps to a path
    let vj = sample_virtual_jumps(&path, &a, omega, &mut rng)?;
    let regrid = augment(&path, &vj, omega)?;
    println!(
        "re-augmented with {} virtual jumps; thinning recovers the path: {}",
        vj.len(),
        thin(&regrid) == path
    );
    Ok(())
}
