//! The uniformized representation `(v0, V, W)` of an MJP path.
//!
//! A path is generated by a rate-`omega` Poisson process `W` and a discrete
//! chain with transition matrix `B = I + A / omega` subordinated to it.
//! Self-transitions of the chain are virtual jumps; dropping them gives the
//! ordinary pure-jump path.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mjp::{InitialDistribution, RateMatrix, TimeInterval, Trajectory};
use crate::util::{poisson_points, sample_categorical};

/// Scale factor `k` in `omega = k * max_s |A_s|`, restricted to `k > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaMultiplier(f64);

impl OmegaMultiplier {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "omega multiplier must be > 1, got {k}"
            )));
        }
        Ok(Self(k))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn omega(&self, a: &RateMatrix) -> f64 {
        self.0 * a.max_exit_rate()
    }
}

impl Default for OmegaMultiplier {
    fn default() -> Self {
        Self(2.0)
    }
}

/// A path with virtual jumps: `W` are candidate times and `V` the chain's
/// states at them, self-transitions allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformizedPath {
    pub v0: usize,
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub interval: TimeInterval,
    pub omega: f64,
}

/// Thinned Poisson events of a path, each tagged with the path's state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VirtualJumps {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
}

impl VirtualJumps {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_omega(a: &RateMatrix, omega: f64, strict: bool) -> Result<()> {
    let max_rate = a.max_exit_rate();
    let ok = if strict {
        omega > max_rate
    } else {
        omega >= max_rate
    };
    if !ok || !omega.is_finite() {
        return Err(Error::DominatingRate { omega, max_rate });
    }
    Ok(())
}

/// `B = I + A / omega`; requires `omega >= max_s |A_s|`.
pub fn subordinated_transition_matrix(a: &RateMatrix, omega: f64) -> Result<DMatrix<f64>> {
    check_omega(a, omega, false)?;
    let n = a.n_states();
    if omega == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let mut b = a.as_matrix() / omega;
    for s in 0..n {
        b[(s, s)] += 1.0;
    }
    // Clip rounding noise on the diagonal when omega equals an exit rate.
    b.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
    Ok(b)
}

/// Forward simulation through the uniformized construction.
pub fn sample_uniformized<R: Rng + ?Sized>(
    a: &RateMatrix,
    pi0: &InitialDistribution,
    interval: TimeInterval,
    omega: f64,
    rng: &mut R,
) -> Result<UniformizedPath> {
    let b = subordinated_transition_matrix(a, omega)?;
    let n = a.n_states();
    let v0 = pi0.sample(rng);
    let mut times = Vec::new();
    poisson_points(rng, omega, interval.start(), interval.end(), &mut times);
    let mut states = Vec::with_capacity(times.len());
    let mut prev = v0;
    let mut col = vec![0.0; n];
    for _ in 0..times.len() {
        for (to, c) in col.iter_mut().enumerate() {
            *c = b[(to, prev)];
        }
        prev = sample_categorical(rng, &col);
        states.push(prev);
    }
    Ok(UniformizedPath {
        v0,
        times,
        states,
        interval,
        omega,
    })
}

/// Keeps the times at which the state changes.
pub fn thin(path: &UniformizedPath) -> Trajectory {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut prev = path.v0;
    for (&t, &s) in path.times.iter().zip(&path.states) {
        if s != prev {
            times.push(t);
            states.push(s);
            prev = s;
        }
    }
    Trajectory::new(path.v0, times, states, path.interval)
        .expect("thinning preserves path invariants")
}

/// Draws the thinned events given a path: on each constant piece in state
/// `s` they form a Poisson process with rate `omega - |A_s|`.
///
/// Requires `omega > max_s |A_s|`; with equality the sampler is reducible.
pub fn sample_virtual_jumps<R: Rng + ?Sized>(
    traj: &Trajectory,
    a: &RateMatrix,
    omega: f64,
    rng: &mut R,
) -> Result<VirtualJumps> {
    check_omega(a, omega, true)?;
    Ok(virtual_jumps_unchecked(traj, a, omega, rng))
}

pub(crate) fn virtual_jumps_unchecked<R: Rng + ?Sized>(
    traj: &Trajectory,
    a: &RateMatrix,
    omega: f64,
    rng: &mut R,
) -> VirtualJumps {
    let mut out = VirtualJumps::default();
    for seg in traj.segments() {
        let rate = omega - a.exit_rate(seg.state);
        let before = out.times.len();
        poisson_points(rng, rate, seg.start, seg.end, &mut out.times);
        out.states.resize(out.times.len(), seg.state);
        debug_assert!(out.times[before..]
            .iter()
            .all(|&t| t > seg.start && t < seg.end));
    }
    out
}

/// Merges the real jumps of `traj` with `virtual_jumps` into `(v0, V, W)`.
pub fn augment(
    traj: &Trajectory,
    virtual_jumps: &VirtualJumps,
    omega: f64,
) -> Result<UniformizedPath> {
    if virtual_jumps.times.len() != virtual_jumps.states.len() {
        return Err(Error::InvalidTrajectory(
            "virtual jump times and states differ in length".into(),
        ));
    }
    let interval = traj.interval();
    for (i, (&t, &s)) in virtual_jumps
        .times
        .iter()
        .zip(&virtual_jumps.states)
        .enumerate()
    {
        if i > 0 && !(t > virtual_jumps.times[i - 1]) {
            if t == virtual_jumps.times[i - 1] {
                return Err(Error::DuplicateTime(t));
            }
            return Err(Error::InvalidTrajectory(
                "virtual jump times are not increasing".into(),
            ));
        }
        if !(t > interval.start() && t <= interval.end()) {
            return Err(Error::InvalidTrajectory(format!(
                "virtual jump at {t} outside the interval"
            )));
        }
        if traj.state_at(t) != s {
            return Err(Error::InvalidTrajectory(format!(
                "virtual jump at {t} has state {s} but the path is in state {}",
                traj.state_at(t)
            )));
        }
    }
    let real_t = traj.jump_times();
    let real_s = traj.jump_states();
    let total = real_t.len() + virtual_jumps.len();
    let mut times = Vec::with_capacity(total);
    let mut states = Vec::with_capacity(total);
    let (mut i, mut j) = (0, 0);
    while i < real_t.len() || j < virtual_jumps.len() {
        let take_real = match (real_t.get(i), virtual_jumps.times.get(j)) {
            (Some(&r), Some(&v)) => {
                if r == v {
                    return Err(Error::DuplicateTime(r));
                }
                r < v
            }
            (Some(_), None) => true,
            _ => false,
        };
        if take_real {
            times.push(real_t[i]);
            states.push(real_s[i]);
            i += 1;
        } else {
            times.push(virtual_jumps.times[j]);
            states.push(virtual_jumps.states[j]);
            j += 1;
        }
    }
    Ok(UniformizedPath {
        v0: traj.initial_state(),
        times,
        states,
        interval,
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn sym2() -> RateMatrix {
        RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn transition_matrix_values() {
        let b = subordinated_transition_matrix(&RateMatrix::zeros(3), 1.0).unwrap();
        assert_eq!(b, DMatrix::identity(3, 3));
        let b = subordinated_transition_matrix(&sym2(), 2.0).unwrap();
        assert!(b.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let a3 = RateMatrix::from_rows(&[vec![-3.0, 1.0], vec![3.0, -1.0]]).unwrap();
        assert!(matches!(
            subordinated_transition_matrix(&a3, 2.0),
            Err(Error::DominatingRate { .. })
        ));
    }

    #[test]
    fn omega_multiplier_requires_gt_one() {
        assert!(OmegaMultiplier::new(1.0).is_err());
        assert!(OmegaMultiplier::new(0.5).is_err());
        assert_eq!(OmegaMultiplier::default().omega(&sym2()), 2.0);
    }

    #[test]
    fn zero_generator_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_uniformized(
            &RateMatrix::zeros(3),
            &InitialDistribution::uniform(3),
            iv(0.0, 3.0),
            4.0,
            &mut rng,
        )
        .unwrap();
        assert!(!p.times.is_empty());
        assert!(p.states.iter().all(|&s| s == p.v0));
        assert_eq!(thin(&p).n_jumps(), 0);
    }

    #[test]
    fn uniformized_event_count_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reps = 100_000;
        let pi0 = InitialDistribution::uniform(2);
        let n: Vec<f64> = (0..reps)
            .map(|_| {
                sample_uniformized(&sym2(), &pi0, iv(0.0, 2.0), 5.0, &mut rng)
                    .unwrap()
                    .times
                    .len() as f64
            })
            .collect();
        let mean = n.iter().sum::<f64>() / reps as f64;
        let se = (10.0 / reps as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn thin_hand_example() {
        let p = UniformizedPath {
            v0: 0,
            times: vec![1.0, 2.0, 3.0, 4.0],
            states: vec![0, 1, 1, 2],
            interval: iv(0.0, 5.0),
            omega: 1.0,
        };
        let t = thin(&p);
        assert_eq!(t.jump_times(), &[2.0, 4.0]);
        assert_eq!(t.jump_states(), &[1, 2]);
    }

    #[test]
    fn augment_hand_example() {
        let traj = Trajectory::new(0, vec![2.0], vec![1], iv(0.0, 4.0)).unwrap();
        let empty = augment(&traj, &VirtualJumps::default(), 1.0).unwrap();
        assert_eq!(empty.times, vec![2.0]);
        assert_eq!(empty.states, vec![1]);

        let u = VirtualJumps {
            times: vec![1.0, 3.0],
            states: vec![0, 1],
        };
        let p = augment(&traj, &u, 1.0).unwrap();
        assert_eq!(p.times, vec![1.0, 2.0, 3.0]);
        assert_eq!(p.states, vec![0, 1, 1]);
        assert_eq!(thin(&p), traj);

        let dup = VirtualJumps {
            times: vec![2.0],
            states: vec![1],
        };
        assert!(matches!(
            augment(&traj, &dup, 1.0),
            Err(Error::DuplicateTime(_))
        ));
        let bad = VirtualJumps {
            times: vec![1.0],
            states: vec![1],
        };
        assert!(augment(&traj, &bad, 1.0).is_err());
    }

    #[test]
    fn virtual_jump_rate_zero_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = Trajectory::constant(0, iv(0.0, 10.0));
        assert!(sample_virtual_jumps(&traj, &sym2(), 1.0, &mut rng).is_err());
        for _ in 0..100 {
            assert!(virtual_jumps_unchecked(&traj, &sym2(), 1.0, &mut rng).is_empty());
        }
    }

    #[test]
    fn virtual_jump_mean_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let traj = Trajectory::constant(0, iv(0.0, 10.0));
        let reps = 100_000;
        let total: usize = (0..reps)
            .map(|_| {
                sample_virtual_jumps(&traj, &sym2(), 2.0, &mut rng)
                    .unwrap()
                    .len()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        assert!(
            (mean - 10.0).abs() < 3.0 * (10.0 / reps as f64).sqrt(),
            "mean {mean}"
        );
    }
}
