//! Matrix exponential by scaling and squaring with the degree-13 diagonal
//! Padé approximant (Higham 2005).

use nalgebra::DMatrix;

use crate::mjp::RateMatrix;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// theta_13 from Higham's backward error analysis.
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a * t)` for a square matrix with finite entries.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    assert!(a.is_square(), "matrix exponential needs a square matrix");
    let n = a.nrows();
    let mut x = a * t;
    let norm = one_norm(&x);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 0 {
        x /= 2f64.powi(squarings);
    }
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9])
        + &x6 * b[7]
        + &x4 * b[5]
        + &x2 * b[3]
        + &id * b[1];
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8])
        + &x6 * b[6]
        + &x4 * b[4]
        + &x2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Transition probabilities `P_t = exp(A t)` of a generator, with rounding
/// negatives clipped to zero. `P_t[(to, from)]`.
pub fn transition_probabilities(a: &RateMatrix, t: f64) -> DMatrix<f64> {
    let mut p = matrix_exponential(a.as_matrix(), t);
    p.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
    p
}
