//! Weight initializers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Orthogonal init scaled by `gain`: QR-style orthonormalization (modified
/// Gram-Schmidt) of a standard-normal matrix. For rows > cols the columns
/// are orthonormal, and vice versa.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let (n, m, transpose) = if rows >= cols { (rows, cols, false) } else { (cols, rows, true) };
    // n x m with n >= m; orthonormalize the m columns
    let mut cols_data: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
        .collect();
    for j in 0..m {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols_data[j][i] * cols_data[k][i]).sum();
            for i in 0..n {
                cols_data[j][i] -= dot * cols_data[k][i];
            }
        }
        let norm: f64 = cols_data[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        // a zero column after projection is vanishingly unlikely; renormalize
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for v in cols_data[j].iter_mut() {
            *v *= inv;
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { cols_data[r][c] } else { cols_data[c][r] };
            out.set(r, c, gain * v);
        }
    }
    out
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = orthogonal(8, 4, 1.0, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..8).map(|i| q.get(i, a) * q.get(i, b)).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "col {a} . col {b} = {dot}");
            }
        }
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = glorot_uniform(10, 20, &mut rng);
        let limit = (6.0 / 30.0f64).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }
}
