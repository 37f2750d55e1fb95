//! Elementwise and rowwise kernels shared by the tape and the inference
//! paths.

/// Numerically stable softmax of one row, in place.
pub fn softmax_row_slice(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable log-softmax of one row, in place.
pub fn log_softmax_row_slice(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for v in row.iter_mut() {
        *v -= lse;
    }
}

pub fn relu_in_place(data: &mut [f64]) {
    for v in data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub fn tanh_in_place(data: &mut [f64]) {
    for v in data.iter_mut() {
        *v = v.tanh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut row = vec![0.0, 0.0];
        softmax_row_slice(&mut row);
        assert_eq!(row, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut row = vec![1000.0, 1000.0, 999.0];
        softmax_row_slice(&mut row);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let logits = vec![0.3, -1.2, 2.5, 0.0];
        let mut a = logits.clone();
        softmax_row_slice(&mut a);
        let mut b = logits;
        log_softmax_row_slice(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.ln() - y).abs() < 1e-12);
        }
    }
}
