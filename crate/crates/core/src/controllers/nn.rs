use crate::domain::NnWeights;
use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Raw control output `sigm(w2 . relu(w1 x + b1) + b2)`.
pub fn nn_forward(x: &[f64], w: &NnWeights) -> Result<f64> {
    if x.len() != w.d_in {
        return Err(Error::Dimension {
            what: "NN input",
            expected: w.d_in,
            actual: x.len(),
        });
    }
    let mut z = w.b2;
    for (j, row) in w.w1.chunks_exact(w.d_in).enumerate() {
        let pre: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w.b1[j];
        z += w.w2[j] * pre.max(0.0);
    }
    Ok(sigmoid(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let w = NnWeights::zeros(12, 5);
        assert_eq!(nn_forward(&[0.3; 12], &w).unwrap(), 0.5);
    }

    #[test]
    fn output_bias_only() {
        let mut w = NnWeights::zeros(12, 5);
        w.b2 = 4.0;
        let r = nn_forward(&[1.0; 12], &w).unwrap();
        assert!((r - 0.982_013_790_037_908_5).abs() < 1e-15);
    }

    #[test]
    fn relu_kills_negative_hidden_units() {
        let mut w = NnWeights::zeros(3, 2);
        w.w1 = vec![-1.0; 6];
        w.b1 = vec![-0.5, -2.0];
        w.w2 = vec![7.0, -3.0];
        w.b2 = 0.25;
        let r = nn_forward(&[1.0, 2.0, 0.5], &w).unwrap();
        assert_eq!(r, sigmoid(0.25));
    }

    #[test]
    fn hand_computed_forward_pass() {
        let mut w = NnWeights::zeros(2, 2);
        w.w1 = vec![1.0, 2.0, -1.0, 0.5];
        w.b1 = vec![0.0, 1.0];
        w.w2 = vec![0.5, -1.0];
        w.b2 = 0.1;
        // hidden = relu([1 + 4, -1 + 1 + 1]) = [5, 1]; z = 2.5 - 1 + 0.1
        let r = nn_forward(&[1.0, 2.0], &w).unwrap();
        assert!((r - sigmoid(1.6)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let w = NnWeights::zeros(12, 5);
        assert!(matches!(nn_forward(&[0.0; 17], &w), Err(Error::Dimension { .. })));
    }
}
