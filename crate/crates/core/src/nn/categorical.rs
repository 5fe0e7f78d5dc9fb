use super::matrix::Matrix;

/// Row-wise categorical distributions given by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub log_probs: Matrix,
    pub entropy: Vec<f64>,
}

/// Max-subtracted log-softmax per row, plus the entropy of each row.
pub fn categorical_head(logits: &Matrix) -> Categorical {
    let (rows, cols) = logits.shape();
    let mut log_probs = Matrix::zeros(rows, cols);
    let mut entropy = Vec::with_capacity(rows);
    for r in 0..rows {
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = log_probs.row_mut(r);
        let mut h = 0.0;
        for (lp, v) in out.iter_mut().zip(z) {
            *lp = v - lse;
            let p = lp.exp();
            if p > 0.0 {
                h -= p * *lp;
            }
        }
        entropy.push(h.max(0.0));
    }
    Categorical { log_probs, entropy }
}

impl Categorical {
    pub fn rows(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn prob(&self, row: usize, action: usize) -> f64 {
        self.log_probs.get(row, action).exp()
    }

    /// Inverse-CDF sample of `row` given `u ∈ [0, 1)`.
    pub fn sample(&self, row: usize, u: f64) -> usize {
        let lp = self.log_probs.row(row);
        let mut acc = 0.0;
        for (a, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return a;
            }
        }
        lp.len() - 1
    }

    /// Gradient of `entropy[row]` with respect to the row's logits:
    /// `∂H/∂z_j = -p_j (log p_j + H)`.
    pub fn entropy_grad(&self, row: usize, out: &mut [f64]) {
        let h = self.entropy[row];
        for (o, lp) in out.iter_mut().zip(self.log_probs.row(row)) {
            let p = lp.exp();
            *o = -p * (lp + h);
        }
    }

    /// Gradient of `log_probs[row][action]` with respect to the row's logits:
    /// `1[j = a] - p_j`.
    pub fn log_prob_grad(&self, row: usize, action: usize, out: &mut [f64]) {
        for (j, (o, lp)) in out.iter_mut().zip(self.log_probs.row(row)).enumerate() {
            *o = if j == action { 1.0 } else { 0.0 } - lp.exp();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_two_way() {
        let c = categorical_head(&Matrix::from_rows(&[[0.0, 0.0]]));
        let half = 0.5f64.ln();
        assert!((c.log_probs.get(0, 0) - half).abs() < 1e-15);
        assert!((c.log_probs.get(0, 1) - half).abs() < 1e-15);
        assert!((c.entropy[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_do_not_overflow() {
        let c = categorical_head(&Matrix::from_rows(&[[1000.0, 0.0]]));
        assert!(c.log_probs.is_finite());
        assert!((c.prob(0, 0) - 1.0).abs() < 1e-12);
        assert!(c.entropy[0].abs() < 1e-12);
    }

    #[test]
    fn sample_follows_cdf() {
        let c = categorical_head(&Matrix::from_rows(&[[0.0, (3.0f64).ln()]]));
        assert_eq!(c.sample(0, 0.0), 0);
        assert_eq!(c.sample(0, 0.2499), 0);
        assert_eq!(c.sample(0, 0.2501), 1);
        assert_eq!(c.sample(0, 0.9999999), 1);
    }

    #[test]
    fn analytic_grads_match_finite_differences() {
        let z = [0.3, -1.2, 2.0];
        let c = categorical_head(&Matrix::from_rows(&[z]));
        let mut gh = [0.0; 3];
        let mut gl = [0.0; 3];
        c.entropy_grad(0, &mut gh);
        c.log_prob_grad(0, 2, &mut gl);
        let h = 1e-6;
        for j in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let cp = categorical_head(&Matrix::from_rows(&[zp]));
            let cm = categorical_head(&Matrix::from_rows(&[zm]));
            let dh = (cp.entropy[0] - cm.entropy[0]) / (2.0 * h);
            let dl = (cp.log_probs.get(0, 2) - cm.log_probs.get(0, 2)) / (2.0 * h);
            assert!((dh - gh[j]).abs() < 1e-8);
            assert!((dl - gl[j]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn rows_normalize(z in prop::collection::vec(-1e4f64..1e4, 2..6)) {
            let c = categorical_head(&Matrix::from_rows(&[z.clone()]));
            let total: f64 = (0..z.len()).map(|j| c.prob(0, j)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(c.entropy[0] >= 0.0);
        }

        #[test]
        fn entropy_matches_direct_summation(z in prop::collection::vec(-20f64..20.0, 2..6)) {
            // Oracle: naive softmax with no stabilization, safe for small logits.
            let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            let h: f64 = e.iter().map(|v| v / s).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
            let c = categorical_head(&Matrix::from_rows(&[z]));
            prop_assert!((c.entropy[0] - h).abs() < 1e-10);
        }
    }
}
