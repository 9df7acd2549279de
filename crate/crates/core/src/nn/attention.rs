use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (_, c) = z.expect_2d("softmax input")?;
    let mut out = z.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    Ok(out)
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Gradient of the softmax input given the softmax output `s` and `ds`.
pub fn softmax_rows_backward(s: &Tensor, ds: &Tensor) -> Result<Tensor> {
    let (_, c) = s.expect_2d("softmax output")?;
    if s.shape() != ds.shape() {
        return Err(Error::Dimension("softmax gradient shape".into()));
    }
    let mut dz = ds.clone();
    for (drow, srow) in dz.data_mut().chunks_exact_mut(c).zip(s.data().chunks_exact(c)) {
        let dot: f64 = drow.iter().zip(srow).map(|(d, s)| d * s).sum();
        for (d, &sv) in drow.iter_mut().zip(srow) {
            *d = sv * (*d - dot);
        }
    }
    Ok(dz)
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    /// Post-softmax weights.
    pub weights: Tensor,
    scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGrad {
    pub dq: Tensor,
    pub dk: Tensor,
    pub dv: Tensor,
}

/// `softmax(Q K^T / sqrt(d_k)) V`.
pub fn classical_attention(q: &Tensor, k: &Tensor, v: &Tensor, d_k: usize) -> Result<(Tensor, AttentionCache)> {
    let (n, dq) = q.expect_2d("Q")?;
    let (m, dk) = k.expect_2d("K")?;
    let (mv, _) = v.expect_2d("V")?;
    if dq != dk || m != mv || n == 0 || d_k == 0 {
        return Err(Error::Dimension(format!(
            "attention shapes Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut scores = q.matmul_t(k)?;
    scores.scale(scale);
    let weights = softmax_rows(&scores)?;
    let out = weights.matmul(v)?;
    Ok((out, AttentionCache { weights, scale }))
}

pub fn classical_attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    cache: &AttentionCache,
    dout: &Tensor,
) -> Result<AttentionGrad> {
    let dv = cache.weights.t_matmul(dout)?;
    let dw = dout.matmul_t(v)?;
    let mut dscores = softmax_rows_backward(&cache.weights, &dw)?;
    dscores.scale(cache.scale);
    Ok(AttentionGrad {
        dq: dscores.matmul(k)?,
        dk: dscores.t_matmul(q)?,
        dv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_queries_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let z = Tensor::zeros(&[3, 2]);
        let (out, _) = classical_attention(&z, &z, &v, 2).unwrap();
        let means: Vec<f64> = (0..4).map(|c| (0..3).map(|r| v.get2(r, c)).sum::<f64>() / 3.0).collect();
        for r in 0..3 {
            for c in 0..4 {
                assert!((out.get2(r, c) - means[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_row_returns_value_row() {
        let q = Tensor::new(vec![1, 2], vec![0.3, -2.0]).unwrap();
        let k = Tensor::new(vec![1, 2], vec![1.0, 0.5]).unwrap();
        let v = Tensor::new(vec![1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        let (out, _) = classical_attention(&q, &k, &v, 2).unwrap();
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn matches_two_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let (out, _) = classical_attention(&q, &k, &v, 4).unwrap();
        for i in 0..3 {
            let scores: Vec<f64> = (0..3)
                .map(|j| (0..4).map(|c| q.get2(i, c) * k.get2(j, c)).sum::<f64>() / 2.0)
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..4 {
                let o: f64 = (0..3).map(|j| scores[j].exp() / z * v.get2(j, c)).sum();
                assert!((out.get2(i, c) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_shift_invariance_and_rows() {
        let z = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1000.0]).unwrap();
        let s = softmax_rows(&z).unwrap();
        for r in 0..2 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = z.map(|v| v + 17.0);
        assert!(softmax_rows(&shifted).unwrap().max_abs_diff(&s) < 1e-12);
    }
}
