use candle_core::Tensor;

use crate::nn::PROB_FLOOR;

/// Output distribution of one decoding step, over the extended vocabulary
/// (model vocabulary followed by out-of-vocabulary memory tokens).
#[derive(Clone, Debug, PartialEq)]
pub struct CopyState {
    /// Attention over memory positions.
    pub alpha: Vec<f64>,
    /// Weight of the vocabulary distribution.
    pub gate: f64,
    pub p_vocab: Vec<f64>,
    pub p_ptr: Vec<f64>,
    pub mixture: Vec<f64>,
}

/// `gate * p_vocab + (1 - gate) * p_ptr`, where `p_ptr[w]` sums the attention
/// of every memory position holding `w`.
pub fn mix_copy(p_vocab: &[f64], alpha: &[f64], gate: f64, memory_ids: &[u32], extended_size: usize) -> CopyState {
    let size = extended_size.max(p_vocab.len());
    let mut p_ptr = vec![0.0; size];
    for (a, &w) in alpha.iter().zip(memory_ids) {
        p_ptr[w as usize] += a;
    }
    let mixture = (0..size)
        .map(|w| gate * p_vocab.get(w).copied().unwrap_or(0.0) + (1.0 - gate) * p_ptr[w])
        .collect();
    CopyState {
        alpha: alpha.to_vec(),
        gate,
        p_vocab: p_vocab.to_vec(),
        p_ptr,
        mixture,
    }
}

/// Mean negative log of gold-token probabilities `(B, T)` over unmasked steps.
pub fn mean_token_nll(probs: &Tensor, mask: &Tensor) -> candle_core::Result<Tensor> {
    let nll = probs.clamp(PROB_FLOOR, f64::INFINITY)?.log()?.neg()?;
    let n = mask.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    nll.mul(mask)?.sum_all()? / n.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn gate_one_is_vocab() {
        let s = mix_copy(&[0.2, 0.8], &[1.0], 1.0, &[0], 2);
        assert_eq!(s.mixture, vec![0.2, 0.8]);
    }

    #[test]
    fn gate_zero_copies() {
        let s = mix_copy(&[0.2, 0.3, 0.5], &[1.0], 0.0, &[1], 3);
        assert_eq!(s.mixture, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn hand_mixture() {
        // vocab {a, b, c}; context [c].
        let s = mix_copy(&[0.5, 0.5, 0.0], &[1.0], 0.6, &[2], 3);
        let want = [0.3, 0.3, 0.4];
        for (g, w) in s.mixture.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_vocab_slot() {
        let s = mix_copy(&[0.5, 0.5], &[0.25, 0.75], 0.5, &[1, 2], 3);
        assert_eq!(s.p_ptr, vec![0.0, 0.25, 0.75]);
        assert!((s.mixture.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn nll(p: Vec<f64>, m: Vec<f64>, t: usize) -> f64 {
        let p = Tensor::from_vec(p, (1, t), &Device::Cpu).unwrap();
        let m = Tensor::from_vec(m, (1, t), &Device::Cpu).unwrap();
        mean_token_nll(&p, &m).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn token_nll_examples() {
        assert_eq!(nll(vec![1.0, 1.0], vec![1.0, 1.0], 2), 0.0);
        assert!((nll(vec![0.5, 0.25], vec![1.0, 1.0], 2) - 1.0397).abs() < 1e-4);
        assert!((nll(vec![0.5, 0.25], vec![1.0, 1.0], 2) - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        let s = 7.0;
        assert!((nll(vec![1.0 / s, 1.0 / s, 0.3], vec![1.0, 1.0, 0.0], 3) - s.ln()).abs() < 1e-12);
    }
}
