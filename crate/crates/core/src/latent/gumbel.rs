use candle_core::{Device, Tensor, D};
use rand::Rng;

use crate::nn::tensor_f64;

/// Standard Gumbel noise with the dtype of `like`.
pub fn gumbel_noise<R: Rng + ?Sized>(like: &Tensor, rng: &mut R) -> candle_core::Result<Tensor> {
    let n = like.elem_count();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
            -(-u.ln()).ln()
        })
        .collect();
    tensor_f64(data, like.dims(), like.dtype())
}

/// Relaxed one-hot samples over the last dimension of `logits` with given noise.
///
/// With `hard`, the forward value is the exact one-hot of the argmax while
/// gradients follow the soft sample.
pub fn gumbel_softmax_with_noise(logits: &Tensor, noise: &Tensor, tau: f64, hard: bool) -> candle_core::Result<Tensor> {
    let soft = candle_nn::ops::softmax(&((logits + noise)? / tau)?, D::Minus1)?;
    if !hard {
        return Ok(soft);
    }
    let k = soft.dim(D::Minus1)?;
    let idx = soft.argmax(D::Minus1)?.flatten_all()?.to_vec1::<u32>()?;
    let mut one_hot = vec![0.0f64; idx.len() * k];
    for (row, &i) in idx.iter().enumerate() {
        one_hot[row * k + i as usize] = 1.0;
    }
    let hard_t = Tensor::from_vec(one_hot, soft.dims(), &Device::Cpu)?.to_dtype(soft.dtype())?;
    // soft - detach(soft) is exactly zero forward and identity backward.
    hard_t + (&soft - soft.detach())?
}

pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &Tensor,
    tau: f64,
    hard: bool,
    rng: &mut R,
) -> candle_core::Result<Tensor> {
    let noise = gumbel_noise(logits, rng)?;
    gumbel_softmax_with_noise(logits, &noise, tau, hard)
}
