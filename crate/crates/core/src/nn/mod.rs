//! Small recurrent building blocks on top of candle tensors.

mod layers;
mod optim;
mod params;

pub use layers::{pad_batch, Embedding, Gru, Linear, Lstm, PaddedBatch, SeqDecoder};
pub use optim::Trainer;
pub use params::{Init, ParamStore};

use candle_core::{DType, Device, Tensor};

pub(crate) fn cpu() -> Device {
    Device::Cpu
}

pub(crate) fn tensor_f64(data: Vec<f64>, shape: &[usize], dtype: DType) -> candle_core::Result<Tensor> {
    Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)
}

pub(crate) fn tensor_f32(data: Vec<f32>, shape: &[usize], dtype: DType) -> candle_core::Result<Tensor> {
    Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)
}

/// Row-major copy of a rank-2 tensor as f64.
pub(crate) fn to_rows(t: &Tensor) -> candle_core::Result<Vec<Vec<f64>>> {
    t.to_dtype(DType::F64)?.to_vec2::<f64>()
}

pub(crate) fn scalar(t: &Tensor) -> candle_core::Result<f64> {
    t.to_dtype(DType::F64)?.to_scalar::<f64>()
}

/// Tiny positive floor applied before `ln` on probabilities.
pub(crate) const PROB_FLOOR: f64 = 1e-30;

/// Clips the global gradient norm of `vars` to `max_norm` in place.
pub(crate) fn clip_grad_norm(
    grads: &mut candle_core::backprop::GradStore,
    vars: &[candle_core::Var],
    max_norm: f64,
) -> candle_core::Result<f64> {
    let mut total = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v) {
            total += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    let norm = total.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for v in vars {
            if let Some(g) = grads.get(v) {
                let scaled = (g * scale)?;
                grads.insert(v, scaled);
            }
        }
    }
    Ok(norm)
}

/// Stacks per-segment vectors `(S, H)` into per-example rows `(B, max_count, H)`.
///
/// Example `b` owns the next `counts[b]` segments in order. Missing slots are
/// zero and masked out.
pub(crate) fn group_segments(finals: &Tensor, counts: &[usize]) -> candle_core::Result<(Tensor, Tensor)> {
    let (s, h) = finals.dims2()?;
    let width = counts.iter().copied().max().unwrap_or(0).max(1);
    let padded = Tensor::cat(&[finals, &Tensor::zeros((1, h), finals.dtype(), finals.device())?], 0)?;
    let mut idx = Vec::with_capacity(counts.len() * width);
    let mut mask = Vec::with_capacity(counts.len() * width);
    let mut next = 0u32;
    for &c in counts {
        for i in 0..width {
            if i < c {
                idx.push(next + i as u32);
                mask.push(1.0f32);
            } else {
                idx.push(s as u32);
                mask.push(0.0);
            }
        }
        next += c as u32;
    }
    let idx = Tensor::from_vec(idx, counts.len() * width, &Device::Cpu)?;
    let rows = padded.index_select(&idx, 0)?.reshape((counts.len(), width, h))?;
    let mask = tensor_f32(mask, &[counts.len(), width], finals.dtype())?;
    Ok((rows, mask))
}
