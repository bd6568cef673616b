use candle_core::{DType, Device, Tensor, D};

use super::{tensor_f32, Init, ParamStore};
use crate::corpus::{BOS_ID, EOS_ID};
use crate::Result;

#[derive(Clone, Debug)]
pub struct Linear {
    w: Tensor,
    b: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, bias: bool) -> Result<Self> {
        let w = store.get_or_init(&format!("{name}.w"), &[input, output], Init::FanIn)?;
        let b = if bias {
            Some(store.get_or_init(&format!("{name}.b"), &[output], Init::Const(0.0))?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    pub fn weight(&self) -> &Tensor {
        &self.w
    }

    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let y = if x.rank() == 2 {
            x.matmul(&self.w)?
        } else {
            x.broadcast_matmul(&self.w)?
        };
        match &self.b {
            Some(b) => y.broadcast_add(b),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    table: Tensor,
    dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let table = store.get_or_init(&format!("{name}.table"), &[vocab, dim], Init::Uniform(0.1))?;
        Ok(Embedding { table, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.table.dim(0).unwrap_or(0)
    }

    /// `ids` of any shape (u32) to `shape ++ [dim]`.
    pub fn forward(&self, ids: &Tensor) -> candle_core::Result<Tensor> {
        let mut shape = ids.dims().to_vec();
        shape.push(self.dim);
        self.table.index_select(&ids.flatten_all()?, 0)?.reshape(shape)
    }
}

fn masked_update(prev: &Tensor, new: &Tensor, mask_t: &Tensor) -> candle_core::Result<Tensor> {
    prev.add(&(new - prev)?.broadcast_mul(mask_t)?)
}

fn sigmoid(x: &Tensor) -> candle_core::Result<Tensor> {
    // 1 / (1 + e^-x), written with primitive ops so every dtype has a backward pass.
    (x.neg()?.exp()? + 1.0)?.recip()
}

/// GRU with the usual reset/update gate layout.
#[derive(Clone, Debug)]
pub struct Gru {
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let a = 1.0 / (hidden as f64).sqrt();
        Ok(Gru {
            w_ih: store.get_or_init(&format!("{name}.w_ih"), &[input, 3 * hidden], Init::Uniform(a))?,
            w_hh: store.get_or_init(&format!("{name}.w_hh"), &[hidden, 3 * hidden], Init::Uniform(a))?,
            b_ih: store.get_or_init(&format!("{name}.b_ih"), &[3 * hidden], Init::Const(0.0))?,
            b_hh: store.get_or_init(&format!("{name}.b_hh"), &[3 * hidden], Init::Const(0.0))?,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input projection for all steps at once: `(B, T, I)` to `(B, T, 3H)`.
    pub fn project_inputs(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        x.broadcast_matmul(&self.w_ih)?.broadcast_add(&self.b_ih)
    }

    /// One step given the projected input `(B, 3H)`.
    pub fn step(&self, xp: &Tensor, h: &Tensor) -> candle_core::Result<Tensor> {
        let hh = self.hidden;
        let hp = h.matmul(&self.w_hh)?.broadcast_add(&self.b_hh)?;
        let r = sigmoid(&(xp.narrow(1, 0, hh)? + hp.narrow(1, 0, hh)?)?)?;
        let z = sigmoid(&(xp.narrow(1, hh, hh)? + hp.narrow(1, hh, hh)?)?)?;
        let n = (xp.narrow(1, 2 * hh, hh)? + r.mul(&hp.narrow(1, 2 * hh, hh)?)?)?.tanh()?;
        // h' = n + z * (h - n)
        n.add(&z.mul(&(h - &n)?)?)
    }

    /// Runs over `(B, T, I)`; padded steps (mask 0) carry the state through.
    /// Returns per-step outputs `(B, T, H)` and the final state `(B, H)`.
    pub fn run(&self, x: &Tensor, mask: &Tensor, h0: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
        let (_, t, _) = x.dims3()?;
        let xp = self.project_inputs(x)?;
        let mut h = h0.clone();
        let mut outs = Vec::with_capacity(t);
        for i in 0..t {
            let new = self.step(&xp.narrow(1, i, 1)?.squeeze(1)?, &h)?;
            h = masked_update(&h, &new, &mask.narrow(1, i, 1)?)?;
            outs.push(h.clone());
        }
        Ok((Tensor::stack(&outs, 1)?, h))
    }
}

/// LSTM with gate order input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    w_ih: Tensor,
    w_hh: Tensor,
    b: Tensor,
    hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let a = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.get_or_init(&format!("{name}.w_ih"), &[input, 4 * hidden], Init::Uniform(a))?;
        let w_hh = store.get_or_init(&format!("{name}.w_hh"), &[hidden, 4 * hidden], Init::Uniform(a))?;
        let b = store.get_or_init(&format!("{name}.b"), &[4 * hidden], Init::Const(0.0))?;
        Ok(Lstm { w_ih, w_hh, b, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn run(&self, x: &Tensor, mask: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
        let (b, t, _) = x.dims3()?;
        let hh = self.hidden;
        let xp = x.broadcast_matmul(&self.w_ih)?.broadcast_add(&self.b)?;
        let mut h = Tensor::zeros((b, hh), x.dtype(), x.device())?;
        let mut c = h.clone();
        let mut outs = Vec::with_capacity(t);
        for i in 0..t {
            let g = (xp.narrow(1, i, 1)?.squeeze(1)? + h.matmul(&self.w_hh)?)?;
            let ig = sigmoid(&g.narrow(1, 0, hh)?)?;
            // +1 on the forget gate keeps early gradients flowing.
            let fg = sigmoid(&(g.narrow(1, hh, hh)? + 1.0)?)?;
            let cg = g.narrow(1, 2 * hh, hh)?.tanh()?;
            let og = sigmoid(&g.narrow(1, 3 * hh, hh)?)?;
            let c_new = (fg.mul(&c)? + ig.mul(&cg)?)?;
            let h_new = og.mul(&c_new.tanh()?)?;
            let m = mask.narrow(1, i, 1)?;
            c = masked_update(&c, &c_new, &m)?;
            h = masked_update(&h, &h_new, &m)?;
            outs.push(h.clone());
        }
        Ok((Tensor::stack(&outs, 1)?, h))
    }
}

/// Right-padded id batch with a float mask.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub ids: Tensor,
    pub mask: Tensor,
    pub lengths: Vec<usize>,
    pub width: usize,
}

/// Pads `seqs` with PAD (id 0) to a common width of at least 1.
pub fn pad_batch(seqs: &[Vec<u32>], dtype: DType) -> Result<PaddedBatch> {
    let width = seqs.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let mut ids = Vec::with_capacity(seqs.len() * width);
    let mut mask = Vec::with_capacity(seqs.len() * width);
    for s in seqs {
        for i in 0..width {
            ids.push(s.get(i).copied().unwrap_or(0));
            mask.push(if i < s.len() { 1.0f32 } else { 0.0 });
        }
    }
    let shape = [seqs.len(), width];
    Ok(PaddedBatch {
        ids: Tensor::from_vec(ids, &shape[..], &Device::Cpu)?,
        mask: tensor_f32(mask, &shape, dtype)?,
        lengths: seqs.iter().map(Vec::len).collect(),
        width,
    })
}

/// Teacher-forced GRU language model over a vocabulary, started from a given state.
#[derive(Clone, Debug)]
pub struct SeqDecoder {
    gru: Gru,
    out: Linear,
}

impl SeqDecoder {
    pub fn new(store: &mut ParamStore, name: &str, embed: usize, hidden: usize, vocab: usize) -> Result<Self> {
        Ok(SeqDecoder {
            gru: Gru::new(store, &format!("{name}.gru"), embed, hidden)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, vocab, true)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    /// Summed NLL of `BOS t ... EOS` continuations per sequence, plus token counts.
    /// Each target contributes its tokens and the closing EOS.
    pub fn nll(&self, emb: &Embedding, h0: &Tensor, targets: &[Vec<u32>]) -> Result<(Tensor, Vec<usize>)> {
        let dtype = h0.dtype();
        let inputs: Vec<Vec<u32>> = targets
            .iter()
            .map(|t| std::iter::once(BOS_ID).chain(t.iter().copied()).collect())
            .collect();
        let golds: Vec<Vec<u32>> = targets
            .iter()
            .map(|t| t.iter().copied().chain(std::iter::once(EOS_ID)).collect())
            .collect();
        let inp = pad_batch(&inputs, dtype)?;
        let gold = pad_batch(&golds, dtype)?;
        let (states, _) = self.gru.run(&emb.forward(&inp.ids)?, &inp.mask, h0)?;
        let logp = candle_nn::ops::log_softmax(&self.out.forward(&states)?, D::Minus1)?;
        let picked = logp.gather(&gold.ids.unsqueeze(2)?, 2)?.squeeze(2)?;
        let per_seq = picked.mul(&gold.mask)?.sum(1)?.neg()?;
        Ok((per_seq, gold.lengths))
    }

    /// Greedy continuation from `h0` (single sequence, `(1, H)`), stopping at EOS.
    pub fn greedy(&self, emb: &Embedding, h0: &Tensor, max_len: usize) -> Result<Vec<u32>> {
        let mut h = h0.clone();
        let mut prev = BOS_ID;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let x = emb.forward(&Tensor::new(&[prev], &Device::Cpu)?)?;
            let xp = x.matmul(&self.gru.w_ih)?.broadcast_add(&self.gru.b_ih)?;
            h = self.gru.step(&xp, &h)?;
            let next = self.out.forward(&h)?.argmax(D::Minus1)?.to_vec1::<u32>()?[0];
            if next == EOS_ID {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }
}
