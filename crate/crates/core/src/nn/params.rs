use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cpu, tensor_f64};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with fan_in the first dim.
    FanIn,
    Const(f64),
}

/// Named trainable tensors with deterministic, seeded initialization.
///
/// Parameters are created on first request; a store loaded from disk hands
/// back the saved values instead, so building a model against a loaded store
/// reproduces the saved model.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    rng: ChaCha8Rng,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore")
            .field("params", &self.vars.len())
            .field("dtype", &self.dtype)
            .finish()
    }
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn get_or_init(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(var) = self.vars.get(name) {
            if var.dims() != shape {
                return Err(Error::Data(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    var.dims()
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Uniform(a) => (0..n).map(|_| self.rng.random_range(-a..=a)).collect(),
            Init::FanIn => {
                let a = 1.0 / (shape.first().copied().unwrap_or(1).max(1) as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-a..=a)).collect()
            }
            Init::Const(c) => vec![c; n],
        };
        let var = Var::from_tensor(&tensor_f64(data, shape, self.dtype)?)?;
        let tensor = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(tensor)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn named_vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of all parameter values.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (k, v) in &self.vars {
            if let Some(t) = snapshot.get(k) {
                v.set(t)?;
            }
        }
        Ok(())
    }

    /// Euclidean distance between the current values and `snapshot`.
    pub fn l2_distance(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<f64> {
        let mut total = 0.0;
        for (k, v) in &self.vars {
            let other = snapshot
                .get(k)
                .ok_or_else(|| Error::Data(format!("snapshot lacks {k}")))?;
            let d = (v.as_tensor() - other)?.sqr()?.sum_all()?;
            total += super::scalar(&d)?;
        }
        Ok(total.sqrt())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self> {
        let map = candle_core::safetensors::load(path, &cpu())
            .map_err(|e| Error::bad_checkpoint(path, e.to_string()))?;
        let dtype = map.values().next().map(|t| t.dtype()).unwrap_or(DType::F32);
        let mut vars = BTreeMap::new();
        for (k, t) in map {
            vars.insert(k, Var::from_tensor(&t)?);
        }
        Ok(ParamStore {
            vars,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}
