use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Checkpointed parameter layout version.
pub const PARAMS_VERSION: u32 = 1;

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubNetwork {
    Encoder,
    Decoder,
    Sampler,
}

impl SubNetwork {
    fn of_name(name: &str) -> Result<Self> {
        match name.split('.').next() {
            Some("encoder") => Ok(SubNetwork::Encoder),
            Some("decoder") => Ok(SubNetwork::Decoder),
            Some("sampler") => Ok(SubNetwork::Sampler),
            _ => Err(Error::Contract(format!("parameter '{name}' has no sub-network prefix"))),
        }
    }
}

/// Parameter groups that can be counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Sampler,
    /// Decoder plus sampling layer.
    DecoderTotal,
    All,
}

impl ParamGroup {
    fn includes(self, s: SubNetwork) -> bool {
        match self {
            ParamGroup::Encoder => s == SubNetwork::Encoder,
            ParamGroup::Decoder => s == SubNetwork::Decoder,
            ParamGroup::Sampler => s == SubNetwork::Sampler,
            ParamGroup::DecoderTotal => s != SubNetwork::Encoder,
            ParamGroup::All => true,
        }
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(ParamGroup::Encoder),
            "decoder" => Ok(ParamGroup::Decoder),
            "sampler" => Ok(ParamGroup::Sampler),
            "decoder_total" => Ok(ParamGroup::DecoderTotal),
            "all" => Ok(ParamGroup::All),
            other => Err(Error::Contract(format!("unknown sub-network '{other}'"))),
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Decoder => "decoder",
            ParamGroup::Sampler => "sampler",
            ParamGroup::DecoderTotal => "decoder_total",
            ParamGroup::All => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// `None` until the first `zero_grad`.
    pub grad: Option<Vec<f64>>,
    pub subnet: SubNetwork,
}

/// Named learnable tensors, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    pub version: u32,
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams {
            version: PARAMS_VERSION,
            ..Default::default()
        }
    }

    /// Adds a tensor; names must be unique and carry a sub-network prefix.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name '{name}'")));
        }
        let subnet = SubNetwork::of_name(name)?;
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
            subnet,
        });
        self.index.insert(name.to_string(), self.params.len() - 1);
        Ok(self.params.len() - 1)
    }

    /// Uniform fan-in initialization in `±sqrt(gain·3/fan_in)`; `gain = 2`
    /// matches He scaling for ReLU inputs.
    pub(crate) fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let bound = (gain * 3.0 / fan_in as f64).sqrt();
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound));
        self.insert(name, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no parameter named '{name}'")))
    }

    pub fn by_name(&self, name: &str) -> Result<&Param> {
        Ok(&self.params[self.index_of(name)?])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Number of scalar entries in the group.
    pub fn parameter_count(&self, group: ParamGroup) -> usize {
        self.params
            .iter()
            .filter(|p| group.includes(p.subnet))
            .map(|p| p.value.len())
            .sum()
    }

    /// Resets every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            match &mut p.grad {
                Some(g) => g.fill(0.0),
                None => p.grad = Some(vec![0.0; p.value.len()]),
            }
        }
    }

    /// Adds `grads` (parameter index, gradient) into the gradient buffers.
    pub fn accumulate(&mut self, grads: &[(usize, Vec<f64>)]) -> Result<()> {
        for (i, g) in grads {
            let p = &mut self.params[*i];
            if g.len() != p.value.len() {
                return Err(Error::Dimension(format!(
                    "gradient of length {} for parameter '{}' of size {}",
                    g.len(),
                    p.name,
                    p.value.len()
                )));
            }
            let buf = p.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (b, v) in buf.iter_mut().zip(g) {
                *b += v;
            }
        }
        Ok(())
    }
}
