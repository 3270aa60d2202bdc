//! Named parameters and first-order optimizers.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`, fan-in taken over all but the first axis.
    KaimingUniform,
    Zeros,
    Constant(f64),
}

impl Init {
    pub fn sample<T: Real, R: Rng + ?Sized>(&self, shape: &[usize], rng: &mut R) -> Tensor<T> {
        match *self {
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::Constant(c) => Tensor::full(shape.to_vec(), T::lit(c)),
            Init::KaimingUniform => {
                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                let bound = (6.0 / fan_in as f64).sqrt();
                Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.gen_range(-bound..bound)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub init: Init,
}

/// An ordered set of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, init: Init) -> Result<usize> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let idx = self.params.len();
        self.lookup.insert(name.clone(), idx);
        self.params.push(Parameter {
            name,
            tensor: tensor.with_requires_grad(true),
            init,
        });
        Ok(idx)
    }

    pub fn init<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<usize> {
        let t = init.sample(shape, rng);
        self.insert(name, t, init)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.index_of(name).map(move |i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Inserts every parameter into `graph` as a differentiable leaf, in order.
    pub fn bind(&self, graph: &mut Graph<T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| graph.leaf(p.tensor.clone(), true))
            .collect()
    }

    /// Copies gradients out of a graph after backward; parameters the loss
    /// never reached receive zeros.
    pub fn absorb_grads(&mut self, graph: &Graph<T>, bound: &[Var]) -> Result<()> {
        if bound.len() != self.params.len() {
            return Err(Error::invalid("bound variable list does not match the store"));
        }
        for (p, &v) in self.params.iter_mut().zip(bound) {
            let g = graph
                .grad(v)
                .map(<[T]>::to_vec)
                .unwrap_or_else(|| vec![T::zero(); p.tensor.numel()]);
            p.tensor.set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.clear_grad());
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    init: p.init,
                })
                .collect(),
            lookup: self.lookup.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: f64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    step_count: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update using each parameter's stored gradient; a missing
    /// gradient counts as zero.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        self.step_count += 1;
        let lr = T::lit(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Some(g) = p.tensor.grad().map(<[T]>::to_vec) else {
                        continue;
                    };
                    for (w, gv) in p.tensor.data_mut().iter_mut().zip(g) {
                        *w -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.is_empty() {
                    self.first_moment = params.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                if self.first_moment.len() != params.len() {
                    return Err(Error::invalid("optimizer state does not match parameter set"));
                }
                let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
                let t = self.step_count as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for ((p, m), v) in params
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    if m.len() != p.tensor.numel() {
                        return Err(Error::shape("adam moment", &[m.len()], p.tensor.shape()));
                    }
                    let g = p
                        .tensor
                        .grad()
                        .map(<[T]>::to_vec)
                        .unwrap_or_else(|| vec![T::zero(); m.len()]);
                    for i in 0..m.len() {
                        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p.tensor.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
