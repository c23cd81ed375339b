//! Feed-forward networks with hand-derived backpropagation, plus Adam.
//!
//! Parameter layout in [`Mlp::params`]: layers in order; within a layer the
//! `out × in` weight matrix row-major (one row per output unit), followed by
//! the `out` biases. Hidden layers apply the activation, the last layer is
//! linear.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` (tanh) or the
    /// pre-activation `z` (relu).
    fn grad(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(invalid("an MLP needs at least an input and an output dim"));
        }
        if layer_dims.contains(&0) {
            return Err(invalid("MLP layer dims must be >= 1"));
        }
        Ok(MlpSpec { layer_dims, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block within the flat parameter vector.
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_dims[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Activations recorded during a forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// A parameter set for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        Mlp { spec, params: vec![0.0; n] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(spec);
        for l in 0..net.spec.n_layers() {
            let (fan_in, fan_out) = (net.spec.layer_dims[l], net.spec.layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = net.spec.layer_offset(l);
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_flat(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        check_dim(spec.param_count(), params.len())?;
        check_finite(&params, "network parameters")?;
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.acts.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        check_dim(self.spec.input_dim(), x.len())?;
        let n_layers = self.spec.n_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let (din, dout) = (self.spec.layer_dims[l], self.spec.layer_dims[l + 1]);
            let off = self.spec.layer_offset(l);
            let w = &self.params[off..off + din * dout];
            let b = &self.params[off + din * dout..off + din * dout + dout];
            let input = &acts[l];
            let z: Vec<f64> = (0..dout)
                .map(|o| b[o] + w[o * din..(o + 1) * din].iter().zip(input).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            let a = if l + 1 < n_layers {
                z.iter().map(|v| self.spec.activation.apply(*v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        check_finite(acts.last().unwrap(), "network output")?;
        Ok(Trace { acts, pre })
    }

    /// Gradient of `upstreamᵀ·f(x)` w.r.t. parameters and input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.forward_trace(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let dx = self.backward_trace(&trace, upstream, &mut grad)?;
        Ok((grad, dx))
    }

    /// Backprop through a recorded trace, accumulating into `grad`.
    /// Returns the input gradient.
    pub fn backward_trace(&self, trace: &Trace, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        check_dim(self.spec.output_dim(), upstream.len())?;
        check_dim(self.params.len(), grad.len())?;
        check_finite(upstream, "upstream gradient")?;
        let n_layers = self.spec.n_layers();
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (din, dout) = (self.spec.layer_dims[l], self.spec.layer_dims[l + 1]);
            if l + 1 < n_layers {
                for ((d, z), a) in delta.iter_mut().zip(&trace.pre[l]).zip(&trace.acts[l + 1]) {
                    *d *= self.spec.activation.grad(*z, *a);
                }
            }
            let off = self.spec.layer_offset(l);
            let input = &trace.acts[l];
            for o in 0..dout {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * din..off + (o + 1) * din];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
                grad[off + din * dout + o] += d;
            }
            let w = &self.params[off..off + din * dout];
            let mut below = vec![0.0; din];
            for o in 0..dout {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (b, wv) in below.iter_mut().zip(&w[o * din..(o + 1) * din]) {
                    *b += d * wv;
                }
            }
            delta = below;
        }
        Ok(delta)
    }

    // ---- binary serialisation ----

    pub const MAGIC: &'static [u8; 8] = b"IBLMLP\0\0";
    pub const VERSION: u8 = 1;

    /// Little-endian: magic, version, activation code, `u32` dim count,
    /// `u32` dims, `u64` parameter count, `f64` parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.params.len());
        out.extend_from_slice(Self::MAGIC);
        out.push(Self::VERSION);
        out.push(self.spec.activation.code());
        out.extend_from_slice(&(self.spec.layer_dims.len() as u32).to_le_bytes());
        for d in &self.spec.layer_dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses one network from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = ByteReader { buf: bytes, pos: 0 };
        if r.take(8)? != Self::MAGIC {
            return Err(Error::Format("bad network magic".into()));
        }
        let version = r.take(1)?[0];
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported network version {version}")));
        }
        let activation = Activation::from_code(r.take(1)?[0])?;
        let n_dims = r.u32()? as usize;
        let layer_dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let spec = MlpSpec::new(layer_dims, activation)?;
        let n_params = r.u64()? as usize;
        if n_params != spec.param_count() {
            return Err(Error::Format("parameter count disagrees with layer dims".into()));
        }
        let params = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok((Mlp::from_flat(spec, params)?, r.pos))
    }
}

pub(crate) struct ByteReader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) -> Result<()> {
        check_dim(self.m.len(), params.len())?;
        check_dim(self.m.len(), grads.len())?;
        check_finite(grads, "gradient")?;
        if !(cfg.lr > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}
