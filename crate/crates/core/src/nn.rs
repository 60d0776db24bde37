//! Parameter storage, Adam and the handful of layers both models are built from.
//!
//! Parameters are candle `Var`s created from a seeded ChaCha stream, so model
//! initialization is reproducible independently of candle's own RNG. Layers
//! hold tensor handles that share storage with those vars; optimizer updates
//! land in place.

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::spectral::reflect_index;

/// A named tensor in host memory; the exchange format for checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct HostTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: HostData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HostData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl HostTensor {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Result<Self> {
        let flat = t.flatten_all()?;
        let data = match t.dtype() {
            DType::F64 => HostData::F64(flat.to_vec1::<f64>()?),
            _ => HostData::F32(flat.to_dtype(DType::F32)?.to_vec1::<f32>()?),
        };
        Ok(Self {
            name: name.into(),
            shape: t.dims().to_vec(),
            data,
        })
    }

    pub fn to_tensor(&self, dtype: DType) -> Result<Tensor> {
        let t = match &self.data {
            HostData::F32(v) => Tensor::from_slice(v, self.shape.as_slice(), &Device::Cpu)?,
            HostData::F64(v) => Tensor::from_slice(v, self.shape.as_slice(), &Device::Cpu)?,
        };
        Ok(t.to_dtype(dtype)?)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered, named trainable parameters of one model.
#[derive(Debug)]
pub struct ParamStore {
    dtype: DType,
    params: Vec<(String, Var)>,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            dtype,
            params: Vec::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn insert(&mut self, name: &str, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let handle = var.as_tensor().clone();
        self.params.push((name.to_string(), var));
        Ok(handle)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        self.insert(name, values, shape)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, values, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        self.insert(name, vec![value; n], shape)
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.params.iter().map(|(_, v)| v)
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// SHA-256 over names and raw parameter values.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for t in self.export()? {
            h.update(t.name.as_bytes());
            match &t.data {
                HostData::F32(v) => v.iter().for_each(|x| h.update(x.to_le_bytes())),
                HostData::F64(v) => v.iter().for_each(|x| h.update(x.to_le_bytes())),
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn export(&self) -> Result<Vec<HostTensor>> {
        self.params
            .iter()
            .map(|(n, v)| HostTensor::from_tensor(n.clone(), v.as_tensor()))
            .collect()
    }

    /// Overwrites every parameter in place from `tensors` (matched by name).
    pub fn import(&self, tensors: &[HostTensor]) -> Result<()> {
        for (name, var) in &self.params {
            let t = tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))?;
            if t.shape != var.dims() {
                return Err(Error::Shape(format!(
                    "parameter {name}: stored shape {:?}, model shape {:?}",
                    t.shape,
                    var.dims()
                )));
            }
            var.set(&t.to_tensor(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, var) in &self.params {
            let bad = var.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?
                .iter()
                .any(|v| !v.is_finite());
            if bad {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(())
    }
}

/// Adam with bias correction; moment buffers are exposed for checkpointing.
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, betas: (f64, f64), eps: f64) -> Result<Self> {
        let zeros = || -> Result<Vec<Tensor>> {
            store.vars().map(|v| Ok(v.as_tensor().zeros_like()?)).collect()
        };
        Ok(Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            t: 0,
            m: zeros()?,
            v: zeros()?,
        })
    }

    /// One update of every parameter that has a gradient in `grads`.
    pub fn step(&mut self, store: &ParamStore, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, var) in store.vars().enumerate() {
            let Some(g) = grads.get(var) else { continue };
            let m = ((&self.m[i] * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            let v = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&m / c1)?;
            let denom = ((&v / c2)?.sqrt()? + self.eps)?;
            let update = ((m_hat / denom)? * self.lr)?;
            var.set(&(var.as_tensor() - update)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str) -> Result<Vec<HostTensor>> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            out.push(HostTensor::from_tensor(format!("{prefix}/m/{i}"), m)?);
            out.push(HostTensor::from_tensor(format!("{prefix}/v/{i}"), v)?);
        }
        Ok(out)
    }

    pub fn import(&mut self, prefix: &str, tensors: &[HostTensor], state: &AdamState) -> Result<()> {
        let dtype = self.m.first().map(|t| t.dtype()).unwrap_or(DType::F32);
        for i in 0..self.m.len() {
            let find = |kind: &str| {
                let name = format!("{prefix}/{kind}/{i}");
                tensors
                    .iter()
                    .find(|t| t.name == name)
                    .ok_or_else(|| Error::Shape(format!("missing optimizer tensor {name}")))
            };
            self.m[i] = find("m")?.to_tensor(dtype)?;
            self.v[i] = find("v")?.to_tensor(dtype)?;
        }
        self.t = state.t;
        self.lr = state.lr;
        Ok(())
    }

    pub fn state(&self) -> AdamState {
        AdamState { t: self.t, lr: self.lr }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub lr: f64,
}

/// 1-D convolution over `(batch, channels, time)`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride 1, "same" padding for odd kernels.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation,
            groups: 1,
            padding: (kernel * dilation - dilation) / 2,
        }
    }
}

/// How conv weights are drawn.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual framework default.
    FanIn,
    Normal(f64),
}

impl Conv1d {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, init: Init, rng: &mut ChaCha8Rng) -> Result<Self> {
        if spec.in_ch % spec.groups != 0 || spec.out_ch % spec.groups != 0 {
            return Err(Error::Config(format!(
                "{name}: channels {}->{} not divisible by groups {}",
                spec.in_ch, spec.out_ch, spec.groups
            )));
        }
        let shape = [spec.out_ch, spec.in_ch / spec.groups, spec.kernel];
        let fan_in = (spec.in_ch / spec.groups * spec.kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = match init {
            Init::FanIn => store.uniform(&format!("{name}.weight"), &shape, bound, rng)?,
            Init::Normal(std) => store.normal(&format!("{name}.weight"), &shape, std, rng)?,
        };
        let bias = store.uniform(&format!("{name}.bias"), &[spec.out_ch], bound, rng)?;
        Ok(Self {
            weight,
            bias: Some(bias),
            stride: spec.stride,
            padding: spec.padding,
            dilation: spec.dilation,
            groups: spec.groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv1d(x, &self.weight, self.padding, self.stride, self.dilation, self.groups)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, (), 1))?)?),
            None => Ok(y),
        }
    }
}

/// 1-D cross-correlation over `(batch, channels, time)` with zero padding,
/// lowered to a gather (im2col) and a matmul.
///
/// candle's own conv op is not used because its backward pass is wrong for
/// batches larger than one.
pub fn conv1d(
    x: &Tensor,
    weight: &Tensor,
    padding: usize,
    stride: usize,
    dilation: usize,
    groups: usize,
) -> Result<Tensor> {
    let (b, c_in, len) = x.dims3()?;
    let (c_out, c_in_g, k) = weight.dims3()?;
    if groups == 0 || c_in != c_in_g * groups || c_out % groups != 0 {
        return Err(Error::Shape(format!(
            "conv1d: input {:?}, kernel {:?}, groups {groups}",
            x.dims(),
            weight.dims()
        )));
    }
    let span = dilation * (k - 1) + 1;
    let padded = len + 2 * padding;
    if padded < span {
        return Err(Error::Shape(format!(
            "conv1d: input length {len} (padding {padding}) shorter than kernel span {span}"
        )));
    }
    let l_out = (padded - span) / stride + 1;
    let x = if padding > 0 {
        x.pad_with_zeros(D::Minus1, padding, padding)?.contiguous()?
    } else {
        x.contiguous()?
    };
    let idx: Vec<u32> = (0..l_out)
        .flat_map(|t| (0..k).map(move |j| (t * stride + j * dilation) as u32))
        .collect();
    let idx = Tensor::from_vec(idx, l_out * k, x.device())?;
    let cols = x
        .index_select(&idx, 2)?
        .reshape((b, c_in, l_out, k))?
        .permute((0, 2, 1, 3))?;
    let c_out_g = c_out / groups;
    let mut outs = Vec::with_capacity(groups);
    for g in 0..groups {
        let xg = cols
            .narrow(2, g * c_in_g, c_in_g)?
            .contiguous()?
            .reshape((b, l_out, c_in_g * k))?;
        let wg = weight.narrow(0, g * c_out_g, c_out_g)?.reshape((c_out_g, c_in_g * k))?;
        outs.push(xg.broadcast_matmul(&wg.t()?)?);
    }
    let y = if groups == 1 { outs.pop().expect("one group") } else { Tensor::cat(&outs, 2)? };
    Ok(y.transpose(1, 2)?.contiguous()?)
}

/// Transposed 1-D convolution (stride `factor`, kernel `k`, padding
/// `(k - factor) / 2`), evaluated as zero insertion followed by a stride-1
/// convolution. Output length is exactly `factor * input length`.
#[derive(Debug, Clone)]
pub struct Upsample {
    pub conv: Conv1d,
    pub factor: usize,
}

impl Upsample {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        factor: usize,
        kernel: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if kernel < factor || (kernel - factor) % 2 != 0 {
            return Err(Error::Config(format!(
                "{name}: kernel {kernel} must be >= factor {factor} with even difference"
            )));
        }
        let transposed_padding = (kernel - factor) / 2;
        let spec = ConvSpec {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation: 1,
            groups: 1,
            padding: kernel - 1 - transposed_padding,
        };
        Ok(Self {
            conv: Conv1d::new(store, name, spec, init, rng)?,
            factor,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.conv.forward(&zero_insert(x, self.factor)?)
    }
}

/// Inserts `factor - 1` zeros between consecutive time steps:
/// length `L` becomes `(L - 1) * factor + 1`.
pub fn zero_insert(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 1 {
        return Ok(x.clone());
    }
    let (b, c, l) = x.dims3()?;
    let zeros = Tensor::zeros((b, c, l, factor - 1), x.dtype(), x.device())?;
    let spread = Tensor::cat(&[&x.unsqueeze(3)?, &zeros], 3)?.reshape((b, c, l * factor))?;
    Ok(spread.narrow(2, 0, (l - 1) * factor + 1)?)
}

/// Mirror-pads the last axis.
pub fn reflect_pad(x: &Tensor, left: usize, right: usize) -> Result<Tensor> {
    if left == 0 && right == 0 {
        return Ok(x.clone());
    }
    let len = x.dim(D::Minus1)?;
    let idx: Vec<u32> = (-(left as i64)..(len + right) as i64)
        .map(|i| reflect_index(i, len) as u32)
        .collect();
    let idx = Tensor::from_vec(idx, len + left + right, x.device())?;
    Ok(x.index_select(&idx, x.rank() - 1)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Dense layer over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Ok(Self {
            weight: store.uniform(&format!("{name}.weight"), &[out_dim, in_dim], bound, rng)?,
            bias: store.uniform(&format!("{name}.bias"), &[out_dim], bound, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Layer normalization over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.gamma"), &[dim], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[dim], 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Lookup table indexed by `u32` ids.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            table: store.normal(&format!("{name}.table"), &[n, dim], (dim as f64).powf(-0.5), rng)?,
        })
    }

    pub fn forward(&self, ids: &[u32]) -> Result<Tensor> {
        let n = self.table.dim(0)?;
        if let Some(bad) = ids.iter().find(|&&i| i as usize >= n) {
            return Err(Error::Data(format!("id {bad} outside table of {n}")));
        }
        let idx = Tensor::from_slice(ids, ids.len(), self.table.device())?;
        Ok(self.table.index_select(&idx, 0)?)
    }
}

/// Inverted dropout with a mask drawn from `rng`; identity when `p == 0`.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Numerically stable softmax over the last axis built from differentiable ops.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

/// Scalar value of a rank-0 tensor as f64.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
