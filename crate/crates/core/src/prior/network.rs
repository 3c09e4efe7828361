//! Time-conditioned convolutional velocity network, executed by a small graph
//! interpreter.
//!
//! Weight file layout: `RCFLOWNN`, version byte, little-endian `u32` header
//! length, UTF-8 JSON [`WeightHeader`], then a blob of little-endian `f32`
//! tensors addressed by byte offset from the start of the blob. Tensors are
//! row-major; convolution kernels are `(out_ch, in_ch, k_h, k_w)` and linear
//! weights `(out_features, in_features)`.
//!
//! The graph reads two named values: `x`, the state split into real and
//! imaginary planes `[2, n_r, n_t]`, and `temb`, the sinusoidal embedding of
//! `t`. Every layer writes a value under its own name.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::prior::{check_time, VelocityField};

pub const WEIGHT_MAGIC: [u8; 8] = *b"RCFLOWNN";
pub const WEIGHT_VERSION: u8 = 1;
const GROUP_NORM_EPS: f64 = 1e-5;
const INPUT: &str = "x";
const TIME: &str = "temb";

const KNOWN_KINDS: &[&str] = &[
    "conv2d",
    "downsample",
    "group_norm",
    "silu",
    "gelu",
    "scale_shift",
    "linear",
    "upsample",
    "concat",
    "add",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the tensor blob.
    pub offset: usize,
    pub dtype: String,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    /// `[2, n_r, n_t]`. When absent the spatial size is taken from each
    /// evaluated state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<[usize; 3]>,
    pub time_embed_dim: usize,
    pub graph: Vec<Value>,
    pub tensors: Vec<TensorEntry>,
    /// Value returned by the graph; defaults to the last layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Hex SHA-256 of the tensor blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blob_sha256: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerSpec {
    Conv2d {
        name: String,
        input: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        weight: String,
        #[serde(default)]
        bias: Option<String>,
    },
    Downsample {
        name: String,
        input: String,
        in_ch: usize,
        out_ch: usize,
        weight: String,
        #[serde(default)]
        bias: Option<String>,
    },
    GroupNorm {
        name: String,
        input: String,
        channels: usize,
        groups: usize,
        weight: String,
        bias: String,
    },
    Silu {
        name: String,
        input: String,
    },
    Gelu {
        name: String,
        input: String,
    },
    ScaleShift {
        name: String,
        input: String,
        cond: String,
    },
    Linear {
        name: String,
        input: String,
        in_features: usize,
        out_features: usize,
        weight: String,
        #[serde(default)]
        bias: Option<String>,
    },
    Upsample {
        name: String,
        input: String,
    },
    Concat {
        name: String,
        inputs: Vec<String>,
    },
    Add {
        name: String,
        inputs: Vec<String>,
    },
}

impl LayerSpec {
    fn name(&self) -> &str {
        match self {
            LayerSpec::Conv2d { name, .. }
            | LayerSpec::Downsample { name, .. }
            | LayerSpec::GroupNorm { name, .. }
            | LayerSpec::Silu { name, .. }
            | LayerSpec::Gelu { name, .. }
            | LayerSpec::ScaleShift { name, .. }
            | LayerSpec::Linear { name, .. }
            | LayerSpec::Upsample { name, .. }
            | LayerSpec::Concat { name, .. }
            | LayerSpec::Add { name, .. } => name,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Map { c: usize, h: usize, w: usize },
    Vector(usize),
}

impl Shape {
    fn dims(self) -> (usize, usize, usize) {
        match self {
            Shape::Map { c, h, w } => (c, h, w),
            Shape::Vector(d) => (d, 1, 1),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Map { c, h, w } => write!(f, "[{c}, {h}, {w}]"),
            Shape::Vector(d) => write!(f, "[{d}]"),
        }
    }
}

type Tensor = Arc<[f64]>;

#[derive(Clone, Debug)]
enum Op {
    Conv { input: usize, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, weight: Tensor, bias: Tensor },
    GroupNorm { input: usize, groups: usize, gamma: Tensor, beta: Tensor },
    Silu { input: usize },
    Gelu { input: usize },
    ScaleShift { input: usize, cond: usize },
    Linear { input: usize, in_features: usize, out_features: usize, weight: Tensor, bias: Tensor },
    Upsample { input: usize },
    Concat { inputs: Vec<usize> },
    Add { inputs: Vec<usize> },
}

/// Execution plan for one spatial size. Slot 0 holds the input planes, slot 1
/// the time embedding, slot `k + 2` the output of layer `k`.
#[derive(Clone, Debug)]
struct Plan {
    ops: Vec<Op>,
    shapes: Vec<Shape>,
    output_slot: usize,
}

/// A loaded network with a validated graph.
#[derive(Clone, Debug)]
pub struct NetworkField {
    header: WeightHeader,
    layers: Vec<LayerSpec>,
    tensors: TensorMap,
    /// Present when the header fixes the input size.
    plan: Option<Plan>,
}

impl NetworkField {
    pub fn header(&self) -> &WeightHeader {
        &self.header
    }

    pub fn time_embed_dim(&self) -> usize {
        self.header.time_embed_dim
    }

    /// `(n_r, n_t)` fixed by the header, if any.
    pub fn state_shape(&self) -> Option<(usize, usize)> {
        self.header.input_shape.map(|[_, h, w]| (h, w))
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

/// `[sin(t f_0) .. sin(t f_{d/2-1}), cos(t f_0) .. cos(t f_{d/2-1})]` with
/// `f_k = 10000^(-2k/d)`.
pub fn sinusoidal_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|k| 10000f64.powf(-2.0 * k as f64 / dim as f64))
        .collect();
    freqs
        .iter()
        .map(|f| (t * f).sin())
        .chain(freqs.iter().map(|f| (t * f).cos()))
        .collect()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkField> {
    parse_network(&fs::read(path)?)
}

/// Serializes a header and named tensors into the weight-file layout. Offsets
/// and the blob checksum in `header` are rewritten to match `tensors`' order;
/// shapes come from the header entry of the same name, or are 1-D.
pub fn encode_weight_file(header: &WeightHeader, tensors: &[(String, Vec<f32>)]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, values) in tensors {
        let shape = header
            .tensors
            .iter()
            .find(|e| &e.name == name)
            .map(|e| e.shape.clone())
            .unwrap_or_else(|| vec![values.len()]);
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Header(format!("tensor `{name}` has {} values for shape {shape:?}", values.len())));
        }
        entries.push(TensorEntry { name: name.clone(), shape, offset: blob.len(), dtype: "f32".into() });
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.tensors = entries;
    header.blob_sha256 = Some(hex_digest(&blob));
    let json = serde_json::to_vec(&header).map_err(|e| Error::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(13 + json.len() + blob.len());
    out.extend_from_slice(&WEIGHT_MAGIC);
    out.push(WEIGHT_VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_network(bytes: &[u8]) -> Result<NetworkField> {
    if bytes.len() < 9 {
        return Err(Error::Truncated("weight file magic".into()));
    }
    if bytes[..8] != WEIGHT_MAGIC {
        return Err(Error::BadMagic("weight file"));
    }
    if bytes[8] != WEIGHT_VERSION {
        return Err(Error::VersionMismatch { found: bytes[8], expected: WEIGHT_VERSION });
    }
    let len: [u8; 4] = bytes
        .get(9..13)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| Error::Truncated("weight header length".into()))?;
    let header_len = u32::from_le_bytes(len) as usize;
    let json = bytes
        .get(13..13 + header_len)
        .ok_or_else(|| Error::Truncated("weight header".into()))?;
    let header: WeightHeader = serde_json::from_slice(json).map_err(|e| Error::Header(e.to_string()))?;
    let blob = &bytes[13 + header_len..];

    let mut tensors = TensorMap::new();
    for entry in &header.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Header(format!("tensor `{}` has dtype {}, expected f32", entry.name, entry.dtype)));
        }
        let end = entry.offset + 4 * entry.numel();
        let raw = blob.get(entry.offset..end).ok_or_else(|| {
            Error::Truncated(format!(
                "tensor `{}` (needs bytes {}..{end}, blob has {})",
                entry.name,
                entry.offset,
                blob.len()
            ))
        })?;
        let values: Tensor = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if tensors.insert(entry.name.clone(), (entry.shape.clone(), values)).is_some() {
            return Err(Error::Header(format!("duplicate tensor `{}`", entry.name)));
        }
    }
    if let Some(expected) = &header.blob_sha256 {
        let got = hex_digest(blob);
        if !got.eq_ignore_ascii_case(expected) {
            return Err(Error::Header(format!("tensor blob checksum {got} does not match header {expected}")));
        }
    }
    NetworkField::from_parts(header, tensors)
}

type TensorMap = HashMap<String, (Vec<usize>, Tensor)>;

fn take_tensor(tensors: &TensorMap, name: &str, shape: &[usize], layer: &str) -> Result<Tensor> {
    let (found, values) = tensors
        .get(name)
        .ok_or_else(|| Error::Graph(format!("layer `{layer}` references missing tensor `{name}`")))?;
    if found != shape {
        return Err(Error::Graph(format!(
            "layer `{layer}`: tensor `{name}` has shape {found:?}, expected {shape:?}"
        )));
    }
    Ok(values.clone())
}

fn optional_bias(tensors: &TensorMap, name: &Option<String>, len: usize, layer: &str) -> Result<Tensor> {
    match name {
        Some(n) => take_tensor(tensors, n, &[len], layer),
        None => Ok(vec![0.0; len].into()),
    }
}

fn conv_out(size: usize, kernel: usize, stride: usize) -> usize {
    let pad = kernel / 2;
    (size + 2 * pad - kernel) / stride + 1
}

impl NetworkField {
    fn from_parts(header: WeightHeader, tensors: TensorMap) -> Result<Self> {
        if header.time_embed_dim == 0 || !header.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Graph(format!(
                "time_embed_dim must be even and positive, got {}",
                header.time_embed_dim
            )));
        }
        let mut layers = Vec::with_capacity(header.graph.len());
        for raw in &header.graph {
            let kind = raw.get("kind").and_then(Value::as_str).unwrap_or("<missing>");
            if !KNOWN_KINDS.contains(&kind) {
                return Err(Error::UnsupportedLayer(kind.to_string()));
            }
            let spec: LayerSpec =
                serde_json::from_value(raw.clone()).map_err(|e| Error::Graph(format!("layer {raw}: {e}")))?;
            layers.push(spec);
        }
        let mut field = Self { header, layers, tensors, plan: None };
        match field.header.input_shape {
            Some([c, h, w]) => {
                if c != 2 || h == 0 || w == 0 {
                    return Err(Error::Graph(format!("input shape must be [2, n_r, n_t], got {:?}", [c, h, w])));
                }
                field.plan = Some(field.plan_for(h, w)?);
            }
            None => {
                // Without a fixed size, validate on a power-of-two probe that
                // survives every downsampling stage without rounding.
                let downs = field.layers.iter().filter(|l| matches!(l, LayerSpec::Downsample { .. })).count();
                let probe = 1usize << downs.min(16);
                field.plan_for(probe, probe)?;
            }
        }
        Ok(field)
    }

    /// Shape-checks every layer for an `n_r x n_t` input before any arithmetic
    /// and resolves value names to slots.
    fn plan_for(&self, n_r: usize, n_t: usize) -> Result<Plan> {
        let tensors = &self.tensors;
        let mut slots: HashMap<&str, usize> = HashMap::new();
        let mut shapes = vec![Shape::Map { c: 2, h: n_r, w: n_t }, Shape::Vector(self.header.time_embed_dim)];
        slots.insert(INPUT, 0);
        slots.insert(TIME, 1);
        let mut ops = Vec::with_capacity(self.layers.len());

        for spec in &self.layers {
            let name = spec.name();
            let lookup = |value: &str| -> Result<(usize, Shape)> {
                slots
                    .get(value)
                    .map(|&s| (s, shapes[s]))
                    .ok_or_else(|| Error::Graph(format!("layer `{name}` reads undefined value `{value}`")))
            };
            let mismatch = |what: String| Error::Graph(format!("layer `{name}`: {what}"));

            let (op, shape) = match spec {
                LayerSpec::Conv2d { input, in_ch, out_ch, kernel, weight, bias, .. } => {
                    if *kernel != 1 && *kernel != 3 {
                        return Err(mismatch(format!("kernel size {kernel} unsupported (1 or 3)")));
                    }
                    conv_layer(tensors, name, lookup(input)?, *in_ch, *out_ch, *kernel, 1, weight, bias)?
                }
                LayerSpec::Downsample { input, in_ch, out_ch, weight, bias, .. } => {
                    conv_layer(tensors, name, lookup(input)?, *in_ch, *out_ch, 3, 2, weight, bias)?
                }
                LayerSpec::GroupNorm { input, channels, groups, weight, bias, .. } => {
                    let (slot, s) = lookup(input)?;
                    match s {
                        Shape::Map { c, .. } if c == *channels => {}
                        other => return Err(mismatch(format!("expects {channels} channels, input is {other}"))),
                    }
                    if *groups == 0 || channels % groups != 0 {
                        return Err(mismatch(format!("{groups} groups do not divide {channels} channels")));
                    }
                    let gamma = take_tensor(tensors, weight, &[*channels], name)?;
                    let beta = take_tensor(tensors, bias, &[*channels], name)?;
                    (Op::GroupNorm { input: slot, groups: *groups, gamma, beta }, s)
                }
                LayerSpec::Silu { input, .. } => {
                    let (slot, s) = lookup(input)?;
                    (Op::Silu { input: slot }, s)
                }
                LayerSpec::Gelu { input, .. } => {
                    let (slot, s) = lookup(input)?;
                    (Op::Gelu { input: slot }, s)
                }
                LayerSpec::ScaleShift { input, cond, .. } => {
                    let (x, xs) = lookup(input)?;
                    let (cslot, cs) = lookup(cond)?;
                    match (xs, cs) {
                        (Shape::Map { c, .. }, Shape::Vector(d)) if d == 2 * c => {}
                        _ => {
                            return Err(mismatch(format!(
                                "scale-shift of {xs} needs a vector of twice its channels, got {cs}"
                            )))
                        }
                    }
                    (Op::ScaleShift { input: x, cond: cslot }, xs)
                }
                LayerSpec::Linear { input, in_features, out_features, weight, bias, .. } => {
                    let (slot, s) = lookup(input)?;
                    if s != Shape::Vector(*in_features) {
                        return Err(mismatch(format!("expects a vector of {in_features}, input is {s}")));
                    }
                    let w = take_tensor(tensors, weight, &[*out_features, *in_features], name)?;
                    let b = optional_bias(tensors, bias, *out_features, name)?;
                    (
                        Op::Linear {
                            input: slot,
                            in_features: *in_features,
                            out_features: *out_features,
                            weight: w,
                            bias: b,
                        },
                        Shape::Vector(*out_features),
                    )
                }
                LayerSpec::Upsample { input, .. } => {
                    let (slot, s) = lookup(input)?;
                    let Shape::Map { c, h, w } = s else {
                        return Err(mismatch(format!("upsample needs a feature map, got {s}")));
                    };
                    (Op::Upsample { input: slot }, Shape::Map { c, h: 2 * h, w: 2 * w })
                }
                LayerSpec::Concat { inputs, .. } => {
                    if inputs.is_empty() {
                        return Err(mismatch("concat without inputs".into()));
                    }
                    let mut total = 0;
                    let mut hw = None;
                    let mut idx = Vec::new();
                    for v in inputs {
                        let (slot, s) = lookup(v)?;
                        let Shape::Map { c, h, w } = s else {
                            return Err(mismatch(format!("concat input `{v}` is not a feature map")));
                        };
                        if hw.is_some_and(|prev| prev != (h, w)) {
                            return Err(mismatch(format!("concat input `{v}` is {s}, spatial size differs")));
                        }
                        hw = Some((h, w));
                        total += c;
                        idx.push(slot);
                    }
                    let (h, w) = hw.expect("non-empty");
                    (Op::Concat { inputs: idx }, Shape::Map { c: total, h, w })
                }
                LayerSpec::Add { inputs, .. } => {
                    if inputs.len() < 2 {
                        return Err(mismatch("add needs at least two inputs".into()));
                    }
                    let mut idx = Vec::new();
                    let mut first: Option<Shape> = None;
                    for v in inputs {
                        let (slot, s) = lookup(v)?;
                        if let Some(f) = first.filter(|&f| f != s) {
                            return Err(mismatch(format!("add input `{v}` is {s}, expected {f}")));
                        }
                        first = Some(s);
                        idx.push(slot);
                    }
                    (Op::Add { inputs: idx }, first.expect("non-empty"))
                }
            };

            if slots.contains_key(name) {
                return Err(Error::Graph(format!("value name `{name}` is defined twice")));
            }
            slots.insert(name, shapes.len());
            shapes.push(shape);
            ops.push(op);
        }

        let output_slot = match &self.header.output {
            Some(name) => *slots
                .get(name.as_str())
                .ok_or_else(|| Error::Graph(format!("output value `{name}` is undefined")))?,
            None if ops.is_empty() => return Err(Error::Graph("graph has no layers".into())),
            None => shapes.len() - 1,
        };
        let expected = Shape::Map { c: 2, h: n_r, w: n_t };
        if shapes[output_slot] != expected {
            return Err(Error::Graph(format!("output is {}, expected {expected}", shapes[output_slot])));
        }
        Ok(Plan { ops, shapes, output_slot })
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_layer(
    tensors: &TensorMap,
    name: &str,
    (slot, s): (usize, Shape),
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    weight: &str,
    bias: &Option<String>,
) -> Result<(Op, Shape)> {
    let Shape::Map { c, h, w } = s else {
        return Err(Error::Graph(format!("layer `{name}`: convolution needs a feature map, got {s}")));
    };
    if c != in_ch {
        return Err(Error::Graph(format!("layer `{name}`: expects {in_ch} channels, input is {s}")));
    }
    let weight = take_tensor(tensors, weight, &[out_ch, in_ch, kernel, kernel], name)?;
    let bias = optional_bias(tensors, bias, out_ch, name)?;
    Ok((
        Op::Conv { input: slot, in_ch, out_ch, kernel, stride, weight, bias },
        Shape::Map { c: out_ch, h: conv_out(h, kernel, stride), w: conv_out(w, kernel, stride) },
    ))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn conv2d(x: &[f64], (h, w): (usize, usize), op: (&Tensor, &Tensor), dims: (usize, usize, usize, usize), out_hw: (usize, usize)) -> Vec<f64> {
    let (weight, bias) = op;
    let (in_ch, out_ch, kernel, stride) = dims;
    let (oh, ow) = out_hw;
    let pad = (kernel / 2) as isize;
    let mut out = vec![0.0; out_ch * oh * ow];
    for o in 0..out_ch {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for c in 0..in_ch {
                    for ki in 0..kernel {
                        let y = (i * stride) as isize + ki as isize - pad;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kj in 0..kernel {
                            let xx = (j * stride) as isize + kj as isize - pad;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc += weight[((o * in_ch + c) * kernel + ki) * kernel + kj]
                                * x[(c * h + y as usize) * w + xx as usize];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

impl Plan {
    fn forward(&self, planes: Vec<f64>, temb: Vec<f64>) -> Vec<f64> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.shapes.len());
        values.push(planes);
        values.push(temb);

        for (k, op) in self.ops.iter().enumerate() {
            let shape = self.shapes[k + 2];
            let out = match op {
                Op::Conv { input, in_ch, out_ch, kernel, stride, weight, bias } => {
                    let (_, h, w) = self.shapes[*input].dims();
                    let (_, oh, ow) = shape.dims();
                    conv2d(&values[*input], (h, w), (weight, bias), (*in_ch, *out_ch, *kernel, *stride), (oh, ow))
                }
                Op::GroupNorm { input, groups, gamma, beta } => {
                    let (c, h, w) = shape.dims();
                    let x = &values[*input];
                    let per_group = c / groups;
                    let plane = h * w;
                    let mut out = vec![0.0; x.len()];
                    for g in 0..*groups {
                        let range = g * per_group * plane..(g + 1) * per_group * plane;
                        let n = range.len() as f64;
                        let mean = x[range.clone()].iter().sum::<f64>() / n;
                        let var = x[range].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let inv = 1.0 / (var + GROUP_NORM_EPS).sqrt();
                        for ch in g * per_group..(g + 1) * per_group {
                            for idx in ch * plane..(ch + 1) * plane {
                                out[idx] = (x[idx] - mean) * inv * gamma[ch] + beta[ch];
                            }
                        }
                    }
                    out
                }
                Op::Silu { input } => values[*input].iter().map(|&v| v * sigmoid(v)).collect(),
                Op::Gelu { input } => values[*input].iter().map(|&v| gelu(v)).collect(),
                Op::ScaleShift { input, cond } => {
                    let (c, h, w) = shape.dims();
                    let s = &values[*cond];
                    let plane = h * w;
                    let mut out = values[*input].clone();
                    for ch in 0..c {
                        let (scale, shift) = (s[ch], s[c + ch]);
                        for v in &mut out[ch * plane..(ch + 1) * plane] {
                            *v = *v * (1.0 + scale) + shift;
                        }
                    }
                    out
                }
                Op::Linear { input, in_features, out_features, weight, bias } => {
                    let x = &values[*input];
                    (0..*out_features)
                        .map(|o| {
                            bias[o]
                                + weight[o * in_features..(o + 1) * in_features]
                                    .iter()
                                    .zip(x)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                        })
                        .collect()
                }
                Op::Upsample { input } => {
                    let (c, h, w) = self.shapes[*input].dims();
                    let x = &values[*input];
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut out = vec![0.0; c * oh * ow];
                    for ch in 0..c {
                        for i in 0..oh {
                            for j in 0..ow {
                                out[(ch * oh + i) * ow + j] = x[(ch * h + i / 2) * w + j / 2];
                            }
                        }
                    }
                    out
                }
                Op::Concat { inputs } => inputs.iter().flat_map(|&k| values[k].iter().copied()).collect(),
                Op::Add { inputs } => {
                    let mut out = values[inputs[0]].clone();
                    for &k in &inputs[1..] {
                        for (o, v) in out.iter_mut().zip(&values[k]) {
                            *o += v;
                        }
                    }
                    out
                }
            };
            values.push(out);
        }
        values.swap_remove(self.output_slot)
    }
}

impl VelocityField for NetworkField {
    fn eval(&self, h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
        check_time(t)?;
        let (n_r, n_t) = h.shape();
        let owned;
        let plan = match (&self.plan, self.state_shape()) {
            (Some(plan), Some(expected)) => {
                if expected != (n_r, n_t) {
                    return Err(Error::Shape(format!(
                        "state is {n_r}x{n_t}, network expects {}x{}",
                        expected.0, expected.1
                    )));
                }
                plan
            }
            _ => {
                owned = self.plan_for(n_r, n_t)?;
                &owned
            }
        };
        let plane = n_r * n_t;
        let mut planes = vec![0.0; 2 * plane];
        for (k, z) in h.as_slice().iter().enumerate() {
            planes[k] = z.re;
            planes[plane + k] = z.im;
        }
        let out = plan.forward(planes, sinusoidal_embedding(t, self.header.time_embed_dim));
        let data = (0..plane).map(|k| Complex64::new(out[k], out[plane + k])).collect();
        ComplexMatrix::new(n_r, n_t, data)
    }
}
