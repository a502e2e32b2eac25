//! The enhancement network: a 10-layer 1-D convolutional encoder-decoder
//! with two max-pool / upsample stages and two additive skip connections,
//! implemented directly on `f64` buffers (forward, backprop, Adam).
//!
//! For input length L, kernel length N and F feature maps the layer stack
//! is
//!
//! ```text
//! conv1 (F,Nx1) -> conv2 (F,NxF) -> pool -> conv3 (2F,NxF) ->
//! conv4 (2F,Nx2F) -> pool -> conv5 (F,Nx2F) -> up -> conv6 (2F,NxF) ->
//! conv7 (2F,Nx2F) -> up -> conv8 (F,Nx2F) -> conv9 (F,NxF) -> conv10 (1,NxF)
//! ```
//!
//! with stride-1 "same" zero padding everywhere, leaky ReLU after every
//! layer except the linear conv10, conv2's output added onto conv9's
//! pre-activation and conv4's added onto conv7's. Inputs are normalized
//! per coefficient by the stored mean and deviation before conv1.
//!
//! Feature maps live in flat `map * len + t` buffers; kernels are
//! `out x N x in` row-major, matching the model file layout.

use crate::error::Error;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_len: usize,
    pub kernel_len: usize,
    pub feature_maps: usize,
    pub leaky_slope: f64,
}

impl CnnConfig {
    pub fn new(input_len: usize, kernel_len: usize, feature_maps: usize) -> Result<Self, Error> {
        if input_len == 0 || !input_len.is_multiple_of(4) {
            return Err(Error::bad_config(format!(
                "input length {input_len} must be a positive multiple of 4 (two pooling stages)"
            )));
        }
        if kernel_len == 0 || feature_maps == 0 {
            return Err(Error::bad_config("kernel length and feature maps must be positive"));
        }
        Ok(CnnConfig {
            input_len,
            kernel_len,
            feature_maps,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    /// Default topology for a given input length: the reference geometry is
    /// (L=32, N=6, F=22) and both N and F scale proportionally with L.
    pub fn scaled(input_len: usize) -> Result<Self, Error> {
        if !input_len.is_multiple_of(16) {
            return Err(Error::bad_config(format!(
                "input length {input_len} must be a multiple of 16 for the scaled topology"
            )));
        }
        CnnConfig::new(input_len, 3 * input_len / 16, 11 * input_len / 16)
    }

    /// (out_maps, in_maps, signal_len) of the ten convolution layers.
    pub fn layer_shapes(&self) -> [(usize, usize, usize); 10] {
        let f = self.feature_maps;
        let l = self.input_len;
        [
            (f, 1, l),
            (f, f, l),
            (2 * f, f, l / 2),
            (2 * f, 2 * f, l / 2),
            (f, 2 * f, l / 4),
            (2 * f, f, l / 2),
            (2 * f, 2 * f, l / 2),
            (f, 2 * f, l),
            (f, f, l),
            (1, f, l),
        ]
    }

    /// Trainable parameters: per layer out*N*in kernel weights plus out
    /// biases.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(o, i, _)| o * self.kernel_len * i + o)
            .sum()
    }

    /// Multiply-accumulates for one forward pass.
    pub fn macs_per_frame(&self) -> u64 {
        self.layer_shapes()
            .iter()
            .map(|&(o, i, len)| (o * i * self.kernel_len * len) as u64)
            .sum()
    }

    /// Millions of MACs per second at a given frame rate.
    pub fn mips(&self, frames_per_second: f64) -> f64 {
        self.macs_per_frame() as f64 * frames_per_second / 1e6
    }
}

/// One convolution layer. `weights[(j*N + m)*in + i]` is tap m of the
/// kernel from input map i to output map j.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub out_maps: usize,
    pub in_maps: usize,
    pub kernel_len: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    fn zeros(out_maps: usize, in_maps: usize, kernel_len: usize) -> Conv1d {
        Conv1d {
            out_maps,
            in_maps,
            kernel_len,
            weights: vec![0.0; out_maps * kernel_len * in_maps],
            bias: vec![0.0; out_maps],
        }
    }

    /// "same" padding start: output t sees input t + m - pad.
    fn pad(&self) -> usize {
        (self.kernel_len - 1) / 2
    }

    fn forward(&self, inp: &[f64], len: usize, out: &mut Vec<f64>) {
        debug_assert_eq!(inp.len(), self.in_maps * len);
        out.clear();
        out.resize(self.out_maps * len, 0.0);
        let n = self.kernel_len;
        let pad = self.pad();
        for j in 0..self.out_maps {
            let o = &mut out[j * len..(j + 1) * len];
            o.fill(self.bias[j]);
            for m in 0..n {
                // clip t so that t + m - pad stays inside [0, len)
                let t0 = pad.saturating_sub(m);
                let t1 = (len + pad).saturating_sub(m).min(len);
                if t0 >= t1 {
                    continue;
                }
                let s0 = t0 + m - pad;
                for i in 0..self.in_maps {
                    let w = self.weights[(j * n + m) * self.in_maps + i];
                    if w == 0.0 {
                        continue;
                    }
                    let x = &inp[i * len + s0..i * len + s0 + (t1 - t0)];
                    for (ov, &xv) in o[t0..t1].iter_mut().zip(x) {
                        *ov += w * xv;
                    }
                }
            }
        }
    }

    /// Backward pass: accumulate parameter gradients and (optionally) the
    /// gradient with respect to the layer input.
    fn backward(
        &self,
        inp: &[f64],
        len: usize,
        dout: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        dinp: Option<&mut Vec<f64>>,
    ) {
        let n = self.kernel_len;
        let pad = self.pad();
        for j in 0..self.out_maps {
            let dz = &dout[j * len..(j + 1) * len];
            db[j] += dz.iter().sum::<f64>();
            for m in 0..n {
                let t0 = pad.saturating_sub(m);
                let t1 = (len + pad).saturating_sub(m).min(len);
                if t0 >= t1 {
                    continue;
                }
                let s0 = t0 + m - pad;
                for i in 0..self.in_maps {
                    let x = &inp[i * len + s0..i * len + s0 + (t1 - t0)];
                    let mut acc = 0.0;
                    for (&g, &xv) in dz[t0..t1].iter().zip(x) {
                        acc += g * xv;
                    }
                    dw[(j * n + m) * self.in_maps + i] += acc;
                }
            }
        }
        if let Some(dinp) = dinp {
            dinp.clear();
            dinp.resize(self.in_maps * len, 0.0);
            for j in 0..self.out_maps {
                let dz = &dout[j * len..(j + 1) * len];
                for m in 0..n {
                    let t0 = pad.saturating_sub(m);
                    let t1 = (len + pad).saturating_sub(m).min(len);
                    if t0 >= t1 {
                        continue;
                    }
                    let s0 = t0 + m - pad;
                    for i in 0..self.in_maps {
                        let w = self.weights[(j * n + m) * self.in_maps + i];
                        if w == 0.0 {
                            continue;
                        }
                        let dx = &mut dinp[i * len + s0..i * len + s0 + (t1 - t0)];
                        for (dv, &g) in dx.iter_mut().zip(&dz[t0..t1]) {
                            *dv += w * g;
                        }
                    }
                }
            }
        }
    }
}

fn leaky(buf: &mut [f64], slope: f64) {
    for v in buf.iter_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// d(leaky)/dz evaluated from the pre-activation, folded into the incoming
/// gradient in place.
fn leaky_grad(d: &mut [f64], z: &[f64], slope: f64) {
    for (g, &zv) in d.iter_mut().zip(z) {
        if zv < 0.0 {
            *g *= slope;
        }
    }
}

/// Non-overlapping 2-to-1 max pool per map; ties keep the earlier sample.
/// Returns pooled values and the winning absolute indices for backprop.
fn maxpool(inp: &[f64], maps: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
    let half = len / 2;
    let mut out = vec![0.0; maps * half];
    let mut idx = vec![0usize; maps * half];
    for c in 0..maps {
        for t in 0..half {
            let a = inp[c * len + 2 * t];
            let b = inp[c * len + 2 * t + 1];
            if a >= b {
                out[c * half + t] = a;
                idx[c * half + t] = c * len + 2 * t;
            } else {
                out[c * half + t] = b;
                idx[c * half + t] = c * len + 2 * t + 1;
            }
        }
    }
    (out, idx)
}

/// Nearest-neighbor 1-to-2 upsampling per map.
fn upsample(inp: &[f64], maps: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; maps * len * 2];
    for c in 0..maps {
        for t in 0..len {
            let v = inp[c * len + t];
            out[c * 2 * len + 2 * t] = v;
            out[c * 2 * len + 2 * t + 1] = v;
        }
    }
    out
}

fn upsample_grad(dout: &[f64], maps: usize, len: usize) -> Vec<f64> {
    let mut d = vec![0.0; maps * len];
    for c in 0..maps {
        for t in 0..len {
            d[c * len + t] = dout[c * 2 * len + 2 * t] + dout[c * 2 * len + 2 * t + 1];
        }
    }
    d
}

/// Everything the backward pass needs from a forward pass.
pub struct Trace {
    x_norm: Vec<f64>,
    z: Vec<Vec<f64>>, // pre-activations z1..z10
    a: Vec<Vec<f64>>, // post-activations a1..a9
    p1: Vec<f64>,
    p2: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    idx1: Vec<usize>,
    idx2: Vec<usize>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.z[9]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub layers: Vec<Conv1d>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

impl CnnModel {
    fn empty(config: CnnConfig) -> CnnModel {
        let layers = config
            .layer_shapes()
            .iter()
            .map(|&(o, i, _)| Conv1d::zeros(o, i, config.kernel_len))
            .collect();
        CnnModel {
            config,
            layers,
            norm_mean: vec![0.0; config.input_len],
            norm_std: vec![1.0; config.input_len],
        }
    }

    /// Glorot-uniform initialization from a fixed seed; biases start at
    /// zero.
    pub fn init(config: CnnConfig, seed: u64) -> CnnModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut model = CnnModel::empty(config);
        for layer in model.layers.iter_mut() {
            let fan_in = (layer.in_maps * layer.kernel_len) as f64;
            let fan_out = (layer.out_maps * layer.kernel_len) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in layer.weights.iter_mut() {
                *w = rng.gen_range(-limit..limit);
            }
        }
        model
    }

    /// A model that reproduces its input exactly.
    ///
    /// The signal rides through conv1/conv2 as the pair
    /// (leaky(x), leaky(-x)) in maps 0 and 1, skips the (all-zero) interior
    /// over the conv2->conv9 connection, and conv10 recombines the pair:
    /// since leaky^3(x) - leaky^3(-x) = (1 + slope^3) x for either sign,
    /// one scaled difference restores x. Needs at least two feature maps.
    pub fn identity(config: CnnConfig) -> CnnModel {
        assert!(config.feature_maps >= 2, "identity construction needs F >= 2");
        let mut model = CnnModel::empty(config);
        let n = config.kernel_len;
        let center = (n - 1) / 2;
        let f = config.feature_maps;
        // weight index of tap `center` from input map i to output map j
        let at = |j: usize, i: usize, in_maps: usize| (j * n + center) * in_maps + i;
        // conv1: map0 = +x, map1 = -x
        model.layers[0].weights[at(0, 0, 1)] = 1.0;
        model.layers[0].weights[at(1, 0, 1)] = -1.0;
        // conv2: copy both maps
        model.layers[1].weights[at(0, 0, f)] = 1.0;
        model.layers[1].weights[at(1, 1, f)] = 1.0;
        // conv10: (map0 - map1) / (1 + slope^3)
        let g = 1.0 / (1.0 + config.leaky_slope.powi(3));
        model.layers[9].weights[at(0, 0, f)] = g;
        model.layers[9].weights[at(0, 1, f)] = -g;
        model
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let cfg = &self.config;
        let l = cfg.input_len;
        let f = cfg.feature_maps;
        let s = cfg.leaky_slope;
        assert_eq!(x.len(), l, "input length does not match the model");

        let x_norm: Vec<f64> = x
            .iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(&v, (&m, &d))| (v - m) / d)
            .collect();

        let mut z: Vec<Vec<f64>> = Vec::with_capacity(10);
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(9);
        let act = |zbuf: &Vec<f64>| {
            let mut ab = zbuf.clone();
            leaky(&mut ab, s);
            ab
        };

        let mut buf = Vec::new();
        self.layers[0].forward(&x_norm, l, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[0]));
        self.layers[1].forward(&a[0], l, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[1]));

        let (p1, idx1) = maxpool(&a[1], f, l);
        self.layers[2].forward(&p1, l / 2, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[2]));
        self.layers[3].forward(&a[2], l / 2, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[3]));

        let (p2, idx2) = maxpool(&a[3], 2 * f, l / 2);
        self.layers[4].forward(&p2, l / 4, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[4]));

        let u1 = upsample(&a[4], f, l / 4);
        self.layers[5].forward(&u1, l / 2, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[5]));
        self.layers[6].forward(&a[5], l / 2, &mut buf);
        // skip: conv4's activation joins conv7 before its nonlinearity
        for (v, &sk) in buf.iter_mut().zip(&a[3]) {
            *v += sk;
        }
        z.push(buf.clone());
        a.push(act(&z[6]));

        let u2 = upsample(&a[6], 2 * f, l / 2);
        self.layers[7].forward(&u2, l, &mut buf);
        z.push(buf.clone());
        a.push(act(&z[7]));
        self.layers[8].forward(&a[7], l, &mut buf);
        // skip: conv2's activation joins conv9 before its nonlinearity
        for (v, &sk) in buf.iter_mut().zip(&a[1]) {
            *v += sk;
        }
        z.push(buf.clone());
        a.push(act(&z[8]));

        self.layers[9].forward(&a[8], l, &mut buf);
        z.push(buf); // conv10 is linear: z10 is the output

        Trace {
            x_norm,
            z,
            a,
            p1,
            p2,
            u1,
            u2,
            idx1,
            idx2,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut t = self.forward_trace(x);
        t.z.pop().unwrap()
    }

    /// Backpropagate `dout` (the gradient at the linear output) through the
    /// stack, accumulating parameter gradients.
    pub fn backward(&self, tr: &Trace, dout: &[f64], grads: &mut Gradients) {
        let cfg = &self.config;
        let l = cfg.input_len;
        let f = cfg.feature_maps;
        let s = cfg.leaky_slope;

        let mut dnext = Vec::new();

        let (dw, db) = grads.layer_mut(9);
        self.layers[9].backward(&tr.a[8], l, dout, dw, db, Some(&mut dnext));

        // conv9 (+ skip from a2)
        let mut d9 = dnext.clone();
        leaky_grad(&mut d9, &tr.z[8], s);
        let (dw, db) = grads.layer_mut(8);
        self.layers[8].backward(&tr.a[7], l, &d9, dw, db, Some(&mut dnext));
        let da2_skip = d9; // dz9 flows unchanged into a2

        // conv8
        let mut d8 = dnext.clone();
        leaky_grad(&mut d8, &tr.z[7], s);
        let (dw, db) = grads.layer_mut(7);
        self.layers[7].backward(&tr.u2, l, &d8, dw, db, Some(&mut dnext));

        // undo upsample u2 <- a7
        let mut d7 = upsample_grad(&dnext, 2 * f, l / 2);
        leaky_grad(&mut d7, &tr.z[6], s);
        let (dw, db) = grads.layer_mut(6);
        self.layers[6].backward(&tr.a[5], l / 2, &d7, dw, db, Some(&mut dnext));
        let da4_skip = d7; // dz7 flows unchanged into a4

        // conv6
        let mut d6 = dnext.clone();
        leaky_grad(&mut d6, &tr.z[5], s);
        let (dw, db) = grads.layer_mut(5);
        self.layers[5].backward(&tr.u1, l / 2, &d6, dw, db, Some(&mut dnext));

        // undo upsample u1 <- a5
        let mut d5 = upsample_grad(&dnext, f, l / 4);
        leaky_grad(&mut d5, &tr.z[4], s);
        let (dw, db) = grads.layer_mut(4);
        self.layers[4].backward(&tr.p2, l / 4, &d5, dw, db, Some(&mut dnext));

        // undo pool2: route into a4 positions, then add the skip share
        let mut da4 = vec![0.0; 2 * f * (l / 2)];
        for (t, &src) in tr.idx2.iter().enumerate() {
            da4[src] += dnext[t];
        }
        for (v, &sk) in da4.iter_mut().zip(&da4_skip) {
            *v += sk;
        }
        let mut d4 = da4;
        leaky_grad(&mut d4, &tr.z[3], s);
        let (dw, db) = grads.layer_mut(3);
        self.layers[3].backward(&tr.a[2], l / 2, &d4, dw, db, Some(&mut dnext));

        // conv3
        let mut d3 = dnext.clone();
        leaky_grad(&mut d3, &tr.z[2], s);
        let (dw, db) = grads.layer_mut(2);
        self.layers[2].backward(&tr.p1, l / 2, &d3, dw, db, Some(&mut dnext));

        // undo pool1: route into a2 positions, then add the skip share
        let mut da2 = vec![0.0; f * l];
        for (t, &src) in tr.idx1.iter().enumerate() {
            da2[src] += dnext[t];
        }
        for (v, &sk) in da2.iter_mut().zip(&da2_skip) {
            *v += sk;
        }
        let mut d2 = da2;
        leaky_grad(&mut d2, &tr.z[1], s);
        let (dw, db) = grads.layer_mut(1);
        self.layers[1].backward(&tr.a[0], l, &d2, dw, db, Some(&mut dnext));

        // conv1 (input gradient not needed)
        let mut d1 = dnext;
        leaky_grad(&mut d1, &tr.z[0], s);
        let (dw, db) = grads.layer_mut(0);
        self.layers[0].backward(&tr.x_norm, l, &d1, dw, db, None);
    }
}

/// Mean squared error and its gradient at the network output.
pub fn mse(output: &[f64], target: &[f64]) -> f64 {
    assert_eq!(output.len(), target.len());
    let n = output.len() as f64;
    output
        .iter()
        .zip(target)
        .map(|(&o, &t)| (o - t) * (o - t))
        .sum::<f64>()
        / n
}

pub fn mse_grad(output: &[f64], target: &[f64]) -> Vec<f64> {
    let n = output.len() as f64;
    output
        .iter()
        .zip(target)
        .map(|(&o, &t)| 2.0 * (o - t) / n)
        .collect()
}

/// Parameter gradients, one (weights, bias) pair per layer.
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = &mut self.layers[i];
        (w.as_mut_slice(), b.as_mut_slice())
    }

    pub fn reset(&mut self) {
        for (w, b) in self.layers.iter_mut() {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, by: f64) {
        for (w, b) in self.layers.iter_mut() {
            for v in w.iter_mut() {
                *v *= by;
            }
            for v in b.iter_mut() {
                *v *= by;
            }
        }
    }
}

/// Adam with the usual bias-corrected moment estimates.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(model: &CnnModel) -> Adam {
        let zeros = |m: &CnnModel| -> Vec<(Vec<f64>, Vec<f64>)> {
            m.layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect()
        };
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(model),
            v: zeros(model),
        }
    }

    pub fn step(&mut self, model: &mut CnnModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for k in 0..p.len() {
                    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                    p[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
                }
            };
            update(&mut layer.weights, gw, mw, vw);
            update(&mut layer.bias, gb, mb, vb);
        }
    }
}

// ---- model file format ----
//
// "CPN1" magic, u32 LE header byte count, UTF-8 JSON header, then the raw
// little-endian f32 tensor data. Offsets and lengths in the header count
// f32 values from the start of the data section.

const MAGIC: &[u8; 4] = b"CPN1";

#[derive(Serialize, Deserialize)]
struct TensorDecl {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: CnnConfig,
    tensors: Vec<TensorDecl>,
}

impl CnnModel {
    fn tensor_list(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let n = self.config.kernel_len;
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("conv{}.weight", i + 1),
                vec![l.out_maps, n, l.in_maps],
                &l.weights,
            ));
            out.push((format!("conv{}.bias", i + 1), vec![l.out_maps], &l.bias));
        }
        out.push(("norm_mean".into(), vec![self.config.input_len], &self.norm_mean));
        out.push(("norm_std".into(), vec![self.config.input_len], &self.norm_std));
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let mut tensors = Vec::new();
        let mut offset = 0usize;
        let list = self.tensor_list();
        for (name, shape, data) in &list {
            tensors.push(TensorDecl {
                name: name.clone(),
                shape: shape.clone(),
                offset,
                len: data.len(),
            });
            offset += data.len();
        }
        let header = Header {
            format: "cpn-model".into(),
            config: self.config,
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serialization");

        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(json.len() as u32).to_le_bytes())?;
        f.write_all(&json)?;
        for (_, _, data) in &list {
            for &v in *data {
                f.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CnnModel, Error> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)
            .map_err(|_| Error::bad_model("file too short for a model"))?;
        if &magic != MAGIC {
            return Err(Error::bad_model(format!(
                "bad magic {magic:?}, not a model file"
            )));
        }
        let mut len4 = [0u8; 4];
        f.read_exact(&mut len4)
            .map_err(|_| Error::bad_model("truncated header length"))?;
        let hlen = u32::from_le_bytes(len4) as usize;
        let mut hjson = vec![0u8; hlen];
        f.read_exact(&mut hjson)
            .map_err(|_| Error::bad_model("truncated header"))?;
        let header: Header = serde_json::from_slice(&hjson)
            .map_err(|e| Error::bad_model(format!("unreadable header: {e}")))?;
        if header.format != "cpn-model" {
            return Err(Error::bad_model(format!("unknown format '{}'", header.format)));
        }

        let mut data = Vec::new();
        f.read_to_end(&mut data)?;
        let floats: Vec<f64> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();

        let cfg = header.config;
        CnnConfig::new(cfg.input_len, cfg.kernel_len, cfg.feature_maps)
            .map_err(|e| Error::bad_model(e.to_string()))?;
        let mut model = CnnModel::empty(cfg);

        let expect = model.tensor_list();
        if header.tensors.len() != expect.len() {
            return Err(Error::bad_model(format!(
                "expected {} tensors, file declares {}",
                expect.len(),
                header.tensors.len()
            )));
        }
        let mut loaded: Vec<Vec<f64>> = Vec::new();
        for (decl, (name, shape, data_ref)) in header.tensors.iter().zip(&expect) {
            if &decl.name != name || &decl.shape != shape || decl.len != data_ref.len() {
                return Err(Error::bad_model(format!(
                    "tensor '{}' has shape {:?}/{} but the config needs '{}' {:?}/{}",
                    decl.name,
                    decl.shape,
                    decl.len,
                    name,
                    shape,
                    data_ref.len()
                )));
            }
            let end = decl.offset + decl.len;
            if end > floats.len() {
                return Err(Error::bad_model(format!("tensor '{}' runs past the data", decl.name)));
            }
            loaded.push(floats[decl.offset..end].to_vec());
        }

        let mut it = loaded.into_iter();
        for l in model.layers.iter_mut() {
            l.weights = it.next().unwrap();
            l.bias = it.next().unwrap();
        }
        model.norm_mean = it.next().unwrap();
        model.norm_std = it.next().unwrap();
        if model.norm_std.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::bad_model("normalization deviations must be positive"));
        }
        Ok(model)
    }
}
