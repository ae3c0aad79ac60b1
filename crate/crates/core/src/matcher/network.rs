//! The trainable matching network.
//!
//! Three parts, all dense layers with ReLU hidden activations:
//!
//! * comparator: `|a - b|` (d) → k_c
//! * pair encoder: one layer per input (class flag, comparator output,
//!   distance, scale, time), each → k_f; concatenation (5·k_f) → k_e
//! * classifier: k_e → h → 1, sigmoid
//!
//! Distance, scale and time are standardised with constants fitted on the
//! training set and stored in the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_features::PairFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWidths {
    /// Embedding dimension.
    pub d: usize,
    pub comparator: usize,
    pub feature: usize,
    pub encoding: usize,
    pub hidden: usize,
}

impl LayerWidths {
    pub fn with_dim(d: usize) -> Self {
        LayerWidths {
            d,
            comparator: 16,
            feature: 8,
            encoding: 64,
            hidden: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.d, self.comparator, self.feature, self.encoding, self.hidden].contains(&0) {
            return Err(Error::validation(format!("layer widths must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of every layer in parameter order.
    fn shapes(&self) -> [(usize, usize); LAYER_COUNT] {
        [
            (self.d, self.comparator),
            (1, self.feature),
            (self.comparator, self.feature),
            (1, self.feature),
            (1, self.feature),
            (1, self.feature),
            (5 * self.feature, self.encoding),
            (self.encoding, self.hidden),
            (self.hidden, 1),
        ]
    }
}

pub(crate) const COMPARATOR: usize = 0;
pub(crate) const ENC_CLASS: usize = 1;
pub(crate) const ENC_APPEARANCE: usize = 2;
pub(crate) const ENC_DISTANCE: usize = 3;
pub(crate) const ENC_SCALE: usize = 4;
pub(crate) const ENC_TIME: usize = 5;
pub(crate) const FUSION: usize = 6;
pub(crate) const HIDDEN: usize = 7;
pub(crate) const OUTPUT: usize = 8;
pub(crate) const LAYER_COUNT: usize = 9;

pub(crate) const LAYER_NAMES: [&str; LAYER_COUNT] = [
    "comparator",
    "encode_class",
    "encode_appearance",
    "encode_distance",
    "encode_scale",
    "encode_time",
    "fusion",
    "classifier_hidden",
    "classifier_output",
];

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients into `grad` and, when `dx` is given,
    /// writes the input gradient.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn param(&self, idx: usize) -> f64 {
        if idx < self.weights.len() {
            self.weights[idx]
        } else {
            self.bias[idx - self.weights.len()]
        }
    }

    fn param_mut(&mut self, idx: usize) -> &mut f64 {
        if idx < self.weights.len() {
            &mut self.weights[idx]
        } else {
            let n = self.weights.len();
            &mut self.bias[idx - n]
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }
}

/// Mean / standard deviation for distance, scale and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Standardizer {
    fn default() -> Self {
        Standardizer {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

impl Standardizer {
    pub fn fit<'a>(pairs: impl IntoIterator<Item = &'a PairFeatures>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for p in pairs {
            let x = raw_scalars(p);
            for k in 0..3 {
                sum[k] += x[k];
                sq[k] += x[k] * x[k];
            }
            n += 1;
        }
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = sum.map(|s| s / nf);
        let std = [0, 1, 2].map(|k| {
            let var = (sq[k] / nf - mean[k] * mean[k]).max(0.0);
            let s = var.sqrt();
            if s > 1e-9 {
                s
            } else {
                1.0
            }
        });
        Standardizer { mean, std }
    }

    fn apply(&self, p: &PairFeatures) -> [f64; 3] {
        let x = raw_scalars(p);
        [0, 1, 2].map(|k| (x[k] - self.mean[k]) / self.std[k])
    }

    fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::validation("standardization constants must be finite with std > 0"));
        }
        Ok(())
    }
}

fn raw_scalars(p: &PairFeatures) -> [f64; 3] {
    [p.distance, p.scale_factor, p.time_delta]
}

/// Parameters of the matching network.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherModel {
    pub(crate) widths: LayerWidths,
    pub(crate) layers: Vec<Dense>,
    pub(crate) standardizer: Standardizer,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    diff: Vec<f64>,
    class_in: [f64; 1],
    scalars: [[f64; 1]; 3],
    comparator: Vec<f64>,
    /// Concatenated encoder outputs (post-ReLU), 5·k_f.
    encoded: Vec<f64>,
    fused: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) logit: f64,
}

impl Activations {
    fn new(w: &LayerWidths) -> Self {
        Activations {
            diff: vec![0.0; w.d],
            class_in: [0.0],
            scalars: [[0.0]; 3],
            comparator: vec![0.0; w.comparator],
            encoded: vec![0.0; 5 * w.feature],
            fused: vec![0.0; w.encoding],
            hidden: vec![0.0; w.hidden],
            logit: 0.0,
        }
    }
}

/// Gradient buffers with the same layout as the model's layers.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub(crate) layers: Vec<Dense>,
    d_comparator: Vec<f64>,
    d_encoded: Vec<f64>,
    d_fused: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &MatcherModel) -> Self {
        let w = &model.widths;
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            d_comparator: vec![0.0; w.comparator],
            d_encoded: vec![0.0; 5 * w.feature],
            d_fused: vec![0.0; w.encoding],
            d_hidden: vec![0.0; w.hidden],
        }
    }

    pub(crate) fn clear(&mut self) {
        for l in &mut self.layers {
            l.params_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn get(&self, idx: usize) -> f64 {
        let (layer, off) = locate(&self.layers, idx);
        self.layers[layer].param(off)
    }

    pub(crate) fn flat(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }
}

fn locate(layers: &[Dense], mut idx: usize) -> (usize, usize) {
    for (i, l) in layers.iter().enumerate() {
        if idx < l.param_count() {
            return (i, idx);
        }
        idx -= l.param_count();
    }
    panic!("parameter index out of range");
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn relu_mask(grad: &mut [f64], activated: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, computed
/// without forming the probability.
pub(crate) fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

impl MatcherModel {
    /// Seeded uniform fan-in initialisation.
    pub fn init(widths: LayerWidths, seed: u64) -> Result<Self> {
        widths.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .shapes()
            .iter()
            .map(|&(i, o)| Dense::uniform(i, o, &mut rng))
            .collect();
        Ok(MatcherModel {
            widths,
            layers,
            standardizer: Standardizer::default(),
        })
    }

    /// All parameters zero; forward pass yields exactly 0.5.
    pub fn zeros(widths: LayerWidths) -> Result<Self> {
        widths.validate()?;
        Ok(MatcherModel {
            widths,
            layers: widths
                .shapes()
                .iter()
                .map(|&(i, o)| Dense::zeros(i, o))
                .collect(),
            standardizer: Standardizer::default(),
        })
    }

    pub(crate) fn from_parts(
        widths: LayerWidths,
        layers: Vec<Dense>,
        standardizer: Standardizer,
    ) -> Result<Self> {
        widths.validate()?;
        standardizer.validate()?;
        if layers.len() != LAYER_COUNT {
            return Err(Error::validation(format!(
                "expected {LAYER_COUNT} layers, found {}",
                layers.len()
            )));
        }
        for ((layer, &(i, o)), name) in layers.iter().zip(&widths.shapes()).zip(LAYER_NAMES) {
            if layer.inputs != i
                || layer.outputs != o
                || layer.weights.len() != i * o
                || layer.bias.len() != o
            {
                return Err(Error::validation(format!(
                    "layer {name}: shape {}x{} (weights {}, bias {}) does not match expected {i}x{o}",
                    layer.inputs,
                    layer.outputs,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if layer.params().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layer {name}: non-finite parameter")));
            }
        }
        Ok(MatcherModel {
            widths,
            layers,
            standardizer,
        })
    }

    pub fn widths(&self) -> LayerWidths {
        self.widths
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    pub fn set_standardizer(&mut self, s: Standardizer) {
        self.standardizer = s;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn param(&self, idx: usize) -> f64 {
        let (layer, off) = locate(&self.layers, idx);
        self.layers[layer].param(off)
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (layer, off) = locate(&self.layers, idx);
        *self.layers[layer].param_mut(off) = value;
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    pub fn check_input(&self, pair: &PairFeatures) -> Result<()> {
        if pair.appearance_a.len() != self.widths.d || pair.appearance_b.len() != self.widths.d {
            return Err(Error::validation(format!(
                "model expects embeddings of dimension {}, got {} and {}",
                self.widths.d,
                pair.appearance_a.len(),
                pair.appearance_b.len()
            )));
        }
        pair.validate()
    }

    pub(crate) fn forward(&self, pair: &PairFeatures, act: &mut Activations) {
        let kf = self.widths.feature;
        for ((d, a), b) in act.diff.iter_mut().zip(&pair.appearance_a).zip(&pair.appearance_b) {
            *d = (a - b).abs();
        }
        self.layers[COMPARATOR].forward_into(&act.diff, &mut act.comparator);
        relu_in_place(&mut act.comparator);

        act.class_in = [if pair.same_class { 1.0 } else { 0.0 }];
        let z = self.standardizer.apply(pair);
        act.scalars = [[z[0]], [z[1]], [z[2]]];

        let (enc_class, rest) = act.encoded.split_at_mut(kf);
        let (enc_app, rest) = rest.split_at_mut(kf);
        let (enc_dist, rest) = rest.split_at_mut(kf);
        let (enc_scale, enc_time) = rest.split_at_mut(kf);
        self.layers[ENC_CLASS].forward_into(&act.class_in, enc_class);
        self.layers[ENC_APPEARANCE].forward_into(&act.comparator, enc_app);
        self.layers[ENC_DISTANCE].forward_into(&act.scalars[0], enc_dist);
        self.layers[ENC_SCALE].forward_into(&act.scalars[1], enc_scale);
        self.layers[ENC_TIME].forward_into(&act.scalars[2], enc_time);
        relu_in_place(&mut act.encoded);

        self.layers[FUSION].forward_into(&act.encoded, &mut act.fused);
        relu_in_place(&mut act.fused);
        self.layers[HIDDEN].forward_into(&act.fused, &mut act.hidden);
        relu_in_place(&mut act.hidden);
        let mut out = [0.0];
        self.layers[OUTPUT].forward_into(&act.hidden, &mut out);
        act.logit = out[0];
    }

    /// Backpropagates `d_logit` through the cached activations, accumulating
    /// into `grads`.
    pub(crate) fn backward(&self, act: &Activations, d_logit: f64, grads: &mut Gradients) {
        let kf = self.widths.feature;
        let Gradients {
            layers: g,
            d_comparator,
            d_encoded,
            d_fused,
            d_hidden,
        } = grads;

        self.layers[OUTPUT].backward(&act.hidden, &[d_logit], &mut g[OUTPUT], Some(d_hidden));
        relu_mask(d_hidden, &act.hidden);
        self.layers[HIDDEN].backward(&act.fused, d_hidden, &mut g[HIDDEN], Some(d_fused));
        relu_mask(d_fused, &act.fused);
        self.layers[FUSION].backward(&act.encoded, d_fused, &mut g[FUSION], Some(d_encoded));
        relu_mask(d_encoded, &act.encoded);

        let chunk = |k: usize| k * kf..(k + 1) * kf;
        self.layers[ENC_CLASS].backward(&act.class_in, &d_encoded[chunk(0)], &mut g[ENC_CLASS], None);
        self.layers[ENC_APPEARANCE].backward(
            &act.comparator,
            &d_encoded[chunk(1)],
            &mut g[ENC_APPEARANCE],
            Some(d_comparator),
        );
        self.layers[ENC_DISTANCE].backward(&act.scalars[0], &d_encoded[chunk(2)], &mut g[ENC_DISTANCE], None);
        self.layers[ENC_SCALE].backward(&act.scalars[1], &d_encoded[chunk(3)], &mut g[ENC_SCALE], None);
        self.layers[ENC_TIME].backward(&act.scalars[2], &d_encoded[chunk(4)], &mut g[ENC_TIME], None);
        relu_mask(d_comparator, &act.comparator);
        self.layers[COMPARATOR].backward(&act.diff, d_comparator, &mut g[COMPARATOR], None);
    }

    pub(crate) fn activations(&self) -> Activations {
        Activations::new(&self.widths)
    }

    /// Raw network output before the sigmoid.
    pub fn logit(&self, pair: &PairFeatures) -> Result<f64> {
        self.check_input(pair)?;
        let mut act = self.activations();
        self.forward(pair, &mut act);
        Ok(act.logit)
    }

    /// Binary cross-entropy of the prediction against `target` in [0, 1].
    pub fn loss(&self, pair: &PairFeatures, target: f64) -> Result<f64> {
        Ok(bce_with_logit(self.logit(pair)?, target))
    }
}

/// Degree of match in the open interval (0, 1).
pub fn match_neural(model: &MatcherModel, pair: &PairFeatures) -> Result<f64> {
    let p = sigmoid(model.logit(pair)?);
    Ok(p.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
}
