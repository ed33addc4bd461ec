//! Text-conditioned U-Net mask estimator.
//!
//! The encoder (3×3 conv + SiLU + 2×2 average pooling per level) and the
//! frequency-axis self-attention on the deepest skips do not depend on the
//! prompt, so they run once per mixture; the decoder and the cross-attention
//! run once per prompt.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::SeparatorConfig;
use super::tokenizer::{freq_features, positional_encoding, Token, Vocabulary};
use crate::dsp::{Mask, MagnitudeSpectrogram};
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// Offset added to the mean magnitude before input normalization.
const INPUT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorModel {
    pub config: SeparatorConfig,
    pub vocab: Vocabulary,
    names: Vec<String>,
    index: HashMap<String, usize>,
    pub params: Vec<Array2<f64>>,
}

/// Token ids plus the embedding rows they map to under the current
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub tokens: Vec<Token>,
    pub values: Array2<f64>,
}

enum Init {
    He,
    Linear,
    Small,
    Unit,
    Ones,
    Zeros,
}

struct Builder {
    rng: ChaCha8Rng,
    names: Vec<String>,
    params: Vec<Array2<f64>>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init, fan_in: usize) {
        let std = match init {
            Init::He => (2.0 / fan_in as f64).sqrt(),
            Init::Linear => (1.0 / fan_in as f64).sqrt(),
            Init::Small => 0.1 / (fan_in as f64).sqrt(),
            Init::Unit => 1.0,
            Init::Ones | Init::Zeros => 0.0,
        };
        let value = match init {
            Init::Ones => Array2::ones((rows, cols)),
            Init::Zeros => Array2::zeros((rows, cols)),
            _ => {
                let n = Normal::new(0.0, std).expect("finite std");
                Array2::from_shape_simple_fn((rows, cols), || n.sample(&mut self.rng))
            }
        };
        self.names.push(name);
        self.params.push(value);
    }
}

/// Per-forward handles to parameters on the tape.
struct Bound<'a> {
    model: &'a SeparatorModel,
    vars: Vec<Var>,
}

impl Bound<'_> {
    fn p(&self, name: &str) -> Var {
        self.vars[*self.model.index.get(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }
}

/// Prompt-independent part of a forward pass.
struct Encoded {
    f0: usize,
    t0: usize,
    skips: Vec<Var>,
    bottleneck: Var,
}

/// Geometry of one padded input.
#[derive(Debug, Clone, Copy)]
struct Grid {
    f: usize,
    t: usize,
    f_pad: usize,
    t_pad: usize,
}

impl SeparatorModel {
    pub fn new(config: SeparatorConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::builtin(config.hash_buckets);
        let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(config.init_seed), names: Vec::new(), params: Vec::new() };
        let l = config.levels;
        let e = config.embed_dim;
        let phi = config.freq_features;
        let mut c_in = 1 + phi;
        for lvl in 0..l {
            let c = config.channels(lvl);
            b.add(format!("enc{lvl}.w"), c, c_in * 9, Init::He, c_in * 9);
            b.add(format!("enc{lvl}.b"), c, 1, Init::Zeros, 1);
            b.add(format!("enc{lvl}.norm.g"), c, 1, Init::Ones, 1);
            b.add(format!("enc{lvl}.norm.b"), c, 1, Init::Zeros, 1);
            c_in = c;
        }
        let cb = config.channels(l - 1);
        b.add("bottleneck.w".into(), cb, cb * 9, Init::He, cb * 9);
        b.add("bottleneck.b".into(), cb, 1, Init::Zeros, 1);
        b.add("bottleneck.norm.g".into(), cb, 1, Init::Ones, 1);
        b.add("bottleneck.norm.b".into(), cb, 1, Init::Zeros, 1);
        for lvl in (0..l).rev() {
            let c = config.channels(lvl);
            let c_deep = if lvl == l - 1 { cb } else { config.channels(lvl + 1) };
            b.add(format!("dec{lvl}.up.w"), c, c_deep, Init::Linear, c_deep);
            b.add(format!("dec{lvl}.up.b"), c, 1, Init::Zeros, 1);
            b.add(format!("dec{lvl}.w"), c, 2 * c * 9, Init::He, 2 * c * 9);
            b.add(format!("dec{lvl}.b"), c, 1, Init::Zeros, 1);
            b.add(format!("dec{lvl}.norm.g"), c, 1, Init::Ones, 1);
            b.add(format!("dec{lvl}.norm.b"), c, 1, Init::Zeros, 1);
        }
        let c0 = config.channels(0);
        b.add("out.w".into(), 1, c0, Init::Linear, c0);
        b.add("out.b".into(), 1, 1, Init::Zeros, 1);
        for lvl in (0..l).filter(|&lvl| config.has_attention(lvl)) {
            let c = config.channels(lvl);
            for part in ["self", "cross"] {
                let pre = format!("attn{lvl}.{part}");
                b.add(format!("{pre}.ln.g"), 1, c, Init::Ones, 1);
                b.add(format!("{pre}.ln.b"), 1, c, Init::Zeros, 1);
                b.add(format!("{pre}.in.w"), c, e, Init::Linear, c);
                b.add(format!("{pre}.pos.w"), phi, e, Init::Linear, phi);
                b.add(format!("{pre}.in.b"), 1, e, Init::Zeros, 1);
                b.add(format!("{pre}.q"), e, e, Init::Linear, e);
                b.add(format!("{pre}.k"), e, e, Init::Linear, e);
                b.add(format!("{pre}.v"), e, e, Init::Linear, e);
                b.add(format!("{pre}.o.w"), e, c, Init::Small, e);
                b.add(format!("{pre}.o.b"), 1, c, Init::Zeros, 1);
            }
        }
        b.add("text.emb".into(), vocab.size(), e, Init::Unit, 1);
        b.add("text.num.w".into(), phi, e, Init::Unit, 1);
        Ok(Self::from_parts(config, vocab, b.names, b.params))
    }

    pub(crate) fn from_parts(config: SeparatorConfig, vocab: Vocabulary, names: Vec<String>, params: Vec<Array2<f64>>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { config, vocab, names, index, params }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Array2<f64>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    fn bind<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        Bound { model: self, vars }
    }

    fn tokens(&self, text: &str) -> Result<Vec<Token>> {
        if text.trim().is_empty() {
            return Err(Error::invalid("prompt text is empty"));
        }
        let tokens = self.vocab.tokenize(text, self.config.context_window);
        if tokens.is_empty() {
            return Err(Error::invalid(format!("prompt {text:?} has no tokens")));
        }
        Ok(tokens)
    }

    /// Token embedding + position code + frequency features of Hz numbers.
    fn embed(&self, tape: &mut Tape, bound: &Bound, tokens: &[Token]) -> Var {
        let e = self.config.embed_dim;
        let phi = self.config.freq_features;
        let ids: Vec<usize> = tokens.iter().map(|t| t.id).collect();
        let rows = tape.gather_rows(bound.p("text.emb"), ids);
        let pos = tape.leaf(positional_encoding(tokens.len(), e));
        let mut feats = Array2::zeros((tokens.len(), phi));
        for (i, t) in tokens.iter().enumerate() {
            if let Some(f) = t.freq_hz {
                feats.row_mut(i).assign(&ndarray::Array1::from(freq_features(f, phi)));
            }
        }
        let feats = tape.leaf(feats);
        let num = tape.matmul(feats, bound.p("text.num.w"));
        let x = tape.add(rows, pos);
        tape.add(x, num)
    }

    pub fn encode_text(&self, text: &str) -> Result<TextEmbedding> {
        let tokens = self.tokens(text)?;
        let mut tape = Tape::new(false);
        let bound = self.bind(&mut tape);
        let v = self.embed(&mut tape, &bound, &tokens);
        Ok(TextEmbedding { values: tape.value(v).clone(), tokens })
    }

    fn grid(&self, mag: &Array2<f64>) -> Result<Grid> {
        let (f, t) = mag.dim();
        if f != self.config.stft.freq_bins() {
            return Err(Error::invalid(format!(
                "spectrogram has {f} bins, model expects {}",
                self.config.stft.freq_bins()
            )));
        }
        if t == 0 {
            return Err(Error::invalid("spectrogram has no frames"));
        }
        Ok(Grid { f, t, f_pad: self.config.padded(f), t_pad: self.config.padded(t) })
    }

    /// Frequency features of every row of a level's token matrix, ordered
    /// frame-major.
    fn level_features(&self, level: usize, f: usize, t: usize) -> Array2<f64> {
        let phi = self.config.freq_features;
        let per_row: Vec<Vec<f64>> = (0..f).map(|fi| freq_features(self.bin_hz(level, fi), phi)).collect();
        Array2::from_shape_fn((f * t, phi), |(r, k)| per_row[r % f][k])
    }

    /// Centre frequency of bin `fi` at `level`, where one bin spans
    /// `2^level` input bins.
    fn bin_hz(&self, level: usize, fi: usize) -> f64 {
        let stride = (1usize << level) as f64;
        let bin = fi as f64 * stride + (stride - 1.0) / 2.0;
        bin * self.config.sample_rate as f64 / self.config.stft.fft_length as f64
    }

    /// `(C, f·t)` map to frame-major tokens `(t·f, C)` and back.
    fn frame_major(f: usize, t: usize) -> (Vec<usize>, Vec<usize>) {
        let to: Vec<usize> = (0..t * f).map(|r| (r % f) * t + r / f).collect();
        let mut back = vec![0; f * t];
        for (r, &src) in to.iter().enumerate() {
            back[src] = r;
        }
        (to, back)
    }

    fn project_in(&self, tape: &mut Tape, bound: &Bound, pre: &str, x: Var, feats: Var) -> Var {
        let n = tape.layer_norm(x, bound.p(&format!("{pre}.ln.g")), bound.p(&format!("{pre}.ln.b")));
        let h = tape.matmul(n, bound.p(&format!("{pre}.in.w")));
        let pos = tape.matmul(feats, bound.p(&format!("{pre}.pos.w")));
        let h = tape.add(h, pos);
        tape.add_row(h, bound.p(&format!("{pre}.in.b")))
    }

    fn project_out(&self, tape: &mut Tape, bound: &Bound, pre: &str, residual: Var, a: Var) -> Var {
        let o = tape.matmul(a, bound.p(&format!("{pre}.o.w")));
        let o = tape.add_row(o, bound.p(&format!("{pre}.o.b")));
        tape.add(residual, o)
    }

    /// 3×3 conv, per-channel normalization, SiLU.
    fn conv_block(tape: &mut Tape, bound: &Bound, pre: &str, x: Var, f: usize, t: usize) -> Var {
        let c = tape.conv(x, bound.p(&format!("{pre}.w")), bound.p(&format!("{pre}.b")), f, t, 3);
        let n = tape.channel_norm(c, bound.p(&format!("{pre}.norm.g")), bound.p(&format!("{pre}.norm.b")));
        tape.silu(n)
    }

    fn encode(&self, tape: &mut Tape, bound: &Bound, mag: &Array2<f64>, g: Grid) -> Encoded {
        let cfg = &self.config;
        let mean = mag.mean().unwrap_or(0.0);
        let phi = cfg.freq_features;
        let mut input = Array2::zeros((1 + phi, g.f_pad * g.t_pad));
        for fi in 0..g.f_pad {
            let coords = freq_features(self.bin_hz(0, fi), phi);
            for ti in 0..g.t_pad {
                let col = fi * g.t_pad + ti;
                if fi < g.f && ti < g.t {
                    input[[0, col]] = (mag[[fi, ti]] / (mean + INPUT_EPS)).ln_1p();
                }
                for (k, &c) in coords.iter().enumerate() {
                    input[[1 + k, col]] = c;
                }
            }
        }
        let mut x = tape.leaf(input);
        let (mut f, mut t) = (g.f_pad, g.t_pad);
        let mut skips = Vec::new();
        for lvl in 0..cfg.levels {
            let h = Self::conv_block(tape, bound, &format!("enc{lvl}"), x, f, t);
            let skip = if cfg.has_attention(lvl) {
                let (to, _) = Self::frame_major(f, t);
                let feats = tape.leaf(self.level_features(lvl, f, t));
                let tokens = tape.transpose(h);
                let tokens = tape.gather_rows(tokens, to);
                let pre = format!("attn{lvl}.self");
                let hin = self.project_in(tape, bound, &pre, tokens, feats);
                let q = tape.matmul(hin, bound.p(&format!("{pre}.q")));
                let k = tape.matmul(hin, bound.p(&format!("{pre}.k")));
                let v = tape.matmul(hin, bound.p(&format!("{pre}.v")));
                let a = tape.attention(q, k, v, cfg.heads, t, false);
                // Kept frame-major; the cross-attention picks it up per prompt.
                self.project_out(tape, bound, &pre, tokens, a)
            } else {
                h
            };
            skips.push(skip);
            x = tape.avg_pool(h, f, t);
            f /= 2;
            t /= 2;
        }
        let bottleneck = Self::conv_block(tape, bound, "bottleneck", x, f, t);
        Encoded { f0: g.f_pad, t0: g.t_pad, skips, bottleneck }
    }

    fn decode(&self, tape: &mut Tape, bound: &Bound, enc: &Encoded, text: Var, g: Grid) -> Var {
        let cfg = &self.config;
        let mut d = enc.bottleneck;
        for lvl in (0..cfg.levels).rev() {
            let (f, t) = (enc.f0 >> lvl, enc.t0 >> lvl);
            let up = tape.upsample(d, f / 2, t / 2);
            let up = tape.conv(up, bound.p(&format!("dec{lvl}.up.w")), bound.p(&format!("dec{lvl}.up.b")), f, t, 1);
            let skip = if cfg.has_attention(lvl) {
                let (_, back) = Self::frame_major(f, t);
                let pre = format!("attn{lvl}.cross");
                let tokens = enc.skips[lvl];
                let feats = tape.leaf(self.level_features(lvl, f, t));
                let hin = self.project_in(tape, bound, &pre, tokens, feats);
                let q = tape.matmul(hin, bound.p(&format!("{pre}.q")));
                let k = tape.matmul(text, bound.p(&format!("{pre}.k")));
                let v = tape.matmul(text, bound.p(&format!("{pre}.v")));
                let a = tape.attention(q, k, v, cfg.heads, 1, true);
                let out = self.project_out(tape, bound, &pre, tokens, a);
                let out = tape.gather_rows(out, back);
                tape.transpose(out)
            } else {
                enc.skips[lvl]
            };
            let cat = tape.concat_rows(&[up, skip]);
            d = Self::conv_block(tape, bound, &format!("dec{lvl}"), cat, f, t);
        }
        let logits = tape.conv(d, bound.p("out.w"), bound.p("out.b"), enc.f0, enc.t0, 1);
        let mask = tape.sigmoid(logits);
        let keep: Vec<usize> = (0..g.f).flat_map(|fi| (0..g.t).map(move |ti| fi * g.t_pad + ti)).collect();
        tape.gather_cols(mask, keep)
    }

    /// Records a forward pass for `prompts` on one mixture; returns one
    /// `(1, F·T)` mask node per prompt.
    fn forward(&self, tape: &mut Tape, mag: &Array2<f64>, prompts: &[Vec<Token>]) -> Result<(Vec<Var>, Bound<'_>)> {
        let g = self.grid(mag)?;
        let bound = self.bind(tape);
        let enc = self.encode(tape, &bound, mag, g);
        let mut masks = Vec::with_capacity(prompts.len());
        for tokens in prompts {
            let text = self.embed(tape, &bound, tokens);
            masks.push(self.decode(tape, &bound, &enc, text, g));
        }
        Ok((masks, bound))
    }

    /// One mask per prompt for a mixture magnitude spectrogram.
    pub fn predict_masks(&self, mix_mag: &MagnitudeSpectrogram, prompts: &[String]) -> Result<Vec<Mask>> {
        let tokens = prompts.iter().map(|p| self.tokens(p)).collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new(false);
        let (vars, _) = self.forward(&mut tape, &mix_mag.bins, &tokens)?;
        let shape = mix_mag.bins.dim();
        vars.into_iter()
            .map(|v| {
                let bins = tape.value(v).clone().into_shape_with_order(shape).expect("mask covers the grid");
                Mask::new(bins)
            })
            .collect()
    }

    pub fn predict_mask(&self, mix_mag: &MagnitudeSpectrogram, prompt: &str) -> Result<Mask> {
        Ok(self.predict_masks(mix_mag, &[prompt.to_string()])?.remove(0))
    }

    /// Mean over prompts of the L1 distance between masked mixture
    /// magnitude and each target, with gradients for every parameter.
    pub fn loss_and_grads(&self, examples: &[LossExample]) -> Result<(f64, Vec<Array2<f64>>)> {
        let (loss, grads) = self.loss_impl(examples, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }

    pub fn loss(&self, examples: &[LossExample]) -> Result<f64> {
        Ok(self.loss_impl(examples, false)?.0)
    }

    fn loss_impl(&self, examples: &[LossExample], grad: bool) -> Result<(f64, Option<Vec<Array2<f64>>>)> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let mut tape = Tape::new(grad);
        let mut terms = Vec::new();
        let mut bound_vars = None;
        for ex in examples {
            if ex.targets.len() != ex.prompts.len() || ex.prompts.is_empty() {
                return Err(Error::invalid("each prompt needs exactly one target"));
            }
            if ex.targets.iter().any(|t| t.dim() != ex.mix.dim()) {
                return Err(Error::invalid("target grid differs from the mixture grid"));
            }
            let tokens = ex.prompts.iter().map(|p| self.tokens(p)).collect::<Result<Vec<_>>>()?;
            let (masks, bound) = self.forward(&mut tape, &ex.mix, &tokens)?;
            let flat_mix = ex.mix.clone().into_shape_with_order((1, ex.mix.len())).expect("contiguous");
            for (m, target) in masks.into_iter().zip(&ex.targets) {
                let pred = tape.mul_const(m, flat_mix.clone());
                let flat_t = target.clone().into_shape_with_order((1, target.len())).expect("contiguous");
                terms.push(tape.l1_mean(pred, flat_t));
            }
            bound_vars.get_or_insert_with(Vec::new).push(bound.vars);
        }
        let loss_var = tape.mean_of(&terms);
        let loss = tape.scalar(loss_var);
        if !grad {
            return Ok((loss, None));
        }
        let mut grads = tape.backward(loss_var);
        let mut out: Vec<Array2<f64>> = self.params.iter().map(|p| Array2::zeros(p.dim())).collect();
        for vars in bound_vars.unwrap_or_default() {
            for (i, v) in vars.into_iter().enumerate() {
                if let Some(g) = grads[v].take() {
                    out[i] += &g;
                }
            }
        }
        Ok((loss, Some(out)))
    }
}

/// One mixture with its prompts and target magnitudes on the mixture grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LossExample {
    pub mix: Array2<f64>,
    pub prompts: Vec<String>,
    pub targets: Vec<Array2<f64>>,
}

impl LossExample {
    /// Frames `start..start + len` of every spectrogram.
    pub fn crop(&self, start: usize, len: usize) -> Self {
        let cut = |a: &Array2<f64>| a.slice(ndarray::s![.., start..start + len]).to_owned();
        Self {
            mix: cut(&self.mix),
            prompts: self.prompts.clone(),
            targets: self.targets.iter().map(cut).collect(),
        }
    }

    pub fn frames(&self) -> usize {
        self.mix.len_of(Axis(1))
    }
}
