// Copyright 2026 The cvnmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! The full translation model: shared encoder, optional prior/posterior
//! networks and the attention decoder, all stored in one [`ParamStore`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{wrap_target, Batch, PaddedIds};
use crate::decoder::{self, prepare_source, teacher_forced_nll, DecoderParams, DecoderState, Hypothesis, SourceContext};
use crate::encoder::{encode, AnnotationMatrix, EncoderParams, Side};
use crate::error::{Error, Result};
use crate::latent::{
    kl_diag_gauss_vars, posterior_params, posterior_params_meanpool, prior_params, reparam_sample, GaussianHead,
    GaussianParams, GaussianVars,
};
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};

/// Half-width of the uniform weight initialisation.
pub const INIT_SCALE: f64 = 0.08;

pub(crate) fn uniform_init<F: Real, R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<F> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| F::lit(rng.random_range(-INIT_SCALE..INIT_SCALE))).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

pub(crate) fn zero_bias<F: Real>(n: usize) -> Tensor<F> {
    Tensor::zeros(&[n])
}

/// LSTM bias: zeros with the forget-gate block at +1.
pub(crate) fn lstm_bias<F: Real>(hidden: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[4 * hidden]);
    t.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = F::one());
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMode {
    /// Attention encoder-decoder without a latent variable.
    Seq2seq,
    /// Conditional VAE with the co-attention posterior.
    Cvae,
    /// Conditional VAE with the mean-pool posterior.
    CvaeMeanpool,
}

impl ModelMode {
    pub fn is_variational(self) -> bool {
        !matches!(self, ModelMode::Seq2seq)
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq2seq" => Ok(ModelMode::Seq2seq),
            "cvae" => Ok(ModelMode::Cvae),
            "cvae_meanpool_posterior" => Ok(ModelMode::CvaeMeanpool),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected seq2seq|cvae|cvae_meanpool_posterior)"
            ))),
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelMode::Seq2seq => "seq2seq",
            ModelMode::Cvae => "cvae",
            ModelMode::CvaeMeanpool => "cvae_meanpool_posterior",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub d_emb: usize,
    pub d_hid: usize,
    pub layers: usize,
    pub d_z: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let dims = [self.d_emb, self.d_hid, self.layers, self.src_vocab, self.tgt_vocab];
        if dims.contains(&0) || (self.mode.is_variational() && self.d_z == 0) {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Latent width seen by the decoder (0 for seq2seq).
    pub fn decoder_latent(&self) -> usize {
        if self.mode.is_variational() {
            self.d_z
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    pub encoder: EncoderParams,
    pub prior: Option<GaussianHead>,
    pub posterior: Option<GaussianHead>,
    pub decoder: DecoderParams,
}

/// Tape outputs of one training/validation forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Per-sentence reconstruction NLL, `[B]`.
    pub nll: Var,
    /// Per-sentence KL(q || p), `[B]`; absent for seq2seq.
    pub kl: Option<Var>,
    pub prior: Option<GaussianVars>,
    pub posterior: Option<GaussianVars>,
    pub z: Option<Var>,
}

/// A single source sentence prepared for generation on its own tape.
pub struct Generation<F> {
    pub graph: Graph<F>,
    pub source: SourceContext,
    pub init: DecoderState,
    pub src_ann: AnnotationMatrix,
}

impl<F: Real> Model<F> {
    /// Random initialisation. Parameters are drawn in registration order:
    /// encoder, prior, posterior, decoder.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let encoder = EncoderParams::register(&mut params, rng, &config)?;
        let ann = encoder.annotation_width();
        let (prior, posterior) = if config.mode.is_variational() {
            let prior = GaussianHead::register(&mut params, rng, "prior", ann, config.d_hid, config.d_z)?;
            let post_in = match config.mode {
                ModelMode::Cvae => 4 * ann,
                _ => 2 * ann,
            };
            let post = GaussianHead::register(&mut params, rng, "post", post_in, config.d_hid, config.d_z)?;
            (Some(prior), Some(post))
        } else {
            (None, None)
        };
        let decoder = DecoderParams::register(&mut params, rng, &config, encoder.tgt_emb, config.decoder_latent())?;
        Ok(Model {
            config,
            params,
            encoder,
            prior,
            posterior,
            decoder,
        })
    }

    /// Model with every parameter set to zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut m = Self::new(config, &mut rng)?;
        m.params.zero_all();
        Ok(m)
    }

    /// Same architecture with parameters converted to another scalar type.
    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            prior: self.prior.clone(),
            posterior: self.posterior.clone(),
            decoder: self.decoder.clone(),
        }
    }

    pub fn with_params(&self, params: ParamStore<F>) -> Self {
        Model {
            params,
            ..self.clone()
        }
    }

    pub fn encode(&self, g: &mut Graph<F>, ids: &PaddedIds, side: Side) -> Result<AnnotationMatrix> {
        encode(g, &self.params, &self.encoder, ids, side)
    }

    pub fn prior_vars(&self, g: &mut Graph<F>, src: &AnnotationMatrix) -> Result<GaussianVars> {
        let head = self.prior.as_ref().ok_or_else(|| Error::invalid("seq2seq model has no prior network"))?;
        prior_params(g, &self.params, head, src)
    }

    pub fn posterior_vars(&self, g: &mut Graph<F>, src: &AnnotationMatrix, tgt: &AnnotationMatrix) -> Result<GaussianVars> {
        let head = self
            .posterior
            .as_ref()
            .ok_or_else(|| Error::invalid("seq2seq model has no posterior network"))?;
        match self.config.mode {
            ModelMode::Cvae => posterior_params(g, &self.params, head, src, tgt),
            _ => posterior_params_meanpool(g, &self.params, head, src, tgt),
        }
    }

    /// Forward pass for one batch.
    ///
    /// `inference` feeds the prior and posterior networks; `translation`, when
    /// given, replaces it on the encoder-decoder path (word dropout). `noise`
    /// is the `[B, d_z]` standard-normal draw for the reparameterized sample
    /// and is required for variational models.
    pub fn forward(
        &self,
        g: &mut Graph<F>,
        inference: &Batch,
        translation: Option<&Batch>,
        noise: Option<&Tensor<F>>,
    ) -> Result<ForwardPass> {
        let trans = translation.unwrap_or(inference);
        if trans.size() != inference.size() {
            return Err(Error::invalid("translation and inference batches differ in size"));
        }
        let src_inf = self.encode(g, &inference.src, Side::Source)?;
        let (z, prior, posterior, kl) = if self.config.mode.is_variational() {
            let noise = noise.ok_or_else(|| Error::invalid("variational forward pass needs noise"))?;
            let tgt_inf = self.encode(g, &inference.tgt, Side::Target)?;
            let prior = self.prior_vars(g, &src_inf)?;
            let post = self.posterior_vars(g, &src_inf, &tgt_inf)?;
            let eps = g.constant(noise.clone());
            let z = reparam_sample(g, &post, eps)?;
            let kl = kl_diag_gauss_vars(g, &post, &prior)?;
            (Some(z), Some(prior), Some(post), Some(kl))
        } else {
            (None, None, None, None)
        };
        let src_tr = if translation.is_some() {
            self.encode(g, &trans.src, Side::Source)?
        } else {
            src_inf
        };
        let (ctx, init) = prepare_source(g, &self.params, &self.decoder, &src_tr)?;
        let nll = teacher_forced_nll(g, &self.params, &self.decoder, &trans.tgt, &ctx, &init, z)?;
        Ok(ForwardPass {
            nll,
            kl,
            prior,
            posterior,
            z,
        })
    }

    /// Encodes one source sentence on a fresh tape for generation.
    pub fn prepare(&self, source: &[usize]) -> Result<Generation<F>> {
        let mut graph = Graph::new();
        let ids = PaddedIds::from_seqs(&[source])?;
        let src_ann = self.encode(&mut graph, &ids, Side::Source)?;
        let (ctx, init) = prepare_source(&mut graph, &self.params, &self.decoder, &src_ann)?;
        Ok(Generation {
            graph,
            source: ctx,
            init,
            src_ann,
        })
    }

    /// Prior parameters for one source sentence.
    pub fn prior_of(&self, source: &[usize]) -> Result<GaussianParams> {
        let mut gen = self.prepare(source)?;
        let p = self.prior_vars(&mut gen.graph, &gen.src_ann)?;
        Ok(p.to_params(&gen.graph).remove(0))
    }

    /// Posterior parameters for one sentence pair (target without BOS/EOS).
    pub fn posterior_of(&self, source: &[usize], target_words: &[usize]) -> Result<GaussianParams> {
        let mut g = Graph::new();
        let src = self.encode(&mut g, &PaddedIds::from_seqs(&[source])?, Side::Source)?;
        let tgt = self.encode(&mut g, &PaddedIds::from_seqs(&[wrap_target(target_words.to_vec())])?, Side::Target)?;
        let q = self.posterior_vars(&mut g, &src, &tgt)?;
        Ok(q.to_params(&g).remove(0))
    }

    fn latent_var(&self, g: &mut Graph<F>, z: Option<&[f64]>) -> Result<Option<Var>> {
        let dz = self.config.decoder_latent();
        match (z, dz) {
            (_, 0) => Ok(None),
            (Some(z), d) if z.len() == d => {
                let t = Tensor::new(vec![1, d], z.iter().map(|&v| F::lit(v)).collect())?;
                Ok(Some(g.constant(t)))
            }
            (Some(z), d) => Err(Error::invalid(format!("latent vector has {} entries, expected {d}", z.len()))),
            (None, _) => Err(Error::invalid("variational model needs a latent vector for decoding")),
        }
    }

    /// Greedy decode of one sentence with a fixed latent vector.
    pub fn greedy(&self, source: &[usize], z: Option<&[f64]>, max_len: usize) -> Result<Hypothesis> {
        let mut gen = self.prepare(source)?;
        let zv = self.latent_var(&mut gen.graph, z)?;
        decoder::greedy_decode(&mut gen.graph, &self.params, &self.decoder, &gen.source, &gen.init, zv, max_len)
    }

    pub fn beam(&self, source: &[usize], z: Option<&[f64]>, width: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
        let mut gen = self.prepare(source)?;
        let zv = self.latent_var(&mut gen.graph, z)?;
        decoder::beam_decode(&mut gen.graph, &self.params, &self.decoder, &gen.source, &gen.init, zv, width, max_len)
    }

    /// Total log-probability of `tokens` (plus EOS when `with_eos`) under teacher forcing.
    pub fn score(&self, source: &[usize], z: Option<&[f64]>, tokens: &[usize], with_eos: bool) -> Result<f64> {
        let mut gen = self.prepare(source)?;
        let zv = self.latent_var(&mut gen.graph, z)?;
        let mut seq = vec![crate::data::BOS];
        seq.extend_from_slice(tokens);
        if with_eos {
            seq.push(crate::data::EOS);
        }
        if seq.len() < 2 {
            return Ok(0.0);
        }
        let ids = PaddedIds::from_seqs(&[seq])?;
        let g = &mut gen.graph;
        let nll = teacher_forced_nll(g, &self.params, &self.decoder, &ids, &gen.source, &gen.init, zv)?;
        Ok(-g.value(nll).item().as_f64())
    }

    /// Default generation bound: twice the source length plus ten.
    pub fn default_max_len(source: &[usize]) -> usize {
        2 * source.len() + 10
    }
}
