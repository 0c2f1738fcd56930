//! The dual encoder: vision tower, text tower, tokenizer, parameter
//! snapshotting, and checkpoint persistence.
//!
//! Reference architecture, fixed so derived test values are portable:
//!
//! * vision: 4×4 patch flatten → shared linear patch embedding → concat →
//!   two GELU hidden layers → linear to the joint dimension → L2 normalize.
//! * text: token embedding + learned positional embedding → GELU → mean
//!   pool over real positions → two GELU hidden layers → linear to the
//!   joint dimension → L2 normalize. The pre-pool GELU makes the encoder
//!   sensitive to word order, which the shuffled-caption study requires.
//!
//! Both towers are deterministic functions of (parameters, input); repeated
//! evaluation is bitwise stable.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::core_math::Temperature;
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::tensor_io::ImageTensor;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
/// Ids below this are reserved for the special tokens above.
pub const FIRST_WORD_ID: u32 = 4;

/// Hard cap on token-sequence length, including BOS/EOS.
pub const MAX_TOKENS: usize = 77;

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

/// Closed vocabulary built from a corpus; unknown words map to UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build from any word iterator: lowercased, deduplicated, sorted.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        list.sort();
        list.dedup();
        let index = list
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), FIRST_WORD_ID + i as u32))
            .collect();
        Self { words: list, index }
    }

    /// Build from raw texts using the tokenizer's own word splitting.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::from_words(texts.into_iter().flat_map(split_words))
    }

    /// Total id space including the four special ids.
    pub fn size(&self) -> usize {
        self.words.len() + FIRST_WORD_ID as usize
    }

    pub fn id_of(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    /// Word list in id order (specials excluded).
    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Lowercase and split on whitespace and punctuation boundaries; each
/// punctuation character becomes its own token.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Token ids framed by BOS/EOS, at most [`MAX_TOKENS`] long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // always at least [BOS, EOS]
    }
}

/// Tokenize: split, map to ids (unknown → UNK), frame with BOS/EOS, and
/// truncate the tail so the total length stays within `max_tokens`.
pub fn tokenize(text: &str, vocab: &Vocab, max_tokens: usize) -> TokenSequence {
    let words = split_words(text);
    let keep = max_tokens.saturating_sub(2);
    let mut ids = Vec::with_capacity(words.len().min(keep) + 2);
    ids.push(BOS_ID);
    ids.extend(words.iter().take(keep).map(|w| vocab.id_of(w)));
    ids.push(EOS_ID);
    TokenSequence { ids }
}

// ---------------------------------------------------------------------------
// Configuration and parameters
// ---------------------------------------------------------------------------

/// Architecture hyperparameters; all shapes derive from these.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub image_c: usize,
    pub patch_size: usize,
    pub vision_patch_embed: usize,
    pub vision_hidden: usize,
    pub text_embed: usize,
    pub text_hidden: usize,
    /// Joint embedding dimension d_E.
    pub embed_dim: usize,
    pub max_tokens: usize,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_h: 32,
            image_w: 32,
            image_c: 3,
            patch_size: 4,
            vision_patch_embed: 16,
            vision_hidden: 192,
            text_embed: 64,
            text_hidden: 128,
            embed_dim: 64,
            max_tokens: MAX_TOKENS,
            vocab_size: FIRST_WORD_ID as usize,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::Config("embed_dim must be at least 2".into()));
        }
        for (name, v) in [
            ("image_h", self.image_h),
            ("image_w", self.image_w),
            ("image_c", self.image_c),
            ("patch_size", self.patch_size),
            ("vision_patch_embed", self.vision_patch_embed),
            ("vision_hidden", self.vision_hidden),
            ("text_embed", self.text_embed),
            ("text_hidden", self.text_hidden),
            ("max_tokens", self.max_tokens),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.image_h % self.patch_size != 0 || self.image_w % self.patch_size != 0 {
            return Err(Error::Config("image dims must be divisible by patch size".into()));
        }
        if self.max_tokens < 3 || self.max_tokens > MAX_TOKENS {
            return Err(Error::Config(format!("max_tokens must be in 3..={MAX_TOKENS}")));
        }
        if self.vocab_size < FIRST_WORD_ID as usize {
            return Err(Error::Config("vocab_size below special-id count".into()));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        (self.image_h / self.patch_size) * (self.image_w / self.patch_size)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.image_c
    }

    /// Width of the concatenated patch embeddings fed to the vision MLP.
    pub fn vision_in(&self) -> usize {
        self.num_patches() * self.vision_patch_embed
    }
}

/// Vision-encoder parameters. Field order is the checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionParams {
    pub patch_w: Array2<f32>,
    pub patch_b: Array2<f32>,
    pub w1: Array2<f32>,
    pub b1: Array2<f32>,
    pub w2: Array2<f32>,
    pub b2: Array2<f32>,
    pub w_out: Array2<f32>,
    pub b_out: Array2<f32>,
}

/// Text-encoder parameters. Field order is the checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextParams {
    pub tok_emb: Array2<f32>,
    pub pos_emb: Array2<f32>,
    pub w1: Array2<f32>,
    pub b1: Array2<f32>,
    pub w2: Array2<f32>,
    pub b2: Array2<f32>,
    pub w_out: Array2<f32>,
    pub b_out: Array2<f32>,
}

macro_rules! named_params {
    ($self:expr, $($name:literal => $field:ident),+ $(,)?) => {
        vec![$(($name, &$self.$field)),+]
    };
}

macro_rules! named_params_mut {
    ($self:expr, $($name:literal => $field:ident),+ $(,)?) => {
        vec![$(($name, &mut $self.$field)),+]
    };
}

impl VisionParams {
    pub fn named(&self) -> Vec<(&'static str, &Array2<f32>)> {
        named_params!(self,
            "vision.patch_w" => patch_w, "vision.patch_b" => patch_b,
            "vision.w1" => w1, "vision.b1" => b1,
            "vision.w2" => w2, "vision.b2" => b2,
            "vision.w_out" => w_out, "vision.b_out" => b_out,
        )
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f32>)> {
        named_params_mut!(self,
            "vision.patch_w" => patch_w, "vision.patch_b" => patch_b,
            "vision.w1" => w1, "vision.b1" => b1,
            "vision.w2" => w2, "vision.b2" => b2,
            "vision.w_out" => w_out, "vision.b_out" => b_out,
        )
    }
}

impl TextParams {
    pub fn named(&self) -> Vec<(&'static str, &Array2<f32>)> {
        named_params!(self,
            "text.tok_emb" => tok_emb, "text.pos_emb" => pos_emb,
            "text.w1" => w1, "text.b1" => b1,
            "text.w2" => w2, "text.b2" => b2,
            "text.w_out" => w_out, "text.b_out" => b_out,
        )
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Array2<f32>)> {
        named_params_mut!(self,
            "text.tok_emb" => tok_emb, "text.pos_emb" => pos_emb,
            "text.w1" => w1, "text.b1" => b1,
            "text.w2" => w2, "text.b2" => b2,
            "text.w_out" => w_out, "text.b_out" => b_out,
        )
    }
}

fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
}

/// Which vision parameter set to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisionWhich {
    Theta,
    ThetaOrig,
}

/// Trainable vision parameters θ, frozen text parameters φ, the frozen
/// pre-fine-tuning snapshot θ_orig, and the contrastive temperature.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub theta: VisionParams,
    pub phi: TextParams,
    theta_orig: Option<VisionParams>,
    pub temperature: Temperature,
}

impl ModelState {
    /// Fresh state with uniform(−1/√fan_in, 1/√fan_in) parameters under a
    /// fixed fill order, and τ = 0.07.
    pub fn init(mut config: EncoderConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.size();
        config.validate()?;
        let mut rng = derive_rng(seed, "init", 0);
        let c = &config;
        let theta = VisionParams {
            patch_w: uniform_init(&mut rng, c.patch_dim(), c.vision_patch_embed, c.patch_dim()),
            patch_b: uniform_init(&mut rng, 1, c.vision_patch_embed, c.patch_dim()),
            w1: uniform_init(&mut rng, c.vision_in(), c.vision_hidden, c.vision_in()),
            b1: uniform_init(&mut rng, 1, c.vision_hidden, c.vision_in()),
            w2: uniform_init(&mut rng, c.vision_hidden, c.vision_hidden, c.vision_hidden),
            b2: uniform_init(&mut rng, 1, c.vision_hidden, c.vision_hidden),
            w_out: uniform_init(&mut rng, c.vision_hidden, c.embed_dim, c.vision_hidden),
            b_out: uniform_init(&mut rng, 1, c.embed_dim, c.vision_hidden),
        };
        let phi = TextParams {
            tok_emb: uniform_init(&mut rng, c.vocab_size, c.text_embed, c.text_embed),
            pos_emb: uniform_init(&mut rng, c.max_tokens, c.text_embed, c.text_embed),
            w1: uniform_init(&mut rng, c.text_embed, c.text_hidden, c.text_embed),
            b1: uniform_init(&mut rng, 1, c.text_hidden, c.text_embed),
            w2: uniform_init(&mut rng, c.text_hidden, c.text_hidden, c.text_hidden),
            b2: uniform_init(&mut rng, 1, c.text_hidden, c.text_hidden),
            w_out: uniform_init(&mut rng, c.text_hidden, c.embed_dim, c.text_hidden),
            b_out: uniform_init(&mut rng, 1, c.embed_dim, c.text_hidden),
        };
        Ok(Self {
            config,
            vocab,
            theta,
            phi,
            theta_orig: None,
            temperature: Temperature::from_tau(0.07),
        })
    }

    /// Freeze a copy of θ as θ_orig. Callable once, before fine-tuning.
    pub fn snapshot(&mut self) -> Result<()> {
        if self.theta_orig.is_some() {
            return Err(Error::State("snapshot already taken".into()));
        }
        self.theta_orig = Some(self.theta.clone());
        Ok(())
    }

    pub fn theta_orig(&self) -> Option<&VisionParams> {
        self.theta_orig.as_ref()
    }

    pub fn has_snapshot(&self) -> bool {
        self.theta_orig.is_some()
    }

    fn vision_params(&self, which: VisionWhich) -> Result<&VisionParams> {
        match which {
            VisionWhich::Theta => Ok(&self.theta),
            VisionWhich::ThetaOrig => self
                .theta_orig
                .as_ref()
                .ok_or_else(|| Error::State("theta_orig requested before snapshot".into())),
        }
    }

    /// Encode an image batch. Returns pre-normalization outputs and
    /// unit-norm embeddings, one row per image.
    pub fn encode_image(
        &self,
        images: &[ImageTensor],
        which: VisionWhich,
    ) -> Result<(Array2<f32>, Array2<f32>)> {
        let params = self.vision_params(which)?;
        let patches = patchify_batch(images, &self.config)?;
        let mut tape = Tape::new();
        let input = tape.constant(patches);
        let vars = bind_vision(&mut tape, params, false);
        let (raw, emb) = vision_forward(&mut tape, &vars, input, images.len(), &self.config);
        Ok((tape.value(raw).clone(), tape.value(emb).clone()))
    }

    /// Encode a token-sequence batch. Returns raw outputs and unit-norm
    /// embeddings, one row per sequence.
    pub fn encode_text(&self, seqs: &[TokenSequence]) -> Result<(Array2<f32>, Array2<f32>)> {
        let mut tape = Tape::new();
        let vars = bind_text(&mut tape, &self.phi, false);
        let (raw, emb) = text_forward(&mut tape, &vars, seqs, &self.config)?;
        Ok((tape.value(raw).clone(), tape.value(emb).clone()))
    }
}

// ---------------------------------------------------------------------------
// Forward passes on the tape
// ---------------------------------------------------------------------------

/// Tape handles for one vision parameter set.
#[derive(Debug, Clone, Copy)]
pub struct VisionVars {
    pub patch_w: Var,
    pub patch_b: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w_out: Var,
    pub b_out: Var,
}

/// Tape handles for the text parameters.
#[derive(Debug, Clone, Copy)]
pub struct TextVars {
    pub tok_emb: Var,
    pub pos_emb: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w_out: Var,
    pub b_out: Var,
}

pub fn bind_vision(tape: &mut Tape, p: &VisionParams, needs_grad: bool) -> VisionVars {
    VisionVars {
        patch_w: tape.leaf(p.patch_w.clone(), needs_grad),
        patch_b: tape.leaf(p.patch_b.clone(), needs_grad),
        w1: tape.leaf(p.w1.clone(), needs_grad),
        b1: tape.leaf(p.b1.clone(), needs_grad),
        w2: tape.leaf(p.w2.clone(), needs_grad),
        b2: tape.leaf(p.b2.clone(), needs_grad),
        w_out: tape.leaf(p.w_out.clone(), needs_grad),
        b_out: tape.leaf(p.b_out.clone(), needs_grad),
    }
}

pub fn bind_text(tape: &mut Tape, p: &TextParams, needs_grad: bool) -> TextVars {
    TextVars {
        tok_emb: tape.leaf(p.tok_emb.clone(), needs_grad),
        pos_emb: tape.leaf(p.pos_emb.clone(), needs_grad),
        w1: tape.leaf(p.w1.clone(), needs_grad),
        b1: tape.leaf(p.b1.clone(), needs_grad),
        w2: tape.leaf(p.w2.clone(), needs_grad),
        b2: tape.leaf(p.b2.clone(), needs_grad),
        w_out: tape.leaf(p.w_out.clone(), needs_grad),
        b_out: tape.leaf(p.b_out.clone(), needs_grad),
    }
}

/// Vision tower over a patch matrix of `n` images: returns (raw, unit emb).
pub fn vision_forward(
    tape: &mut Tape,
    vars: &VisionVars,
    patches: Var,
    n: usize,
    cfg: &EncoderConfig,
) -> (Var, Var) {
    let pe = tape.matmul(patches, vars.patch_w);
    let pe = tape.add_row(pe, vars.patch_b);
    let flat = tape.reshape(pe, n, cfg.vision_in());
    let h1 = tape.matmul(flat, vars.w1);
    let h1 = tape.add_row(h1, vars.b1);
    let h1 = tape.gelu(h1);
    let h2 = tape.matmul(h1, vars.w2);
    let h2 = tape.add_row(h2, vars.b2);
    let h2 = tape.gelu(h2);
    let raw = tape.matmul(h2, vars.w_out);
    let raw = tape.add_row(raw, vars.b_out);
    let emb = tape.row_normalize(raw);
    (raw, emb)
}

/// Text tower over a sequence batch: returns (raw, unit emb).
pub fn text_forward(
    tape: &mut Tape,
    vars: &TextVars,
    seqs: &[TokenSequence],
    cfg: &EncoderConfig,
) -> Result<(Var, Var)> {
    if seqs.is_empty() {
        return Err(Error::Argument("empty text batch".into()));
    }
    let mut tok_idx = Vec::new();
    let mut pos_idx = Vec::new();
    let mut segments = Vec::with_capacity(seqs.len());
    for seq in seqs {
        if seq.len() > cfg.max_tokens {
            return Err(Error::Argument(format!(
                "sequence of {} tokens exceeds the cap of {}",
                seq.len(),
                cfg.max_tokens
            )));
        }
        let start = tok_idx.len();
        for (p, &id) in seq.ids().iter().enumerate() {
            if id as usize >= cfg.vocab_size {
                return Err(Error::Argument(format!("token id {id} out of vocabulary")));
            }
            tok_idx.push(id as usize);
            pos_idx.push(p);
        }
        segments.push((start, seq.len()));
    }
    let tok_rows = tape.gather_rows(vars.tok_emb, tok_idx);
    let pos_rows = tape.gather_rows(vars.pos_emb, pos_idx);
    let summed = tape.add(tok_rows, pos_rows);
    let activated = tape.gelu(summed);
    let pooled = tape.mean_pool_segments(activated, segments);
    let h1 = tape.matmul(pooled, vars.w1);
    let h1 = tape.add_row(h1, vars.b1);
    let h1 = tape.gelu(h1);
    let h2 = tape.matmul(h1, vars.w2);
    let h2 = tape.add_row(h2, vars.b2);
    let h2 = tape.gelu(h2);
    let raw = tape.matmul(h2, vars.w_out);
    let raw = tape.add_row(raw, vars.b_out);
    let emb = tape.row_normalize(raw);
    Ok((raw, emb))
}

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

/// Flatten an image batch into per-patch rows: one row per patch, patches in
/// row-major grid order, pixels row-major within a patch, channels innermost.
pub fn patchify_batch(images: &[ImageTensor], cfg: &EncoderConfig) -> Result<Array2<f32>> {
    if images.is_empty() {
        return Err(Error::Argument("empty image batch".into()));
    }
    let p = cfg.patch_size;
    let (gh, gw) = (cfg.image_h / p, cfg.image_w / p);
    let mut out = Array2::<f32>::zeros((images.len() * cfg.num_patches(), cfg.patch_dim()));
    for (i, img) in images.iter().enumerate() {
        if img.dims() != (cfg.image_h, cfg.image_w, cfg.image_c) {
            return Err(Error::Argument(format!(
                "image dims {:?} do not match config {:?}",
                img.dims(),
                (cfg.image_h, cfg.image_w, cfg.image_c)
            )));
        }
        let data = img.data();
        for (pi, (gy, gx)) in grid_iter(gh, gw).enumerate() {
            let row = i * cfg.num_patches() + pi;
            let mut col = 0;
            for dy in 0..p {
                for dx in 0..p {
                    for c in 0..cfg.image_c {
                        out[[row, col]] = data[[gy * p + dy, gx * p + dx, c]];
                        col += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify_batch`] for gradients: maps patch-row gradients
/// back to per-image pixel gradients.
pub fn patch_grads_to_images(grad: &Array2<f32>, n: usize, cfg: &EncoderConfig) -> Vec<Array3<f32>> {
    let p = cfg.patch_size;
    let (gh, gw) = (cfg.image_h / p, cfg.image_w / p);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut g = Array3::<f32>::zeros((cfg.image_h, cfg.image_w, cfg.image_c));
        for (pi, (gy, gx)) in grid_iter(gh, gw).enumerate() {
            let row = i * cfg.num_patches() + pi;
            let mut col = 0;
            for dy in 0..p {
                for dx in 0..p {
                    for c in 0..cfg.image_c {
                        g[[gy * p + dy, gx * p + dx, c]] = grad[[row, col]];
                        col += 1;
                    }
                }
            }
        }
        out.push(g);
    }
    out
}

fn grid_iter(gh: usize, gw: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..gh).flat_map(move |y| (0..gw).map(move |x| (y, x)))
}

// ---------------------------------------------------------------------------
// Gradient contract
// ---------------------------------------------------------------------------

/// Encoder outputs handed to an objective builder.
pub struct VisionGraph {
    /// Patch-matrix input leaf.
    pub input: Var,
    pub raw: Var,
    pub emb: Var,
}

/// Scalar objective value plus its exact gradient with respect to the
/// input images.
pub fn input_gradient<F>(
    state: &ModelState,
    images: &[ImageTensor],
    which: VisionWhich,
    objective: F,
) -> Result<(f32, Vec<Array3<f32>>)>
where
    F: FnOnce(&mut Tape, &VisionGraph) -> Result<Var>,
{
    let params = state.vision_params(which)?;
    let patches = patchify_batch(images, &state.config)?;
    let mut tape = Tape::new();
    let input = tape.leaf(patches, true);
    let vars = bind_vision(&mut tape, params, false);
    let (raw, emb) = vision_forward(&mut tape, &vars, input, images.len(), &state.config);
    let loss = objective(&mut tape, &VisionGraph { input, raw, emb })?;
    if tape.value(loss).dim() != (1, 1) {
        return Err(Error::Argument("objective must be scalar".into()));
    }
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Numeric("objective is not finite".into()));
    }
    tape.backward(loss);
    let grad = tape
        .grad(input)
        .ok_or_else(|| Error::Unsupported("objective does not depend on the input".into()))?;
    Ok((
        value,
        patch_grads_to_images(grad, images.len(), &state.config),
    ))
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"RALB";
const CKPT_VERSION: u32 = 1;

/// Save a checkpoint: magic `RALB`, format version, the config block, the
/// vocabulary as a UTF-8 word list (one token per line), then the parameter
/// matrices as little-endian f32 in the documented order (vision params,
/// text params, log τ). θ_orig is a training-time construct and is not
/// persisted; fine-tuning re-snapshots on load.
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    let c = &state.config;
    for v in [
        c.image_h,
        c.image_w,
        c.image_c,
        c.patch_size,
        c.vision_patch_embed,
        c.vision_hidden,
        c.text_embed,
        c.text_hidden,
        c.embed_dim,
        c.max_tokens,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let vocab_text = state.vocab.words().join("\n");
    w.write_all(&(state.vocab.words().len() as u32).to_le_bytes())?;
    w.write_all(&(vocab_text.len() as u32).to_le_bytes())?;
    w.write_all(vocab_text.as_bytes())?;
    let log_tau = Array2::from_elem((1, 1), state.temperature.log_tau());
    let mut params = state.theta.named();
    params.extend(state.phi.named());
    params.push(("log_tau", &log_tau));
    for (_, arr) in params {
        w.write_all(&(arr.nrows() as u32).to_le_bytes())?;
        w.write_all(&(arr.ncols() as u32).to_le_bytes())?;
        for &v in arr.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Data(format!("{} is not a RALB checkpoint", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let mut fields = [0usize; 10];
    for f in fields.iter_mut() {
        *f = read_u32(&mut r)? as usize;
    }
    let word_count = read_u32(&mut r)? as usize;
    let vocab_bytes = read_u32(&mut r)? as usize;
    let mut vocab_buf = vec![0u8; vocab_bytes];
    r.read_exact(&mut vocab_buf)?;
    let vocab_text =
        String::from_utf8(vocab_buf).map_err(|e| Error::Data(format!("vocab not UTF-8: {e}")))?;
    let words: Vec<&str> = if vocab_text.is_empty() {
        Vec::new()
    } else {
        vocab_text.split('\n').collect()
    };
    if words.len() != word_count {
        return Err(Error::Data(format!(
            "vocab word count mismatch: header {} vs {}",
            word_count,
            words.len()
        )));
    }
    let vocab = Vocab::from_words(words);
    if vocab.words().len() != word_count {
        return Err(Error::Data("vocab words not unique/sorted".into()));
    }
    let config = EncoderConfig {
        image_h: fields[0],
        image_w: fields[1],
        image_c: fields[2],
        patch_size: fields[3],
        vision_patch_embed: fields[4],
        vision_hidden: fields[5],
        text_embed: fields[6],
        text_hidden: fields[7],
        embed_dim: fields[8],
        max_tokens: fields[9],
        vocab_size: vocab.size(),
    };
    config.validate().map_err(|e| Error::Data(e.to_string()))?;

    let mut state = ModelState::init(config, vocab, 0)?;
    {
        let mut slots = state.theta.named_mut();
        slots.extend(state.phi.named_mut());
        for (name, arr) in slots {
            read_param(&mut r, name, arr)?;
        }
    }
    let mut log_tau = Array2::from_elem((1, 1), 0.0f32);
    read_param(&mut r, "log_tau", &mut log_tau)?;
    state.temperature = Temperature::from_log_tau(log_tau[[0, 0]]);
    Ok(state)
}

fn read_param(r: &mut impl Read, name: &str, arr: &mut Array2<f32>) -> Result<()> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    if (rows, cols) != arr.dim() {
        return Err(Error::Data(format!(
            "parameter {name}: stored shape ({rows},{cols}) does not match config {:?}",
            arr.dim()
        )));
    }
    let mut buf = vec![0u8; rows * cols * 4];
    r.read_exact(&mut buf)?;
    for (slot, b) in arr.iter_mut().zip(buf.chunks_exact(4)) {
        *slot = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
