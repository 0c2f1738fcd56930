//! Loss functions and similarity math of the joint embedding space.
//!
//! All operations here are pure functions over embeddings and logits,
//! computed in f32 end to end. Batched contrastive losses are batch sums;
//! callers that report per-sample means divide by the batch size.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Fixed evaluation temperature: zero-shot logits are cosines divided by
/// this constant (i.e. scaled by 100). Independent of the learnable
/// training temperature.
pub const TAU_EVAL: f32 = 0.01;

/// Unit-norm vector in the shared image-text space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEmbedding(Vec<f32>);

impl JointEmbedding {
    /// Normalize a raw encoder output onto the unit sphere.
    pub fn from_raw(raw: &[f32]) -> Result<Self> {
        let norm = l2_norm(raw);
        if norm == 0.0 {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        Ok(Self(raw.iter().map(|x| x / norm).collect()))
    }

    /// Wrap an already unit-norm vector; errors if the norm is off by more
    /// than 1e-5.
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > 1e-5 {
            return Err(Error::Domain(format!(
                "embedding norm {norm} is not within 1e-5 of 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Cosine-derived scores over K class templates.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(pub Vec<f32>);

impl LogitVector {
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// Index of the largest logit; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.0)
    }
}

/// Learnable softmax temperature, stored as a logarithm and clamped to
/// [0.01, 100] after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    log_tau: f32,
}

pub const TAU_MIN: f32 = 0.01;
pub const TAU_MAX: f32 = 100.0;

impl Temperature {
    pub fn from_tau(tau: f32) -> Self {
        Self {
            log_tau: tau.clamp(TAU_MIN, TAU_MAX).ln(),
        }
    }

    pub fn from_log_tau(log_tau: f32) -> Self {
        let mut t = Self { log_tau };
        t.clamp();
        t
    }

    pub fn tau(&self) -> f32 {
        self.log_tau.exp()
    }

    pub fn log_tau(&self) -> f32 {
        self.log_tau
    }

    pub fn set_log_tau(&mut self, log_tau: f32) {
        self.log_tau = log_tau;
        self.clamp();
    }

    fn clamp(&mut self) {
        self.log_tau = self.log_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln());
    }
}

fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|x| x * x).sum::<f32>().sqrt()
}

fn argmax_lowest(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cosine similarity a·b / (‖a‖‖b‖); symmetric in its arguments.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

fn check_batch(image_embs: &[JointEmbedding], text_embs: &[JointEmbedding]) -> Result<usize> {
    if image_embs.len() != text_embs.len() {
        return Err(Error::Argument(format!(
            "batch length mismatch: {} images vs {} texts",
            image_embs.len(),
            text_embs.len()
        )));
    }
    if image_embs.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    Ok(image_embs.len())
}

fn log_softmax_at(scores: &[f32], target: usize) -> f32 {
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse = max + scores.iter().map(|&s| (s - max).exp()).sum::<f32>().ln();
    scores[target] - lse
}

/// Image-to-text InfoNCE over positionally paired batches, batch-summed:
///
/// ```text
/// L = -Σ_i log( exp(cos(v_i, t_i)/τ) / Σ_j exp(cos(v_i, t_j)/τ) )
/// ```
pub fn info_nce_image(
    image_embs: &[JointEmbedding],
    text_embs: &[JointEmbedding],
    tau: f32,
) -> Result<f32> {
    let n = check_batch(image_embs, text_embs)?;
    if tau <= 0.0 {
        return Err(Error::Argument("tau must be positive".into()));
    }
    let mut loss = 0.0f32;
    for i in 0..n {
        let mut scores = Vec::with_capacity(n);
        for j in 0..n {
            scores.push(cosine_similarity(image_embs[i].values(), text_embs[j].values())? / tau);
        }
        loss -= log_softmax_at(&scores, i);
    }
    Ok(loss)
}

/// Symmetric contrastive loss: mean of the image-to-text and text-to-image
/// InfoNCE sums.
pub fn clip_loss(
    image_embs: &[JointEmbedding],
    text_embs: &[JointEmbedding],
    tau: f32,
) -> Result<f32> {
    let i2t = info_nce_image(image_embs, text_embs, tau)?;
    let t2i = info_nce_image(text_embs, image_embs, tau)?;
    Ok((i2t + t2i) / 2.0)
}

/// Zero-shot logits: cosine to each class template divided by [`TAU_EVAL`].
pub fn zero_shot_logits(
    image_emb: &JointEmbedding,
    templates: &[JointEmbedding],
) -> Result<LogitVector> {
    if templates.is_empty() {
        return Err(Error::Argument("empty template list".into()));
    }
    let mut logits = Vec::with_capacity(templates.len());
    for t in templates {
        logits.push(cosine_similarity(image_emb.values(), t.values())? / TAU_EVAL);
    }
    Ok(LogitVector(logits))
}

/// Batched zero-shot logits over unit-norm embedding rows.
pub fn zero_shot_logits_batch(embs: &Array2<f32>, templates: &Array2<f32>) -> Array2<f32> {
    embs.dot(&templates.t()).mapv(|c| c / TAU_EVAL)
}

/// Cross-entropy on cosine logits: −log softmax(logits)_y.
pub fn tecoa_ce_loss(logits: &LogitVector, y: usize) -> Result<f32> {
    let k = logits.0.len();
    if y >= k {
        return Err(Error::Argument(format!("class {y} out of range 0..{k}")));
    }
    Ok(-log_softmax_at(&logits.0, y))
}

/// Squared Euclidean distance between pre-normalization encoder outputs.
pub fn fare_distance(adv_emb_raw: &[f32], orig_emb_raw: &[f32]) -> Result<f32> {
    if adv_emb_raw.len() != orig_emb_raw.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            adv_emb_raw.len(),
            orig_emb_raw.len()
        )));
    }
    Ok(adv_emb_raw
        .iter()
        .zip(orig_emb_raw)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Difference-of-logits-ratio: −(z_y − max_{i≠y} z_i) / (z_(1) − z_(3)),
/// with the descending order statistics z_(1) ≥ z_(2) ≥ z_(3).
pub fn dlr_loss(logits: &LogitVector, y: usize) -> Result<f32> {
    let z = &logits.0;
    let k = z.len();
    if k < 3 {
        return Err(Error::Unsupported(format!(
            "DLR needs at least 3 classes, got {k}"
        )));
    }
    if y >= k {
        return Err(Error::Argument(format!("class {y} out of range 0..{k}")));
    }
    let mut sorted: Vec<f32> = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let denom = sorted[0] - sorted[2];
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "DLR denominator is zero (top-1 equals top-3 logit)".into(),
        ));
    }
    let zmax_other = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| v)
        .fold(f32::NEG_INFINITY, f32::max);
    Ok(-(z[y] - zmax_other) / denom)
}

/// Attacker margin max_{i≠y} z_i − z_y; positive iff the prediction flipped.
pub fn cw_margin_loss(logits: &LogitVector, y: usize) -> Result<f32> {
    let z = &logits.0;
    let k = z.len();
    if k < 2 {
        return Err(Error::Argument("CW margin needs at least 2 classes".into()));
    }
    if y >= k {
        return Err(Error::Argument(format!("class {y} out of range 0..{k}")));
    }
    let zmax_other = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| v)
        .fold(f32::NEG_INFINITY, f32::max);
    Ok(zmax_other - z[y])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: Vec<f32>) -> JointEmbedding {
        JointEmbedding::from_raw(&values).unwrap()
    }

    #[test]
    fn cosine_identity_orthogonal_antipodal() {
        let v = unit(vec![0.3, -0.4, 0.5]);
        assert!((cosine_similarity(v.values(), v.values()).unwrap() - 1.0).abs() < 1e-6);
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.0, 1.0, 0.0];
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        let c = vec![1.0, 0.0];
        let d = vec![-1.0, 0.0];
        assert_eq!(cosine_similarity(&c, &d).unwrap(), -1.0);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cosine_is_symmetric() {
        let a = vec![0.2, -0.7, 1.1];
        let b = vec![-0.5, 0.4, 0.9];
        assert_eq!(
            cosine_similarity(&a, &b).unwrap(),
            cosine_similarity(&b, &a).unwrap()
        );
    }

    #[test]
    fn info_nce_uniform_similarities_is_ln_n() {
        // Identical embeddings on both sides: every pairwise cosine is 1.
        let e = unit(vec![0.6, 0.8]);
        let imgs = vec![e.clone(), e.clone()];
        let txts = vec![e.clone(), e];
        for tau in [0.07f32, 1.0, 3.0] {
            let sum = info_nce_image(&imgs, &txts, tau).unwrap();
            assert!((sum / 2.0 - 2.0f32.ln()).abs() < 1e-6, "tau={tau}");
        }
    }

    #[test]
    fn info_nce_identity_pairing_hand_value() {
        // cos(i,i)=1, cos(i,j≠i)=0, tau=1 → per-sample ln(1+e^{-1})
        let imgs = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let txts = imgs.clone();
        let sum = info_nce_image(&imgs, &txts, 1.0).unwrap();
        let expected = (1.0 + (-1.0f32).exp()).ln();
        assert!((sum / 2.0 - expected).abs() < 1e-6);
    }

    #[test]
    fn info_nce_single_pair_is_zero() {
        let imgs = vec![unit(vec![1.0, 0.0])];
        let txts = vec![unit(vec![0.0, 1.0])];
        assert_eq!(info_nce_image(&imgs, &txts, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn info_nce_rejects_bad_batches() {
        let imgs = vec![unit(vec![1.0, 0.0])];
        assert!(info_nce_image(&imgs, &[], 1.0).is_err());
        assert!(info_nce_image(&[], &[], 1.0).is_err());
        assert!(info_nce_image(&imgs, &imgs, 0.0).is_err());
    }

    #[test]
    fn clip_loss_symmetric_matrix_equals_image_side() {
        // Symmetric similarity matrix: use the same list on both sides.
        let embs = vec![
            unit(vec![1.0, 0.0, 0.0]),
            unit(vec![0.6, 0.8, 0.0]),
            unit(vec![0.0, 0.6, 0.8]),
        ];
        let clip = clip_loss(&embs, &embs, 0.5).unwrap();
        let image_side = info_nce_image(&embs, &embs, 0.5).unwrap();
        assert!((clip - image_side).abs() < 1e-5);
    }

    #[test]
    fn clip_loss_diag_one_offdiag_zero() {
        let imgs = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let clip = clip_loss(&imgs, &imgs, 1.0).unwrap();
        let expected = (1.0 + (-1.0f32).exp()).ln();
        assert!((clip / 2.0 - expected).abs() < 1e-6);
    }

    #[test]
    fn zero_shot_argmax_and_tie_break() {
        let templates = vec![
            unit(vec![1.0, 0.0, 0.0]),
            unit(vec![0.0, 1.0, 0.0]),
            unit(vec![0.0, 0.0, 1.0]),
        ];
        let img = unit(vec![0.0, 0.0, 1.0]);
        let logits = zero_shot_logits(&img, &templates).unwrap();
        assert_eq!(logits.argmax(), 2);

        // Exact tie between templates 0 and 1 → lowest index wins.
        let tied = unit(vec![0.70710678, 0.70710678, 0.0]);
        let logits = zero_shot_logits(&tied, &templates).unwrap();
        assert_eq!(logits.argmax(), 0);
    }

    #[test]
    fn zero_shot_hand_dot_products() {
        let templates = vec![unit(vec![1.0, 0.0]), unit(vec![0.0, 1.0])];
        let img = unit(vec![0.6, 0.8]);
        let logits = zero_shot_logits(&img, &templates).unwrap();
        assert!((logits.values()[0] - 0.6 / TAU_EVAL).abs() < 1e-4);
        assert!((logits.values()[1] - 0.8 / TAU_EVAL).abs() < 1e-4);
        assert_eq!(logits.argmax(), 1);
    }

    #[test]
    fn zero_shot_empty_templates_is_error() {
        let img = unit(vec![1.0, 0.0]);
        assert!(zero_shot_logits(&img, &[]).is_err());
    }

    #[test]
    fn tecoa_ce_uniform_and_confident() {
        let l4 = LogitVector(vec![0.5; 4]);
        assert!((tecoa_ce_loss(&l4, 1).unwrap() - 4.0f32.ln()).abs() < 1e-6);
        let l3 = LogitVector(vec![0.0, 0.0, 0.0]);
        assert!((tecoa_ce_loss(&l3, 2).unwrap() - 3.0f32.ln()).abs() < 1e-6);
        let sharp = LogitVector(vec![10.0, -10.0]);
        let v = tecoa_ce_loss(&sharp, 0).unwrap();
        assert!(v >= 0.0 && v < 1e-8, "got {v}");
        assert!(tecoa_ce_loss(&sharp, 2).is_err());
    }

    #[test]
    fn fare_distance_hand_values() {
        assert_eq!(fare_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(fare_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(fare_distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        assert!(fare_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fare_distance_quadrilateral_bound() {
        // ‖a−c‖² ≤ 2(‖a−b‖² + ‖b−c‖²)
        let a = [0.3f32, -1.0, 2.0];
        let b = [1.5f32, 0.0, -0.5];
        let c = [-0.2f32, 0.7, 0.1];
        let ac = fare_distance(&a, &c).unwrap();
        let ab = fare_distance(&a, &b).unwrap();
        let bc = fare_distance(&b, &c).unwrap();
        assert!(ac <= 2.0 * (ab + bc) + 1e-6);
    }

    #[test]
    fn dlr_hand_values() {
        let z = LogitVector(vec![3.0, 2.0, 1.0]);
        assert!((dlr_loss(&z, 0).unwrap() + 0.5).abs() < 1e-6);
        assert!((dlr_loss(&z, 2).unwrap() - 1.0).abs() < 1e-6);
        let tied = LogitVector(vec![5.0, 5.0, 0.0]);
        assert_eq!(dlr_loss(&tied, 0).unwrap(), 0.0);
    }

    #[test]
    fn dlr_errors() {
        assert!(matches!(
            dlr_loss(&LogitVector(vec![1.0, 0.0]), 0),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            dlr_loss(&LogitVector(vec![1.0, 1.0, 1.0]), 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cw_hand_values() {
        assert_eq!(cw_margin_loss(&LogitVector(vec![3.0, 2.0, 1.0]), 0).unwrap(), -1.0);
        assert_eq!(cw_margin_loss(&LogitVector(vec![1.0, 1.0]), 0).unwrap(), 0.0);
        assert_eq!(cw_margin_loss(&LogitVector(vec![0.0, 4.0]), 0).unwrap(), 4.0);
    }

    #[test]
    fn margins_decrease_in_true_logit() {
        // DLR is non-increasing in z_y everywhere but plateaus when z_y is
        // exactly the third order statistic; CW is strictly decreasing.
        let base = vec![1.0f32, 0.5, -0.2, 0.9];
        for y in 0..base.len() {
            let mut hi = base.clone();
            hi[y] += 0.25;
            let dlr_lo = dlr_loss(&LogitVector(base.clone()), y).unwrap();
            let dlr_hi = dlr_loss(&LogitVector(hi.clone()), y).unwrap();
            assert!(dlr_hi <= dlr_lo, "dlr increased at y={y}");
            if y != 1 {
                assert!(dlr_hi < dlr_lo, "dlr not strictly decreasing at y={y}");
            }
            let cw_lo = cw_margin_loss(&LogitVector(base.clone()), y).unwrap();
            let cw_hi = cw_margin_loss(&LogitVector(hi), y).unwrap();
            assert!(cw_hi < cw_lo, "cw not decreasing at y={y}");
        }
    }

    #[test]
    fn temperature_clamps() {
        let t = Temperature::from_tau(1000.0);
        assert!((t.tau() - TAU_MAX).abs() < 1e-3);
        let mut t = Temperature::from_tau(0.07);
        t.set_log_tau(-20.0);
        assert!((t.tau() - TAU_MIN).abs() < 1e-6);
    }
}
