//! Annotated captions, word-class ablation transforms, and caption-quality
//! statistics.
//!
//! Word-class tags are ground truth carried by the data format; nothing here
//! infers part of speech. A caption file without tags is accepted, but only
//! the identity (`Full`) transform may be applied to it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoders::{tokenize, VisionWhich};
use crate::encoders::ModelState;
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::tensor_io::ImageTensor;

/// Grammatical class of a caption word. Punctuation tokens ride along as
/// `Function` or `Other` according to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordClass {
    #[serde(rename = "N")]
    Noun,
    #[serde(rename = "A")]
    AdjAdv,
    #[serde(rename = "F")]
    Function,
    #[serde(rename = "O")]
    Other,
}

/// Caption text plus per-word class tags.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCaption {
    words: Vec<(String, WordClass)>,
    raw_text: String,
}

impl AnnotatedCaption {
    /// Build from tagged words; the raw text is the space-joined surfaces.
    pub fn from_words(words: Vec<(String, WordClass)>) -> Self {
        let raw_text = words
            .iter()
            .map(|(w, _)| w.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Self { words, raw_text }
    }

    /// Build from explicit raw text and tags. The space-joined surfaces must
    /// reproduce the raw text modulo whitespace normalization; captions with
    /// no tags at all are accepted for `Full`-mode use only.
    pub fn from_parts(raw_text: String, words: Vec<(String, WordClass)>) -> Result<Self> {
        if !words.is_empty() {
            let joined = words
                .iter()
                .map(|(w, _)| w.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if normalize_ws(&joined) != normalize_ws(&raw_text) {
                return Err(Error::Data(format!(
                    "word surfaces do not reproduce the caption text: {raw_text:?}"
                )));
            }
        }
        Ok(Self { words, raw_text })
    }

    pub fn words(&self) -> &[(String, WordClass)] {
        &self.words
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn word_count(&self) -> usize {
        if self.words.is_empty() {
            self.raw_text.split_whitespace().count()
        } else {
            self.words.len()
        }
    }

    pub fn is_tagged(&self) -> bool {
        !self.words.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty() && self.raw_text.trim().is_empty()
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Caption transform under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    Full,
    NounsOnly,
    NoAdjAdv,
    NoNouns,
    NoFunctionWords,
    ShuffleWords(u64),
}

impl AblationMode {
    pub fn name(&self) -> String {
        match self {
            AblationMode::Full => "full".into(),
            AblationMode::NounsOnly => "nouns-only".into(),
            AblationMode::NoAdjAdv => "no-adj-adv".into(),
            AblationMode::NoNouns => "no-nouns".into(),
            AblationMode::NoFunctionWords => "no-function-words".into(),
            AblationMode::ShuffleWords(seed) => format!("shuffle:{seed}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "nouns-only" => Ok(AblationMode::NounsOnly),
            "no-adj-adv" => Ok(AblationMode::NoAdjAdv),
            "no-nouns" => Ok(AblationMode::NoNouns),
            "no-function-words" => Ok(AblationMode::NoFunctionWords),
            other => {
                if let Some(seed) = other.strip_prefix("shuffle:") {
                    let seed = seed
                        .parse()
                        .map_err(|_| Error::Argument(format!("bad shuffle seed in {other:?}")))?;
                    Ok(AblationMode::ShuffleWords(seed))
                } else {
                    Err(Error::Argument(format!("unknown ablation mode {other:?}")))
                }
            }
        }
    }
}

/// Apply a word-class transform.
///
/// `Full` returns the raw text. `NounsOnly` joins the distinct nouns in
/// first-occurrence order with commas and no spaces; the removal modes drop
/// the class, keeping the original order space-joined; `ShuffleWords` emits
/// a seeded uniform permutation of all words.
pub fn apply_ablation(caption: &AnnotatedCaption, mode: AblationMode) -> Result<String> {
    if caption.is_empty() {
        return Ok(String::new());
    }
    if matches!(mode, AblationMode::Full) {
        return Ok(caption.raw_text().to_string());
    }
    if !caption.is_tagged() {
        return Err(Error::Argument(
            "caption carries no word tags; only the full transform applies".into(),
        ));
    }
    let words = caption.words();
    let out = match mode {
        AblationMode::Full => unreachable!(),
        AblationMode::NounsOnly => {
            let mut seen: Vec<&str> = Vec::new();
            for (w, class) in words {
                if *class == WordClass::Noun && !seen.contains(&w.as_str()) {
                    seen.push(w);
                }
            }
            seen.join(",")
        }
        AblationMode::NoAdjAdv => join_without(words, WordClass::AdjAdv),
        AblationMode::NoNouns => join_without(words, WordClass::Noun),
        AblationMode::NoFunctionWords => join_without(words, WordClass::Function),
        AblationMode::ShuffleWords(seed) => {
            let mut surfaces: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
            let mut rng = derive_rng(seed, "shuffle", 0);
            surfaces.shuffle(&mut rng);
            surfaces.join(" ")
        }
    };
    Ok(out)
}

fn join_without(words: &[(String, WordClass)], drop: WordClass) -> String {
    words
        .iter()
        .filter(|(_, c)| *c != drop)
        .map(|(w, _)| w.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

/// Word-count and image-caption similarity statistics over a corpus.
#[derive(Debug, Clone)]
pub struct CaptionStats {
    pub n: usize,
    pub mean_length: f64,
    pub median_length: f64,
    /// (bin lower edge, count); word-count bins of width 5.
    pub length_hist: Vec<(usize, usize)>,
    pub mean_similarity: Option<f64>,
    /// (bin lower edge, count); cosine bins of width 0.02 over [−1, 1].
    pub similarity_hist: Option<Vec<(f64, usize)>>,
}

pub const LENGTH_BIN_WIDTH: usize = 5;
pub const SIMILARITY_BIN_WIDTH: f64 = 0.02;

/// Compute corpus statistics; pass the model and aligned images to include
/// the image-caption cosine histogram.
pub fn caption_stats(
    corpus: &[AnnotatedCaption],
    similarity: Option<(&ModelState, &[ImageTensor])>,
) -> Result<CaptionStats> {
    if corpus.is_empty() {
        return Err(Error::Argument("empty caption corpus".into()));
    }
    let mut lengths: Vec<usize> = corpus.iter().map(|c| c.word_count()).collect();
    let mean_length = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    lengths.sort_unstable();
    let median_length = if lengths.len() % 2 == 1 {
        lengths[lengths.len() / 2] as f64
    } else {
        (lengths[lengths.len() / 2 - 1] + lengths[lengths.len() / 2]) as f64 / 2.0
    };
    let mut length_hist = std::collections::BTreeMap::new();
    for &l in &lengths {
        *length_hist.entry((l / LENGTH_BIN_WIDTH) * LENGTH_BIN_WIDTH).or_insert(0usize) += 1;
    }

    let (mean_similarity, similarity_hist) = match similarity {
        None => (None, None),
        Some((state, images)) => {
            if images.len() != corpus.len() {
                return Err(Error::Argument(format!(
                    "corpus has {} captions but {} images",
                    corpus.len(),
                    images.len()
                )));
            }
            let seqs: Vec<_> = corpus
                .iter()
                .map(|c| tokenize(c.raw_text(), &state.vocab, state.config.max_tokens))
                .collect();
            let (_, text_embs) = state.encode_text(&seqs)?;
            let (_, image_embs) = state.encode_image(images, VisionWhich::Theta)?;
            let mut hist = std::collections::BTreeMap::new();
            let mut total = 0.0f64;
            for i in 0..corpus.len() {
                let cos: f32 = image_embs.row(i).dot(&text_embs.row(i));
                total += f64::from(cos);
                let bin = (((f64::from(cos) + 1.0) / SIMILARITY_BIN_WIDTH).floor() as i64)
                    .clamp(0, (2.0 / SIMILARITY_BIN_WIDTH) as i64 - 1);
                *hist.entry(bin).or_insert(0usize) += 1;
            }
            let hist = hist
                .into_iter()
                .map(|(bin, count)| (bin as f64 * SIMILARITY_BIN_WIDTH - 1.0, count))
                .collect();
            (Some(total / corpus.len() as f64), Some(hist))
        }
    };

    Ok(CaptionStats {
        n: corpus.len(),
        mean_length,
        median_length,
        length_hist: length_hist.into_iter().collect(),
        mean_similarity,
        similarity_hist,
    })
}

impl CaptionStats {
    /// CSV with one record per row: `record,key,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,key,value\n");
        out.push_str(&format!("stat,n,{}\n", self.n));
        out.push_str(&format!("stat,mean_length,{}\n", self.mean_length));
        out.push_str(&format!("stat,median_length,{}\n", self.median_length));
        for (bin, count) in &self.length_hist {
            out.push_str(&format!("length_hist,{bin},{count}\n"));
        }
        if let Some(m) = self.mean_similarity {
            out.push_str(&format!("stat,mean_similarity,{m}\n"));
        }
        if let Some(hist) = &self.similarity_hist {
            for (bin, count) in hist {
                out.push_str(&format!("similarity_hist,{bin:.2},{count}\n"));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// JSON-lines persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CaptionLine {
    id: String,
    caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    words: Vec<(String, WordClass)>,
}

/// Write one caption per line: `{"id", "caption", "words": [[surface, class]…]}`.
pub fn write_captions_jsonl(
    path: &Path,
    entries: &[(String, AnnotatedCaption)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, caption) in entries {
        let line = CaptionLine {
            id: id.clone(),
            caption: caption.raw_text().to_string(),
            words: caption.words().to_vec(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a caption JSONL file written by [`write_captions_jsonl`] or any
/// conforming producer.
pub fn read_captions_jsonl(path: &Path) -> Result<Vec<(String, AnnotatedCaption)>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CaptionLine = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let caption = AnnotatedCaption::from_parts(parsed.caption, parsed.words)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push((parsed.id, caption));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use WordClass::*;

    fn caption(words: &[(&str, WordClass)]) -> AnnotatedCaption {
        AnnotatedCaption::from_words(
            words.iter().map(|(w, c)| (w.to_string(), *c)).collect(),
        )
    }

    #[test]
    fn full_is_identity_on_raw_text() {
        let c = caption(&[("a", Function), ("red", AdjAdv), ("circle", Noun)]);
        assert_eq!(apply_ablation(&c, AblationMode::Full).unwrap(), "a red circle");
    }

    #[test]
    fn nouns_only_joins_with_commas_and_dedupes() {
        let c = caption(&[
            ("a", Function),
            ("dog", Noun),
            ("near", Function),
            ("a", Function),
            ("dog", Noun),
            ("house", Noun),
        ]);
        assert_eq!(
            apply_ablation(&c, AblationMode::NounsOnly).unwrap(),
            "dog,house"
        );
    }

    #[test]
    fn removal_modes_preserve_order() {
        let c = caption(&[
            ("a", Function),
            ("big", AdjAdv),
            ("red", AdjAdv),
            ("circle", Noun),
            ("sits", Other),
        ]);
        assert_eq!(
            apply_ablation(&c, AblationMode::NoAdjAdv).unwrap(),
            "a circle sits"
        );
        assert_eq!(
            apply_ablation(&c, AblationMode::NoNouns).unwrap(),
            "a big red sits"
        );
        assert_eq!(
            apply_ablation(&c, AblationMode::NoFunctionWords).unwrap(),
            "big red circle sits"
        );
    }

    #[test]
    fn all_nouns_removed_yields_empty() {
        let c = caption(&[("dog", Noun), ("cat", Noun)]);
        assert_eq!(apply_ablation(&c, AblationMode::NoNouns).unwrap(), "");
    }

    #[test]
    fn shuffle_is_seeded_and_a_permutation() {
        let c = caption(&[
            ("one", Other),
            ("two", Other),
            ("three", Other),
            ("four", Other),
            ("five", Other),
        ]);
        let s1 = apply_ablation(&c, AblationMode::ShuffleWords(9)).unwrap();
        let s2 = apply_ablation(&c, AblationMode::ShuffleWords(9)).unwrap();
        assert_eq!(s1, s2);
        let mut words: Vec<&str> = s1.split(' ').collect();
        words.sort_unstable();
        assert_eq!(words, vec!["five", "four", "one", "three", "two"]);
    }

    #[test]
    fn empty_caption_yields_empty_everywhere() {
        let c = AnnotatedCaption::from_words(vec![]);
        for mode in [
            AblationMode::Full,
            AblationMode::NounsOnly,
            AblationMode::NoNouns,
            AblationMode::ShuffleWords(1),
        ] {
            assert_eq!(apply_ablation(&c, mode).unwrap(), "");
        }
    }

    #[test]
    fn untagged_caption_is_full_only() {
        let c = AnnotatedCaption::from_parts("some plain text".into(), vec![]).unwrap();
        assert_eq!(
            apply_ablation(&c, AblationMode::Full).unwrap(),
            "some plain text"
        );
        assert!(apply_ablation(&c, AblationMode::NounsOnly).is_err());
    }

    #[test]
    fn from_parts_validates_surfaces() {
        let words = vec![("red".to_string(), AdjAdv), ("dot".to_string(), Noun)];
        assert!(AnnotatedCaption::from_parts("red  dot".into(), words.clone()).is_ok());
        assert!(AnnotatedCaption::from_parts("blue dot".into(), words).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in [
            AblationMode::Full,
            AblationMode::NounsOnly,
            AblationMode::NoAdjAdv,
            AblationMode::NoNouns,
            AblationMode::NoFunctionWords,
            AblationMode::ShuffleWords(42),
        ] {
            assert_eq!(AblationMode::parse(&mode.name()).unwrap(), mode);
        }
        assert!(AblationMode::parse("bogus").is_err());
    }

    #[test]
    fn stats_single_caption() {
        let c = caption(&[
            ("one", Other),
            ("two", Other),
            ("three", Other),
            ("four", Other),
            ("five", Other),
            ("six", Other),
            ("seven", Other),
        ]);
        let stats = caption_stats(&[c], None).unwrap();
        assert_eq!(stats.mean_length, 7.0);
        assert_eq!(stats.median_length, 7.0);
        assert_eq!(stats.length_hist, vec![(5, 1)]);
        assert!(stats.mean_similarity.is_none());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.jsonl");
        let entries = vec![
            ("img_0".to_string(), caption(&[("red", AdjAdv), ("dot", Noun)])),
            ("img_1".to_string(), AnnotatedCaption::from_parts("untagged text".into(), vec![]).unwrap()),
        ];
        write_captions_jsonl(&path, &entries).unwrap();
        let back = read_captions_jsonl(&path).unwrap();
        assert_eq!(back, entries);
    }
}
