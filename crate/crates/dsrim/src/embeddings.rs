//! Distributional text vectors: a minimal PV-DBOW-style trainer with
//! negative sampling, inference for unseen texts against the frozen word
//! state, and a loader for externally trained vectors.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
pub use crate::vecmath::cosine;

/// Keyed dense vectors, all of one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dims: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dims: usize) -> EmbeddingTable {
        EmbeddingTable {
            dims,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dims {
            return Err(Error::Dimension(format!(
                "vector for `{key}` has {} components, table holds {}",
                vector.len(),
                self.dims
            )));
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "vector for `{key}` contains non-finite component {bad}"
            )));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn require(&self, key: &str) -> Result<&[f64]> {
        self.get(key)
            .ok_or_else(|| Error::MissingVector(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Parse `key<TAB>v1 v2 ... vd` rows with a consistent d.
    pub fn load(src: impl BufRead, source_name: &str) -> Result<EmbeddingTable> {
        let mut dims: Option<usize> = None;
        let mut vectors = BTreeMap::new();
        let mut any = false;
        for (lineno, line) in src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            any = true;
            let (key, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, lineno, "expected `key<TAB>floats`"))?;
            let values: Vec<f64> = rest
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::parse(source_name, lineno, format!("bad float `{tok}`"))
                    })
                })
                .collect::<Result<_>>()?;
            match dims {
                None => dims = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("row has {} floats, expected {d}", values.len()),
                    ));
                }
                Some(_) => {}
            }
            if vectors.contains_key(key) {
                return Err(Error::DuplicateId {
                    kind: "embedding key",
                    id: key.to_string(),
                });
            }
            if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("non-finite component {bad}"),
                ));
            }
            vectors.insert(key.to_string(), values);
        }
        if !any {
            return Err(Error::parse(source_name, 1, "empty embedding file"));
        }
        Ok(EmbeddingTable {
            dims: dims.unwrap_or(0),
            vectors,
        })
    }

    /// Write rows in key order; floats use the shortest round-trip decimal
    /// form, so save/load round-trips bit-exactly.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        for (key, vec) in &self.vectors {
            write!(w, "{key}\t")?;
            write_floats(&mut w, vec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

pub(crate) fn write_floats(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for (i, x) in values.iter().enumerate() {
        if i > 0 {
            write!(w, " ")?;
        }
        write!(w, "{x}")?;
    }
    Ok(())
}

/// Hyperparameters of the PV-DBOW-style trainer. Everything except `dims`
/// is training plumbing with conservative defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PvDbowConfig {
    pub dims: usize,
    pub epochs: usize,
    pub negatives_per_target: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PvDbowConfig {
    fn default() -> Self {
        PvDbowConfig {
            dims: 100,
            epochs: 20,
            negatives_per_target: 5,
            learning_rate: 0.025,
            seed: 42,
        }
    }
}

impl PvDbowConfig {
    fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Config("embedding dims must be positive".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Frozen word state after training: enough to infer vectors for new texts.
#[derive(Debug, Clone)]
pub struct PvDbowModel {
    cfg: PvDbowConfig,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    word_vectors: Vec<Vec<f64>>,
    noise_cdf: Vec<f64>,
    loss_history: Vec<f64>,
}

const INFER_SEED_OFFSET: u64 = 0x7076_5f69_6e66_6572; // "pv_infer"

/// Train one vector per text key. Each text vector is pushed to score its own
/// tokens above `negatives_per_target` noise tokens drawn from the
/// unigram^0.75 distribution. Deterministic for a fixed seed.
pub fn train_doc_embeddings(
    texts: &BTreeMap<String, Vec<String>>,
    cfg: &PvDbowConfig,
) -> Result<(EmbeddingTable, PvDbowModel)> {
    cfg.validate()?;
    if texts.len() < 2 {
        return Err(Error::Config(format!(
            "document-embedding training needs at least 2 texts, got {}",
            texts.len()
        )));
    }
    let mut counts_map: BTreeMap<&str, u64> = BTreeMap::new();
    for tokens in texts.values() {
        for t in tokens {
            *counts_map.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if counts_map.is_empty() {
        return Err(Error::Config(
            "document-embedding training vocabulary is empty".into(),
        ));
    }
    let vocab: Vec<String> = counts_map.keys().map(|s| s.to_string()).collect();
    let counts: Vec<u64> = counts_map.values().copied().collect();
    let index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();

    let mut model = PvDbowModel {
        cfg: cfg.clone(),
        noise_cdf: noise_cdf(&counts),
        word_vectors: vec![vec![0.0; cfg.dims]; vocab.len()],
        vocab,
        index,
        counts,
        loss_history: Vec::new(),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let keys: Vec<&String> = texts.keys().collect();
    let mut doc_vecs: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| init_vector(cfg.dims, &mut rng))
        .collect();
    let token_ids: Vec<Vec<usize>> = keys
        .iter()
        .map(|k| texts[*k].iter().map(|t| model.index[t]).collect())
        .collect();
    for (i, ids) in token_ids.iter().enumerate() {
        if ids.is_empty() {
            log::warn!(
                "text `{}` has no tokens; assigning the zero vector",
                keys[i]
            );
            doc_vecs[i] = vec![0.0; cfg.dims];
        }
    }

    for epoch in 0..cfg.epochs {
        let lr = epoch_lr(cfg, epoch);
        let mut total = 0.0;
        let mut targets = 0u64;
        for (doc, ids) in doc_vecs.iter_mut().zip(&token_ids) {
            for &wi in ids {
                total += sgns_step(doc, &mut model, wi, lr, true, &mut rng);
                targets += 1;
            }
        }
        model.loss_history.push(total / targets as f64);
    }

    let mut table = EmbeddingTable::new(cfg.dims);
    for (key, vec) in keys.into_iter().zip(doc_vecs) {
        table.insert(key.clone(), vec)?;
    }
    Ok((table, model))
}

fn init_vector(dims: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let half = 0.5 / dims as f64;
    (0..dims).map(|_| rng.random_range(-half..half)).collect()
}

fn noise_cdf(counts: &[u64]) -> Vec<f64> {
    let mut acc = 0.0;
    counts
        .iter()
        .map(|&c| {
            acc += (c as f64).powf(0.75);
            acc
        })
        .collect()
}

fn epoch_lr(cfg: &PvDbowConfig, epoch: usize) -> f64 {
    cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64).max(1e-4)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One positive target plus sampled negatives; returns the target's loss
/// −ln σ(d·v_w) − Σ ln σ(−d·v_n). Updates the doc vector always, the word
/// vectors only when `update_words`.
fn sgns_step(
    doc: &mut [f64],
    model: &mut PvDbowModel,
    target: usize,
    lr: f64,
    update_words: bool,
    rng: &mut ChaCha20Rng,
) -> f64 {
    let dims = doc.len();
    let mut dgrad = vec![0.0; dims];
    let mut loss = 0.0;
    let n_negatives = model.cfg.negatives_per_target;
    for sample in 0..=n_negatives {
        let (wi, label) = if sample == 0 {
            (target, 1.0)
        } else {
            let wi = model.sample_noise(rng);
            if wi == target {
                continue;
            }
            (wi, 0.0)
        };
        let v = &mut model.word_vectors[wi];
        let score: f64 = doc.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        loss += if label == 1.0 {
            softplus(-score)
        } else {
            softplus(score)
        };
        let g = sigmoid(score) - label;
        for ((dg, vi), d) in dgrad.iter_mut().zip(v.iter_mut()).zip(doc.iter()) {
            *dg += g * *vi;
            if update_words {
                *vi -= lr * g * *d;
            }
        }
    }
    for (d, dg) in doc.iter_mut().zip(&dgrad) {
        *d -= lr * dg;
    }
    loss
}

impl PvDbowModel {
    fn sample_noise(&self, rng: &mut ChaCha20Rng) -> usize {
        let total = *self.noise_cdf.last().expect("non-empty vocabulary");
        let draw = rng.random_range(0.0..total);
        self.noise_cdf
            .partition_point(|&c| c <= draw)
            .min(self.vocab.len() - 1)
    }

    pub fn dims(&self) -> usize {
        self.cfg.dims
    }

    pub fn config(&self) -> &PvDbowConfig {
        &self.cfg
    }

    /// Mean per-target loss of each training epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// Vector for a text unseen at training time: the same objective is run
    /// with the word state frozen and only the new text vector free.
    /// Deterministic per model seed.
    pub fn infer(&self, tokens: &[String]) -> Vec<f64> {
        let known: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.index.get(t).copied())
            .collect();
        if known.is_empty() {
            if !tokens.is_empty() {
                log::warn!(
                    "all {} tokens out of vocabulary; inferring the zero vector",
                    tokens.len()
                );
            }
            return vec![0.0; self.cfg.dims];
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.cfg.seed.wrapping_add(INFER_SEED_OFFSET));
        let mut doc = init_vector(self.cfg.dims, &mut rng);
        // Word vectors stay frozen; clone into a scratch model so sgns_step
        // can share the update path.
        let mut scratch = self.clone();
        for epoch in 0..self.cfg.epochs {
            let lr = epoch_lr(&self.cfg, epoch);
            for &wi in &known {
                sgns_step(&mut doc, &mut scratch, wi, lr, false, &mut rng);
            }
        }
        doc
    }

    /// Persist the frozen word state and the config needed for inference.
    pub fn write_model(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "DSRIM-PV v1")?;
        writeln!(w, "dims\t{}", self.cfg.dims)?;
        writeln!(w, "epochs\t{}", self.cfg.epochs)?;
        writeln!(w, "negatives\t{}", self.cfg.negatives_per_target)?;
        writeln!(w, "learning_rate\t{}", self.cfg.learning_rate)?;
        writeln!(w, "seed\t{}", self.cfg.seed)?;
        for ((word, count), vec) in self.vocab.iter().zip(&self.counts).zip(&self.word_vectors) {
            write!(w, "word\t{word}\t{count}\t")?;
            write_floats(&mut w, vec)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_model(src: impl BufRead, source_name: &str) -> Result<PvDbowModel> {
        let mut lines = src.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty model file"))?
            .1?;
        if header != "DSRIM-PV v1" {
            return Err(Error::parse(
                source_name,
                1,
                "expected `DSRIM-PV v1` header",
            ));
        }
        let mut cfg = PvDbowConfig::default();
        let mut vocab = Vec::new();
        let mut counts = Vec::new();
        let mut word_vectors: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::parse(source_name, lineno, msg.to_string());
            match fields[0] {
                "dims" if fields.len() == 2 => {
                    cfg.dims = fields[1].parse().map_err(|_| bad("bad dims"))?;
                }
                "epochs" if fields.len() == 2 => {
                    cfg.epochs = fields[1].parse().map_err(|_| bad("bad epochs"))?;
                }
                "negatives" if fields.len() == 2 => {
                    cfg.negatives_per_target =
                        fields[1].parse().map_err(|_| bad("bad negatives"))?;
                }
                "learning_rate" if fields.len() == 2 => {
                    cfg.learning_rate = fields[1].parse().map_err(|_| bad("bad learning_rate"))?;
                }
                "seed" if fields.len() == 2 => {
                    cfg.seed = fields[1].parse().map_err(|_| bad("bad seed"))?;
                }
                "word" if fields.len() == 4 => {
                    let count: u64 = fields[2].parse().map_err(|_| bad("bad count"))?;
                    let vec: Vec<f64> = fields[3]
                        .split_whitespace()
                        .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad float")))
                        .collect::<Result<_>>()?;
                    if vec.len() != cfg.dims {
                        return Err(bad("word vector length does not match dims"));
                    }
                    vocab.push(fields[1].to_string());
                    counts.push(count);
                    word_vectors.push(vec);
                }
                _ => return Err(bad("unrecognized model row")),
            }
        }
        cfg.validate()?;
        if vocab.is_empty() {
            return Err(Error::parse(source_name, 1, "model has no words"));
        }
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(PvDbowModel {
            noise_cdf: noise_cdf(&counts),
            cfg,
            index,
            vocab,
            counts,
            word_vectors,
            loss_history: Vec::new(),
        })
    }
}
