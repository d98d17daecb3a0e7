//! Experiment configuration: defaults, `key = value` config files, and
//! flag overrides. Defaults follow the experimental settings the pipeline
//! is built around (k = 200 centroid clusters, 100-dimensional text
//! vectors, 4 negatives, batches of 5, dropout 0.3, 50 epochs, 5 folds,
//! top-2000 candidates re-ranked to top-1000).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result, bail};
use clap::Args;
use dsrim::relmap::ReprStrategy;

/// Which parts feed the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parts {
    P2v,
    Kr,
    KrP2v,
}

impl Parts {
    pub fn uses_text(self) -> bool {
        matches!(self, Parts::P2v | Parts::KrP2v)
    }

    pub fn uses_kr(self) -> bool {
        matches!(self, Parts::Kr | Parts::KrP2v)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parts::P2v => "p2v",
            Parts::Kr => "kr",
            Parts::KrP2v => "kr+p2v",
        }
    }
}

impl fmt::Display for Parts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Parts {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Parts> {
        match s {
            "p2v" => Ok(Parts::P2v),
            "kr" => Ok(Parts::Kr),
            "kr+p2v" => Ok(Parts::KrP2v),
            other => bail!("unknown parts `{other}` (expected p2v, kr, or kr+p2v)"),
        }
    }
}

/// Per-stage seed offsets added to the base seed so stages draw from
/// disjoint streams. Cross-validation adds the fold index (< 0x1000) on
/// top of `SEED_TRAINING`.
pub const SEED_EMBEDDINGS: u64 = 0x1000;
pub const SEED_REFERENTIAL: u64 = 0x2000;
pub const SEED_TRAINING: u64 = 0x3000;
pub const SEED_PIVOTS: u64 = 0x4000;
pub const SEED_DIFFICULTY: u64 = 0x5000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // Input paths.
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub documents: PathBuf,
    pub queries: PathBuf,
    pub annotations: PathBuf,
    pub qrels: PathBuf,
    /// Artifact directory.
    pub out: PathBuf,
    // Graph / referential.
    pub relation: String,
    pub k: usize,
    pub strategy: ReprStrategy,
    // Text embeddings.
    pub dims: usize,
    pub pv_epochs: usize,
    pub pv_negatives: usize,
    pub pv_learning_rate: f64,
    // Input assembly.
    pub parts: Parts,
    pub include_query_stats: bool,
    // Network training.
    pub alpha: f64,
    pub n: usize,
    pub batch: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub average_negatives: bool,
    // Retrieval.
    pub folds: usize,
    pub top_candidates: usize,
    pub top_rerank: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    // Analysis.
    pub n_pivots: usize,
    pub neighborhood: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nodes: PathBuf::from("nodes.tsv"),
            edges: PathBuf::from("edges.tsv"),
            documents: PathBuf::from("documents.jsonl"),
            queries: PathBuf::from("queries.jsonl"),
            annotations: PathBuf::from("annotations.tsv"),
            qrels: PathBuf::from("qrels.txt"),
            out: PathBuf::from("out"),
            relation: "IS-A".into(),
            k: 200,
            strategy: ReprStrategy::Centroid,
            dims: 100,
            pv_epochs: 20,
            pv_negatives: 5,
            pv_learning_rate: 0.025,
            parts: Parts::KrP2v,
            include_query_stats: false,
            alpha: 1.0,
            n: 4,
            batch: 5,
            dropout: 0.3,
            epochs: 50,
            learning_rate: 0.005,
            average_negatives: false,
            folds: 5,
            top_candidates: 2000,
            top_rerank: 1000,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            n_pivots: 100,
            neighborhood: 10,
            seed: 42,
        }
    }
}

/// Flag overrides; every config key has a flag of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub documents: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub relation: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub pv_epochs: Option<usize>,
    #[arg(long)]
    pub pv_negatives: Option<usize>,
    #[arg(long)]
    pub pv_learning_rate: Option<f64>,
    #[arg(long)]
    pub parts: Option<String>,
    #[arg(long)]
    pub include_query_stats: Option<bool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub average_negatives: Option<bool>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub top_candidates: Option<usize>,
    #[arg(long)]
    pub top_rerank: Option<usize>,
    #[arg(long)]
    pub bm25_k1: Option<f64>,
    #[arg(long)]
    pub bm25_b: Option<f64>,
    #[arg(long)]
    pub n_pivots: Option<usize>,
    #[arg(long)]
    pub neighborhood: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    /// Defaults, overlaid by the config file (if given), overlaid by flags.
    /// Relative paths in the config file are resolved against the file's
    /// directory; flag paths stay as given.
    pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.apply_file(&text, base)
                .with_context(|| format!("in config file {}", path.display()))?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, text: &str, base: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got `{raw}`", lineno + 1);
            };
            let key = key.trim();
            let value = value.trim();
            self.apply_pair(key, value, Some(base))
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    fn apply_pair(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        match key {
            "nodes" => self.nodes = path(value),
            "edges" => self.edges = path(value),
            "documents" => self.documents = path(value),
            "queries" => self.queries = path(value),
            "annotations" => self.annotations = path(value),
            "qrels" => self.qrels = path(value),
            "out" => self.out = path(value),
            "relation" => self.relation = value.to_string(),
            "k" => self.k = parse(key, value)?,
            "strategy" => {
                self.strategy = value
                    .parse::<ReprStrategy>()
                    .map_err(|e| anyhow::anyhow!("{e}"))?
            }
            "dims" => self.dims = parse(key, value)?,
            "pv_epochs" => self.pv_epochs = parse(key, value)?,
            "pv_negatives" => self.pv_negatives = parse(key, value)?,
            "pv_learning_rate" => self.pv_learning_rate = parse(key, value)?,
            "parts" => self.parts = value.parse()?,
            "include_query_stats" => self.include_query_stats = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "average_negatives" => self.average_negatives = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "top_candidates" => self.top_candidates = parse(key, value)?,
            "top_rerank" => self.top_rerank = parse(key, value)?,
            "bm25_k1" => self.bm25_k1 = parse(key, value)?,
            "bm25_b" => self.bm25_b = parse(key, value)?,
            "n_pivots" => self.n_pivots = parse(key, value)?,
            "neighborhood" => self.neighborhood = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        macro_rules! set {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &o.$field { self.$field = v.clone(); })*
            };
        }
        set!(
            nodes,
            edges,
            documents,
            queries,
            annotations,
            qrels,
            out,
            relation,
            k,
            dims,
            pv_epochs,
            pv_negatives,
            pv_learning_rate,
            include_query_stats,
            alpha,
            n,
            batch,
            dropout,
            epochs,
            learning_rate,
            average_negatives,
            folds,
            top_candidates,
            top_rerank,
            bm25_k1,
            bm25_b,
            n_pivots,
            neighborhood,
            seed,
        );
        if let Some(s) = &o.strategy {
            self.strategy = s
                .parse::<ReprStrategy>()
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let Some(p) = &o.parts {
            self.parts = p.parse()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 14] = [
            ("k must be >= 1", self.k >= 1),
            ("dims must be >= 1", self.dims >= 1),
            ("pv_epochs must be >= 1", self.pv_epochs >= 1),
            ("pv_negatives must be >= 1", self.pv_negatives >= 1),
            (
                "pv_learning_rate must be positive and finite",
                self.pv_learning_rate > 0.0 && self.pv_learning_rate.is_finite(),
            ),
            (
                "alpha must be positive and finite",
                self.alpha > 0.0 && self.alpha.is_finite(),
            ),
            ("n must be >= 1", self.n >= 1),
            ("batch must be >= 1", self.batch >= 1),
            (
                "dropout must lie in [0, 1)",
                (0.0..1.0).contains(&self.dropout),
            ),
            (
                "learning_rate must be non-negative and finite",
                self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            ),
            ("folds must be >= 2", self.folds >= 2),
            ("top_candidates must be >= 1", self.top_candidates >= 1),
            ("top_rerank must be >= 1", self.top_rerank >= 1),
            ("neighborhood must be >= 1", self.neighborhood >= 1),
        ];
        for (msg, ok) in checks {
            if !ok {
                bail!("invalid config: {msg}");
            }
        }
        if self.relation.trim().is_empty() {
            bail!("invalid config: relation must be non-empty");
        }
        if self.n_pivots == 0 {
            bail!("invalid config: n_pivots must be >= 1");
        }
        Ok(())
    }

    /// Canonical `key=value` pairs, sorted by key. Input paths are included
    /// as given; the `out` directory is deliberately excluded so runs into
    /// different directories share a config hash.
    pub fn canonical_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![
            ("nodes".into(), self.nodes.display().to_string()),
            ("edges".into(), self.edges.display().to_string()),
            ("documents".into(), self.documents.display().to_string()),
            ("queries".into(), self.queries.display().to_string()),
            ("annotations".into(), self.annotations.display().to_string()),
            ("qrels".into(), self.qrels.display().to_string()),
            ("relation".into(), self.relation.clone()),
            ("k".into(), self.k.to_string()),
            ("strategy".into(), self.strategy.to_string()),
            ("dims".into(), self.dims.to_string()),
            ("pv_epochs".into(), self.pv_epochs.to_string()),
            ("pv_negatives".into(), self.pv_negatives.to_string()),
            ("pv_learning_rate".into(), self.pv_learning_rate.to_string()),
            ("parts".into(), self.parts.to_string()),
            (
                "include_query_stats".into(),
                self.include_query_stats.to_string(),
            ),
            ("alpha".into(), self.alpha.to_string()),
            ("n".into(), self.n.to_string()),
            ("batch".into(), self.batch.to_string()),
            ("dropout".into(), self.dropout.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            (
                "average_negatives".into(),
                self.average_negatives.to_string(),
            ),
            ("folds".into(), self.folds.to_string()),
            ("top_candidates".into(), self.top_candidates.to_string()),
            ("top_rerank".into(), self.top_rerank.to_string()),
            ("bm25_k1".into(), self.bm25_k1.to_string()),
            ("bm25_b".into(), self.bm25_b.to_string()),
            ("n_pivots".into(), self.n_pivots.to_string()),
            ("neighborhood".into(), self.neighborhood.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        pairs.sort();
        pairs
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("config key `{key}`: bad value `{value}`: {e}"))
}
