//! First-stage BM25 retrieval over an inverted index, model re-ranking of
//! the BM25 candidates, average-precision / MAP evaluation, the 5-fold
//! cross-validation driver, and query-difficulty classification.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use crate::corpus::{Corpus, Qrels, VectorStore, sample_training_instances, split_folds};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::net::{InstanceVectors, SiameseParams, TrainConfig, train};

/// Exact term postings over the documented tokenizer.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<(String, u64)>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_dl: f64,
}

impl InvertedIndex {
    pub fn build(documents: &BTreeMap<String, Vec<String>>) -> Result<InvertedIndex> {
        if documents.is_empty() {
            return Err(Error::Config("cannot index an empty document set".into()));
        }
        let mut postings: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for (doc_id, tokens) in documents {
            doc_lengths.insert(doc_id.clone(), tokens.len());
            let mut tf: BTreeMap<&str, u64> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push((doc_id.clone(), count));
            }
        }
        let avg_dl = doc_lengths.values().sum::<usize>() as f64 / doc_lengths.len() as f64;
        Ok(InvertedIndex {
            postings,
            doc_lengths,
            avg_dl,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_dl(&self) -> f64 {
        self.avg_dl
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.doc_lengths.get(doc_id).copied()
    }

    pub fn postings(&self, term: &str) -> &[(String, u64)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub const DEFAULT_BM25_K1: f64 = 1.2;
pub const DEFAULT_BM25_B: f64 = 0.75;

/// Standard BM25 with idf = ln((N − df + 0.5)/(df + 0.5) + 1). Each query
/// token occurrence contributes once, so repeated terms weigh more. Ties
/// break by ascending doc id. A fully out-of-vocabulary query yields an
/// empty ranking with a warning.
pub fn bm25_rank(
    index: &InvertedIndex,
    query_tokens: &[String],
    top: usize,
    k1: f64,
    b: f64,
) -> Result<Vec<(String, f64)>> {
    if top == 0 {
        return Err(Error::Config("bm25 needs top >= 1".into()));
    }
    let n = index.n_docs() as f64;
    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    let mut matched = false;
    for token in query_tokens {
        let postings = index.postings(token);
        if postings.is_empty() {
            continue;
        }
        matched = true;
        let df = postings.len() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for (doc_id, tf) in postings {
            let tf = *tf as f64;
            let dl = index.doc_lengths[doc_id] as f64;
            let denom = tf + k1 * (1.0 - b + b * dl / index.avg_dl);
            *scores.entry(doc_id.as_str()).or_insert(0.0) += idf * tf * (k1 + 1.0) / denom;
        }
    }
    if !matched {
        if !query_tokens.is_empty() {
            log::warn!("query has no in-vocabulary token; empty BM25 ranking");
        }
        return Ok(Vec::new());
    }
    let mut ranked: Vec<(String, f64)> = scores
        .into_iter()
        .map(|(d, s)| (d.to_string(), s))
        .collect();
    sort_ranking(&mut ranked);
    ranked.truncate(top);
    Ok(ranked)
}

/// Descending score, ascending doc id on ties.
fn sort_ranking(ranking: &mut [(String, f64)]) {
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
}

/// Ranked document lists per query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRanking {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunRanking {
    pub fn new() -> RunRanking {
        RunRanking::default()
    }

    /// Store a query's ranking; re-sorted under the tie rule, duplicates
    /// rejected.
    pub fn set(&mut self, query: &str, mut ranking: Vec<(String, f64)>) -> Result<()> {
        let mut seen: Vec<&str> = ranking.iter().map(|(d, _)| d.as_str()).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId {
                kind: "ranked document",
                id: format!("{} {}", query, w[0]),
            });
        }
        sort_ranking(&mut ranking);
        self.rankings.insert(query.to_string(), ranking);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// TREC run format: `query-id Q0 doc-id rank score tag`.
    pub fn write_trec(&self, tag: &str, mut w: impl Write) -> Result<()> {
        for (query, ranking) in &self.rankings {
            for (i, (doc, score)) in ranking.iter().enumerate() {
                writeln!(w, "{query} Q0 {doc} {} {score} {tag}", i + 1)?;
            }
        }
        Ok(())
    }

    pub fn read_trec(src: impl BufRead, source_name: &str) -> Result<RunRanking> {
        let mut grouped: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("expected 6 run fields, got {}", fields.len()),
                ));
            }
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, "bad score"))?;
            grouped
                .entry(fields[0].to_string())
                .or_default()
                .push((fields[2].to_string(), score));
        }
        let mut run = RunRanking::new();
        for (query, ranking) in grouped {
            run.set(&query, ranking)?;
        }
        Ok(run)
    }
}

/// Score candidates with the trained model and keep the `top` best. The
/// query must have a stored vector; candidates without one score 0 with a
/// warning. Output doc ids are always a subset of the candidates.
pub fn rerank(
    params: &SiameseParams,
    query_id: &str,
    candidates: &[String],
    store: &VectorStore,
    top: usize,
) -> Result<Vec<(String, f64)>> {
    if top == 0 {
        return Err(Error::Config("rerank needs top >= 1".into()));
    }
    let query_vec = store
        .query(query_id)
        .ok_or_else(|| Error::MissingVector(format!("query {query_id}")))?;
    let y_q = params.forward(&query_vec.data)?;
    let mut ranked = Vec::with_capacity(candidates.len());
    for doc_id in candidates {
        let score = match store.doc(doc_id) {
            Some(v) => crate::vecmath::cosine(&y_q, &params.forward(&v.data)?)?,
            None => {
                log::warn!("candidate `{doc_id}` has no stored vector; scored 0");
                0.0
            }
        };
        ranked.push((doc_id.clone(), score));
    }
    sort_ranking(&mut ranked);
    ranked.truncate(top);
    Ok(ranked)
}

/// Shuffle each query's candidates uniformly — the random-permutation
/// re-ranking control. Scores are descending placeholders so the tie rule
/// and TREC output stay well-defined. Deterministic per seed.
pub fn random_rerank(
    candidates: &BTreeMap<String, Vec<String>>,
    top: usize,
    seed: u64,
) -> Result<RunRanking> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut run = RunRanking::new();
    for (query, docs) in candidates {
        let mut order = docs.clone();
        order.shuffle(&mut rng);
        order.truncate(top);
        let n = order.len();
        let ranking: Vec<(String, f64)> = order
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d, (n - i) as f64))
            .collect();
        run.set(query, ranking)?;
    }
    Ok(run)
}

/// AP = (1/R) Σ_{ranks r holding a relevant doc} precision@r, with R the
/// query's total number of relevant documents in the qrels. Unjudged docs
/// count as non-relevant. `None` when the query has no relevant document.
pub fn average_precision(ranking: &[(String, f64)], query: &str, qrels: &Qrels) -> Option<f64> {
    let total_relevant = qrels.relevant_count(query);
    if total_relevant == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, (doc, _)) in ranking.iter().enumerate() {
        if qrels.is_relevant(query, doc) {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Some(sum / total_relevant as f64)
}

/// AP per judged query (≥ 1 relevant). Queries with no relevant judgment
/// are excluded with a warning; judged queries absent from the run score 0
/// with a warning.
pub fn per_query_ap(run: &RunRanking, qrels: &Qrels) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for query in qrels.queries() {
        if qrels.relevant_count(&query) == 0 {
            log::warn!("query `{query}` has no relevant document; excluded from MAP");
            continue;
        }
        let ap = match run.get(&query) {
            Some(ranking) => average_precision(ranking, &query, qrels).unwrap_or(0.0),
            None => {
                log::warn!("judged query `{query}` missing from the run; AP 0");
                0.0
            }
        };
        out.insert(query, ap);
    }
    out
}

pub fn mean_ap(per_query: &BTreeMap<String, f64>) -> f64 {
    if per_query.is_empty() {
        log::warn!("MAP over zero judged queries; reporting 0");
        return 0.0;
    }
    per_query.values().sum::<f64>() / per_query.len() as f64
}

/// MAP: mean AP over judged queries.
pub fn map(run: &RunRanking, qrels: &Qrels) -> f64 {
    mean_ap(&per_query_ap(run, qrels))
}

/// Settings of the retrieval experiment around the network's [`TrainConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    /// BM25 candidate pool depth per query.
    pub top_candidates: usize,
    /// Re-ranked output depth per query.
    pub top_rerank: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub folds: usize,
    /// Base seed of fold splitting and per-fold sampling/initialization.
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_candidates: 2000,
            top_rerank: 1000,
            bm25_k1: DEFAULT_BM25_K1,
            bm25_b: DEFAULT_BM25_B,
            folds: 5,
            seed: 42,
            train: TrainConfig::default(),
        }
    }
}

/// Everything the cross-validation run produces.
#[derive(Debug, Clone)]
pub struct CrossValidationOutcome {
    /// Test MAP of each fold.
    pub fold_maps: Vec<f64>,
    /// Mean of the fold MAPs.
    pub mean_map: f64,
    pub fold_models: Vec<SiameseParams>,
    pub fold_loss_histories: Vec<Vec<f64>>,
    /// Which queries each fold held out (sorted within folds).
    pub folds: Vec<Vec<String>>,
    /// Union re-ranked run over all test folds.
    pub run: RunRanking,
    /// Model AP per judged query, from its test fold.
    pub model_ap: BTreeMap<String, f64>,
    /// First-stage BM25 run and per-query AP over the same queries.
    pub baseline_run: RunRanking,
    pub baseline_ap: BTreeMap<String, f64>,
    pub baseline_map: f64,
    /// BM25 candidate pool per query (input to any re-ranking).
    pub candidates: BTreeMap<String, Vec<String>>,
}

/// The evaluation protocol: BM25 candidates for every judged query, k-fold split,
/// per-fold training on the other folds' sampled instances, re-ranking of
/// the held-out queries, MAP per fold and averaged. Deterministic per seed:
/// fold f derives its sampling/init/training seeds from `cfg.seed + f`.
pub fn cross_validate(
    corpus: &Corpus,
    qrels: &Qrels,
    store: &VectorStore,
    cfg: &RetrievalConfig,
) -> Result<CrossValidationOutcome> {
    cfg.train.validate()?;
    let index = InvertedIndex::build(&corpus.documents)?;

    let mut judged: Vec<String> = Vec::new();
    for query in qrels.queries() {
        if qrels.relevant_count(&query) == 0 {
            log::warn!("query `{query}` has no relevant document; dropped");
            continue;
        }
        if !corpus.queries.contains_key(&query) {
            log::warn!("judged query `{query}` has no text in the corpus; dropped");
            continue;
        }
        judged.push(query);
    }

    let mut candidates: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut baseline_run = RunRanking::new();
    for query in &judged {
        let ranking = bm25_rank(
            &index,
            &corpus.queries[query],
            cfg.top_candidates,
            cfg.bm25_k1,
            cfg.bm25_b,
        )?;
        candidates.insert(
            query.clone(),
            ranking.iter().map(|(d, _)| d.clone()).collect(),
        );
        baseline_run.set(query, ranking)?;
    }
    let baseline_ap = per_query_ap(&baseline_run, qrels);
    let baseline_map = mean_ap(&baseline_ap);

    let folds = split_folds(&judged, cfg.folds, cfg.seed)?;
    let mut fold_maps = Vec::with_capacity(folds.len());
    let mut fold_models = Vec::with_capacity(folds.len());
    let mut fold_loss_histories = Vec::with_capacity(folds.len());
    let mut run = RunRanking::new();
    let mut model_ap = BTreeMap::new();

    for (f, test_fold) in folds.iter().enumerate() {
        let fold_seed = cfg.seed.wrapping_add(f as u64);
        let mut train_qrels = Qrels::default();
        for (q, d, g) in qrels.iter() {
            if !test_fold.iter().any(|t| t == q) {
                train_qrels.insert(q, d, g)?;
            }
        }
        let instances =
            sample_training_instances(&train_qrels, &candidates, cfg.train.n_negatives, fold_seed)?;
        let mut vectors = Vec::with_capacity(instances.len());
        for inst in &instances {
            let Some(q) = store.query(&inst.query) else {
                log::warn!(
                    "query `{}` has no stored vector; instance skipped",
                    inst.query
                );
                continue;
            };
            let Some(pos) = store.doc(&inst.positive) else {
                log::warn!(
                    "document `{}` has no stored vector; instance skipped",
                    inst.positive
                );
                continue;
            };
            let negs: Option<Vec<Vec<f64>>> = inst
                .negatives
                .iter()
                .map(|n| store.doc(&n.doc).map(|v| v.data))
                .collect();
            let Some(negatives) = negs else {
                log::warn!(
                    "instance for query `{}` misses a negative vector; skipped",
                    inst.query
                );
                continue;
            };
            vectors.push(InstanceVectors {
                query: q.data,
                positive: pos.data,
                negatives,
            });
        }

        let init = SiameseParams::init_params(store.input_dims(), fold_seed)?;
        let (model, history) = if vectors.is_empty() {
            log::warn!("fold {f}: no usable training instances; keeping initial parameters");
            (init, Vec::new())
        } else {
            let fold_train = TrainConfig {
                seed: cfg.train.seed.wrapping_add(f as u64),
                ..cfg.train.clone()
            };
            let out = train(init, &vectors, &fold_train)?;
            (out.params, out.loss_history)
        };

        let mut fold_ap = BTreeMap::new();
        for query in test_fold {
            let ranking = rerank(&model, query, &candidates[query], store, cfg.top_rerank)?;
            let ap = average_precision(&ranking, query, qrels).unwrap_or(0.0);
            run.set(query, ranking)?;
            fold_ap.insert(query.clone(), ap);
            model_ap.insert(query.clone(), ap);
        }
        fold_maps.push(mean_ap(&fold_ap));
        fold_models.push(model);
        fold_loss_histories.push(history);
    }

    let mean_map = fold_maps.iter().sum::<f64>() / fold_maps.len() as f64;
    Ok(CrossValidationOutcome {
        fold_maps,
        mean_map,
        fold_models,
        fold_loss_histories,
        folds,
        run,
        model_ap,
        baseline_run,
        baseline_ap,
        baseline_map,
        candidates,
    })
}

/// Difficulty label from the 1-D clustering of baseline AP values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DifficultyClass {
    Easy,
    Medium,
    Difficult,
}

impl DifficultyClass {
    pub const ALL: [DifficultyClass; 3] = [
        DifficultyClass::Easy,
        DifficultyClass::Medium,
        DifficultyClass::Difficult,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DifficultyClass::Easy => "easy",
            DifficultyClass::Medium => "medium",
            DifficultyClass::Difficult => "difficult",
        }
    }
}

impl fmt::Display for DifficultyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: DifficultyClass,
    pub count: usize,
    pub mean_words: f64,
    pub mean_objects: f64,
    pub baseline_map: f64,
    pub model_map: f64,
    /// 100·(model − baseline)/baseline over the class MAPs; absent when the
    /// class baseline MAP is 0.
    pub pct_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DifficultyReport {
    /// Per query: baseline AP and assigned class.
    pub per_query: BTreeMap<String, (f64, DifficultyClass)>,
    /// One row per non-empty class, easy → difficult.
    pub classes: Vec<ClassStats>,
}

/// Cluster baseline per-query AP values with 1-D k-means (k = 3) and label
/// the clusters easy/medium/difficult by descending centroid. Per class the
/// report carries mean query word/object counts and the relative change of
/// the model MAP against the baseline MAP (per-class MAP-relative).
/// With fewer than 3 distinct AP values the clustering is degenerate:
/// classes are assigned by descending distinct value with a warning.
pub fn classify_query_difficulty(
    baseline_ap: &BTreeMap<String, f64>,
    model_ap: &BTreeMap<String, f64>,
    corpus: &Corpus,
    seed: u64,
) -> Result<DifficultyReport> {
    if baseline_ap.len() < 3 {
        return Err(Error::Config(format!(
            "difficulty classification needs at least 3 queries, got {}",
            baseline_ap.len()
        )));
    }
    let queries: Vec<&String> = baseline_ap.keys().collect();
    let mut distinct: Vec<f64> = baseline_ap.values().copied().collect();
    distinct.sort_by(|a, b| b.partial_cmp(a).unwrap());
    distinct.dedup();

    let assignment: Vec<DifficultyClass> = if distinct.len() < 3 {
        log::warn!(
            "only {} distinct AP value(s); degenerate difficulty clustering by value order",
            distinct.len()
        );
        queries
            .iter()
            .map(|q| {
                let pos = distinct
                    .iter()
                    .position(|v| v == &baseline_ap[*q])
                    .expect("value present");
                DifficultyClass::ALL[pos]
            })
            .collect()
    } else {
        let points: Vec<Vec<f64>> = queries.iter().map(|q| vec![baseline_ap[*q]]).collect();
        let outcome = kmeans(&points, 3, 100, seed)?;
        // Order cluster indices by descending centroid: highest AP = easy.
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            outcome.centroids[b][0]
                .partial_cmp(&outcome.centroids[a][0])
                .unwrap()
        });
        let mut label_of = [DifficultyClass::Easy; 3];
        for (rank, &cluster) in order.iter().enumerate() {
            label_of[cluster] = DifficultyClass::ALL[rank];
        }
        outcome.assignments.iter().map(|&a| label_of[a]).collect()
    };

    let mut per_query = BTreeMap::new();
    for (q, class) in queries.iter().zip(&assignment) {
        per_query.insert((*q).clone(), (baseline_ap[*q], *class));
    }

    let mut classes = Vec::new();
    for class in DifficultyClass::ALL {
        let members: Vec<&String> = queries
            .iter()
            .zip(&assignment)
            .filter(|&(_, &c)| c == class)
            .map(|(q, _)| *q)
            .collect();
        if members.is_empty() {
            continue;
        }
        let count = members.len() as f64;
        let mean_words = members
            .iter()
            .map(|q| corpus.queries.get(*q).map_or(0, Vec::len) as f64)
            .sum::<f64>()
            / count;
        let mean_objects = members
            .iter()
            .map(|q| corpus.objects_of(q).len() as f64)
            .sum::<f64>()
            / count;
        let base = members.iter().map(|q| baseline_ap[*q]).sum::<f64>() / count;
        let model = members
            .iter()
            .map(|q| {
                model_ap.get(*q).copied().unwrap_or_else(|| {
                    log::warn!("query `{q}` has no model AP; counted 0");
                    0.0
                })
            })
            .sum::<f64>()
            / count;
        let pct_change = (base != 0.0).then(|| 100.0 * (model - base) / base);
        classes.push(ClassStats {
            class,
            count: members.len(),
            mean_words,
            mean_objects,
            baseline_map: base,
            model_map: model,
            pct_change,
        });
    }
    Ok(DifficultyReport { per_query, classes })
}

impl DifficultyReport {
    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "class\tqueries\tmean_words\tmean_objects\tbaseline_map\tmodel_map\tpct_change"
        )?;
        for row in &self.classes {
            let pct = row
                .pct_change
                .map(|p| p.to_string())
                .unwrap_or_else(|| "n/a".into());
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.class,
                row.count,
                row.mean_words,
                row.mean_objects,
                row.baseline_map,
                row.model_map,
                pct
            )?;
        }
        writeln!(w)?;
        writeln!(w, "query\tbaseline_ap\tclass")?;
        for (q, (ap, class)) in &self.per_query {
            writeln!(w, "{q}\t{ap}\t{class}")?;
        }
        Ok(())
    }

    /// Aligned plain-text table with the Table-4 column set: per difficulty
    /// class, query statistics (#Words, #Objects) and the %Change of the
    /// model MAP relative to the baseline MAP.
    pub fn write_table(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "{:<10} {:>8} {:>8} {:>9} {:>13} {:>10} {:>9}",
            "Class", "Queries", "#Words", "#Objects", "Baseline MAP", "Model MAP", "%Change"
        )?;
        for row in &self.classes {
            let pct = row
                .pct_change
                .map(|p| format!("{p:.2}"))
                .unwrap_or_else(|| "n/a".into());
            writeln!(
                w,
                "{:<10} {:>8} {:>8.2} {:>9.2} {:>13.4} {:>10.4} {:>9}",
                row.class.to_string(),
                row.count,
                row.mean_words,
                row.mean_objects,
                row.baseline_map,
                row.model_map,
                pct
            )?;
        }
        Ok(())
    }
}
