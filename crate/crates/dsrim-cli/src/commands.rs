//! One function per pipeline stage. Each command validates its inputs,
//! writes versioned artifacts into the configured output directory, and
//! records a manifest with config and content hashes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};

use dsrim::analysis::{LabeledReferential, io_similarity_report, pivotal_experiment};
use dsrim::corpus::{Corpus, InputVector, Qrels, VectorStore};
use dsrim::embeddings::{EmbeddingTable, PvDbowConfig, PvDbowModel, train_doc_embeddings};
use dsrim::kgraph::{KnowledgeGraph, LeacockCache};
use dsrim::net::{TrainConfig, read_checkpoint, write_checkpoint};
use dsrim::relmap::{
    Referential, ReprStrategy, build_kr_vector, build_referential, read_referential,
    top_concepts_referential, write_referential,
};
use dsrim::retrieval::{
    RetrievalConfig, RunRanking, classify_query_difficulty, cross_validate, mean_ap, per_query_ap,
};
use dsrim::synth::{SynthConfig, generate};
use dsrim::tokenize::tokenize;

use crate::config::{
    ExperimentConfig, SEED_DIFFICULTY, SEED_EMBEDDINGS, SEED_PIVOTS, SEED_REFERENTIAL,
    SEED_TRAINING,
};
use crate::manifest::Manifest;

// Artifact file names inside the output directory.
pub const GRAPH: &str = "graph.tsv";
pub const PV_MODEL: &str = "pv_model.tsv";
pub const TEXT_VECTORS: &str = "text_vectors.tsv";
pub const OBJECT_VECTORS: &str = "object_vectors.tsv";
pub const REFERENTIAL: &str = "referential.tsv";
pub const VECTORS: &str = "vectors.tsv";
pub const FOLDS: &str = "folds.tsv";
pub const LOSS_HISTORY: &str = "loss_history.tsv";
pub const RUN_DSRIM: &str = "run_dsrim.txt";
pub const RUN_BM25: &str = "run_bm25.txt";
pub const MAP_REPORT: &str = "map_report.txt";
pub const AP_PER_QUERY: &str = "ap_per_query.tsv";
pub const IO_REPORT: &str = "io_similarity.txt";
pub const SEPARATION_TSV: &str = "separation.tsv";
pub const SEPARATION_TXT: &str = "separation.txt";
pub const DIFFICULTY_TSV: &str = "difficulty.tsv";
pub const DIFFICULTY_TXT: &str = "difficulty.txt";
pub const FIXTURE_CONFIG: &str = "config.txt";

pub fn checkpoint_name(fold: usize) -> String {
    format!("checkpoint_fold{fold}.tsv")
}

// ------------------------------------------------------------- I/O helpers

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

/// Error out when a prerequisite artifact is absent, naming the command
/// that produces it.
fn require_artifact(out: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let path = out.join(name);
    if !path.is_file() {
        bail!(
            "missing artifact `{}` (expected at {}); run `dsrim {producer}` first",
            name,
            path.display()
        );
    }
    Ok(path)
}

fn write_artifact<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> dsrim::Result<()>,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write(&mut w).with_context(|| format!("while writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn ensure_out(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))
}

fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    Ok(Corpus::load(
        reader(&cfg.documents)?,
        &source_name(&cfg.documents),
        reader(&cfg.queries)?,
        &source_name(&cfg.queries),
    )?)
}

fn load_corpus_annotated(cfg: &ExperimentConfig, graph: &mut KnowledgeGraph) -> Result<Corpus> {
    let mut corpus = load_corpus(cfg)?;
    corpus.load_annotations(
        reader(&cfg.annotations)?,
        &source_name(&cfg.annotations),
        graph,
        cfg.include_query_stats,
    )?;
    Ok(corpus)
}

fn load_graph_artifact(cfg: &ExperimentConfig) -> Result<KnowledgeGraph> {
    let path = require_artifact(&cfg.out, GRAPH, "build-graph")?;
    Ok(KnowledgeGraph::read_cache(
        reader(&path)?,
        &source_name(&path),
    )?)
}

fn load_qrels(cfg: &ExperimentConfig) -> Result<Qrels> {
    Ok(Qrels::load(reader(&cfg.qrels)?, &source_name(&cfg.qrels))?)
}

fn corpus_inputs(m: &mut Manifest, cfg: &ExperimentConfig) -> Result<()> {
    m.input("documents", &cfg.documents)?;
    m.input("queries", &cfg.queries)?;
    Ok(())
}

// --------------------------------------------------------------- commands

/// Load the knowledge graph from its TSV sources, ingest the corpus and
/// annotations once to validate them and fill object document frequencies,
/// and write the graph cache.
pub fn cmd_build_graph(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let mut graph = KnowledgeGraph::load(
        reader(&cfg.nodes)?,
        &source_name(&cfg.nodes),
        reader(&cfg.edges)?,
        &source_name(&cfg.edges),
        &cfg.relation,
    )?;
    let corpus = load_corpus_annotated(cfg, &mut graph)?;
    log::info!(
        "graph: {} objects, max depth {}; corpus: {} documents, {} queries, avg |O(T)| {:.3}",
        graph.len(),
        graph.max_depth(),
        corpus.documents.len(),
        corpus.queries.len(),
        corpus.avg_no
    );
    let graph_path = cfg.out.join(GRAPH);
    write_artifact(&graph_path, |w| graph.write_cache(w))?;

    let mut m = Manifest::new("build-graph", cfg);
    m.input("nodes", &cfg.nodes)?;
    m.input("edges", &cfg.edges)?;
    corpus_inputs(&mut m, cfg)?;
    m.input("annotations", &cfg.annotations)?;
    m.output(GRAPH, &graph_path)?;
    m.write(&cfg.out)
}

/// Train the document-embedding model on all corpus texts (documents and
/// queries co-trained) and write the model plus the per-text vectors.
pub fn cmd_train_embeddings(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let corpus = load_corpus(cfg)?;
    let mut texts: BTreeMap<String, Vec<String>> = corpus.documents.clone();
    texts.extend(corpus.queries.clone());
    let pv_cfg = PvDbowConfig {
        dims: cfg.dims,
        epochs: cfg.pv_epochs,
        negatives_per_target: cfg.pv_negatives,
        learning_rate: cfg.pv_learning_rate,
        seed: cfg.seed.wrapping_add(SEED_EMBEDDINGS),
    };
    let (table, model) = train_doc_embeddings(&texts, &pv_cfg)?;
    log::info!(
        "embeddings: {} texts x {} dims, final epoch loss {:.6}",
        table.len(),
        table.dims(),
        model.loss_history().last().copied().unwrap_or(f64::NAN)
    );
    let model_path = cfg.out.join(PV_MODEL);
    write_artifact(&model_path, |w| model.write_model(w))?;
    let vectors_path = cfg.out.join(TEXT_VECTORS);
    write_artifact(&vectors_path, |w| table.save(w))?;

    let mut m = Manifest::new("train-embeddings", cfg);
    corpus_inputs(&mut m, cfg)?;
    m.output(PV_MODEL, &model_path)?;
    m.output(TEXT_VECTORS, &vectors_path)?;
    m.write(&cfg.out)
}

/// Infer one vector per graph object from its textual label with the
/// trained embedding model, cluster the objects into the k-cluster
/// referential under the configured representative strategy, and write
/// both tables.
pub fn cmd_build_referential(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let mut graph = load_graph_artifact(cfg)?;
    let model_path = require_artifact(&cfg.out, PV_MODEL, "train-embeddings")?;
    let model = PvDbowModel::read_model(reader(&model_path)?, &source_name(&model_path))?;
    let _ = load_corpus_annotated(cfg, &mut graph)?; // refresh df on the graph
    let object_vectors = infer_object_vectors(&graph, &model)?;
    let df = Corpus::df_map(&graph);

    let objects: Vec<String> = graph.ids().map(String::from).collect();
    let referential = build_referential_for(
        &objects,
        &object_vectors,
        cfg.k,
        cfg.strategy,
        &df,
        cfg.seed.wrapping_add(SEED_REFERENTIAL),
    )?;
    log::info!(
        "referential: k={} strategy={} over {} objects",
        referential.k,
        referential.strategy,
        objects.len()
    );

    let vectors_path = cfg.out.join(OBJECT_VECTORS);
    write_artifact(&vectors_path, |w| object_vectors.save(w))?;
    let ref_path = cfg.out.join(REFERENTIAL);
    write_artifact(&ref_path, |w| write_referential(&referential, w))?;

    let mut m = Manifest::new("build-referential", cfg);
    m.input(GRAPH, &cfg.out.join(GRAPH))?;
    m.input(PV_MODEL, &model_path)?;
    corpus_inputs(&mut m, cfg)?;
    m.input("annotations", &cfg.annotations)?;
    m.output(OBJECT_VECTORS, &vectors_path)?;
    m.output(REFERENTIAL, &ref_path)?;
    m.write(&cfg.out)
}

fn infer_object_vectors(graph: &KnowledgeGraph, model: &PvDbowModel) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(model.dims());
    for node in graph.objects() {
        let vector = model.infer(&tokenize(&node.label));
        table.insert(&node.id, vector)?;
    }
    Ok(table)
}

fn build_referential_for(
    objects: &[String],
    object_vectors: &EmbeddingTable,
    k: usize,
    strategy: ReprStrategy,
    df: &BTreeMap<String, u64>,
    seed: u64,
) -> Result<Referential> {
    let referential = if strategy == ReprStrategy::TopConcepts {
        top_concepts_referential(objects, object_vectors, df, k)?
    } else {
        build_referential(objects, object_vectors, k, strategy, df, seed)?
    };
    Ok(referential)
}

/// Assemble the network input vector for every document and query:
/// the text vector, the knowledge-resource vector over the referential,
/// or their concatenation, per the `parts` setting.
pub fn cmd_vectorize(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let mut graph = load_graph_artifact(cfg)?;
    let corpus = load_corpus_annotated(cfg, &mut graph)?;

    let text_vectors = if cfg.parts.uses_text() {
        let path = require_artifact(&cfg.out, TEXT_VECTORS, "train-embeddings")?;
        Some(EmbeddingTable::load(reader(&path)?, &source_name(&path))?)
    } else {
        None
    };
    let kr = if cfg.parts.uses_kr() {
        let ref_path = require_artifact(&cfg.out, REFERENTIAL, "build-referential")?;
        let referential = read_referential(reader(&ref_path)?, &source_name(&ref_path))?;
        let obj_path = require_artifact(&cfg.out, OBJECT_VECTORS, "build-referential")?;
        let object_vectors = EmbeddingTable::load(reader(&obj_path)?, &source_name(&obj_path))?;
        Some((referential, object_vectors))
    } else {
        None
    };

    let cache = match &kr {
        Some((referential, _)) => LeacockCache::warm(
            &graph,
            referential
                .clusters
                .iter()
                .map(|c| c.representative.as_str()),
        )?,
        None => LeacockCache::cold(&graph),
    };

    let text_dims = text_vectors.as_ref().map_or(0, EmbeddingTable::dims);
    let kr_dims = kr.as_ref().map_or(0, |(r, _)| r.k);
    let mut store = VectorStore::new(text_dims, kr_dims);
    let empty: [f64; 0] = [];
    for (ids, is_doc) in [(&corpus.documents, true), (&corpus.queries, false)] {
        for id in ids.keys() {
            let x_t: Vec<f64> = match &text_vectors {
                Some(table) => table.require(id)?.to_vec(),
                None => empty.to_vec(),
            };
            let x_kr: Vec<f64> = match &kr {
                Some((referential, object_vectors)) => {
                    build_kr_vector(
                        corpus.objects_of(id),
                        referential,
                        &cache,
                        object_vectors,
                        corpus.avg_no,
                    )?
                    .values
                }
                None => empty.to_vec(),
            };
            let v = InputVector::from_parts(&x_t, &x_kr);
            if is_doc {
                store.insert_doc(id, v)?;
            } else {
                store.insert_query(id, v)?;
            }
        }
    }
    log::info!(
        "vectors: {} + {} dims for {} documents and {} queries",
        text_dims,
        kr_dims,
        corpus.documents.len(),
        corpus.queries.len()
    );
    let vectors_path = cfg.out.join(VECTORS);
    write_artifact(&vectors_path, |w| store.write(w))?;

    let mut m = Manifest::new("vectorize", cfg);
    m.input(GRAPH, &cfg.out.join(GRAPH))?;
    corpus_inputs(&mut m, cfg)?;
    m.input("annotations", &cfg.annotations)?;
    if cfg.parts.uses_text() {
        m.input(TEXT_VECTORS, &cfg.out.join(TEXT_VECTORS))?;
    }
    if cfg.parts.uses_kr() {
        m.input(REFERENTIAL, &cfg.out.join(REFERENTIAL))?;
        m.input(OBJECT_VECTORS, &cfg.out.join(OBJECT_VECTORS))?;
    }
    m.output(VECTORS, &vectors_path)?;
    m.write(&cfg.out)
}

fn retrieval_config(cfg: &ExperimentConfig) -> RetrievalConfig {
    let seed = cfg.seed.wrapping_add(SEED_TRAINING);
    RetrievalConfig {
        top_candidates: cfg.top_candidates,
        top_rerank: cfg.top_rerank,
        bm25_k1: cfg.bm25_k1,
        bm25_b: cfg.bm25_b,
        folds: cfg.folds,
        seed,
        train: TrainConfig {
            alpha: cfg.alpha,
            n_negatives: cfg.n,
            batch_size: cfg.batch,
            dropout: cfg.dropout,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            seed,
            average_negatives: cfg.average_negatives,
        },
    }
}

/// Run the k-fold cross-validation: BM25 candidates, per-fold instance
/// sampling and network training, re-ranking of each held-out fold.
/// Writes the fold checkpoints, fold assignment, loss histories, and both
/// run files.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let vectors_path = require_artifact(&cfg.out, VECTORS, "vectorize")?;
    let store = VectorStore::read(reader(&vectors_path)?, &source_name(&vectors_path))?;
    let corpus = load_corpus(cfg)?;
    let qrels = load_qrels(cfg)?;
    let rcfg = retrieval_config(cfg);

    let outcome = cross_validate(&corpus, &qrels, &store, &rcfg)?;
    log::info!(
        "cross-validation: mean MAP {:.4} (baseline {:.4}), fold MAPs {:?}",
        outcome.mean_map,
        outcome.baseline_map,
        outcome.fold_maps
    );

    let mut m = Manifest::new("train", cfg);
    m.input(VECTORS, &vectors_path)?;
    corpus_inputs(&mut m, cfg)?;
    m.input("qrels", &cfg.qrels)?;

    for (f, model) in outcome.fold_models.iter().enumerate() {
        let fold_cfg = TrainConfig {
            seed: rcfg.train.seed.wrapping_add(f as u64),
            ..rcfg.train.clone()
        };
        let name = checkpoint_name(f);
        let path = cfg.out.join(&name);
        write_artifact(&path, |w| write_checkpoint(model, &fold_cfg, w))?;
        m.output(&name, &path)?;
    }

    let folds_path = cfg.out.join(FOLDS);
    write_artifact(&folds_path, |w| {
        writeln!(w, "fold\tquery")?;
        for (f, fold) in outcome.folds.iter().enumerate() {
            for q in fold {
                writeln!(w, "{f}\t{q}")?;
            }
        }
        Ok(())
    })?;
    m.output(FOLDS, &folds_path)?;

    let loss_path = cfg.out.join(LOSS_HISTORY);
    write_artifact(&loss_path, |w| {
        writeln!(w, "fold\tepoch\tmean_loss")?;
        for (f, history) in outcome.fold_loss_histories.iter().enumerate() {
            for (e, loss) in history.iter().enumerate() {
                writeln!(w, "{f}\t{}\t{loss}", e + 1)?;
            }
        }
        Ok(())
    })?;
    m.output(LOSS_HISTORY, &loss_path)?;

    let run_path = cfg.out.join(RUN_DSRIM);
    write_artifact(&run_path, |w| outcome.run.write_trec("dsrim", w))?;
    m.output(RUN_DSRIM, &run_path)?;
    let bm25_path = cfg.out.join(RUN_BM25);
    write_artifact(&bm25_path, |w| outcome.baseline_run.write_trec("bm25", w))?;
    m.output(RUN_BM25, &bm25_path)?;

    m.write(&cfg.out)
}

fn read_folds(path: &Path) -> Result<Vec<Vec<String>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut folds: Vec<Vec<String>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let Some((f, q)) = line.split_once('\t') else {
            bail!(
                "{}: line {}: expected `fold<TAB>query`",
                path.display(),
                lineno + 1
            );
        };
        let f: usize = f
            .parse()
            .with_context(|| format!("{}: line {}: bad fold index", path.display(), lineno + 1))?;
        while folds.len() <= f {
            folds.push(Vec::new());
        }
        folds[f].push(q.to_string());
    }
    Ok(folds)
}

/// Score the stored runs against the qrels (per-fold and mean MAP, the
/// BM25 baseline MAP, per-query AP) and compare input vs. latent cosine
/// similarity over the relevant pairs of each fold's test queries.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let run_path = require_artifact(&cfg.out, RUN_DSRIM, "train")?;
    let bm25_path = require_artifact(&cfg.out, RUN_BM25, "train")?;
    let folds_path = require_artifact(&cfg.out, FOLDS, "train")?;
    let vectors_path = require_artifact(&cfg.out, VECTORS, "vectorize")?;

    let run = RunRanking::read_trec(reader(&run_path)?, &source_name(&run_path))?;
    let baseline_run = RunRanking::read_trec(reader(&bm25_path)?, &source_name(&bm25_path))?;
    let qrels = load_qrels(cfg)?;
    let store = VectorStore::read(reader(&vectors_path)?, &source_name(&vectors_path))?;
    let folds = read_folds(&folds_path)?;

    let model_ap = per_query_ap(&run, &qrels);
    let baseline_ap = per_query_ap(&baseline_run, &qrels);
    let fold_maps: Vec<f64> = folds
        .iter()
        .map(|fold| {
            let aps: BTreeMap<String, f64> = fold
                .iter()
                .map(|q| (q.clone(), model_ap.get(q).copied().unwrap_or(0.0)))
                .collect();
            mean_ap(&aps)
        })
        .collect();
    let mean_map = if fold_maps.is_empty() {
        0.0
    } else {
        fold_maps.iter().sum::<f64>() / fold_maps.len() as f64
    };
    let baseline_map = mean_ap(&baseline_ap);

    let map_path = cfg.out.join(MAP_REPORT);
    write_artifact(&map_path, |w| {
        writeln!(w, "{:<6} {:>8} {:>10}", "fold", "queries", "MAP")?;
        for (f, fold) in folds.iter().enumerate() {
            writeln!(w, "{:<6} {:>8} {:>10.4}", f, fold.len(), fold_maps[f])?;
        }
        writeln!(w)?;
        writeln!(w, "mean model MAP:  {mean_map:.4}")?;
        writeln!(w, "baseline  MAP:   {baseline_map:.4}")?;
        Ok(())
    })?;

    let ap_path = cfg.out.join(AP_PER_QUERY);
    write_artifact(&ap_path, |w| {
        writeln!(w, "query\tbaseline_ap\tmodel_ap")?;
        for (q, base) in &baseline_ap {
            let model = model_ap.get(q).copied().unwrap_or(0.0);
            writeln!(w, "{q}\t{base}\t{model}")?;
        }
        Ok(())
    })?;

    // Input/output similarity over relevant pairs, each fold scored by its
    // own model.
    let mut total_pairs = 0usize;
    let mut input_sum = 0.0;
    let mut output_sum = 0.0;
    let mut fold_reports = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let ckpt_path = require_artifact(&cfg.out, &checkpoint_name(f), "train")?;
        let (params, _) = read_checkpoint(reader(&ckpt_path)?, &source_name(&ckpt_path))?;
        let pairs: Vec<(String, String)> = fold
            .iter()
            .flat_map(|q| {
                qrels
                    .relevant_docs(q)
                    .into_iter()
                    .map(move |d| (q.clone(), d))
            })
            .collect();
        if pairs.is_empty() {
            log::warn!("fold {f} has no relevant pairs; skipped in the similarity report");
            continue;
        }
        let report = io_similarity_report(&params, &pairs, &store)?;
        total_pairs += report.pair_count;
        input_sum += report.mean_input * report.pair_count as f64;
        output_sum += report.mean_output * report.pair_count as f64;
        fold_reports.push((f, report));
    }
    let io_path = cfg.out.join(IO_REPORT);
    write_artifact(&io_path, |w| {
        for (f, report) in &fold_reports {
            writeln!(w, "fold {f}:")?;
            report.write_text(&mut *w)?;
            writeln!(w)?;
        }
        if total_pairs > 0 {
            let mean_input = input_sum / total_pairs as f64;
            let mean_output = output_sum / total_pairs as f64;
            let combined = dsrim::analysis::IoSimilarityReport {
                pair_count: total_pairs,
                mean_input,
                mean_output,
                improvement_pct: dsrim::analysis::improvement_pct(mean_input, mean_output),
            };
            writeln!(w, "all folds combined:")?;
            combined.write_text(&mut *w)?;
        }
        Ok(())
    })?;

    let mut m = Manifest::new("evaluate", cfg);
    m.input(RUN_DSRIM, &run_path)?;
    m.input(RUN_BM25, &bm25_path)?;
    m.input(FOLDS, &folds_path)?;
    m.input(VECTORS, &vectors_path)?;
    m.input("qrels", &cfg.qrels)?;
    m.output(MAP_REPORT, &map_path)?;
    m.output(AP_PER_QUERY, &ap_path)?;
    m.output(IO_REPORT, &io_path)?;
    m.write(&cfg.out)
}

/// The pivotal-document separation analysis: the configured referential
/// against the frequency-only baseline.
pub fn cmd_analyze_repr(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let mut graph = load_graph_artifact(cfg)?;
    let ref_path = require_artifact(&cfg.out, REFERENTIAL, "build-referential")?;
    let referential = read_referential(reader(&ref_path)?, &source_name(&ref_path))?;
    let obj_path = require_artifact(&cfg.out, OBJECT_VECTORS, "build-referential")?;
    let object_vectors = EmbeddingTable::load(reader(&obj_path)?, &source_name(&obj_path))?;
    let corpus = load_corpus_annotated(cfg, &mut graph)?;
    let df = Corpus::df_map(&graph);
    let objects: Vec<String> = graph.ids().map(String::from).collect();

    let primary_label = if referential.strategy == ReprStrategy::TopConcepts {
        "top_concepts".to_string()
    } else {
        format!("clustering/{}", referential.strategy)
    };
    let mut builders = vec![LabeledReferential {
        label: primary_label,
        referential: &referential,
    }];
    let baseline;
    if referential.strategy != ReprStrategy::TopConcepts {
        baseline = top_concepts_referential(&objects, &object_vectors, &df, cfg.k)?;
        builders.push(LabeledReferential {
            label: "top_concepts".into(),
            referential: &baseline,
        });
    }

    // Warm the relatedness cache with every annotated object and every
    // representative: all Corley and x^KR queries hit a warmed endpoint.
    let mut sources: Vec<&str> = corpus
        .annotations
        .values()
        .flatten()
        .map(String::as_str)
        .collect();
    for b in &builders {
        sources.extend(
            b.referential
                .clusters
                .iter()
                .map(|c| c.representative.as_str()),
        );
    }
    sources.sort_unstable();
    sources.dedup();
    let cache = LeacockCache::warm(&graph, sources)?;

    let report = pivotal_experiment(
        &builders,
        &corpus,
        &cache,
        &object_vectors,
        cfg.n_pivots,
        cfg.neighborhood,
        cfg.seed.wrapping_add(SEED_PIVOTS),
    )?;
    for row in &report.rows {
        log::info!(
            "separation {}: top {:.4} less {:.4} diff {:.4}",
            row.label,
            row.top_mean,
            row.less_mean,
            row.diff
        );
    }

    let tsv_path = cfg.out.join(SEPARATION_TSV);
    write_artifact(&tsv_path, |w| report.write_tsv(w))?;
    let txt_path = cfg.out.join(SEPARATION_TXT);
    write_artifact(&txt_path, |w| report.write_table(w))?;

    let mut m = Manifest::new("analyze-repr", cfg);
    m.input(GRAPH, &cfg.out.join(GRAPH))?;
    m.input(REFERENTIAL, &ref_path)?;
    m.input(OBJECT_VECTORS, &obj_path)?;
    corpus_inputs(&mut m, cfg)?;
    m.input("annotations", &cfg.annotations)?;
    m.output(SEPARATION_TSV, &tsv_path)?;
    m.output(SEPARATION_TXT, &txt_path)?;
    m.write(&cfg.out)
}

/// Classify query difficulty from the baseline run's per-query AP and
/// report per-class statistics and model-vs-baseline change.
pub fn cmd_difficulty(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let run_path = require_artifact(&cfg.out, RUN_DSRIM, "train")?;
    let bm25_path = require_artifact(&cfg.out, RUN_BM25, "train")?;
    let run = RunRanking::read_trec(reader(&run_path)?, &source_name(&run_path))?;
    let baseline_run = RunRanking::read_trec(reader(&bm25_path)?, &source_name(&bm25_path))?;
    let qrels = load_qrels(cfg)?;
    let mut graph = KnowledgeGraph::read_cache(
        reader(&require_artifact(&cfg.out, GRAPH, "build-graph")?)?,
        GRAPH,
    )?;
    let corpus = load_corpus_annotated(cfg, &mut graph)?;

    let baseline_ap = per_query_ap(&baseline_run, &qrels);
    let model_ap = per_query_ap(&run, &qrels);
    let report = classify_query_difficulty(
        &baseline_ap,
        &model_ap,
        &corpus,
        cfg.seed.wrapping_add(SEED_DIFFICULTY),
    )?;

    let tsv_path = cfg.out.join(DIFFICULTY_TSV);
    write_artifact(&tsv_path, |w| report.write_tsv(w))?;
    let txt_path = cfg.out.join(DIFFICULTY_TXT);
    write_artifact(&txt_path, |w| report.write_table(w))?;

    let mut m = Manifest::new("difficulty", cfg);
    m.input(RUN_DSRIM, &run_path)?;
    m.input(RUN_BM25, &bm25_path)?;
    m.input("qrels", &cfg.qrels)?;
    corpus_inputs(&mut m, cfg)?;
    m.input("annotations", &cfg.annotations)?;
    m.output(DIFFICULTY_TSV, &tsv_path)?;
    m.output(DIFFICULTY_TXT, &txt_path)?;
    m.write(&cfg.out)
}

/// Scale knobs of the bundled fixture generator.
#[derive(Debug, Clone, clap::Args)]
pub struct GenFixtureArgs {
    /// Directory receiving the fixture files and a ready-to-run config.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub docs_per_topic: Option<usize>,
    #[arg(long)]
    pub queries_per_topic: Option<usize>,
}

/// Generate the synthetic corpus fixture plus a desk-scale config file
/// pointing at it.
pub fn cmd_gen_fixture(args: &GenFixtureArgs) -> Result<()> {
    let mut synth = SynthConfig {
        seed: args.seed,
        ..SynthConfig::default()
    };
    if let Some(t) = args.topics {
        synth.topics = t;
    }
    if let Some(d) = args.docs_per_topic {
        synth.docs_per_topic = d;
    }
    if let Some(q) = args.queries_per_topic {
        synth.queries_per_topic = q;
    }
    let fixture = generate(&synth)?;
    fixture.write_to_dir(&args.out)?;

    let config_text = format!(
        "# Generated fixture configuration (desk scale)\n\
         nodes = nodes.tsv\n\
         edges = edges.tsv\n\
         documents = documents.jsonl\n\
         queries = queries.jsonl\n\
         annotations = annotations.tsv\n\
         qrels = qrels.txt\n\
         out = out\n\
         relation = IS-A\n\
         k = 12\n\
         strategy = centroid\n\
         dims = 32\n\
         pv_epochs = 12\n\
         epochs = 50\n\
         learning_rate = 0.001\n\
         seed = {}\n",
        args.seed
    );
    fs::write(args.out.join(FIXTURE_CONFIG), config_text)
        .with_context(|| format!("cannot write {}", args.out.join(FIXTURE_CONFIG).display()))?;
    log::info!(
        "fixture: {} topics, {} documents, {} queries at {}",
        synth.topics,
        synth.topics * synth.docs_per_topic,
        synth.topics * synth.queries_per_topic,
        args.out.display()
    );
    Ok(())
}
