//! Representation-quality experiments: the pivotal-document separation
//! analysis (Corley-measure neighbor selection, Top/Less cosine means per
//! representation) and the input/output similarity comparison of a trained
//! model.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use crate::corpus::{Corpus, VectorStore};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kgraph::LeacockCache;
use crate::net::SiameseParams;
use crate::relmap::{Referential, ReprStrategy, build_kr_vector};
use crate::vecmath::cosine;

/// idf(o) = ln(N/df(o)) over the annotated texts; objects never annotated
/// (df = 0) are omitted and weigh zero wherever the map is consulted.
pub fn idf_map(df: &BTreeMap<String, u64>, n_texts: usize) -> BTreeMap<String, f64> {
    df.iter()
        .filter(|&(_, &count)| count > 0)
        .map(|(o, &count)| (o.clone(), (n_texts as f64 / count as f64).ln()))
        .collect()
}

/// Corley-style text-to-text similarity over annotated objects: each object
/// of one list greedily matches its best partner in the other under
/// Leacock relatedness normalized by the graph maximum ln(2·max_depth);
/// matches are idf-weighted and averaged, and the two directions are
/// averaged for symmetry. Values lie in [0, 1]. When every idf weight is
/// zero the direction falls back to the unweighted mean.
pub fn corley_sim(
    objs_a: &[String],
    objs_b: &[String],
    leacock: &LeacockCache<'_>,
    idf: &BTreeMap<String, f64>,
) -> Result<f64> {
    if objs_a.is_empty() || objs_b.is_empty() {
        return Err(Error::Config(
            "corley similarity needs two non-empty object lists".into(),
        ));
    }
    let max_sim = leacock.graph().max_leacock();
    let directional = |from: &[String], to: &[String]| -> Result<f64> {
        let mut weighted = 0.0;
        let mut weight_sum = 0.0;
        let mut plain = 0.0;
        for obj in from {
            let mut best = 0.0f64;
            for other in to {
                best = best.max(leacock.sim(obj, other)? / max_sim);
            }
            let w = idf.get(obj).copied().unwrap_or(0.0);
            weighted += w * best;
            weight_sum += w;
            plain += best;
        }
        Ok(if weight_sum > 0.0 {
            weighted / weight_sum
        } else {
            plain / from.len() as f64
        })
    };
    Ok((directional(objs_a, objs_b)? + directional(objs_b, objs_a)?) / 2.0)
}

/// One referential entered into the separation analysis, tagged with the
/// label used in the report rows.
pub struct LabeledReferential<'a> {
    pub label: String,
    pub referential: &'a Referential,
}

/// Table-2-shaped row: mean cosine of the pivot's x^KR against its most
/// similar neighbors (`top_mean`), against its least similar neighbors
/// (`less_mean`), and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationRow {
    pub label: String,
    pub k: usize,
    pub strategy: ReprStrategy,
    pub top_mean: f64,
    pub less_mean: f64,
    pub diff: f64,
}

#[derive(Debug, Clone)]
pub struct SeparationReport {
    pub rows: Vec<SeparationRow>,
    pub pivot_count: usize,
    pub neighborhood: usize,
    pub seed: u64,
}

/// The pivotal-document experiment: sample `n_pivots` annotated
/// documents, rank every other annotated document by [`corley_sim`]
/// (descending, ties by ascending doc id), keep the `neighborhood` most and
/// least similar, and report for each representation the mean cosine of the
/// pivot's x^KR against both groups, averaged over pivots.
///
/// Documents with an empty object set are excluded throughout — their x^KR
/// is the zero vector and their Corley similarity is undefined. Requires
/// more than 2·neighborhood + 1 annotated documents; `n_pivots` larger than
/// the available pool is capped with a warning. Deterministic per seed.
pub fn pivotal_experiment(
    builders: &[LabeledReferential<'_>],
    corpus: &Corpus,
    leacock: &LeacockCache<'_>,
    obj_vectors: &EmbeddingTable,
    n_pivots: usize,
    neighborhood: usize,
    seed: u64,
) -> Result<SeparationReport> {
    if builders.is_empty() {
        return Err(Error::Config("no representation builders given".into()));
    }
    if neighborhood == 0 {
        return Err(Error::Config("neighborhood must be >= 1".into()));
    }
    let candidates: Vec<&String> = corpus
        .documents
        .keys()
        .filter(|d| !corpus.objects_of(d).is_empty())
        .collect();
    if candidates.len() <= 2 * neighborhood + 1 {
        return Err(Error::Config(format!(
            "pivotal experiment needs more than {} annotated documents, got {}",
            2 * neighborhood + 1,
            candidates.len()
        )));
    }

    let n_annotated = corpus
        .annotations
        .values()
        .filter(|objs| !objs.is_empty())
        .count();
    let df = Corpus::df_map(leacock.graph());
    let idf = idf_map(&df, n_annotated.max(1));

    let mut pivots: Vec<&String> = candidates.clone();
    pivots.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    if n_pivots < pivots.len() {
        pivots.truncate(n_pivots);
    } else if n_pivots > pivots.len() {
        log::warn!(
            "requested {n_pivots} pivots but only {} annotated documents; using all",
            pivots.len()
        );
    }

    // x^KR per (builder, document), computed once.
    let mut kr_cache: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let mut kr_of = |b: usize, doc: &str| -> Result<Vec<f64>> {
        if let Some(v) = kr_cache.get(&(b, doc.to_string())) {
            return Ok(v.clone());
        }
        let kr = build_kr_vector(
            corpus.objects_of(doc),
            builders[b].referential,
            leacock,
            obj_vectors,
            corpus.avg_no,
        )?;
        kr_cache.insert((b, doc.to_string()), kr.values.clone());
        Ok(kr.values)
    };

    let mut top_sums = vec![0.0; builders.len()];
    let mut less_sums = vec![0.0; builders.len()];
    for pivot in &pivots {
        let pivot_objs = corpus.objects_of(pivot);
        let mut ranked: Vec<(&String, f64)> = Vec::with_capacity(candidates.len() - 1);
        for doc in &candidates {
            if doc == pivot {
                continue;
            }
            ranked.push((
                doc,
                corley_sim(pivot_objs, corpus.objects_of(doc), leacock, &idf)?,
            ));
        }
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        let top: Vec<&String> = ranked[..neighborhood].iter().map(|(d, _)| *d).collect();
        let less: Vec<&String> = ranked[ranked.len() - neighborhood..]
            .iter()
            .map(|(d, _)| *d)
            .collect();

        for b in 0..builders.len() {
            let pivot_kr = kr_of(b, pivot.as_str())?;
            let mut mean_of = |group: &[&String]| -> Result<f64> {
                let mut sum = 0.0;
                for doc in group {
                    sum += cosine(&pivot_kr, &kr_of(b, doc.as_str())?)?;
                }
                Ok(sum / group.len() as f64)
            };
            top_sums[b] += mean_of(&top)?;
            less_sums[b] += mean_of(&less)?;
        }
    }

    let pivot_count = pivots.len();
    let rows = builders
        .iter()
        .enumerate()
        .map(|(b, lb)| {
            let top_mean = top_sums[b] / pivot_count as f64;
            let less_mean = less_sums[b] / pivot_count as f64;
            SeparationRow {
                label: lb.label.clone(),
                k: lb.referential.k,
                strategy: lb.referential.strategy,
                top_mean,
                less_mean,
                diff: top_mean - less_mean,
            }
        })
        .collect();
    Ok(SeparationReport {
        rows,
        pivot_count,
        neighborhood,
        seed,
    })
}

impl SeparationReport {
    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "# pivots={} neighborhood={} seed={}",
            self.pivot_count, self.neighborhood, self.seed
        )?;
        writeln!(w, "# LDA comparison row omitted: no LDA implementation")?;
        writeln!(w, "label\tk\tstrategy\ttop_mean\tless_mean\tdiff")?;
        for row in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                row.label, row.k, row.strategy, row.top_mean, row.less_mean, row.diff
            )?;
        }
        Ok(())
    }

    /// Aligned plain-text table mirroring the Top/Less/diff column layout.
    pub fn write_table(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "Pivotal-document separation ({} pivots, neighborhood {}, seed {})",
            self.pivot_count, self.neighborhood, self.seed
        )?;
        writeln!(w, "LDA comparison row omitted: no LDA implementation")?;
        writeln!(
            w,
            "{:<28} {:>5} {:<12} {:>10} {:>10} {:>10}",
            "Representation", "k", "Strategy", "Top", "Less", "Diff"
        )?;
        for row in &self.rows {
            writeln!(
                w,
                "{:<28} {:>5} {:<12} {:>10.4} {:>10.4} {:>10.4}",
                row.label,
                row.k,
                row.strategy.to_string(),
                row.top_mean,
                row.less_mean,
                row.diff
            )?;
        }
        Ok(())
    }
}

/// Mean cosine of relevant (query, document) pairs at the network input vs.
/// in the learned latent space, with the relative change in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct IoSimilarityReport {
    pub pair_count: usize,
    pub mean_input: f64,
    pub mean_output: f64,
    /// 100·(output − input)/|input|; absent when the input mean is 0.
    pub improvement_pct: Option<f64>,
}

/// 100·(output − input)/|input|, the relative-improvement formula of the
/// input/output comparison.
pub fn improvement_pct(mean_input: f64, mean_output: f64) -> Option<f64> {
    (mean_input != 0.0).then(|| 100.0 * (mean_output - mean_input) / mean_input.abs())
}

/// Compare raw input similarity against latent similarity over relevant
/// (query, document) pairs. Pairs missing a stored vector are skipped with
/// a warning; at least one usable pair is required.
pub fn io_similarity_report(
    params: &SiameseParams,
    pairs: &[(String, String)],
    store: &VectorStore,
) -> Result<IoSimilarityReport> {
    if pairs.is_empty() {
        return Err(Error::Config(
            "input/output comparison needs at least one relevant pair".into(),
        ));
    }
    let mut input_sum = 0.0;
    let mut output_sum = 0.0;
    let mut used = 0usize;
    for (query, doc) in pairs {
        let Some(q) = store.query(query) else {
            log::warn!("query `{query}` has no stored vector; pair skipped");
            continue;
        };
        let Some(d) = store.doc(doc) else {
            log::warn!("document `{doc}` has no stored vector; pair skipped");
            continue;
        };
        input_sum += cosine(&q.data, &d.data)?;
        output_sum += cosine(&params.forward(&q.data)?, &params.forward(&d.data)?)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Config(
            "no relevant pair had stored vectors for both sides".into(),
        ));
    }
    let mean_input = input_sum / used as f64;
    let mean_output = output_sum / used as f64;
    Ok(IoSimilarityReport {
        pair_count: used,
        mean_input,
        mean_output,
        improvement_pct: improvement_pct(mean_input, mean_output),
    })
}

impl IoSimilarityReport {
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "relevant pairs:     {}", self.pair_count)?;
        writeln!(w, "mean input cosine:  {:.6}", self.mean_input)?;
        writeln!(w, "mean output cosine: {:.6}", self.mean_output)?;
        match self.improvement_pct {
            Some(pct) => writeln!(w, "improvement:        {pct:+.2}%")?,
            None => writeln!(w, "improvement:        n/a (zero input similarity)")?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::InputVector;
    use crate::kgraph::KnowledgeGraph;
    use std::io::Cursor;

    fn graph_from(nodes: &str, edges: &str) -> KnowledgeGraph {
        KnowledgeGraph::load(
            Cursor::new(nodes.to_string()),
            "nodes",
            Cursor::new(edges.to_string()),
            "edges",
            "IS-A",
        )
        .unwrap()
    }

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn uniform_idf(names: &[&str], value: f64) -> BTreeMap<String, f64> {
        names.iter().map(|s| (s.to_string(), value)).collect()
    }

    #[test]
    fn identical_lists_score_one() {
        let g = graph_from("r\tr\na\ta\nb\tb\n", "a\tr\tIS-A\nb\ta\tIS-A\n");
        let cache = LeacockCache::cold(&g);
        let idf = uniform_idf(&["a", "b"], 1.3);
        let sim = corley_sim(&ids(&["a", "b"]), &ids(&["a", "b"]), &cache, &idf).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_sets_score_zero() {
        let g = graph_from(
            "r1\tr1\nc1\tc1\nr2\tr2\nc2\tc2\n",
            "c1\tr1\tIS-A\nc2\tr2\tIS-A\n",
        );
        let cache = LeacockCache::cold(&g);
        let idf = uniform_idf(&["c1", "c2"], 1.0);
        let sim = corley_sim(&ids(&["c1"]), &ids(&["c2"]), &cache, &idf).unwrap();
        assert_eq!(sim, 0.0);
    }

    #[test]
    fn single_pair_half_relatedness_scores_half() {
        // Depth 2 → max = ln 4; adjacent nodes → ln 2; normalized 0.5.
        let g = graph_from("r\tr\nc\tc\n", "c\tr\tIS-A\n");
        let cache = LeacockCache::cold(&g);
        for idf_value in [0.25, 1.0, 7.0] {
            let idf = uniform_idf(&["r", "c"], idf_value);
            let sim = corley_sim(&ids(&["r"]), &ids(&["c"]), &cache, &idf).unwrap();
            assert!((sim - 0.5).abs() < 1e-12, "idf {idf_value}: {sim}");
        }
    }

    #[test]
    fn corley_is_symmetric_and_bounded() {
        let g = graph_from(
            "r\tr\na\ta\nb\tb\nc\tc\nd\td\n",
            "a\tr\tIS-A\nb\ta\tIS-A\nc\ta\tIS-A\nd\tr\tIS-A\n",
        );
        let cache = LeacockCache::cold(&g);
        let idf: BTreeMap<String, f64> = [("a", 0.2), ("b", 1.0), ("c", 2.0), ("d", 0.5)]
            .map(|(k, v)| (k.to_string(), v))
            .into();
        let lists = [ids(&["a", "b"]), ids(&["c"]), ids(&["d", "b", "a"])];
        for x in &lists {
            for y in &lists {
                let xy = corley_sim(x, y, &cache, &idf).unwrap();
                let yx = corley_sim(y, x, &cache, &idf).unwrap();
                assert_eq!(xy, yx);
                assert!((0.0..=1.0).contains(&xy));
            }
        }
    }

    #[test]
    fn zero_idf_weights_fall_back_to_plain_mean() {
        let g = graph_from("r\tr\nc\tc\n", "c\tr\tIS-A\n");
        let cache = LeacockCache::cold(&g);
        let sim = corley_sim(&ids(&["r"]), &ids(&["c"]), &cache, &BTreeMap::new()).unwrap();
        assert!((sim - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_list_is_an_error() {
        let g = graph_from("r\tr\n", "");
        let cache = LeacockCache::cold(&g);
        let idf = BTreeMap::new();
        assert!(corley_sim(&[], &ids(&["r"]), &cache, &idf).is_err());
        assert!(corley_sim(&ids(&["r"]), &[], &cache, &idf).is_err());
    }

    #[test]
    fn improvement_formula_hand_check() {
        let pct = improvement_pct(0.2, 0.6).unwrap();
        assert!((pct - 200.0).abs() < 1e-12);
        assert_eq!(improvement_pct(0.0, 0.6), None);
        let negative_base = improvement_pct(-0.2, 0.2).unwrap();
        assert!((negative_base - 200.0).abs() < 1e-12);
    }

    /// Two disconnected topic subtrees; six documents annotated per topic.
    fn two_topic_fixture() -> (KnowledgeGraph, Corpus, EmbeddingTable) {
        let mut nodes = String::new();
        let mut edges = String::new();
        for t in ["a", "b"] {
            nodes.push_str(&format!("root_{t}\troot {t}\n"));
            for i in 0..3 {
                nodes.push_str(&format!("{t}{i}\tobject {t}{i}\n"));
                edges.push_str(&format!("{t}{i}\troot_{t}\tIS-A\n"));
            }
        }
        let mut graph = graph_from(&nodes, &edges);

        let mut docs_jsonl = String::new();
        let mut annotations = String::new();
        for (ti, t) in ["a", "b"].iter().enumerate() {
            for d in 0..6 {
                let id = format!("d{}", ti * 6 + d);
                docs_jsonl.push_str(&format!("{{\"id\": \"{id}\", \"text\": \"text {id}\"}}\n"));
                annotations.push_str(&format!("{id}\t{t}{}\n", d % 3));
                annotations.push_str(&format!("{id}\t{t}{}\n", (d + 1) % 3));
            }
        }
        let mut corpus = Corpus::load(
            Cursor::new(docs_jsonl),
            "docs",
            Cursor::new("{\"id\": \"q\", \"text\": \"q\"}\n".to_string()),
            "queries",
        )
        .unwrap();
        corpus
            .load_annotations(Cursor::new(annotations), "annot", &mut graph, false)
            .unwrap();

        let mut vectors = EmbeddingTable::new(2);
        for t in ["a", "b"] {
            let base = if t == "a" { [1.0, 0.1] } else { [0.1, 1.0] };
            vectors.insert(format!("root_{t}"), base.to_vec()).unwrap();
            for i in 0..3 {
                let v = [base[0] + 0.05 * i as f64, base[1] + 0.03 * i as f64];
                vectors.insert(format!("{t}{i}"), v.to_vec()).unwrap();
            }
        }
        (graph, corpus, vectors)
    }

    #[test]
    fn two_topic_corpus_separates_with_positive_diff() {
        let (graph, corpus, vectors) = two_topic_fixture();
        let cache = LeacockCache::cold(&graph);
        let objects: Vec<String> = graph.ids().map(String::from).collect();
        let df = Corpus::df_map(&graph);
        let referential =
            crate::relmap::build_referential(&objects, &vectors, 2, ReprStrategy::Centroid, &df, 9)
                .unwrap();
        let builders = [LabeledReferential {
            label: "clustering".into(),
            referential: &referential,
        }];
        let report = pivotal_experiment(&builders, &corpus, &cache, &vectors, 6, 2, 11).unwrap();
        assert_eq!(report.pivot_count, 6);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert!(
            row.diff > 0.0,
            "expected positive separation, got {} - {}",
            row.top_mean,
            row.less_mean
        );
        assert_eq!(row.diff, row.top_mean - row.less_mean);
        assert_eq!(row.k, 2);
    }

    #[test]
    fn pivot_oversampling_caps_and_experiment_is_deterministic() {
        let (graph, corpus, vectors) = two_topic_fixture();
        let cache = LeacockCache::cold(&graph);
        let objects: Vec<String> = graph.ids().map(String::from).collect();
        let df = Corpus::df_map(&graph);
        let referential =
            crate::relmap::build_referential(&objects, &vectors, 2, ReprStrategy::IdfMin, &df, 9)
                .unwrap();
        let builders = [LabeledReferential {
            label: "clustering".into(),
            referential: &referential,
        }];
        let a = pivotal_experiment(&builders, &corpus, &cache, &vectors, 100, 2, 3).unwrap();
        assert_eq!(a.pivot_count, 12);
        let b = pivotal_experiment(&builders, &corpus, &cache, &vectors, 100, 2, 3).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn too_few_annotated_documents_error() {
        let (graph, corpus, vectors) = two_topic_fixture();
        let cache = LeacockCache::cold(&graph);
        let objects: Vec<String> = graph.ids().map(String::from).collect();
        let df = Corpus::df_map(&graph);
        let referential =
            crate::relmap::build_referential(&objects, &vectors, 2, ReprStrategy::Centroid, &df, 9)
                .unwrap();
        let builders = [LabeledReferential {
            label: "clustering".into(),
            referential: &referential,
        }];
        // 12 annotated docs; neighborhood 6 needs more than 13.
        let err = pivotal_experiment(&builders, &corpus, &cache, &vectors, 5, 6, 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn separation_report_renders_with_lda_note() {
        let (graph, corpus, vectors) = two_topic_fixture();
        let cache = LeacockCache::cold(&graph);
        let objects: Vec<String> = graph.ids().map(String::from).collect();
        let df = Corpus::df_map(&graph);
        let referential =
            crate::relmap::build_referential(&objects, &vectors, 2, ReprStrategy::Centroid, &df, 9)
                .unwrap();
        let builders = [LabeledReferential {
            label: "clustering".into(),
            referential: &referential,
        }];
        let report = pivotal_experiment(&builders, &corpus, &cache, &vectors, 4, 2, 5).unwrap();
        let mut tsv = Vec::new();
        report.write_tsv(&mut tsv).unwrap();
        let tsv = String::from_utf8(tsv).unwrap();
        assert!(tsv.contains("LDA comparison row omitted"));
        assert!(tsv.contains("label\tk\tstrategy\ttop_mean\tless_mean\tdiff"));
        let mut table = Vec::new();
        report.write_table(&mut table).unwrap();
        let table = String::from_utf8(table).unwrap();
        assert!(table.contains("Diff"));
    }

    fn io_store() -> VectorStore {
        let mut store = VectorStore::new(3, 0);
        store
            .insert_query("q1", InputVector::from_parts(&[1.0, 0.2, 0.1], &[]))
            .unwrap();
        store
            .insert_doc("d1", InputVector::from_parts(&[0.9, 0.3, 0.2], &[]))
            .unwrap();
        store
            .insert_doc("d2", InputVector::from_parts(&[0.1, 0.9, 0.4], &[]))
            .unwrap();
        store
    }

    #[test]
    fn io_report_has_finite_numbers_for_a_random_init() {
        let store = io_store();
        let params = SiameseParams::init_params(3, 7).unwrap();
        let pairs = vec![
            ("q1".to_string(), "d1".to_string()),
            ("q1".to_string(), "d2".to_string()),
        ];
        let report = io_similarity_report(&params, &pairs, &store).unwrap();
        assert_eq!(report.pair_count, 2);
        assert!(report.mean_input.is_finite());
        assert!(report.mean_output.is_finite());
        let recount = (cosine(&[1.0, 0.2, 0.1], &[0.9, 0.3, 0.2]).unwrap()
            + cosine(&[1.0, 0.2, 0.1], &[0.1, 0.9, 0.4]).unwrap())
            / 2.0;
        assert!((report.mean_input - recount).abs() < 1e-12);
        let mut text = Vec::new();
        report.write_text(&mut text).unwrap();
        assert!(
            String::from_utf8(text)
                .unwrap()
                .contains("mean input cosine")
        );
    }

    #[test]
    fn io_report_skips_missing_vectors_and_errors_when_none_usable() {
        let store = io_store();
        let params = SiameseParams::init_params(3, 7).unwrap();
        let pairs = vec![
            ("q1".to_string(), "d1".to_string()),
            ("q1".to_string(), "ghost".to_string()),
        ];
        let report = io_similarity_report(&params, &pairs, &store).unwrap();
        assert_eq!(report.pair_count, 1);
        let unusable = vec![("nope".to_string(), "d1".to_string())];
        assert!(io_similarity_report(&params, &unusable, &store).is_err());
        assert!(io_similarity_report(&params, &[], &store).is_err());
    }
}
