//! Deterministic synthetic-corpus generator: a topic-structured knowledge
//! graph, documents/queries with topic-skewed vocabulary, object
//! annotations correlated with the topics, and graded relevance judgments.
//! The generated fixture exercises the whole pipeline at desk scale —
//! relevance correlates with shared topical clusters, and a set of
//! broadly-annotated common objects keeps the frequency-only baseline
//! non-discriminative.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub queries_per_topic: usize,
    /// Objects per topic subtree, including the topic root.
    pub objects_per_topic: usize,
    /// Objects under the shared `common` subtree, annotated across topics.
    pub common_objects: usize,
    /// Distinct word types per topic vocabulary.
    pub topic_words: usize,
    /// Distinct word types shared by all topics.
    pub common_words: usize,
    /// Tokens per document.
    pub doc_len: usize,
    /// Topic tokens per query (one common token is appended).
    pub query_len: usize,
    /// Topic objects annotated per document (two common objects are added).
    pub objects_per_doc: usize,
    pub relevant_per_query: usize,
    pub judged_negatives_per_query: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // ≈ 300 documents, 30 queries, ≈ 400 graph objects.
        SynthConfig {
            topics: 6,
            docs_per_topic: 50,
            queries_per_topic: 5,
            objects_per_topic: 60,
            common_objects: 30,
            topic_words: 40,
            // Small shared vocabulary: almost every document contains a
            // query's common token, so first-stage candidate pools span
            // most of the corpus.
            common_words: 8,
            doc_len: 30,
            query_len: 4,
            objects_per_doc: 5,
            relevant_per_query: 12,
            judged_negatives_per_query: 10,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 10] = [
            ("topics must be >= 2", self.topics >= 2),
            ("docs_per_topic must be >= 1", self.docs_per_topic >= 1),
            (
                "queries_per_topic must be >= 1",
                self.queries_per_topic >= 1,
            ),
            (
                "objects_per_topic must be >= 2",
                self.objects_per_topic >= 2,
            ),
            ("common_objects must be >= 2", self.common_objects >= 2),
            ("topic_words must be >= 2", self.topic_words >= 2),
            ("common_words must be >= 1", self.common_words >= 1),
            ("doc_len must be >= 2", self.doc_len >= 2),
            (
                "objects_per_doc must fit the topic subtree",
                self.objects_per_doc >= 1 && self.objects_per_doc < self.objects_per_topic,
            ),
            (
                "relevant_per_query must fit docs_per_topic",
                self.relevant_per_query >= 1 && self.relevant_per_query <= self.docs_per_topic,
            ),
        ];
        for (msg, ok) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        if self.query_len < 1 {
            return Err(Error::Config("query_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// The generated corpus as ready-to-write file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFixture {
    pub nodes_tsv: String,
    pub edges_tsv: String,
    pub documents_jsonl: String,
    pub queries_jsonl: String,
    pub annotations_tsv: String,
    pub qrels: String,
}

impl SynthFixture {
    /// Write the six fixture files under `dir` with fixed names.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, content) in [
            ("nodes.tsv", &self.nodes_tsv),
            ("edges.tsv", &self.edges_tsv),
            ("documents.jsonl", &self.documents_jsonl),
            ("queries.jsonl", &self.queries_jsonl),
            ("annotations.tsv", &self.annotations_tsv),
            ("qrels.txt", &self.qrels),
        ] {
            fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

fn pick<'a, T>(pool: &'a [T], rng: &mut ChaCha20Rng) -> &'a T {
    &pool[rng.random_range(0..pool.len())]
}

fn sample_without_replacement<T: Clone>(pool: &[T], n: usize, rng: &mut ChaCha20Rng) -> Vec<T> {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(rng);
    indices.truncate(n.min(pool.len()));
    indices.into_iter().map(|i| pool[i].clone()).collect()
}

/// Generate the fixture. Deterministic: equal configs yield byte-identical
/// strings.
pub fn generate(cfg: &SynthConfig) -> Result<SynthFixture> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    let topic_vocab: Vec<Vec<String>> = (0..cfg.topics)
        .map(|t| (0..cfg.topic_words).map(|w| format!("t{t}w{w}")).collect())
        .collect();
    let common_vocab: Vec<String> = (0..cfg.common_words).map(|w| format!("cw{w}")).collect();

    // ----- knowledge graph: one random tree per topic + a common subtree.
    let mut nodes_tsv = String::from("# id\tlabel\n");
    let mut edges_tsv = String::from("# child\tparent\trelation\n");
    let mut topic_objects: Vec<Vec<String>> = Vec::with_capacity(cfg.topics);
    let label_of = |vocab: &[String], rng: &mut ChaCha20Rng| -> String {
        format!("{} {}", pick(vocab, rng), pick(vocab, rng))
    };
    for (t, vocab) in topic_vocab.iter().enumerate() {
        let root = format!("t{t}root");
        let mut members = vec![root.clone()];
        writeln!(nodes_tsv, "{root}\t{}", label_of(vocab, &mut rng)).unwrap();
        for i in 1..cfg.objects_per_topic {
            let id = format!("t{t}o{i}");
            let parent = pick(&members, &mut rng).clone();
            writeln!(nodes_tsv, "{id}\t{}", label_of(vocab, &mut rng)).unwrap();
            writeln!(edges_tsv, "{id}\t{parent}\tIS-A").unwrap();
            members.push(id);
        }
        topic_objects.push(members);
    }
    // Common objects sit flat under one shared root: every text can reach
    // them in two hops, so they separate no topic from another.
    let mut common_objects = Vec::with_capacity(cfg.common_objects);
    writeln!(nodes_tsv, "croot\t{}", label_of(&common_vocab, &mut rng)).unwrap();
    for i in 0..cfg.common_objects {
        let id = format!("co{i}");
        writeln!(nodes_tsv, "{id}\t{}", label_of(&common_vocab, &mut rng)).unwrap();
        writeln!(edges_tsv, "{id}\tcroot\tIS-A").unwrap();
        common_objects.push(id);
    }
    // Decoy edges under another relation; a loader filtering on IS-A must
    // drop them.
    for t in 0..cfg.topics {
        let a = pick(&topic_objects[t], &mut rng).clone();
        let b = pick(&topic_objects[(t + 1) % cfg.topics], &mut rng).clone();
        writeln!(edges_tsv, "{a}\t{b}\tPART-OF").unwrap();
    }

    // ----- documents and queries.
    let mut documents_jsonl = String::new();
    let mut queries_jsonl = String::new();
    let mut annotations_tsv = String::from("# text-id\tobject-id\n");
    let mut doc_ids_by_topic: Vec<Vec<String>> = vec![Vec::new(); cfg.topics];

    let annotate = |text_id: &str,
                    topic: usize,
                    n_topic: usize,
                    n_common: usize,
                    out: &mut String,
                    topic_objects: &[Vec<String>],
                    rng: &mut ChaCha20Rng| {
        let mut objs = sample_without_replacement(&topic_objects[topic], n_topic, rng);
        objs.extend(sample_without_replacement(&common_objects, n_common, rng));
        for o in objs {
            writeln!(out, "{text_id}\t{o}").unwrap();
        }
    };

    for t in 0..cfg.topics {
        for d in 0..cfg.docs_per_topic {
            let id = format!("d{:04}", t * cfg.docs_per_topic + d);
            let mut tokens = Vec::with_capacity(cfg.doc_len);
            // First token always topical so every document carries its topic.
            tokens.push(pick(&topic_vocab[t], &mut rng).clone());
            for _ in 1..cfg.doc_len {
                if rng.random::<f64>() < 0.6 {
                    tokens.push(pick(&topic_vocab[t], &mut rng).clone());
                } else {
                    tokens.push(pick(&common_vocab, &mut rng).clone());
                }
            }
            writeln!(
                documents_jsonl,
                "{{\"id\": \"{id}\", \"text\": \"{}\"}}",
                tokens.join(" ")
            )
            .unwrap();
            annotate(
                &id,
                t,
                cfg.objects_per_doc,
                2.min(cfg.common_objects),
                &mut annotations_tsv,
                &topic_objects,
                &mut rng,
            );
            doc_ids_by_topic[t].push(id);
        }
    }
    let mut query_ids_by_topic: Vec<Vec<String>> = vec![Vec::new(); cfg.topics];
    for t in 0..cfg.topics {
        for q in 0..cfg.queries_per_topic {
            let id = format!("q{:03}", t * cfg.queries_per_topic + q);
            let mut tokens: Vec<String> = (0..cfg.query_len)
                .map(|_| pick(&topic_vocab[t], &mut rng).clone())
                .collect();
            tokens.push(pick(&common_vocab, &mut rng).clone());
            writeln!(
                queries_jsonl,
                "{{\"id\": \"{id}\", \"text\": \"{}\"}}",
                tokens.join(" ")
            )
            .unwrap();
            annotate(
                &id,
                t,
                2.min(cfg.objects_per_doc),
                1,
                &mut annotations_tsv,
                &topic_objects,
                &mut rng,
            );
            query_ids_by_topic[t].push(id);
        }
    }

    // ----- graded judgments: relevant docs share the query's topic.
    let mut qrels = String::new();
    for t in 0..cfg.topics {
        for qid in &query_ids_by_topic[t] {
            let relevant =
                sample_without_replacement(&doc_ids_by_topic[t], cfg.relevant_per_query, &mut rng);
            for (i, doc) in relevant.iter().enumerate() {
                let grade = if i < 2 { 2 } else { 1 };
                writeln!(qrels, "{qid} 0 {doc} {grade}").unwrap();
            }
            let other_docs: Vec<String> = (0..cfg.topics)
                .filter(|&other| other != t)
                .flat_map(|other| doc_ids_by_topic[other].iter().cloned())
                .collect();
            for doc in
                sample_without_replacement(&other_docs, cfg.judged_negatives_per_query, &mut rng)
            {
                writeln!(qrels, "{qid} 0 {doc} 0").unwrap();
            }
        }
    }

    Ok(SynthFixture {
        nodes_tsv,
        edges_tsv,
        documents_jsonl,
        queries_jsonl,
        annotations_tsv,
        qrels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Qrels};
    use crate::kgraph::KnowledgeGraph;
    use std::io::Cursor;

    fn small_config() -> SynthConfig {
        SynthConfig {
            topics: 2,
            docs_per_topic: 6,
            queries_per_topic: 2,
            objects_per_topic: 8,
            common_objects: 4,
            topic_words: 6,
            common_words: 4,
            doc_len: 10,
            query_len: 3,
            objects_per_doc: 3,
            relevant_per_query: 3,
            judged_negatives_per_query: 4,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 8,
            ..small_config()
        };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn counts_match_the_config() {
        let cfg = small_config();
        let fx = generate(&cfg).unwrap();
        let docs = fx.documents_jsonl.lines().count();
        assert_eq!(docs, cfg.topics * cfg.docs_per_topic);
        let queries = fx.queries_jsonl.lines().count();
        assert_eq!(queries, cfg.topics * cfg.queries_per_topic);
        let nodes = fx.nodes_tsv.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(
            nodes,
            cfg.topics * cfg.objects_per_topic + cfg.common_objects + 1
        );
    }

    #[test]
    fn fixture_loads_through_the_whole_ingestion_path() {
        let cfg = small_config();
        let fx = generate(&cfg).unwrap();
        let mut graph = KnowledgeGraph::load(
            Cursor::new(fx.nodes_tsv.clone()),
            "nodes",
            Cursor::new(fx.edges_tsv.clone()),
            "edges",
            "IS-A",
        )
        .unwrap();
        // Decoy PART-OF edges must have been dropped by the filter.
        let non_comment_edges = fx.edges_tsv.lines().filter(|l| !l.starts_with('#')).count();
        assert!(graph.edges().len() < non_comment_edges);
        assert!(graph.max_depth() >= 2);

        let mut corpus = Corpus::load(
            Cursor::new(fx.documents_jsonl.clone()),
            "docs",
            Cursor::new(fx.queries_jsonl.clone()),
            "queries",
        )
        .unwrap();
        corpus
            .load_annotations(
                Cursor::new(fx.annotations_tsv.clone()),
                "annotations",
                &mut graph,
                false,
            )
            .unwrap();
        assert!(corpus.avg_no > 0.0);
        // Every document carries annotations.
        for doc in corpus.documents.keys() {
            assert!(!corpus.objects_of(doc).is_empty(), "{doc} unannotated");
        }

        let qrels = Qrels::load(Cursor::new(fx.qrels.clone()), "qrels").unwrap();
        for q in corpus.queries.keys() {
            assert!(
                qrels.relevant_count(q) >= 1,
                "query {q} lacks relevant judgments"
            );
        }
    }

    #[test]
    fn relevant_documents_share_the_query_topic() {
        let cfg = small_config();
        let fx = generate(&cfg).unwrap();
        let qrels = Qrels::load(Cursor::new(fx.qrels.clone()), "qrels").unwrap();
        // Query q000/q001 belong to topic 0 → docs d0000..d0005; q002/q003
        // to topic 1 → docs d0006..d0011.
        for q in qrels.queries() {
            let qnum: usize = q[1..].parse().unwrap();
            let topic = qnum / cfg.queries_per_topic;
            for doc in qrels.relevant_docs(&q) {
                let dnum: usize = doc[1..].parse().unwrap();
                assert_eq!(dnum / cfg.docs_per_topic, topic, "{q} vs {doc}");
            }
        }
    }

    #[test]
    fn grades_stay_within_range_and_include_both_levels() {
        let fx = generate(&small_config()).unwrap();
        let qrels = Qrels::load(Cursor::new(fx.qrels), "qrels").unwrap();
        let grades: Vec<u8> = qrels.iter().map(|(_, _, g)| g).collect();
        assert!(grades.iter().all(|&g| g <= 2));
        assert!(grades.contains(&2));
        assert!(grades.contains(&1));
        assert!(grades.contains(&0));
    }

    #[test]
    fn default_scale_matches_the_experiment_size() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.topics * cfg.docs_per_topic, 300);
        assert_eq!(cfg.topics * cfg.queries_per_topic, 30);
        let objects = cfg.topics * cfg.objects_per_topic + cfg.common_objects + 1;
        assert!((350..=450).contains(&objects), "{objects}");
    }

    #[test]
    fn write_to_dir_creates_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate(&small_config()).unwrap();
        fx.write_to_dir(dir.path()).unwrap();
        for name in [
            "nodes.tsv",
            "edges.tsv",
            "documents.jsonl",
            "queries.jsonl",
            "annotations.tsv",
            "qrels.txt",
        ] {
            assert!(dir.path().join(name).is_file(), "{name} missing");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SynthConfig {
            topics: 1,
            ..small_config()
        };
        assert!(generate(&bad).is_err());
        let bad = SynthConfig {
            relevant_per_query: 100,
            ..small_config()
        };
        assert!(generate(&bad).is_err());
    }
}
