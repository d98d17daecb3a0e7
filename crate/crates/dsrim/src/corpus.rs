//! Corpus ingestion: documents, queries, object annotations, graded
//! relevance judgments, training-instance sampling and cross-validation
//! folds, plus the concatenated input vectors fed to the network.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::embeddings::write_floats;
use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;
use crate::relmap::KrVector;
use crate::tokenize::tokenize;

/// Documents and queries as token lists, plus the object annotations of each
/// text and the collection's average annotation count.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: BTreeMap<String, Vec<String>>,
    pub queries: BTreeMap<String, Vec<String>>,
    /// text-id → annotated object ids, multiset in file order.
    pub annotations: BTreeMap<String, Vec<String>>,
    /// Mean |O(D)| over documents (annotation-free texts count 0).
    pub avg_no: f64,
}

#[derive(Deserialize)]
struct TextRecord {
    id: String,
    text: String,
}

fn load_texts(
    src: impl BufRead,
    source_name: &str,
    kind: &'static str,
) -> Result<BTreeMap<String, Vec<String>>> {
    let mut texts = BTreeMap::new();
    for (lineno, line) in src.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TextRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        if record.id.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty id"));
        }
        if texts.contains_key(&record.id) {
            return Err(Error::DuplicateId {
                kind,
                id: record.id,
            });
        }
        let tokens = tokenize(&record.text);
        if tokens.is_empty() {
            log::warn!(
                "{source_name}:{lineno}: {kind} `{}` has no tokens",
                record.id
            );
        }
        texts.insert(record.id, tokens);
    }
    Ok(texts)
}

impl Corpus {
    /// Load line-delimited `{"id": ..., "text": ...}` records for documents
    /// and queries. Annotations arrive separately via [`Corpus::load_annotations`].
    pub fn load(
        docs_src: impl BufRead,
        docs_name: &str,
        queries_src: impl BufRead,
        queries_name: &str,
    ) -> Result<Corpus> {
        let documents = load_texts(docs_src, docs_name, "document")?;
        let queries = load_texts(queries_src, queries_name, "query")?;
        if let Some(shared) = documents.keys().find(|id| queries.contains_key(*id)) {
            return Err(Error::DuplicateId {
                kind: "text",
                id: shared.clone(),
            });
        }
        Ok(Corpus {
            documents,
            queries,
            annotations: BTreeMap::new(),
            avg_no: 0.0,
        })
    }

    /// Objects annotated on a text; empty slice when the text has none.
    pub fn objects_of(&self, text_id: &str) -> &[String] {
        self.annotations
            .get(text_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Ingest `text-id<TAB>object-id` rows. Fills `annotations`, recomputes
    /// `avg_no`, and writes per-object document frequencies into the graph.
    /// Annotations of unknown texts are skipped with a warning (annotation
    /// files may cover a superset of the corpus); unknown object ids are
    /// errors, since x^KR needs every object in the graph.
    ///
    /// `include_queries_in_stats` adds query annotations to df/avg_no;
    /// default off, documents only.
    pub fn load_annotations(
        &mut self,
        src: impl BufRead,
        source_name: &str,
        graph: &mut KnowledgeGraph,
        include_queries_in_stats: bool,
    ) -> Result<()> {
        for (lineno, line) in src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!(
                        "expected `text-id<TAB>object-id`, got {} fields",
                        fields.len()
                    ),
                ));
            }
            let (text_id, object_id) = (fields[0], fields[1]);
            if !self.documents.contains_key(text_id) && !self.queries.contains_key(text_id) {
                log::warn!(
                    "{source_name}:{lineno}: annotation for unknown text `{text_id}` skipped"
                );
                continue;
            }
            if !graph.contains(object_id) {
                return Err(Error::UnknownId {
                    kind: "object",
                    id: object_id.to_string(),
                });
            }
            self.annotations
                .entry(text_id.to_string())
                .or_default()
                .push(object_id.to_string());
        }
        self.refresh_stats(graph, include_queries_in_stats)
    }

    fn refresh_stats(
        &mut self,
        graph: &mut KnowledgeGraph,
        include_queries_in_stats: bool,
    ) -> Result<()> {
        let counted: Vec<String> = if include_queries_in_stats {
            self.documents
                .keys()
                .chain(self.queries.keys())
                .cloned()
                .collect()
        } else {
            self.documents.keys().cloned().collect()
        };
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        let mut total_objects = 0usize;
        for id in &counted {
            let objs = self.objects_of(id);
            total_objects += objs.len();
            let mut distinct: Vec<String> = objs.to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            for o in distinct {
                *df.entry(o).or_insert(0) += 1;
            }
        }
        self.avg_no = if counted.is_empty() {
            0.0
        } else {
            total_objects as f64 / counted.len() as f64
        };
        let ids: Vec<String> = graph.ids().map(str::to_string).collect();
        for id in ids {
            graph.set_df(&id, df.get(&id).copied().unwrap_or(0))?;
        }
        Ok(())
    }

    /// df as a plain map, read back from the graph.
    pub fn df_map(graph: &KnowledgeGraph) -> BTreeMap<String, u64> {
        graph
            .objects()
            .iter()
            .map(|n| (n.id.clone(), n.df))
            .collect()
    }
}

/// Graded relevance judgments; grades 0..=2, one per (query, doc) pair.
#[derive(Debug, Clone, Default)]
pub struct Qrels {
    judgments: BTreeMap<(String, String), u8>,
}

impl Qrels {
    /// Parse TREC qrels rows `query-id 0 doc-id grade` (whitespace-separated;
    /// the second column is ignored).
    pub fn load(src: impl BufRead, source_name: &str) -> Result<Qrels> {
        let mut judgments = BTreeMap::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!(
                        "expected `query-id 0 doc-id grade`, got {} fields",
                        fields.len()
                    ),
                ));
            }
            let grade: u8 = fields[3]
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, "bad grade"))?;
            if grade > 2 {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("grade {grade} outside 0..=2"),
                ));
            }
            let key = (fields[0].to_string(), fields[2].to_string());
            if judgments.contains_key(&key) {
                return Err(Error::DuplicateId {
                    kind: "judgment",
                    id: format!("{} {}", key.0, key.1),
                });
            }
            judgments.insert(key, grade);
        }
        Ok(Qrels { judgments })
    }

    pub fn insert(&mut self, query: &str, doc: &str, grade: u8) -> Result<()> {
        if grade > 2 {
            return Err(Error::Config(format!("grade {grade} outside 0..=2")));
        }
        let key = (query.to_string(), doc.to_string());
        if self.judgments.contains_key(&key) {
            return Err(Error::DuplicateId {
                kind: "judgment",
                id: format!("{query} {doc}"),
            });
        }
        self.judgments.insert(key, grade);
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: &str) -> Option<u8> {
        self.judgments
            .get(&(query.to_string(), doc.to_string()))
            .copied()
    }

    /// Relevant means grade ≥ 1.
    pub fn is_relevant(&self, query: &str, doc: &str) -> bool {
        self.grade(query, doc).is_some_and(|g| g >= 1)
    }

    /// All queries appearing in the judgments, sorted.
    pub fn queries(&self) -> Vec<String> {
        let mut out: Vec<String> = self.judgments.keys().map(|(q, _)| q.clone()).collect();
        out.dedup();
        out
    }

    /// Judged docs of one query with grade ≥ 1, sorted by doc id.
    pub fn relevant_docs(&self, query: &str) -> Vec<String> {
        self.docs_with(query, |g| g >= 1)
    }

    /// Judged docs of one query with grade 0, sorted by doc id.
    pub fn irrelevant_docs(&self, query: &str) -> Vec<String> {
        self.docs_with(query, |g| g == 0)
    }

    fn docs_with(&self, query: &str, keep: impl Fn(u8) -> bool) -> Vec<String> {
        self.judgments
            .range((query.to_string(), String::new())..)
            .take_while(|((q, _), _)| q == query)
            .filter(|&(_, &g)| keep(g))
            .map(|((_, d), _)| d.clone())
            .collect()
    }

    pub fn relevant_count(&self, query: &str) -> usize {
        self.relevant_docs(query).len()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.judgments
            .iter()
            .map(|((q, d), &g)| (q.as_str(), d.as_str(), g))
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        for ((q, d), g) in &self.judgments {
            writeln!(w, "{q} 0 {d} {g}")?;
        }
        Ok(())
    }
}

/// One negative document of a training instance. `unjudged` marks negatives
/// topped up from BM25 candidates absent from the qrels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negative {
    pub doc: String,
    pub unjudged: bool,
}

/// One relevant document opposed to n irrelevant ones for a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub query: String,
    pub positive: String,
    pub negatives: Vec<Negative>,
}

/// Build one instance per relevant (query, doc) pair. Negatives are drawn
/// uniformly without replacement from the query's grade-0 judged documents,
/// topped up from `candidates` entries absent from the qrels when the judged
/// pool is too small. Queries or pairs that cannot reach n negatives are
/// skipped with a warning. Deterministic per seed.
pub fn sample_training_instances(
    qrels: &Qrels,
    candidates: &BTreeMap<String, Vec<String>>,
    n: usize,
    seed: u64,
) -> Result<Vec<TrainingInstance>> {
    if n == 0 {
        return Err(Error::Config(
            "need at least one negative per instance".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    for query in qrels.queries() {
        let relevant = qrels.relevant_docs(&query);
        if relevant.is_empty() {
            continue;
        }
        let judged_pool = qrels.irrelevant_docs(&query);
        let mut unjudged_pool: Vec<String> = candidates
            .get(&query)
            .map(|c| {
                c.iter()
                    .filter(|d| qrels.grade(&query, d).is_none())
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        unjudged_pool.sort_unstable();
        unjudged_pool.dedup();
        for positive in relevant {
            let mut judged = judged_pool.clone();
            judged.shuffle(&mut rng);
            let mut negatives: Vec<Negative> = judged
                .into_iter()
                .take(n)
                .map(|doc| Negative {
                    doc,
                    unjudged: false,
                })
                .collect();
            if negatives.len() < n {
                let mut extra = unjudged_pool.clone();
                extra.shuffle(&mut rng);
                negatives.extend(
                    extra
                        .into_iter()
                        .take(n - negatives.len())
                        .map(|doc| Negative {
                            doc,
                            unjudged: true,
                        }),
                );
            }
            if negatives.len() < n {
                log::warn!(
                    "query `{query}`: only {} candidate negatives for positive `{positive}`, need {n}; instance skipped",
                    negatives.len()
                );
                continue;
            }
            instances.push(TrainingInstance {
                query: query.clone(),
                positive,
                negatives,
            });
        }
    }
    Ok(instances)
}

/// Partition query ids into `folds` disjoint sets whose sizes differ by at
/// most one (earlier folds take the remainder). Deterministic per seed.
pub fn split_folds(query_ids: &[String], folds: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut ids: Vec<String> = query_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if folds > ids.len() {
        return Err(Error::Config(format!(
            "cannot split {} queries into {folds} folds",
            ids.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let base = ids.len() / folds;
    let extra = ids.len() % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<String> = ids[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        cursor += size;
    }
    Ok(out)
}

/// x_input = (x^t, x^KR), concatenated in that fixed order with no
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector {
    pub data: Vec<f64>,
    pub text_dims: usize,
}

impl InputVector {
    pub fn new(x_t: &[f64], x_kr: &KrVector) -> InputVector {
        let mut data = Vec::with_capacity(x_t.len() + x_kr.values.len());
        data.extend_from_slice(x_t);
        data.extend_from_slice(&x_kr.values);
        InputVector {
            data,
            text_dims: x_t.len(),
        }
    }

    pub fn from_parts(x_t: &[f64], x_kr: &[f64]) -> InputVector {
        let mut data = Vec::with_capacity(x_t.len() + x_kr.len());
        data.extend_from_slice(x_t);
        data.extend_from_slice(x_kr);
        InputVector {
            data,
            text_dims: x_t.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn x_t(&self) -> &[f64] {
        &self.data[..self.text_dims]
    }

    pub fn x_kr(&self) -> &[f64] {
        &self.data[self.text_dims..]
    }
}

/// On-disk store of the concatenated input vectors of all documents and
/// queries of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    pub text_dims: usize,
    pub kr_dims: usize,
    docs: BTreeMap<String, Vec<f64>>,
    queries: BTreeMap<String, Vec<f64>>,
}

impl VectorStore {
    pub fn new(text_dims: usize, kr_dims: usize) -> VectorStore {
        VectorStore {
            text_dims,
            kr_dims,
            docs: BTreeMap::new(),
            queries: BTreeMap::new(),
        }
    }

    pub fn input_dims(&self) -> usize {
        self.text_dims + self.kr_dims
    }

    fn check(&self, id: &str, v: &InputVector) -> Result<()> {
        if v.len() != self.input_dims() || v.text_dims != self.text_dims {
            return Err(Error::Dimension(format!(
                "vector for `{id}` has layout {}+{}, store expects {}+{}",
                v.text_dims,
                v.len() - v.text_dims,
                self.text_dims,
                self.kr_dims
            )));
        }
        Ok(())
    }

    pub fn insert_doc(&mut self, id: &str, v: InputVector) -> Result<()> {
        self.check(id, &v)?;
        self.docs.insert(id.to_string(), v.data);
        Ok(())
    }

    pub fn insert_query(&mut self, id: &str, v: InputVector) -> Result<()> {
        self.check(id, &v)?;
        self.queries.insert(id.to_string(), v.data);
        Ok(())
    }

    pub fn doc(&self, id: &str) -> Option<InputVector> {
        self.docs.get(id).map(|d| InputVector {
            data: d.clone(),
            text_dims: self.text_dims,
        })
    }

    pub fn query(&self, id: &str) -> Option<InputVector> {
        self.queries.get(id).map(|d| InputVector {
            data: d.clone(),
            text_dims: self.text_dims,
        })
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "DSRIM-VECTORS v1")?;
        writeln!(w, "text_dims\t{}", self.text_dims)?;
        writeln!(w, "kr_dims\t{}", self.kr_dims)?;
        for (kind, map) in [("doc", &self.docs), ("query", &self.queries)] {
            for (id, vec) in map {
                write!(w, "{kind}\t{id}\t")?;
                write_floats(&mut w, vec)?;
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read(src: impl BufRead, source_name: &str) -> Result<VectorStore> {
        let mut lines = src.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty vector store"))?
            .1?;
        if header != "DSRIM-VECTORS v1" {
            return Err(Error::parse(
                source_name,
                1,
                "expected `DSRIM-VECTORS v1` header",
            ));
        }
        let mut store = VectorStore::new(0, 0);
        for (lineno, line) in lines {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::parse(source_name, lineno, msg.to_string());
            match fields[0] {
                "text_dims" if fields.len() == 2 => {
                    store.text_dims = fields[1].parse().map_err(|_| bad("bad text_dims"))?;
                }
                "kr_dims" if fields.len() == 2 => {
                    store.kr_dims = fields[1].parse().map_err(|_| bad("bad kr_dims"))?;
                }
                "doc" | "query" if fields.len() == 3 => {
                    let vec: Vec<f64> = fields[2]
                        .split_whitespace()
                        .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad float")))
                        .collect::<Result<_>>()?;
                    if vec.len() != store.input_dims() {
                        return Err(bad(&format!(
                            "vector has {} floats, expected {}",
                            vec.len(),
                            store.input_dims()
                        )));
                    }
                    let map = if fields[0] == "doc" {
                        &mut store.docs
                    } else {
                        &mut store.queries
                    };
                    if map.insert(fields[1].to_string(), vec).is_some() {
                        return Err(Error::DuplicateId {
                            kind: "vector",
                            id: fields[1].to_string(),
                        });
                    }
                }
                _ => return Err(bad("unrecognized vector store row")),
            }
        }
        Ok(store)
    }
}
