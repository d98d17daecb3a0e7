//! The relation mapping method: cluster the knowledge-resource objects into
//! a k-cluster referential, pick one representative object per cluster, and
//! project any annotated text onto the referential as a k-dimensional vector
//! x^KR whose j-th component combines the importance of cluster j for the
//! text with the graph relatedness between the text's objects and the
//! cluster representative.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::embeddings::{EmbeddingTable, write_floats};
use crate::error::{Error, Result};
use crate::kgraph::LeacockCache;
use crate::kmeans::kmeans;
use crate::vecmath::cosine;

const KMEANS_MAX_ITER: usize = 100;

/// How the representative object of each topical cluster is chosen.
/// `TopConcepts` marks a referential built by the frequency baseline rather
/// than by clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprStrategy {
    /// Most frequent member (maximal df — minimal idf).
    IdfMin,
    /// Rarest member (minimal df — maximal idf).
    IdfMax,
    /// Member with maximal cosine to the cluster centroid.
    Centroid,
    /// Singleton clusters of the k most frequent objects.
    TopConcepts,
}

impl ReprStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReprStrategy::IdfMin => "idf_min",
            ReprStrategy::IdfMax => "idf_max",
            ReprStrategy::Centroid => "centroid",
            ReprStrategy::TopConcepts => "top_concepts",
        }
    }
}

impl fmt::Display for ReprStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReprStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReprStrategy> {
        match s {
            "idf_min" => Ok(ReprStrategy::IdfMin),
            "idf_max" => Ok(ReprStrategy::IdfMax),
            "centroid" => Ok(ReprStrategy::Centroid),
            "top_concepts" => Ok(ReprStrategy::TopConcepts),
            other => Err(Error::Config(format!(
                "unknown representative strategy `{other}` (expected idf_min, idf_max, centroid or top_concepts)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicalCluster {
    /// Member object ids, sorted.
    pub members: Vec<String>,
    pub centroid: Vec<f64>,
    pub representative: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Referential {
    pub k: usize,
    pub strategy: ReprStrategy,
    pub clusters: Vec<TopicalCluster>,
}

/// The k-dimensional resource vector of one text.
#[derive(Debug, Clone, PartialEq)]
pub struct KrVector {
    pub values: Vec<f64>,
    /// |O(T)|, the number of annotated objects (multiset size).
    pub object_count: usize,
}

/// Cluster objects by their label vectors and pick representatives.
pub fn build_referential(
    objects: &[String],
    obj_vectors: &EmbeddingTable,
    k: usize,
    strategy: ReprStrategy,
    df: &BTreeMap<String, u64>,
    seed: u64,
) -> Result<Referential> {
    if strategy == ReprStrategy::TopConcepts {
        return Err(Error::Config(
            "top_concepts is not a clustering strategy; use top_concepts_referential".into(),
        ));
    }
    let mut ids: Vec<String> = objects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::Config(
            "cannot build a referential over zero objects".into(),
        ));
    }
    let points: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| obj_vectors.require(id).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let outcome = kmeans(&points, k, KMEANS_MAX_ITER, seed)?;

    let mut clusters = Vec::with_capacity(k);
    for (j, centroid) in outcome.centroids.into_iter().enumerate() {
        let members: Vec<String> = ids
            .iter()
            .zip(&outcome.assignments)
            .filter(|&(_, &a)| a == j)
            .map(|(id, _)| id.clone())
            .collect();
        let representative = select_representative(&members, &centroid, obj_vectors, df, strategy)?;
        clusters.push(TopicalCluster {
            members,
            centroid,
            representative,
        });
    }
    Ok(Referential {
        k,
        strategy,
        clusters,
    })
}

fn select_representative(
    members: &[String],
    centroid: &[f64],
    obj_vectors: &EmbeddingTable,
    df: &BTreeMap<String, u64>,
    strategy: ReprStrategy,
) -> Result<String> {
    debug_assert!(!members.is_empty(), "kmeans clusters are never empty");
    let freq = |id: &String| df.get(id).copied().unwrap_or(0);
    // `members` is sorted, and min_by/max_by keep the first among equals, so
    // ties resolve to the lexicographically smallest id.
    let chosen = match strategy {
        ReprStrategy::IdfMin => members
            .iter()
            .max_by(|a, b| freq(a).cmp(&freq(b)).then(b.cmp(a))),
        ReprStrategy::IdfMax => members.iter().min_by_key(|id| freq(id)),
        ReprStrategy::Centroid => {
            let mut best: Option<(&String, f64)> = None;
            for id in members {
                let sim = cosine(obj_vectors.require(id)?, centroid)?;
                let better = match best {
                    None => true,
                    Some((_, b)) => sim > b,
                };
                if better {
                    best = Some((id, sim));
                }
            }
            best.map(|(id, _)| id)
        }
        ReprStrategy::TopConcepts => unreachable!("rejected in build_referential"),
    };
    Ok(chosen.expect("non-empty cluster").clone())
}

/// The Top_concepts baseline: the k most frequent objects, each its own
/// singleton cluster and its own representative.
pub fn top_concepts_referential(
    objects: &[String],
    obj_vectors: &EmbeddingTable,
    df: &BTreeMap<String, u64>,
    k: usize,
) -> Result<Referential> {
    let mut ids: Vec<String> = objects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut ranked: Vec<(u64, String)> = ids
        .into_iter()
        .filter_map(|id| {
            let f = df.get(&id).copied().unwrap_or(0);
            (f > 0).then_some((f, id))
        })
        .collect();
    if ranked.len() < k {
        return Err(Error::Config(format!(
            "top_concepts needs {k} objects with positive df, found {}",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let clusters = ranked
        .into_iter()
        .take(k)
        .map(|(_, id)| {
            Ok(TopicalCluster {
                centroid: obj_vectors.require(&id)?.to_vec(),
                members: vec![id.clone()],
                representative: id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Referential {
        k,
        strategy: ReprStrategy::TopConcepts,
        clusters,
    })
}

/// w_j^T of Eq. 2: the maximal object-to-object distributional similarity
/// between the text's objects and the cluster members, with negative cosines
/// clamped to 0.
pub fn cluster_importance(
    cluster: &TopicalCluster,
    text_objects: &[String],
    obj_vectors: &EmbeddingTable,
) -> Result<f64> {
    if text_objects.is_empty() {
        return Err(Error::Config(
            "cluster_importance requires at least one text object".into(),
        ));
    }
    let mut best = 0.0f64;
    for om in text_objects {
        let vm = obj_vectors.require(om)?;
        for on in &cluster.members {
            let vn = obj_vectors.require(on)?;
            best = best.max(cosine(vm, vn)?.max(0.0));
        }
    }
    Ok(best)
}

/// The Eq. 3 aggregation over precomputed relatedness scores:
/// Σ ln(1 + sim) · (avg_no / |O(T)|).
pub fn relatedness_from_sims(sims: &[f64], avg_no: f64) -> f64 {
    if sims.is_empty() {
        return 0.0;
    }
    let sum: f64 = sims.iter().map(|s| s.ln_1p()).sum();
    sum * (avg_no / sims.len() as f64)
}

/// S_relat(c_j, O(T)) of Eq. 3, with the Leacock measure as sim_r. The
/// normalization by avg_no / |O(T)| removes the bias of differing annotation
/// counts across texts.
pub fn cluster_relatedness(
    rep: &str,
    text_objects: &[String],
    leacock: &LeacockCache<'_>,
    avg_no: f64,
) -> Result<f64> {
    if avg_no <= 0.0 || avg_no.is_nan() {
        return Err(Error::Config(format!(
            "avg_no must be positive, got {avg_no}"
        )));
    }
    let sims: Vec<f64> = text_objects
        .iter()
        .map(|om| leacock.sim(rep, om))
        .collect::<Result<_>>()?;
    Ok(relatedness_from_sims(&sims, avg_no))
}

/// x^KR of Eq. 1: values[j] = w_j^T · S_relat(c_j, O(T)). Texts with no
/// annotated objects map to the zero vector.
pub fn build_kr_vector(
    text_objects: &[String],
    referential: &Referential,
    leacock: &LeacockCache<'_>,
    obj_vectors: &EmbeddingTable,
    avg_no: f64,
) -> Result<KrVector> {
    if text_objects.is_empty() {
        log::warn!("text has no annotated objects; x^KR is the zero vector");
        return Ok(KrVector {
            values: vec![0.0; referential.k],
            object_count: 0,
        });
    }
    let values = referential
        .clusters
        .iter()
        .map(|cluster| {
            let w = cluster_importance(cluster, text_objects, obj_vectors)?;
            let s = cluster_relatedness(&cluster.representative, text_objects, leacock, avg_no)?;
            Ok(w * s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(KrVector {
        values,
        object_count: text_objects.len(),
    })
}

/// Serialize a referential; round-trips bit-exactly.
pub fn write_referential(referential: &Referential, mut w: impl Write) -> Result<()> {
    writeln!(w, "DSRIM-REFERENTIAL v1")?;
    writeln!(w, "k\t{}", referential.k)?;
    writeln!(w, "strategy\t{}", referential.strategy)?;
    let dims = referential
        .clusters
        .first()
        .map(|c| c.centroid.len())
        .unwrap_or(0);
    writeln!(w, "dims\t{dims}")?;
    for (j, cluster) in referential.clusters.iter().enumerate() {
        for member in &cluster.members {
            writeln!(w, "member\t{j}\t{member}")?;
        }
        writeln!(w, "representative\t{j}\t{}", cluster.representative)?;
        write!(w, "centroid\t{j}\t")?;
        write_floats(&mut w, &cluster.centroid)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_referential(src: impl BufRead, source_name: &str) -> Result<Referential> {
    let mut lines = src.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(source_name, 1, "empty referential file"))?
        .1?;
    if header != "DSRIM-REFERENTIAL v1" {
        return Err(Error::parse(
            source_name,
            1,
            "expected `DSRIM-REFERENTIAL v1` header",
        ));
    }
    let mut k = 0usize;
    let mut dims = 0usize;
    let mut strategy = ReprStrategy::Centroid;
    let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut reps: BTreeMap<usize, String> = BTreeMap::new();
    let mut centroids: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (lineno, line) in lines {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::parse(source_name, lineno, msg.to_string());
        match fields[0] {
            "k" if fields.len() == 2 => k = fields[1].parse().map_err(|_| bad("bad k"))?,
            "dims" if fields.len() == 2 => {
                dims = fields[1].parse().map_err(|_| bad("bad dims"))?;
            }
            "strategy" if fields.len() == 2 => strategy = fields[1].parse()?,
            "member" if fields.len() == 3 => {
                let j: usize = fields[1].parse().map_err(|_| bad("bad cluster index"))?;
                members.entry(j).or_default().push(fields[2].to_string());
            }
            "representative" if fields.len() == 3 => {
                let j: usize = fields[1].parse().map_err(|_| bad("bad cluster index"))?;
                reps.insert(j, fields[2].to_string());
            }
            "centroid" if fields.len() == 3 => {
                let j: usize = fields[1].parse().map_err(|_| bad("bad cluster index"))?;
                let vec: Vec<f64> = fields[2]
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>().map_err(|_| bad("bad float")))
                    .collect::<Result<_>>()?;
                centroids.insert(j, vec);
            }
            _ => return Err(bad("unrecognized referential row")),
        }
    }
    let mut clusters = Vec::with_capacity(k);
    for j in 0..k {
        let m = members
            .remove(&j)
            .ok_or_else(|| Error::parse(source_name, 1, format!("cluster {j} has no members")))?;
        let representative = reps.remove(&j).ok_or_else(|| {
            Error::parse(source_name, 1, format!("cluster {j} has no representative"))
        })?;
        let centroid = centroids
            .remove(&j)
            .ok_or_else(|| Error::parse(source_name, 1, format!("cluster {j} has no centroid")))?;
        if centroid.len() != dims {
            return Err(Error::parse(
                source_name,
                1,
                format!(
                    "cluster {j} centroid has {} floats, expected {dims}",
                    centroid.len()
                ),
            ));
        }
        if !m.contains(&representative) {
            return Err(Error::parse(
                source_name,
                1,
                format!("cluster {j} representative `{representative}` is not a member"),
            ));
        }
        clusters.push(TopicalCluster {
            members: m,
            centroid,
            representative,
        });
    }
    Ok(Referential {
        k,
        strategy,
        clusters,
    })
}
