//! Property-based and oracle-based checks of the numeric core: cosine
//! algebra, Leacock relatedness against a Floyd–Warshall oracle, fold
//! partitioning, the knowledge-resource vector against a brute-force
//! recomputation, k-means behavior, and text round-trips of every
//! serialized artifact.

use std::collections::BTreeMap;
use std::io::Cursor;

use proptest::prelude::*;

use dsrim::corpus::{InputVector, VectorStore, split_folds};
use dsrim::embeddings::EmbeddingTable;
use dsrim::kgraph::{KnowledgeGraph, LeacockCache};
use dsrim::kmeans::kmeans;
use dsrim::net::{InstanceVectors, SiameseParams, TrainConfig, train};
use dsrim::relmap::{
    Referential, ReprStrategy, build_kr_vector, build_referential, read_referential,
    write_referential,
};
use dsrim::vecmath::cosine;

// ---------------------------------------------------------------- helpers

/// Tree (or forest, when `keep` drops edges) over `parents`, rendered as
/// the loader's TSV inputs. Node i > 0 attaches to parents[i-1] < i.
fn graph_from_parents(parents: &[usize], keep: &[bool]) -> KnowledgeGraph {
    let n = parents.len() + 1;
    let mut nodes = String::new();
    for i in 0..n {
        nodes.push_str(&format!("n{i}\tlabel {i}\n"));
    }
    let mut edges = String::new();
    for (i, (&p, &k)) in parents.iter().zip(keep).enumerate() {
        if k {
            edges.push_str(&format!("n{}\tn{p}\tIS-A\n", i + 1));
        }
    }
    KnowledgeGraph::load(
        Cursor::new(nodes),
        "nodes",
        Cursor::new(edges),
        "edges",
        "IS-A",
    )
    .unwrap()
}

/// Floyd–Warshall shortest paths in edge counts over the same undirected
/// edges; `None` when unreachable.
fn floyd_warshall(n: usize, parents: &[usize], keep: &[bool]) -> Vec<Vec<Option<usize>>> {
    const INF: usize = usize::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (i, (&p, &k)) in parents.iter().zip(keep).enumerate() {
        if k {
            dist[i + 1][p] = 1;
            dist[p][i + 1] = 1;
        }
    }
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                let through = dist[a][m] + dist[m][b];
                if through < dist[a][b] {
                    dist[a][b] = through;
                }
            }
        }
    }
    dist.into_iter()
        .map(|row| row.into_iter().map(|d| (d < INF).then_some(d)).collect())
        .collect()
}

fn parents_strategy(max_nodes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<bool>)> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            (
                parents,
                proptest::collection::vec(prop::bool::weighted(0.85), n - 1),
            )
        })
        .prop_map(|(parents, keep)| (parents, keep))
}

// ------------------------------------------------------------- vec algebra

proptest! {
    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        pair in (1usize..12).prop_flat_map(|d| (
            proptest::collection::vec(-10.0f64..10.0, d),
            proptest::collection::vec(-10.0f64..10.0, d),
        )),
        scale in 0.01f64..50.0,
    ) {
        let (u, v) = pair;
        let uv = cosine(&u, &v).unwrap();
        let vu = cosine(&v, &u).unwrap();
        prop_assert!((uv - vu).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&uv));
        let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let su = cosine(&scaled, &v).unwrap();
        prop_assert!((su - uv).abs() < 1e-9);
    }
}

// ------------------------------------------------------- Leacock vs oracle

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn leacock_matches_floyd_warshall_and_its_axioms(
        (parents, keep) in parents_strategy(14),
    ) {
        let n = parents.len() + 1;
        let graph = graph_from_parents(&parents, &keep);
        let oracle = floyd_warshall(n, &parents, &keep);
        let max_sim = graph.max_leacock();
        for (a, row) in oracle.iter().enumerate() {
            let ida = format!("n{a}");
            // Self-relatedness is the graph maximum.
            prop_assert!((graph.leacock_sim(&ida, &ida).unwrap() - max_sim).abs() < 1e-12);
            for (b, &cell) in row.iter().enumerate() {
                let idb = format!("n{b}");
                let got = graph.path_length(&ida, &idb).unwrap();
                let want = cell.map(|d| d + 1); // node count = edges + 1
                prop_assert_eq!(got, want, "path {} {}", a, b);
                let sab = graph.leacock_sim(&ida, &idb).unwrap();
                let sba = graph.leacock_sim(&idb, &ida).unwrap();
                prop_assert_eq!(sab.to_bits(), sba.to_bits());
                if cell.is_none() {
                    prop_assert_eq!(sab, 0.0);
                } else {
                    prop_assert!(sab <= max_sim + 1e-12);
                }
            }
        }
    }

    #[test]
    fn warmed_cache_agrees_with_direct_graph_queries(
        (parents, keep) in parents_strategy(10),
    ) {
        let n = parents.len() + 1;
        let graph = graph_from_parents(&parents, &keep);
        let sources: Vec<String> = (0..n).step_by(2).map(|i| format!("n{i}")).collect();
        let cache = LeacockCache::warm(&graph, sources.iter().map(String::as_str)).unwrap();
        for a in 0..n {
            for b in 0..n {
                let ida = format!("n{a}");
                let idb = format!("n{b}");
                prop_assert_eq!(
                    cache.sim(&ida, &idb).unwrap().to_bits(),
                    graph.leacock_sim(&ida, &idb).unwrap().to_bits()
                );
            }
        }
    }
}

#[test]
fn chain_relatedness_decreases_strictly_with_distance() {
    // n0 ← n1 ← … ← n7, a single chain.
    let parents: Vec<usize> = (0..7).collect();
    let keep = vec![true; 7];
    let graph = graph_from_parents(&parents, &keep);
    let mut last = f64::INFINITY;
    for b in 1..8 {
        let s = graph.leacock_sim("n0", &format!("n{b}")).unwrap();
        assert!(s < last, "distance {b}: {s} !< {last}");
        last = s;
    }
}

// ------------------------------------------------------------- fold splits

proptest! {
    #[test]
    fn folds_partition_the_queries(
        ids in proptest::collection::btree_set("[a-z]{1,6}", 3..40),
        folds in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(folds <= ids.len());
        let ids: Vec<String> = ids.into_iter().collect();
        let parts = split_folds(&ids, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        let mut all: Vec<String> = parts.concat();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        prop_assert_eq!(all, want);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        prop_assert!(max - min <= 1, "unbalanced: {:?}", sizes);
        // Determinism.
        prop_assert_eq!(&parts, &split_folds(&ids, folds, seed).unwrap());
    }
}

// ----------------------------------------------- x^KR brute-force oracle

/// Straightforward reimplementation of the mapping: per cluster, importance
/// is the largest non-negative cosine between any text object and any
/// cluster member; relatedness is Σ ln(1 + leacock(rep, o)) · avg_no/|O|;
/// the coordinate is their product.
fn brute_force_kr(
    text_objects: &[String],
    referential: &Referential,
    graph: &KnowledgeGraph,
    vectors: &EmbeddingTable,
    avg_no: f64,
) -> Vec<f64> {
    referential
        .clusters
        .iter()
        .map(|cluster| {
            let mut importance = 0.0f64;
            for o in text_objects {
                for m in &cluster.members {
                    let c = cosine(vectors.get(o).unwrap(), vectors.get(m).unwrap()).unwrap();
                    importance = importance.max(c.max(0.0));
                }
            }
            let mut relatedness = 0.0;
            for o in text_objects {
                let s = graph.leacock_sim(&cluster.representative, o).unwrap();
                relatedness += (1.0 + s).ln() * (avg_no / text_objects.len() as f64);
            }
            importance * relatedness
        })
        .collect()
}

/// (parents, k, raw object vectors, annotation picks, avg_no, seed)
type KrInstance = (Vec<usize>, usize, Vec<Vec<f64>>, Vec<usize>, f64, u64);

fn kr_instance_strategy() -> impl Strategy<Value = KrInstance> {
    (4usize..=14).prop_flat_map(|n| {
        let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
        (
            parents,
            1usize..=4,
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), n),
            proptest::collection::vec(0..n, 1..30),
            0.5f64..5.0,
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn kr_vector_matches_the_brute_force_oracle(
        (parents, k, raw_vectors, picks, avg_no, seed) in kr_instance_strategy(),
    ) {
        let n = parents.len() + 1;
        let keep = vec![true; parents.len()];
        let graph = graph_from_parents(&parents, &keep);
        let mut vectors = EmbeddingTable::new(4);
        let mut degenerate = true;
        for (i, v) in raw_vectors.iter().enumerate() {
            if v.iter().any(|x| x.abs() > 1e-9) {
                degenerate = false;
            }
            vectors.insert(format!("n{i}"), v.clone()).unwrap();
        }
        prop_assume!(!degenerate);
        let objects: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let df: BTreeMap<String, u64> =
            objects.iter().enumerate().map(|(i, o)| (o.clone(), i as u64 + 1)).collect();
        let k = k.min(n);
        let Ok(referential) =
            build_referential(&objects, &vectors, k, ReprStrategy::Centroid, &df, seed)
        else {
            // k exceeded the number of distinct embedding points.
            return Ok(());
        };
        let text_objects: Vec<String> = picks.iter().map(|&i| format!("n{i}")).collect();
        let cache = LeacockCache::cold(&graph);
        let got = build_kr_vector(&text_objects, &referential, &cache, &vectors, avg_no)
            .unwrap();
        let want = brute_force_kr(&text_objects, &referential, &graph, &vectors, avg_no);
        prop_assert_eq!(got.values.len(), want.len());
        for (g, w) in got.values.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9, "{} vs {}", g, w);
        }
        prop_assert_eq!(got.object_count, text_objects.len());
    }

    #[test]
    fn kr_vector_is_invariant_under_object_duplication(
        (parents, k, raw_vectors, picks, avg_no, seed) in kr_instance_strategy(),
        m in 2usize..=5,
    ) {
        let n = parents.len() + 1;
        let keep = vec![true; parents.len()];
        let graph = graph_from_parents(&parents, &keep);
        let mut vectors = EmbeddingTable::new(4);
        let mut degenerate = true;
        for (i, v) in raw_vectors.iter().enumerate() {
            if v.iter().any(|x| x.abs() > 1e-9) {
                degenerate = false;
            }
            vectors.insert(format!("n{i}"), v.clone()).unwrap();
        }
        prop_assume!(!degenerate);
        let objects: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let df: BTreeMap<String, u64> =
            objects.iter().enumerate().map(|(i, o)| (o.clone(), i as u64 + 1)).collect();
        let Ok(referential) =
            build_referential(&objects, &vectors, k.min(n), ReprStrategy::IdfMin, &df, seed)
        else {
            return Ok(());
        };
        let text_objects: Vec<String> = picks.iter().map(|&i| format!("n{i}")).collect();
        let duplicated: Vec<String> =
            std::iter::repeat_n(text_objects.clone(), m).flatten().collect();
        let cache = LeacockCache::cold(&graph);
        let base = build_kr_vector(&text_objects, &referential, &cache, &vectors, avg_no)
            .unwrap();
        let dup = build_kr_vector(&duplicated, &referential, &cache, &vectors, avg_no)
            .unwrap();
        for (a, b) in base.values.iter().zip(&dup.values) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}

/// Two texts whose (disjoint) objects live in the same cluster at equal
/// distance from the representative look more alike in x^KR space than a
/// text whose objects live in a different cluster.
#[test]
fn transitive_similarity_across_shared_clusters() {
    // Two separate subtrees: left = n1,n2,n3,n4 under n0; right = n6,n7
    // under n5 (a second root created by dropping no edges — two parent
    // chains built explicitly).
    let nodes = "n0\tl\nn1\tl\nn2\tl\nn3\tl\nn4\tl\nn5\tl\nn6\tl\nn7\tl\n";
    let edges =
        "n1\tn0\tIS-A\nn2\tn0\tIS-A\nn3\tn0\tIS-A\nn4\tn0\tIS-A\nn6\tn5\tIS-A\nn7\tn5\tIS-A\n";
    let graph = KnowledgeGraph::load(
        Cursor::new(nodes.to_string()),
        "nodes",
        Cursor::new(edges.to_string()),
        "edges",
        "IS-A",
    )
    .unwrap();
    let mut vectors = EmbeddingTable::new(2);
    for id in ["n0", "n1", "n2", "n3", "n4"] {
        vectors.insert(id, vec![1.0, 0.05]).unwrap();
    }
    for id in ["n5", "n6", "n7"] {
        vectors.insert(id, vec![0.05, 1.0]).unwrap();
    }
    let objects: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
    let df: BTreeMap<String, u64> = objects.iter().map(|o| (o.clone(), 1)).collect();
    let referential =
        build_referential(&objects, &vectors, 2, ReprStrategy::Centroid, &df, 5).unwrap();
    let cache = LeacockCache::cold(&graph);
    let kr = |objs: &[&str]| {
        let objs: Vec<String> = objs.iter().map(|s| s.to_string()).collect();
        build_kr_vector(&objs, &referential, &cache, &vectors, 2.0)
            .unwrap()
            .values
    };
    // t1 and t2: disjoint object sets in the left cluster, all children of
    // n0 (equal distance to any representative in that subtree).
    let t1 = kr(&["n1", "n2"]);
    let t2 = kr(&["n3", "n4"]);
    // t3: objects of the right cluster.
    let t3 = kr(&["n6", "n7"]);
    let same = cosine(&t1, &t2).unwrap();
    let cross = cosine(&t1, &t3).unwrap();
    assert!(
        same > cross,
        "same-cluster cosine {same} should exceed cross-cluster {cross}"
    );
}

// ------------------------------------------------------------------ kmeans

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn kmeans_objective_never_increases_and_is_deterministic(
        points in proptest::collection::vec(
            proptest::collection::vec(-5.0f64..5.0, 3), 4..40),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut distinct: Vec<Vec<u64>> = points
            .iter()
            .map(|p| p.iter().map(|x| (x + 0.0).to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        prop_assume!(k <= distinct.len());
        let out = kmeans(&points, k, 50, seed).unwrap();
        for w in out.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "objective rose: {:?}", w);
        }
        prop_assert_eq!(out.assignments.len(), points.len());
        prop_assert!(out.assignments.iter().all(|&a| a < k));
        let again = kmeans(&points, k, 50, seed).unwrap();
        prop_assert_eq!(out.assignments, again.assignments);
    }
}

// ------------------------------------------------------------- round-trips

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn graph_cache_roundtrip_preserves_every_relatedness(
        (parents, keep) in parents_strategy(10),
    ) {
        let graph = graph_from_parents(&parents, &keep);
        let mut buf = Vec::new();
        graph.write_cache(&mut buf).unwrap();
        let back = KnowledgeGraph::read_cache(Cursor::new(buf), "cache").unwrap();
        prop_assert_eq!(back.len(), graph.len());
        prop_assert_eq!(back.max_depth(), graph.max_depth());
        let n = parents.len() + 1;
        for a in 0..n {
            for b in 0..n {
                let ida = format!("n{a}");
                let idb = format!("n{b}");
                prop_assert_eq!(
                    back.leacock_sim(&ida, &idb).unwrap().to_bits(),
                    graph.leacock_sim(&ida, &idb).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn embedding_table_roundtrip_is_bit_exact(
        entries in proptest::collection::btree_map(
            "[a-z0-9]{1,8}",
            proptest::collection::vec(-1e4f64..1e4, 5),
            1..20,
        ),
    ) {
        let mut table = EmbeddingTable::new(5);
        for (k, v) in &entries {
            table.insert(k, v.clone()).unwrap();
        }
        let mut buf = Vec::new();
        table.save(&mut buf).unwrap();
        let back = EmbeddingTable::load(Cursor::new(buf), "table").unwrap();
        prop_assert_eq!(back.len(), table.len());
        for (k, v) in &entries {
            let got = back.get(k).unwrap();
            for (a, b) in got.iter().zip(v) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

#[test]
fn referential_and_store_and_checkpoint_roundtrips_are_exact() {
    // Referential over random-ish vectors.
    let mut vectors = EmbeddingTable::new(3);
    let objects: Vec<String> = (0..9).map(|i| format!("o{i}")).collect();
    for (i, o) in objects.iter().enumerate() {
        let f = i as f64;
        vectors
            .insert(o, vec![(f * 0.7).sin(), (f * 1.3).cos(), f / 9.0])
            .unwrap();
    }
    let df: BTreeMap<String, u64> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.clone(), (i % 4) as u64 + 1))
        .collect();
    let referential =
        build_referential(&objects, &vectors, 3, ReprStrategy::IdfMax, &df, 21).unwrap();
    let mut buf = Vec::new();
    write_referential(&referential, &mut buf).unwrap();
    let back = read_referential(Cursor::new(buf), "referential").unwrap();
    assert_eq!(back.k, referential.k);
    assert_eq!(back.strategy, referential.strategy);
    for (a, b) in back.clusters.iter().zip(&referential.clusters) {
        assert_eq!(a.members, b.members);
        assert_eq!(a.representative, b.representative);
        let exact = a
            .centroid
            .iter()
            .zip(&b.centroid)
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(exact, "centroid drifted through text round-trip");
    }

    // Vector store.
    let mut store = VectorStore::new(2, 3);
    store
        .insert_doc(
            "d1",
            InputVector::from_parts(&[0.1, -0.2], &[1.0, 2.0, 3.0]),
        )
        .unwrap();
    store
        .insert_query(
            "q1",
            InputVector::from_parts(&[0.5, 0.25], &[0.0, -1.5, 2.25]),
        )
        .unwrap();
    let mut buf = Vec::new();
    store.write(&mut buf).unwrap();
    let back = VectorStore::read(Cursor::new(buf), "store").unwrap();
    assert_eq!(back.doc("d1").unwrap().data, store.doc("d1").unwrap().data);
    assert_eq!(
        back.query("q1").unwrap().data,
        store.query("q1").unwrap().data
    );

    // Checkpoint: train two epochs, round-trip, compare parameters exactly.
    let cfg = TrainConfig {
        epochs: 2,
        n_negatives: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let instances = vec![
        InstanceVectors {
            query: vec![0.2, 0.8, 0.1, 0.4],
            positive: vec![0.25, 0.7, 0.05, 0.5],
            negatives: vec![vec![0.9, 0.1, 0.8, 0.0]],
        },
        InstanceVectors {
            query: vec![0.9, 0.05, 0.7, 0.1],
            positive: vec![0.8, 0.1, 0.9, 0.2],
            negatives: vec![vec![0.1, 0.9, 0.2, 0.7]],
        },
    ];
    let params = SiameseParams::init_params(4, 3).unwrap();
    let out = train(params, &instances, &cfg).unwrap();
    let mut buf = Vec::new();
    dsrim::net::write_checkpoint(&out.params, &cfg, &mut buf).unwrap();
    let (back_params, back_cfg) =
        dsrim::net::read_checkpoint(Cursor::new(buf), "checkpoint").unwrap();
    assert_eq!(back_params, out.params);
    assert_eq!(back_cfg, cfg);
}
