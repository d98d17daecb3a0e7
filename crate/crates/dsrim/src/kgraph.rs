//! Knowledge resource as a graph: objects with textual labels, a single
//! filtered relation treated as undirected for path computations, and the
//! Leacock path-based relatedness between objects.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One object of the knowledge resource: an id, its textual label, and the
/// collection document frequency (filled in by the corpus loader).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectNode {
    pub id: String,
    pub label: String,
    pub df: u64,
}

/// The loaded resource. Immutable after construction apart from `set_df`,
/// which does not affect paths or depth.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: Vec<ObjectNode>,
    index: HashMap<String, usize>,
    /// Undirected adjacency over the kept relation, deduplicated.
    adjacency: Vec<Vec<usize>>,
    /// Kept directed edges as loaded: (child, parent).
    edges: Vec<(usize, usize)>,
    relation: String,
    max_depth: usize,
}

const UNREACHED: u32 = u32::MAX;

impl KnowledgeGraph {
    /// Load nodes (`id<TAB>label`) and edges (`child<TAB>parent<TAB>relation`),
    /// keeping only edges whose relation matches `relation_filter`. Lines
    /// beginning with `#` and blank lines are skipped. Objects that end up
    /// with no kept edge remain as isolated nodes.
    pub fn load(
        nodes_src: impl BufRead,
        nodes_name: &str,
        edges_src: impl BufRead,
        edges_name: &str,
        relation_filter: &str,
    ) -> Result<KnowledgeGraph> {
        let mut nodes: Vec<ObjectNode> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (lineno, line) in nodes_src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if skip_line(&line) {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let id = parts.next().unwrap_or("");
            let label = parts
                .next()
                .ok_or_else(|| Error::parse(nodes_name, lineno, "expected `id<TAB>label`"))?;
            if id.is_empty() {
                return Err(Error::parse(nodes_name, lineno, "empty object id"));
            }
            if index.contains_key(id) {
                return Err(Error::DuplicateId {
                    kind: "object",
                    id: id.to_string(),
                });
            }
            index.insert(id.to_string(), nodes.len());
            nodes.push(ObjectNode {
                id: id.to_string(),
                label: label.to_string(),
                df: 0,
            });
        }

        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut seen: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
        for (lineno, line) in edges_src.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if skip_line(&line) {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    edges_name,
                    lineno,
                    format!(
                        "expected `child<TAB>parent<TAB>relation`, got {} fields",
                        fields.len()
                    ),
                ));
            }
            if fields[2] != relation_filter {
                continue;
            }
            let child = *index.get(fields[0]).ok_or_else(|| Error::UnknownId {
                kind: "object",
                id: fields[0].to_string(),
            })?;
            let parent = *index.get(fields[1]).ok_or_else(|| Error::UnknownId {
                kind: "object",
                id: fields[1].to_string(),
            })?;
            if child == parent {
                log::warn!(
                    "{edges_name}:{lineno}: ignoring self-loop on `{}`",
                    fields[0]
                );
                continue;
            }
            // Duplicate edges collapse to one, regardless of direction.
            let key = (child.min(parent), child.max(parent));
            if seen.insert(key) {
                edges.push((child, parent));
            }
        }

        let mut g = KnowledgeGraph {
            adjacency: vec![Vec::new(); nodes.len()],
            nodes,
            index,
            edges,
            relation: relation_filter.to_string(),
            max_depth: 1,
        };
        g.rebuild_adjacency();
        g.recompute_max_depth();
        Ok(g)
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            self.adjacency[a].push(b);
            self.adjacency[b].push(a);
        }
        for adj in &mut self.adjacency {
            adj.sort_unstable();
        }
    }

    /// max_depth = longest root-to-node path, counted in nodes, over the kept
    /// directed child->parent edges. Roots are nodes with no parent. Nodes on
    /// or behind a directed cycle (possible only under malformed input) have
    /// no finite depth and do not contribute; Kahn's order guarantees
    /// termination regardless. Never below 1.
    fn recompute_max_depth(&mut self) {
        let n = self.nodes.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut n_parents = vec![0usize; n];
        for &(child, parent) in &self.edges {
            children[parent].push(child);
            n_parents[child] += 1;
        }
        let mut depth = vec![0usize; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for v in 0..n {
            if n_parents[v] == 0 {
                depth[v] = 1;
                queue.push_back(v);
            }
        }
        let mut max_depth = 1;
        while let Some(v) = queue.pop_front() {
            max_depth = max_depth.max(depth[v]);
            for &c in &children[v] {
                depth[c] = depth[c].max(depth[v] + 1);
                n_parents[c] -= 1;
                if n_parents[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        self.max_depth = max_depth;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    /// Nodes in file order.
    pub fn objects(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Object ids in file order.
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    /// Kept (child, parent) edges in load order.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(c, p)| (self.nodes[c].id.as_str(), self.nodes[p].id.as_str()))
            .collect()
    }

    pub fn set_df(&mut self, id: &str, df: u64) -> Result<()> {
        let idx = self.idx(id)?;
        self.nodes[idx].df = df;
        Ok(())
    }

    fn idx(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownId {
            kind: "object",
            id: id.to_string(),
        })
    }

    /// BFS distances from `source` over the undirected kept edges, counted in
    /// nodes (source itself = 1). `UNREACHED` marks disconnected nodes.
    fn bfs_node_counts(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[source] = 1;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if dist[w] == UNREACHED {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Number of nodes on the shortest undirected path between `a` and `b`
    /// (so `path_length(a, a) = 1`, adjacent nodes = 2), or `None` when the
    /// two objects are disconnected.
    pub fn path_length(&self, a: &str, b: &str) -> Result<Option<usize>> {
        let ia = self.idx(a)?;
        let ib = self.idx(b)?;
        if ia == ib {
            return Ok(Some(1));
        }
        let dist = self.bfs_node_counts(ia);
        Ok(if dist[ib] == UNREACHED {
            None
        } else {
            Some(dist[ib] as usize)
        })
    }

    /// Leacock relatedness: -ln(len / (2 * max_depth)) with `len` counted in
    /// nodes. Disconnected pairs score 0; the result is clamped at 0 so it
    /// never goes negative.
    pub fn leacock_sim(&self, a: &str, b: &str) -> Result<f64> {
        let len = self.path_length(a, b)?;
        Ok(self.leacock_from_len(len))
    }

    fn leacock_from_len(&self, len: Option<usize>) -> f64 {
        match len {
            None => 0.0,
            Some(len) => {
                let ratio = len as f64 / (2.0 * self.max_depth as f64);
                (-ratio.ln()).max(0.0)
            }
        }
    }

    /// Maximal attainable Leacock value on this graph: ln(2 * max_depth),
    /// reached at `leacock_sim(a, a)`.
    pub fn max_leacock(&self) -> f64 {
        (2.0 * self.max_depth as f64).ln()
    }

    /// Serialize the loaded graph as a versioned cache artifact.
    pub fn write_cache(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "DSRIM-GRAPH v1")?;
        writeln!(w, "relation\t{}", self.relation)?;
        for n in &self.nodes {
            writeln!(w, "node\t{}\t{}\t{}", n.id, n.label, n.df)?;
        }
        for &(child, parent) in &self.edges {
            writeln!(
                w,
                "edge\t{}\t{}",
                self.nodes[child].id, self.nodes[parent].id
            )?;
        }
        Ok(())
    }

    /// Load a graph cache written by `write_cache`. max_depth is recomputed.
    pub fn read_cache(src: impl BufRead, source_name: &str) -> Result<KnowledgeGraph> {
        let mut lines = src.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty graph cache"))?;
        if header? != "DSRIM-GRAPH v1" {
            return Err(Error::parse(
                source_name,
                1,
                "expected `DSRIM-GRAPH v1` header",
            ));
        }
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        let mut edges = Vec::new();
        let mut relation = String::new();
        for (lineno, line) in lines {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "relation" if fields.len() == 2 => relation = fields[1].to_string(),
                "node" if fields.len() == 4 => {
                    let df: u64 = fields[3]
                        .parse()
                        .map_err(|_| Error::parse(source_name, lineno, "bad df count"))?;
                    if index.contains_key(fields[1]) {
                        return Err(Error::DuplicateId {
                            kind: "object",
                            id: fields[1].to_string(),
                        });
                    }
                    index.insert(fields[1].to_string(), nodes.len());
                    nodes.push(ObjectNode {
                        id: fields[1].to_string(),
                        label: fields[2].to_string(),
                        df,
                    });
                }
                "edge" if fields.len() == 3 => {
                    let child = *index.get(fields[1]).ok_or_else(|| Error::UnknownId {
                        kind: "object",
                        id: fields[1].to_string(),
                    })?;
                    let parent = *index.get(fields[2]).ok_or_else(|| Error::UnknownId {
                        kind: "object",
                        id: fields[2].to_string(),
                    })?;
                    edges.push((child, parent));
                }
                _ => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        "unrecognized graph cache row",
                    ));
                }
            }
        }
        let mut g = KnowledgeGraph {
            adjacency: vec![Vec::new(); nodes.len()],
            nodes,
            index,
            edges,
            relation,
            max_depth: 1,
        };
        g.rebuild_adjacency();
        g.recompute_max_depth();
        Ok(g)
    }
}

fn skip_line(line: &str) -> bool {
    line.is_empty() || line.starts_with('#')
}

/// Memoized Leacock relatedness. Warmed once, in a single-writer phase, with
/// the BFS distance maps of a chosen source set; afterwards it is queried
/// immutably. Pairs where neither endpoint was warmed fall back to a fresh
/// BFS on the graph, which is pure.
pub struct LeacockCache<'g> {
    graph: &'g KnowledgeGraph,
    dist: HashMap<usize, Vec<u32>>,
}

impl<'g> LeacockCache<'g> {
    /// A cache with no warmed sources; every query falls back to direct BFS.
    pub fn cold(graph: &'g KnowledgeGraph) -> LeacockCache<'g> {
        LeacockCache {
            graph,
            dist: HashMap::new(),
        }
    }

    pub fn warm<I, S>(graph: &'g KnowledgeGraph, sources: I) -> Result<LeacockCache<'g>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut dist = HashMap::new();
        for s in sources {
            let idx = graph.idx(s.as_ref())?;
            dist.entry(idx)
                .or_insert_with(|| graph.bfs_node_counts(idx));
        }
        Ok(LeacockCache { graph, dist })
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn path_length(&self, a: &str, b: &str) -> Result<Option<usize>> {
        let ia = self.graph.idx(a)?;
        let ib = self.graph.idx(b)?;
        if ia == ib {
            return Ok(Some(1));
        }
        let lookup = |src: usize, dst: usize| {
            self.dist.get(&src).map(|d| match d[dst] {
                UNREACHED => None,
                len => Some(len as usize),
            })
        };
        if let Some(len) = lookup(ia, ib).or_else(|| lookup(ib, ia)) {
            return Ok(len);
        }
        self.graph.path_length(a, b)
    }

    pub fn sim(&self, a: &str, b: &str) -> Result<f64> {
        let len = self.path_length(a, b)?;
        Ok(self.graph.leacock_from_len(len))
    }
}
