//! Undirected contact graphs: edge-list ingestion, Barabási–Albert generation,
//! and the static topology quantities (degree, closeness) used by the
//! centrality-based curing strategy.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: expected two node labels, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("line {line}: self-loop on node {label:?}")]
    SelfLoop { line: usize, label: String },
    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("graph has no edges")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("Barabási–Albert generator needs n > m >= 1 (got n={n}, m={m})")]
    InvalidGenerator { n: usize, m: usize },
    #[error("i/o error reading edge list: {0}")]
    Io(#[from] std::io::Error),
}

/// Immutable, connected, simple undirected graph on dense node ids `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    closed: Vec<Vec<usize>>,
    labels: Vec<String>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph from dense-id edges. Duplicates collapse; self-loops,
    /// out-of-range ids and disconnected results are rejected.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        Self::build(node_count, edges, labels)
    }

    fn build<I>(node_count: usize, edges: I, labels: Vec<String>) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); node_count];
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(GraphError::NodeOutOfRange(a, b, node_count));
            }
            if a == b {
                return Err(GraphError::SelfLoop {
                    line: 0,
                    label: labels[a].clone(),
                });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        if edge_count == 0 {
            return Err(GraphError::Empty);
        }
        let components = count_components(&adjacency);
        if components != 1 {
            return Err(GraphError::Disconnected { components });
        }
        let closed = adjacency
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let mut c = Vec::with_capacity(nbrs.len() + 1);
                c.push(i);
                c.extend_from_slice(nbrs);
                c.sort_unstable();
                c
            })
            .collect();
        Ok(Self {
            adjacency,
            closed,
            labels,
            edge_count,
        })
    }

    /// Parses a whitespace-separated edge list. `#` starts a comment; blank
    /// lines are skipped. Labels are arbitrary tokens, remapped to dense ids in
    /// order of first appearance.
    pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(GraphError::Malformed {
                    line: lineno,
                    content: line.clone(),
                });
            }
            if tokens[0] == tokens[1] {
                return Err(GraphError::SelfLoop {
                    line: lineno,
                    label: tokens[0].to_string(),
                });
            }
            let mut id_of = |tok: &str| {
                *ids.entry(tok.to_string()).or_insert_with(|| {
                    labels.push(tok.to_string());
                    labels.len() - 1
                })
            };
            let a = id_of(tokens[0]);
            let b = id_of(tokens[1]);
            edges.push((a, b));
        }
        let n = labels.len();
        Self::build(n, edges, labels)
    }

    /// Preferential-attachment graph. Starts from a complete seed graph on
    /// `m + 1` nodes; every later node attaches to `m` distinct existing nodes
    /// chosen with probability proportional to their current degree.
    ///
    /// Edge count is `m(m+1)/2 + m(n - m - 1)`, so `m = 1` always yields a
    /// tree with `n - 1` edges.
    pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Self, GraphError> {
        if m == 0 || n <= m {
            return Err(GraphError::InvalidGenerator { n, m });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        // each edge endpoint appears once here, so uniform sampling is degree-proportional
        let mut endpoints: Vec<usize> = Vec::new();
        for i in 0..=m {
            for j in 0..i {
                edges.push((j, i));
                endpoints.push(i);
                endpoints.push(j);
            }
        }
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for v in (m + 1)..n {
            chosen.clear();
            while chosen.len() < m {
                let target = endpoints[rng.random_range(0..endpoints.len())];
                if !chosen.contains(&target) {
                    chosen.push(target);
                }
            }
            for &u in &chosen {
                edges.push((u, v));
                endpoints.push(u);
                endpoints.push(v);
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// `{i} ∪ neighbors(i)`, sorted.
    pub fn closed_neighborhood(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_closed_neighborhood(&self) -> usize {
        self.closed.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Original label of node `i` (its dense id for generated graphs).
    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Each undirected edge once, as `(low, high)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# {} nodes, {} edges",
            self.node_count(),
            self.edge_count()
        )?;
        for (a, b) in self.edges() {
            writeln!(out, "{} {}", self.labels[a], self.labels[b])?;
        }
        Ok(())
    }

    /// SHA-256 over the sorted labelled edge list; independent of id order.
    pub fn content_hash(&self) -> String {
        let mut pairs: Vec<(&str, &str)> = self
            .edges()
            .map(|(a, b)| {
                let (x, y) = (self.labels[a].as_str(), self.labels[b].as_str());
                if x <= y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect();
        pairs.sort_unstable();
        let mut hasher = Sha256::new();
        for (a, b) in pairs {
            hasher.update(a.as_bytes());
            hasher.update(b" ");
            hasher.update(b.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Hop distances from `source` to every node.
    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

fn count_components(adjacency: &[Vec<usize>]) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &w in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    components
}

/// Per-node degree and closeness `C_i = 1 / Σ_j d(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centrality {
    pub degree: Vec<usize>,
    pub closeness: Vec<f64>,
}

impl Centrality {
    /// Exact closeness via one BFS per node, `O(N·|E|)`.
    pub fn compute(g: &Graph) -> Self {
        let degree = (0..g.node_count()).map(|i| g.degree(i)).collect();
        let closeness = (0..g.node_count())
            .map(|i| {
                let total: usize = g.bfs_distances(i).iter().sum();
                1.0 / total as f64
            })
            .collect();
        Self { degree, closeness }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn parse(s: &str) -> Result<Graph, GraphError> {
        Graph::parse_edge_list(s.as_bytes())
    }

    #[test]
    fn path_graph_from_text() {
        let g = parse("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        let degrees: Vec<_> = (0..3).map(|i| g.degree(i)).collect();
        assert_eq!(degrees, vec![1, 2, 1]);
        assert_eq!(g.closed_neighborhood(1), &[0, 1, 2]);
    }

    #[test]
    fn duplicate_edges_collapse() {
        assert_eq!(parse("0 1\n1 0\n1 2").unwrap(), parse("0 1\n1 2").unwrap());
    }

    #[test]
    fn comments_and_labels() {
        let g = parse("# header\n\nalice bob # trailing\nbob carol\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.label(0), "alice");
        assert_eq!(g.label(2), "carol");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse("0 1\n2 2"),
            Err(GraphError::SelfLoop { line: 2, .. })
        ));
        assert!(matches!(
            parse("0 1\n1 2 3"),
            Err(GraphError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse("0 1\n2 3\n4 5"),
            Err(GraphError::Disconnected { components: 3 })
        ));
        assert!(matches!(parse("# nothing"), Err(GraphError::Empty)));
        assert!(matches!(
            Graph::from_edges(3, [(0, 1)]),
            Err(GraphError::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn barabasi_albert_counts() {
        let g = Graph::barabasi_albert(100, 1, 7).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (100, 99));

        let g = Graph::barabasi_albert(2, 1, 12345).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        // 3 seed-clique edges plus 2 per each of the 47 later nodes
        let g = Graph::barabasi_albert(50, 2, 3).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (50, 97));

        assert!(Graph::barabasi_albert(1, 2, 0).is_err());
        assert!(Graph::barabasi_albert(3, 3, 0).is_err());
        assert!(Graph::barabasi_albert(5, 0, 0).is_err());
    }

    #[test]
    fn barabasi_albert_is_deterministic() {
        let a = Graph::barabasi_albert(60, 2, 9).unwrap();
        let b = Graph::barabasi_albert(60, 2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        let c = Graph::barabasi_albert(60, 2, 10).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn closeness_on_small_graphs() {
        let path = parse("0 1\n1 2").unwrap();
        let c = Centrality::compute(&path);
        assert_relative_eq!(c.closeness[0], 1.0 / 3.0);
        assert_relative_eq!(c.closeness[1], 1.0 / 2.0);
        assert_relative_eq!(c.closeness[2], 1.0 / 3.0);

        let k4 = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        for &ci in &Centrality::compute(&k4).closeness {
            assert_relative_eq!(ci, 1.0 / 3.0);
        }

        let star = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let c = Centrality::compute(&star);
        assert_relative_eq!(c.closeness[0], 0.25);
        for &leaf in &c.closeness[1..] {
            // 1 to the centre plus 2 to each of three other leaves
            assert_relative_eq!(leaf, 1.0 / 7.0);
        }
    }

    #[test]
    fn closeness_uniform_on_cycle() {
        let n = 9;
        let g = Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap();
        let c = Centrality::compute(&g);
        for &ci in &c.closeness {
            assert_relative_eq!(ci, c.closeness[0]);
        }
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = Graph::barabasi_albert(30, 2, 1).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = Graph::parse_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back.edge_count(), g.edge_count());
        assert_eq!(back.content_hash(), g.content_hash());
    }
}
