//! Compact metric graphs: vertices, edges with lengths, points on edges and
//! the shortest-path metric.
//!
//! Vertices are identified externally by arbitrary integer ids and stored in
//! ascending id order; edges are stored in ascending edge-id order. Both
//! orders are what the mesh uses for dof numbering, so they never change
//! after construction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u64,
    /// Index of the start vertex (arc-length 0).
    pub from: usize,
    /// Index of the end vertex (arc-length `length`).
    pub to: usize,
    pub length: f64,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.from == self.to
    }
}

/// A position on a metric graph given as (edge index, arc length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphPoint {
    pub edge: usize,
    pub t: f64,
}

impl GraphPoint {
    pub fn new(edge: usize, t: f64) -> Self {
        Self { edge, t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertex_ids: Vec<u64>,
    edges: Vec<Edge>,
    degrees: Vec<usize>,
}

impl MetricGraph {
    /// Builds a graph from `(from, to, length)` triples; edge ids are the
    /// positions in the list.
    pub fn from_edge_list(edges: &[(u64, u64, f64)]) -> Result<Self> {
        let records: Vec<_> = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b, l))| (i as u64, a, b, l))
            .collect();
        Self::from_records(&records)
    }

    /// Builds a graph from `(edge id, from, to, length)` records.
    pub fn from_records(records: &[(u64, u64, u64, f64)]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut seen = BTreeSet::new();
        for &(id, _, _, length) in records {
            if !seen.insert(id) {
                return Err(Error::DuplicateEdge(id));
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(Error::NonPositiveLength { edge: id, length });
            }
        }
        let vertex_ids: Vec<u64> = records
            .iter()
            .flat_map(|&(_, a, b, _)| [a, b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<u64, usize> =
            vertex_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let mut sorted = records.to_vec();
        sorted.sort_by_key(|r| r.0);
        let edges: Vec<Edge> = sorted
            .into_iter()
            .map(|(id, a, b, length)| Edge {
                id,
                from: index[&a],
                to: index[&b],
                length,
            })
            .collect();

        let mut degrees = vec![0usize; vertex_ids.len()];
        for e in &edges {
            degrees[e.from] += 1;
            degrees[e.to] += 1;
        }

        let graph = Self {
            vertex_ids,
            edges,
            degrees,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.vertex_ids.len();
        let adjacency = self.adjacency();
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in &adjacency[v] {
                if !visited[w] {
                    visited[w] = true;
                    stack.push(w);
                }
            }
        }
        match visited.iter().position(|&seen| !seen) {
            Some(v) => Err(Error::DisconnectedGraph {
                root: self.vertex_ids[0],
                vertex: self.vertex_ids[v],
            }),
            None => Ok(()),
        }
    }

    /// Parses the line-oriented graph format:
    ///
    /// ```text
    /// # comment
    /// edge <id> <from> <to> <length>
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            if fields.len() != 5 || fields[0] != "edge" {
                return Err(parse_err(format!(
                    "expected `edge <id> <from> <to> <length>`, got `{line}`"
                )));
            }
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|e| parse_err(format!("bad integer `{s}`: {e}")))
            };
            let length = fields[4]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad length `{}`: {e}", fields[4])))?;
            records.push((int(fields[1])?, int(fields[2])?, int(fields[3])?, length));
        }
        Self::from_records(&records)
    }

    /// Serializes back into the text format accepted by [`MetricGraph::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(
                out,
                "edge {} {} {} {}",
                e.id, self.vertex_ids[e.from], self.vertex_ids[e.to], e.length
            );
        }
        out
    }

    /// A builtin name, or else the path of an edge-list file.
    pub fn load(source: &str) -> Result<Self> {
        if Self::BUILTIN_NAMES.contains(&source) {
            Self::builtin(source)
        } else {
            let text = std::fs::read_to_string(source)
                .map_err(|e| Error::Io(format!("{source}: {e}")))?;
            Self::parse(&text)
        }
    }

    /// Names accepted by [`MetricGraph::builtin`].
    pub const BUILTIN_NAMES: [&'static str; 5] = ["interval", "loop", "tadpole", "star4", "triangle"];

    pub fn builtin(name: &str) -> Result<Self> {
        let edges: &[(u64, u64, f64)] = match name {
            "interval" => &[(0, 1, 1.0)],
            "loop" => &[(0, 0, 2.0)],
            // circle of length 2 with a pendant edge of length 1
            "tadpole" => &[(0, 0, 2.0), (0, 1, 1.0)],
            "star4" => &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)],
            "triangle" => &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown builtin graph `{other}` (expected one of {:?})",
                    Self::BUILTIN_NAMES
                )))
            }
        };
        Self::from_edge_list(edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> &[u64] {
        &self.vertex_ids
    }

    pub fn vertex_index(&self, id: u64) -> Result<usize> {
        self.vertex_ids
            .binary_search(&id)
            .map_err(|_| Error::UnknownVertex(id))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    pub fn edge_index(&self, id: u64) -> Result<usize> {
        self.edges
            .binary_search_by_key(&id, |e| e.id)
            .map_err(|_| Error::UnknownEdge(id))
    }

    /// Number of incident edge endpoints; a loop counts twice.
    pub fn degree(&self, vertex: usize) -> usize {
        self.degrees[vertex]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn min_degree(&self) -> usize {
        self.degrees.iter().copied().min().unwrap_or(0)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    /// For every vertex, the list of (neighbour, edge length) pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertex_ids.len()];
        for e in &self.edges {
            adj[e.from].push((e.to, e.length));
            if !e.is_loop() {
                adj[e.to].push((e.from, e.length));
            }
        }
        adj
    }

    pub fn validate_point(&self, p: GraphPoint) -> Result<()> {
        let edge = self.edges.get(p.edge).ok_or(Error::UnknownEdge(p.edge as u64))?;
        if !(p.t >= 0.0 && p.t <= edge.length) {
            return Err(Error::InvalidPoint {
                edge: edge.id,
                t: p.t,
                length: edge.length,
            });
        }
        Ok(())
    }

    /// Shortest-path distances from `source` to every vertex.
    pub fn vertex_distances(&self, source: usize) -> Vec<f64> {
        self.multi_source_distances(&[(source, 0.0)])
    }

    fn multi_source_distances(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let adjacency = self.adjacency();
        let mut dist = vec![f64::INFINITY; self.vertex_ids.len()];
        let mut heap = BinaryHeap::new();
        for &(v, d) in sources {
            if d < dist[v] {
                dist[v] = d;
                heap.push(State { cost: d, vertex: v });
            }
        }
        while let Some(State { cost, vertex }) = heap.pop() {
            if cost > dist[vertex] {
                continue;
            }
            for &(next, w) in &adjacency[vertex] {
                let candidate = cost + w;
                if candidate < dist[next] {
                    dist[next] = candidate;
                    heap.push(State {
                        cost: candidate,
                        vertex: next,
                    });
                }
            }
        }
        dist
    }

    /// Length of the shortest path in the graph between two points.
    pub fn shortest_distance(&self, x: GraphPoint, y: GraphPoint) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        let ex = &self.edges[x.edge];
        let ey = &self.edges[y.edge];
        // leave x's edge through either endpoint
        let dist = self.multi_source_distances(&[(ex.from, x.t), (ex.to, ex.length - x.t)]);
        let mut best = (dist[ey.from] + y.t).min(dist[ey.to] + ey.length - y.t);
        if x.edge == y.edge {
            best = best.min((x.t - y.t).abs());
        }
        Ok(best)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct State {
    cost: f64,
    vertex: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
