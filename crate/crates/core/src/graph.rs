//! Bit-vector representation of undirected, unweighted graphs.
//!
//! A graph on `n` nodes is a binary vector over the `n(n-1)/2` node pairs,
//! upper-triangle row-major: pair `(u, v)` with `u < v` sits at index
//! `u*n - u*(u+1)/2 + (v - u - 1)`. Everything here is immutable after
//! construction and safe to share across threads.

use std::io::{BufRead, Write};

use crate::partition::NodePairPartition;
use crate::{Error, Result};

/// Number of node pairs of an `n`-node graph.
pub fn pair_count(num_nodes: usize) -> usize {
    num_nodes * num_nodes.saturating_sub(1) / 2
}

/// Bit index of pair `(u, v)`, `u < v`, both in range.
pub fn pair_index(num_nodes: usize, u: usize, v: usize) -> usize {
    debug_assert!(u < v && v < num_nodes);
    u * num_nodes - u * (u + 1) / 2 + (v - u - 1)
}

/// Iterator over all pairs `(u, v)` with `u < v` in bit-index order.
pub fn pair_iter(num_nodes: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..num_nodes).flat_map(move |u| (u + 1..num_nodes).map(move |v| (u, v)))
}

/// Inverse of [`pair_index`].
pub fn index_pair(num_nodes: usize, index: usize) -> (usize, usize) {
    debug_assert!(index < pair_count(num_nodes));
    let mut u = 0;
    let mut row_start = 0;
    loop {
        let row_len = num_nodes - u - 1;
        if index < row_start + row_len {
            return (u, u + 1 + (index - row_start));
        }
        row_start += row_len;
        u += 1;
    }
}

/// An undirected, unweighted graph as a bit vector over its node pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphBits {
    num_nodes: usize,
    bits: Vec<bool>,
}

impl GraphBits {
    /// Graph with `num_nodes` isolated nodes.
    pub fn empty(num_nodes: usize) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        Ok(GraphBits {
            num_nodes,
            bits: vec![false; pair_count(num_nodes)],
        })
    }

    /// Build from a raw bit vector; the length must be `num_nodes choose 2`.
    pub fn from_bits(num_nodes: usize, bits: Vec<bool>) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        let expected = pair_count(num_nodes);
        if bits.len() != expected {
            return Err(Error::invalid(format!(
                "bit vector length {} does not match {} node pairs of a {num_nodes}-node graph",
                bits.len(),
                expected
            )));
        }
        Ok(GraphBits { num_nodes, bits })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_pairs(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bit(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.bits[pair_index(self.num_nodes, a, b)]
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Copy with the given bit indices toggled.
    pub fn flipped(&self, indices: &[usize]) -> Result<Self> {
        let mut bits = self.bits.clone();
        for &k in indices {
            if k >= bits.len() {
                return Err(Error::invalid(format!(
                    "bit index {k} out of range for {} pairs",
                    bits.len()
                )));
            }
            bits[k] = !bits[k];
        }
        Ok(GraphBits {
            num_nodes: self.num_nodes,
            bits,
        })
    }

    /// Node degrees, derived from the bit vector.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for (k, &set) in self.bits.iter().enumerate() {
            if set {
                let (u, v) = index_pair(self.num_nodes, k);
                deg[u] += 1;
                deg[v] += 1;
            }
        }
        deg
    }
}

/// Encode an edge list as a [`GraphBits`]. Edge order and duplicates are
/// ignored; self-loops and out-of-range endpoints are rejected.
pub fn encode_graph(edges: &[(usize, usize)], num_nodes: usize) -> Result<GraphBits> {
    let mut g = GraphBits::empty(num_nodes)?;
    for &(u, v) in edges {
        if u == v {
            return Err(Error::invalid(format!("self-loop at node {u}")));
        }
        if u >= num_nodes || v >= num_nodes {
            return Err(Error::invalid(format!(
                "edge ({u}, {v}) out of range for {num_nodes} nodes"
            )));
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        g.bits[pair_index(num_nodes, a, b)] = true;
    }
    Ok(g)
}

/// Sorted list of the set node pairs; inverse of [`encode_graph`].
pub fn decode_graph(g: &GraphBits) -> Vec<(usize, usize)> {
    pair_iter(g.num_nodes)
        .zip(g.bits.iter())
        .filter_map(|(pair, &set)| set.then_some(pair))
        .collect()
}

/// Per-region Hamming distances between two graphs. Entry `i` counts the
/// differing bits whose pair lies in region `C_i`; the final extra entry
/// counts differing bits in the noise-free set.
pub fn region_distances(
    x: &GraphBits,
    x_tilde: &GraphBits,
    partition: &NodePairPartition,
) -> Result<Vec<usize>> {
    if x.num_nodes != x_tilde.num_nodes {
        return Err(Error::invalid(format!(
            "node count mismatch: {} vs {}",
            x.num_nodes, x_tilde.num_nodes
        )));
    }
    if partition.num_nodes() != x.num_nodes {
        return Err(Error::invalid(format!(
            "partition is over {} nodes, graphs have {}",
            partition.num_nodes(),
            x.num_nodes
        )));
    }
    let c = partition.region_count();
    let mut counts = vec![0usize; c + 1];
    for k in 0..x.bits.len() {
        if x.bits[k] != x_tilde.bits[k] {
            match partition.region_of(k) {
                Some(i) => counts[i] += 1,
                None => counts[c] += 1,
            }
        }
    }
    Ok(counts)
}

/// Total Hamming distance between two same-size graphs.
pub fn hamming_distance(x: &GraphBits, y: &GraphBits) -> Result<usize> {
    if x.num_nodes != y.num_nodes {
        return Err(Error::invalid("node count mismatch"));
    }
    Ok(x.bits.iter().zip(&y.bits).filter(|(a, b)| a != b).count())
}

/// Parse the edge-list text format: first significant line `n <num_nodes>`,
/// then one `u v` pair per line. Lines starting with `#` are comments.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<GraphBits> {
    let mut num_nodes: Option<usize> = None;
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match num_nodes {
            None => {
                if parts.next() != Some("n") {
                    return Err(Error::invalid(format!(
                        "line {}: expected header `n <num_nodes>`",
                        lineno + 1
                    )));
                }
                let n = parts
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::invalid(format!("line {}: bad node count", lineno + 1))
                    })?;
                num_nodes = Some(n);
            }
            Some(_) => {
                let u = parts.next().and_then(|t| t.parse::<usize>().ok());
                let v = parts.next().and_then(|t| t.parse::<usize>().ok());
                match (u, v) {
                    (Some(u), Some(v)) => edges.push((u, v)),
                    _ => {
                        return Err(Error::invalid(format!(
                            "line {}: expected `u v` pair",
                            lineno + 1
                        )))
                    }
                }
            }
        }
        if parts.next().is_some() {
            return Err(Error::invalid(format!(
                "line {}: trailing tokens",
                lineno + 1
            )));
        }
    }
    let n = num_nodes.ok_or_else(|| Error::invalid("missing `n <num_nodes>` header"))?;
    encode_graph(&edges, n)
}

/// Write the edge-list text format; inverse of [`read_edge_list`].
pub fn write_edge_list<W: Write>(mut writer: W, g: &GraphBits) -> Result<()> {
    writeln!(writer, "n {}", g.num_nodes)?;
    for (u, v) in decode_graph(g) {
        writeln!(writer, "{u} {v}")?;
    }
    Ok(())
}
