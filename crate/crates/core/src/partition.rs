//! Disjoint node-pair regions.
//!
//! Every node pair belongs to exactly one region `C_i` or to the
//! distinguished noise-free set. Noise-free pairs are never flipped by the
//! smoothing distribution, so any perturbation touching them is
//! uncertifiable and their radius is pinned to zero.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::graph::{pair_count, pair_index, pair_iter, GraphBits};
use crate::{Error, Result};

/// Assignment of every node pair to a region id in `0..region_count`, or to
/// the noise-free set (`None`). Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePairPartition {
    num_nodes: usize,
    region_of: Vec<Option<usize>>,
    region_sizes: Vec<usize>,
}

impl NodePairPartition {
    /// Build from explicit `(pair, region id)` assignments. Region ids are
    /// compacted to `0..C` in order of first appearance; unassigned pairs
    /// become noise-free. Conflicting duplicate assignments are rejected,
    /// as is an assignment with no regions at all.
    pub fn from_assignments(
        num_nodes: usize,
        assignments: &[((usize, usize), usize)],
    ) -> Result<Self> {
        let mut region_of = vec![None; pair_count(num_nodes)];
        let mut raw_of = vec![None; pair_count(num_nodes)];
        let mut compact: Vec<usize> = Vec::new();
        for &((u, v), raw_id) in assignments {
            if u == v {
                return Err(Error::invalid(format!("self-pair ({u}, {v})")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "pair ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            let k = pair_index(num_nodes, a, b);
            if let Some(existing) = raw_of[k] {
                if existing != raw_id {
                    return Err(Error::invalid(format!(
                        "pair ({a}, {b}) assigned to regions {existing} and {raw_id}"
                    )));
                }
                continue;
            }
            raw_of[k] = Some(raw_id);
            let id = match compact.iter().position(|&r| r == raw_id) {
                Some(id) => id,
                None => {
                    compact.push(raw_id);
                    compact.len() - 1
                }
            };
            region_of[k] = Some(id);
        }
        Self::from_region_ids(num_nodes, compact.len(), region_of)
    }

    /// Direct constructor from already-compact region ids.
    pub(crate) fn from_region_ids(
        num_nodes: usize,
        region_count: usize,
        region_of: Vec<Option<usize>>,
    ) -> Result<Self> {
        if region_count == 0 {
            return Err(Error::invalid("partition must have at least one region"));
        }
        debug_assert_eq!(region_of.len(), pair_count(num_nodes));
        let mut region_sizes = vec![0usize; region_count];
        for id in region_of.iter().flatten() {
            if *id >= region_count {
                return Err(Error::invalid(format!("region id {id} out of range")));
            }
            region_sizes[*id] += 1;
        }
        Ok(NodePairPartition {
            num_nodes,
            region_of,
            region_sizes,
        })
    }

    /// Single region covering every node pair.
    pub fn isotropic(num_nodes: usize) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::invalid(
                "isotropic partition needs at least two nodes",
            ));
        }
        let pairs = pair_count(num_nodes);
        Self::from_region_ids(num_nodes, 1, vec![Some(0); pairs])
    }

    /// Motif/random split: nodes `0..n_motif` form the motif, the rest the
    /// random part. Region 0 holds pairs internal to the motif, region 1
    /// pairs internal to the random part; cross pairs (including the bridge)
    /// are noise-free.
    pub fn motif(n_motif: usize, n_random: usize) -> Result<Self> {
        if n_motif < 3 {
            return Err(Error::invalid(format!(
                "motif needs at least 3 nodes, got {n_motif}"
            )));
        }
        if n_random < 2 {
            return Err(Error::invalid(format!(
                "random part needs at least 2 nodes for a non-empty region, got {n_random}"
            )));
        }
        let n = n_motif + n_random;
        let region_of = pair_iter(n)
            .map(|(u, v)| {
                if v < n_motif {
                    Some(0)
                } else if u >= n_motif {
                    Some(1)
                } else {
                    None
                }
            })
            .collect();
        Self::from_region_ids(n, 2, region_of)
    }

    /// Sparsity-aware split for one graph: existing edges form region 0
    /// (deletions), absent pairs region 1 (additions). No noise-free pairs.
    pub fn sparsity_aware(x: &GraphBits) -> Self {
        let region_of = x
            .bits()
            .iter()
            .map(|&set| Some(if set { 0 } else { 1 }))
            .collect();
        Self::from_region_ids(x.num_nodes(), 2, region_of)
            .expect("two-region partition is always valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_pairs(&self) -> usize {
        self.region_of.len()
    }

    pub fn region_count(&self) -> usize {
        self.region_sizes.len()
    }

    /// Region id of pair index `k`, or `None` for noise-free.
    pub fn region_of(&self, k: usize) -> Option<usize> {
        self.region_of[k]
    }

    pub fn region_assignments(&self) -> &[Option<usize>] {
        &self.region_of
    }

    pub fn region_sizes(&self) -> &[usize] {
        &self.region_sizes
    }

    pub fn noise_free_count(&self) -> usize {
        self.region_of.iter().filter(|r| r.is_none()).count()
    }

    /// Pair indices of one region, in bit-index order.
    pub fn region_members(&self, region: usize) -> Vec<usize> {
        self.region_of
            .iter()
            .enumerate()
            .filter_map(|(k, &r)| (r == Some(region)).then_some(k))
            .collect()
    }
}

/// Write the partition file format: one `u v region_name` line per assigned
/// pair; unlisted pairs are noise-free. `names` must have one entry per
/// region.
pub fn write_partition_file<W: Write>(
    mut writer: W,
    partition: &NodePairPartition,
    names: &[String],
) -> Result<()> {
    if names.len() != partition.region_count() {
        return Err(Error::invalid(format!(
            "{} region names for {} regions",
            names.len(),
            partition.region_count()
        )));
    }
    let n = partition.num_nodes();
    for (k, (u, v)) in pair_iter(n).enumerate() {
        if let Some(id) = partition.region_of(k) {
            writeln!(writer, "{u} {v} {}", names[id])?;
        }
    }
    Ok(())
}

/// Read the partition file format. Region names are mapped to ids
/// alphabetically; returns the partition together with the name table.
pub fn read_partition_file<R: BufRead>(
    reader: R,
    num_nodes: usize,
) -> Result<(NodePairPartition, Vec<String>)> {
    let mut entries: BTreeMap<usize, String> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [u, v, name] = parts.as_slice() else {
            return Err(Error::invalid(format!(
                "line {}: expected `u v region_name`",
                lineno + 1
            )));
        };
        let u: usize = u
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: bad node id", lineno + 1)))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: bad node id", lineno + 1)))?;
        if u == v || u >= num_nodes || v >= num_nodes {
            return Err(Error::invalid(format!(
                "line {}: invalid pair ({u}, {v})",
                lineno + 1
            )));
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let k = pair_index(num_nodes, a, b);
        if let Some(existing) = entries.get(&k) {
            if existing != name {
                return Err(Error::invalid(format!(
                    "pair ({a}, {b}) assigned to both {existing} and {name}"
                )));
            }
            continue;
        }
        entries.insert(k, name.to_string());
    }
    let mut names: Vec<String> = entries.values().cloned().collect();
    names.sort();
    names.dedup();
    if names.is_empty() {
        return Err(Error::invalid("partition file lists no regions"));
    }
    let mut region_of = vec![None; pair_count(num_nodes)];
    for (k, name) in &entries {
        let id = names
            .binary_search(name)
            .expect("name present in sorted table");
        region_of[*k] = Some(id);
    }
    let partition = NodePairPartition::from_region_ids(num_nodes, names.len(), region_of)?;
    Ok((partition, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::encode_graph;
    use proptest::prelude::*;

    #[test]
    fn isotropic_covers_everything() {
        let p = NodePairPartition::isotropic(5).unwrap();
        assert_eq!(p.region_count(), 1);
        assert_eq!(p.region_sizes(), &[10]);
        assert_eq!(p.noise_free_count(), 0);
    }

    #[test]
    fn empty_assignment_rejected() {
        assert!(matches!(
            NodePairPartition::from_assignments(4, &[]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn sparse_assignment_defaults_to_noise_free() {
        let p = NodePairPartition::from_assignments(4, &[((0, 1), 7), ((2, 3), 3)]).unwrap();
        assert_eq!(p.region_count(), 2);
        // raw ids 7 and 3 compacted by first appearance
        assert_eq!(p.region_of(pair_index(4, 0, 1)), Some(0));
        assert_eq!(p.region_of(pair_index(4, 2, 3)), Some(1));
        assert_eq!(p.region_sizes(), &[1, 1]);
        assert_eq!(p.noise_free_count(), 4);
    }

    #[test]
    fn conflicting_assignment_rejected() {
        let err = NodePairPartition::from_assignments(4, &[((0, 1), 0), ((1, 0), 1)]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        // duplicate with the same region is fine
        let ok = NodePairPartition::from_assignments(4, &[((0, 1), 0), ((1, 0), 0)]);
        assert!(ok.is_ok());
    }

    #[test]
    fn motif_partition_sizes() {
        let p = NodePairPartition::motif(10, 10).unwrap();
        assert_eq!(p.region_sizes(), &[45, 45]);
        assert_eq!(p.noise_free_count(), 100);

        let p = NodePairPartition::motif(4, 3).unwrap();
        assert_eq!(p.region_sizes(), &[6, 3]);
        assert_eq!(p.noise_free_count(), 12);
    }

    #[test]
    fn motif_partition_degenerate_rejected() {
        assert!(NodePairPartition::motif(2, 10).is_err());
        assert!(NodePairPartition::motif(3, 1).is_err());
    }

    #[test]
    fn sparsity_aware_examples() {
        let complete = encode_graph(&[(0, 1), (0, 2), (1, 2)], 3).unwrap();
        let p = NodePairPartition::sparsity_aware(&complete);
        assert_eq!(p.region_sizes(), &[3, 0]);

        let empty = GraphBits::empty(3).unwrap();
        let p = NodePairPartition::sparsity_aware(&empty);
        assert_eq!(p.region_sizes(), &[0, 3]);

        let triangle_plus_isolated = encode_graph(&[(0, 1), (0, 2), (1, 2)], 4).unwrap();
        let p = NodePairPartition::sparsity_aware(&triangle_plus_isolated);
        assert_eq!(p.region_sizes(), &[3, 3]);
        assert_eq!(p.noise_free_count(), 0);
    }

    #[test]
    fn partition_file_round_trip() {
        let p = NodePairPartition::motif(3, 2).unwrap();
        let names = vec!["motif".to_string(), "random".to_string()];
        let mut buf = Vec::new();
        write_partition_file(&mut buf, &p, &names).unwrap();
        let (back, back_names) = read_partition_file(buf.as_slice(), 5).unwrap();
        assert_eq!(back, p);
        assert_eq!(back_names, names);
    }

    #[test]
    fn partition_file_names_sorted_alphabetically() {
        let text = "0 1 zebra\n0 2 apple\n";
        let (p, names) = read_partition_file(text.as_bytes(), 3).unwrap();
        assert_eq!(names, vec!["apple".to_string(), "zebra".to_string()]);
        assert_eq!(p.region_of(pair_index(3, 0, 1)), Some(1));
        assert_eq!(p.region_of(pair_index(3, 0, 2)), Some(0));
    }

    #[test]
    fn partition_file_conflict_rejected() {
        let text = "0 1 a\n1 0 b\n";
        assert!(read_partition_file(text.as_bytes(), 3).is_err());
    }

    proptest! {
        #[test]
        fn sizes_plus_noise_free_cover_all_pairs(
            n in 2usize..9,
            seed_bits in proptest::collection::vec(0usize..4, 0..36),
        ) {
            let assignments: Vec<((usize, usize), usize)> = pair_iter(n)
                .zip(seed_bits.iter())
                .filter(|(_, &r)| r != 3)
                .map(|(pair, &r)| (pair, r))
                .collect();
            prop_assume!(!assignments.is_empty());
            let p = NodePairPartition::from_assignments(n, &assignments).unwrap();
            let covered: usize = p.region_sizes().iter().sum::<usize>() + p.noise_free_count();
            prop_assert_eq!(covered, pair_count(n));
        }

        #[test]
        fn sparsity_aware_complement_swaps_regions(
            n in 2usize..8,
            bits in proptest::collection::vec(any::<bool>(), 0..28),
        ) {
            prop_assume!(bits.len() >= pair_count(n));
            let bits = bits[..pair_count(n)].to_vec();
            let complement: Vec<bool> = bits.iter().map(|b| !b).collect();
            let x = GraphBits::from_bits(n, bits).unwrap();
            let xc = GraphBits::from_bits(n, complement).unwrap();
            let p = NodePairPartition::sparsity_aware(&x);
            let pc = NodePairPartition::sparsity_aware(&xc);
            prop_assert_eq!(p.region_sizes()[0], pc.region_sizes()[1]);
            prop_assert_eq!(p.region_sizes()[1], pc.region_sizes()[0]);
            for k in 0..pair_count(n) {
                prop_assert_eq!(p.region_of(k), pc.region_of(k).map(|r| 1 - r));
            }
        }
    }
}
