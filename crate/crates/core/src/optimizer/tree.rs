//! Bottom-up partition search for one top block.
//!
//! All costs are read from a [`TreeSnapshot`] that is frozen for the whole
//! search: per-pixel residual cost of every class, flag costs under the
//! previous tree's contexts and probabilities, and class-index costs under
//! the previous class map. With these costs the cost of a tree is a sum over
//! its nodes, so choosing each node's best option from its children's best
//! costs is exactly optimal.

use std::collections::HashMap;

use crate::partition::{node_context, Flag, Node, PartitionMode, Region, SplitKind, SplitSet, TreeGeometry};

/// Flag costs in cost units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlagCosts {
    /// `[not split, split]` per binary context.
    Binary(Vec<[u64; 2]>),
    /// `[N, S, A]`.
    Ternary([u64; 3]),
}

#[derive(Debug, Clone)]
pub struct TreeSnapshot<'a> {
    pub geom: &'a TreeGeometry,
    pub classes: usize,
    /// Residual cost of pixel `p` under class `m` at `p * classes + m`.
    pub pixel_cost: &'a [u32],
    pub flag_cost: FlagCosts,
    /// Split nodes of the previous tree, for neighbour contexts.
    pub prev_splits: &'a SplitSet,
    /// Cost of each move-to-front rank.
    pub rank_cost: Vec<u64>,
    /// Classes of the previous tree, for move-to-front neighbours.
    pub prev_class_map: &'a [u16],
}

impl TreeSnapshot<'_> {
    /// Cost of coding `flag` at `region`; zero when the node is a forced leaf.
    pub fn flag_cost(&self, region: &Region, flag: Flag) -> u64 {
        if !self.geom.split_options(region).any() {
            return 0;
        }
        let symbol = match flag {
            Flag::NoSplit => 0,
            Flag::Split(SplitKind::Angular) => 2,
            Flag::Split(_) => 1,
        };
        match &self.flag_cost {
            FlagCosts::Binary(c) => c[node_context(self.geom, region, self.prev_splits)][symbol.min(1)],
            FlagCosts::Ternary(c) => c[symbol],
        }
    }

    /// Class-index cost of class `m` for a leaf at `region`.
    pub fn class_cost(&self, region: &Region, m: usize) -> u64 {
        let mut front: Vec<u16> = Vec::with_capacity(3);
        for c in self.geom.class_neighbour_pixels(region).into_iter().flatten() {
            let c = self.prev_class_map[c];
            if (c as usize) < self.classes && !front.contains(&c) {
                front.push(c);
            }
        }
        let rank = match front.iter().position(|&c| c as usize == m) {
            Some(r) => r,
            None => front.len() + (0..m).filter(|&c| !front.contains(&(c as u16))).count(),
        };
        self.rank_cost[rank]
    }

    /// Residual cost of `region` per class, summed from pixels.
    pub fn region_pixel_cost(&self, region: &Region) -> Vec<u64> {
        let mut sums = vec![0u64; self.classes];
        region.for_each_pixel(self.geom.dims, |p| {
            let row = &self.pixel_cost[p * self.classes..(p + 1) * self.classes];
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += c as u64;
            }
        });
        sums
    }

    /// Best leaf class and the leaf's cost (flag included).
    pub fn leaf(&self, region: &Region, pixel_sums: &[u64]) -> (u16, u64) {
        let (m, c) = (0..self.classes)
            .map(|m| (m, pixel_sums[m] + self.class_cost(region, m)))
            .min_by_key(|&(m, c)| (c, m))
            .unwrap();
        (m as u16, c + self.flag_cost(region, Flag::NoSplit))
    }
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    Leaf(u16),
    Split(SplitKind),
}

struct Search<'s, 'a> {
    snap: &'s TreeSnapshot<'a>,
    sums: HashMap<Region, Vec<u64>>,
    best: HashMap<Region, (u64, Choice)>,
}

impl Search<'_, '_> {
    fn kinds(&self, region: &Region) -> Vec<SplitKind> {
        let opts = self.snap.geom.split_options(region);
        let mut k = Vec::new();
        if opts.primary {
            k.push(self.snap.geom.primary_kind());
        }
        if opts.angular {
            k.push(SplitKind::Angular);
        }
        k
    }

    fn sums(&mut self, region: &Region) -> Vec<u64> {
        if let Some(s) = self.sums.get(region) {
            return s.clone();
        }
        let s = match self.kinds(region).first() {
            Some(&kind) => {
                let mut acc = vec![0u64; self.snap.classes];
                for child in self.snap.geom.children(region, kind).expect("legal split").into_iter().flatten() {
                    for (a, b) in acc.iter_mut().zip(self.sums(&child)) {
                        *a += b;
                    }
                }
                acc
            }
            None => self.snap.region_pixel_cost(region),
        };
        self.sums.insert(*region, s.clone());
        s
    }

    fn solve(&mut self, region: &Region) -> u64 {
        if let Some(&(c, _)) = self.best.get(region) {
            return c;
        }
        let sums = self.sums(region);
        let (class, leaf_cost) = self.snap.leaf(region, &sums);
        let mut best = (leaf_cost, Choice::Leaf(class));
        for kind in self.kinds(region) {
            let mut cost = self.snap.flag_cost(region, Flag::Split(kind));
            for child in self.snap.geom.children(region, kind).expect("legal split").into_iter().flatten() {
                cost += self.solve(&child);
            }
            if cost < best.0 {
                best = (cost, Choice::Split(kind));
            }
        }
        self.best.insert(*region, best);
        best.0
    }

    fn build(&self, region: &Region) -> Node {
        match self.best[region].1 {
            Choice::Leaf(class) => Node::Leaf { class },
            Choice::Split(kind) => Node::Split {
                kind,
                children: self
                    .snap
                    .geom
                    .children(region, kind)
                    .expect("legal split")
                    .iter()
                    .map(|c| c.as_ref().map(|c| self.build(c)))
                    .collect(),
            },
        }
    }
}

/// Cheapest subtree for `top` under the snapshot costs. A split is taken
/// only when strictly cheaper than the leaf; in the dual tree a spatial
/// split wins a tie with an angular one.
pub fn optimise_tree(snap: &TreeSnapshot, top: &Region) -> (Node, u64) {
    let mut s = Search {
        snap,
        sums: HashMap::new(),
        best: HashMap::new(),
    };
    let cost = s.solve(top);
    (s.build(top), cost)
}

/// Cost of a given subtree under the snapshot, summed node by node.
pub fn tree_cost(snap: &TreeSnapshot, region: &Region, node: &Node) -> u64 {
    match node {
        Node::Leaf { class } => {
            snap.region_pixel_cost(region)[*class as usize]
                + snap.class_cost(region, *class as usize)
                + snap.flag_cost(region, Flag::NoSplit)
        }
        Node::Split { kind, children } => {
            let regions = snap.geom.children(region, *kind).expect("legal split");
            snap.flag_cost(region, Flag::Split(*kind))
                + regions
                    .iter()
                    .zip(children)
                    .filter_map(|(r, c)| Some(tree_cost(snap, r.as_ref()?, c.as_ref()?)))
                    .sum::<u64>()
        }
    }
}

/// Split nodes of a tree, keyed for neighbour contexts.
pub fn split_set(geom: &TreeGeometry, roots: &[Node]) -> SplitSet {
    fn walk(geom: &TreeGeometry, r: &Region, n: &Node, out: &mut SplitSet) {
        if let Node::Split { kind, children } = n {
            if *kind != SplitKind::Angular && geom.mode != PartitionMode::Dual {
                out.insert(geom.cell_key(r));
            }
            for (cr, cn) in geom.children(r, *kind).expect("legal split").iter().zip(children) {
                if let (Some(cr), Some(cn)) = (cr, cn) {
                    walk(geom, cr, cn, out);
                }
            }
        }
    }
    let mut out = SplitSet::new();
    for (r, n) in geom.top_regions().iter().zip(roots) {
        walk(geom, r, n, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Dims;
    use crate::partition::HEX_CONTEXTS;

    fn snapshot<'a>(geom: &'a TreeGeometry, costs: &'a [u32], splits: &'a SplitSet, map: &'a [u16], classes: usize) -> TreeSnapshot<'a> {
        TreeSnapshot {
            geom,
            classes,
            pixel_cost: costs,
            flag_cost: match geom.mode {
                PartitionMode::Dual => FlagCosts::Ternary([1 << 16; 3]),
                _ => FlagCosts::Binary(vec![[1 << 16, 1 << 16]; HEX_CONTEXTS]),
            },
            prev_splits: splits,
            rank_cost: vec![0; classes],
            prev_class_map: map,
        }
    }

    #[test]
    fn homogeneous_block_stays_a_leaf() {
        let dims = Dims::new(4, 4, 8, 8);
        let geom = TreeGeometry::new(PartitionMode::Hex, dims);
        let costs: Vec<u32> = (0..dims.pixels() * 2).map(|i| if i % 2 == 0 { 10 } else { 1000 }).collect();
        let splits = SplitSet::new();
        let map = vec![0u16; dims.pixels()];
        let snap = snapshot(&geom, &costs, &splits, &map, 2);
        let top = geom.top_regions()[0];
        let (node, cost) = optimise_tree(&snap, &top);
        assert_eq!(node, Node::Leaf { class: 0 });
        assert_eq!(cost, tree_cost(&snap, &top, &node));
    }

    #[test]
    fn angular_quadrants_choose_angular_split() {
        let dims = Dims::new(4, 4, 8, 8);
        let geom = TreeGeometry::new(PartitionMode::Dual, dims);
        let classes = 4;
        // class q is free on angular quadrant q and expensive elsewhere
        let mut costs = vec![0u32; dims.pixels() * classes];
        for p in 0..dims.pixels() {
            let (t, s, _, _) = dims.coords(p);
            let q = (t / 2) * 2 + s / 2;
            for m in 0..classes {
                costs[p * classes + m] = if m == q { 0 } else { 1 << 20 };
            }
        }
        let splits = SplitSet::new();
        let map = vec![0u16; dims.pixels()];
        let snap = snapshot(&geom, &costs, &splits, &map, classes);
        let top = geom.top_regions()[0];
        let (node, _) = optimise_tree(&snap, &top);
        match node {
            Node::Split { kind, children } => {
                assert_eq!(kind, SplitKind::Angular);
                assert!(children.iter().all(|c| matches!(c, Some(Node::Leaf { .. }))));
            }
            other => panic!("expected angular split, got {other:?}"),
        }
    }
}
