//! AntTree construction over the first window, aggregation into a
//! prototype-only synopsis, and streaming maintenance of that synopsis.
//!
//! Every ant is a data point that walks down from the support and connects
//! under the node it is dissimilar enough to the other daughters of. The
//! first-level subtrees below the support are the classes. Once the first
//! window is placed, [`AntTree::aggregate`] folds every subtree rooted at
//! `fold_depth` into a single prototype node and drops the raw points; only
//! [`TreeSynopsis`] survives, and later points are absorbed into it through
//! [`TreeSynopsis::map_point`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    euclidean, merge_prototype, ClusterSummary, ClusteringSolution, DataPoint, Origin, SolutionId,
    WindowBatch,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

/// The artificial root every ant starts from.
pub const SUPPORT: NodeId = NodeId(0);

/// A point is absorbed by its nearest node when it lies within this multiple
/// of the node's running mean absorption distance.
pub const ACCEPT_FACTOR: f64 = 3.0;

/// Per-ant tolerance, relaxed after every failed connection attempt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub sim: f64,
    pub dissim: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            sim: 1.0,
            dissim: 0.0,
        }
    }
}

impl Thresholds {
    pub fn relax(&mut self) {
        self.sim *= 0.9;
        self.dissim = (self.dissim + 0.01).min(1.0);
    }
}

/// Euclidean affinity normalized by the first window's diameter, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub d_max: f64,
}

impl Similarity {
    pub fn sim(&self, a: &[f64], b: &[f64]) -> f64 {
        let dist = euclidean(a, b);
        if self.d_max > 0.0 {
            (1.0 - dist / self.d_max).max(0.0)
        } else if dist == 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Anything that can sit on a tree node and be compared by position.
pub trait Located {
    fn position(&self) -> &[f64];
}

impl Located for DataPoint {
    fn position(&self) -> &[f64] {
        &self.coords
    }
}

/// Node payload after aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynopsisNode {
    pub summary: ClusterSummary,
    /// Running mean distance of the points this node absorbed.
    pub radius: f64,
    radius_samples: f64,
    absorbed: f64,
}

impl Located for SynopsisNode {
    fn position(&self) -> &[f64] {
        &self.summary.prototype
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AntNode<P> {
    pub id: NodeId,
    /// `None` only on the support.
    pub payload: Option<P>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// An ant waiting to be connected.
#[derive(Clone, Debug, PartialEq)]
pub struct Ant<P> {
    pub id: NodeId,
    pub payload: P,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConnectAction<P> {
    ConnectedAt(NodeId),
    /// The ant moved one level down; it is handed back for the next attempt.
    MovedTo(NodeId, Ant<P>),
    /// The ant connected at the support after the second first-level subtree
    /// was detached; its ants must be placed again, in the given order.
    ResetToSupport {
        connected_at: NodeId,
        displaced: Vec<Ant<P>>,
    },
}

/// Result of streaming one point into the synopsis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapEvent {
    Updated(NodeId),
    Created(NodeId),
}

impl MapEvent {
    pub fn node(&self) -> NodeId {
        match *self {
            MapEvent::Updated(n) | MapEvent::Created(n) => n,
        }
    }
}

/// Rooted tree of ants with at most `l_max` daughters per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree<P> {
    nodes: BTreeMap<NodeId, AntNode<P>>,
    l_max: usize,
    dim: usize,
    similarity: Similarity,
    support_reset_done: bool,
    next_id: u64,
    /// Mean nearest-neighbour distance of the first window.
    base_radius: f64,
}

/// Tree under construction; every node carries its raw point.
pub type AntTree = Tree<DataPoint>;
/// Aggregated tree; nodes carry prototypes only.
pub type TreeSynopsis = Tree<SynopsisNode>;

impl<P: Located + Clone> Tree<P> {
    fn empty(dim: usize, l_max: usize, similarity: Similarity, base_radius: f64) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            SUPPORT,
            AntNode {
                id: SUPPORT,
                payload: None,
                parent: None,
                children: Vec::new(),
            },
        );
        Tree {
            nodes,
            l_max,
            dim,
            similarity,
            support_reset_done: false,
            next_id: 1,
            base_radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn support_id(&self) -> NodeId {
        SUPPORT
    }

    /// Number of nodes excluding the support.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: NodeId) -> Option<&AntNode<P>> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &AntNode<P>> {
        self.nodes.values().filter(|n| n.id != SUPPORT)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.nodes.get(&id).map_or(&[], |n| n.children.as_slice())
    }

    fn position(&self, id: NodeId) -> &[f64] {
        self.nodes[&id]
            .payload
            .as_ref()
            .expect("support has no position")
            .position()
    }

    /// One step of the connection rule for an ant standing on `pos`.
    pub fn connect_ant(
        &mut self,
        ant: Ant<P>,
        pos: NodeId,
        thresholds: &Thresholds,
    ) -> Result<ConnectAction<P>> {
        if ant.payload.position().len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: ant.payload.position().len(),
            });
        }
        let Some(node) = self.nodes.get(&pos) else {
            return Err(Error::UnknownNode(pos.0));
        };
        let children = node.children.clone();

        if children.len() <= 1 {
            let id = ant.id;
            self.attach(ant, pos);
            return Ok(ConnectAction::ConnectedAt(id));
        }

        if pos == SUPPORT && children.len() == 2 && !self.support_reset_done {
            self.support_reset_done = true;
            let displaced = self.detach_subtree(children[1]);
            let id = ant.id;
            self.attach(ant, pos);
            return Ok(ConnectAction::ResetToSupport {
                connected_at: id,
                displaced,
            });
        }

        let here = ant.payload.position();
        let mut plus = children[0];
        let mut plus_sim = f64::NEG_INFINITY;
        for &c in &children {
            let s = self.similarity.sim(here, self.position(c));
            // strict comparison keeps the lowest id on ties; children are not
            // stored in id order after resets, so compare ids too
            if s > plus_sim || (s == plus_sim && c < plus) {
                plus = c;
                plus_sim = s;
            }
        }
        let mut t_dissim = f64::INFINITY;
        for (i, &a) in children.iter().enumerate() {
            for &b in &children[i + 1..] {
                t_dissim = t_dissim.min(self.similarity.sim(self.position(a), self.position(b)));
            }
        }

        let has_room = children.len() < self.l_max;
        let dissimilar_enough = plus_sim < t_dissim + thresholds.dissim;
        let similar_to_pos =
            pos != SUPPORT && self.similarity.sim(here, self.position(pos)) >= thresholds.sim;
        if has_room && (dissimilar_enough || similar_to_pos) {
            let id = ant.id;
            self.attach(ant, pos);
            Ok(ConnectAction::ConnectedAt(id))
        } else {
            Ok(ConnectAction::MovedTo(plus, ant))
        }
    }

    /// Walks an ant down from the support until it connects. Returns ants
    /// displaced by a support reset, if one happened.
    fn place(&mut self, mut ant: Ant<P>) -> Result<(NodeId, Vec<Ant<P>>)> {
        let mut pos = SUPPORT;
        let mut thresholds = Thresholds::default();
        loop {
            match self.connect_ant(ant, pos, &thresholds)? {
                ConnectAction::ConnectedAt(id) => return Ok((id, Vec::new())),
                ConnectAction::ResetToSupport {
                    connected_at,
                    displaced,
                } => return Ok((connected_at, displaced)),
                ConnectAction::MovedTo(next, back) => {
                    ant = back;
                    pos = next;
                    thresholds.relax();
                }
            }
        }
    }

    fn attach(&mut self, ant: Ant<P>, parent: NodeId) {
        self.nodes
            .get_mut(&parent)
            .expect("parent exists")
            .children
            .push(ant.id);
        self.next_id = self.next_id.max(ant.id.0 + 1);
        self.nodes.insert(
            ant.id,
            AntNode {
                id: ant.id,
                payload: Some(ant.payload),
                parent: Some(parent),
                children: Vec::new(),
            },
        );
    }

    /// Removes the subtree rooted at `root`, returning its ants in depth-first
    /// preorder.
    fn detach_subtree(&mut self, root: NodeId) -> Vec<Ant<P>> {
        if let Some(parent) = self.nodes[&root].parent {
            self.nodes
                .get_mut(&parent)
                .expect("parent exists")
                .children
                .retain(|&c| c != root);
        }
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let node = self.nodes.remove(&id).expect("subtree node exists");
            stack.extend(node.children.iter().rev());
            out.push(Ant {
                id,
                payload: node.payload.expect("non-support node"),
            });
        }
        out
    }

    fn depths(&self) -> BTreeMap<NodeId, usize> {
        let mut depth = BTreeMap::new();
        let mut stack = vec![(SUPPORT, 0usize)];
        while let Some((id, d)) = stack.pop() {
            depth.insert(id, d);
            for &c in &self.nodes[&id].children {
                stack.push((c, d + 1));
            }
        }
        depth
    }

    /// Nodes of the subtree rooted at `root`, depth-first preorder.
    pub fn subtree(&self, root: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some(n) = self.nodes.get(&id) {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Directly connected nodes of `node`, excluding the support.
    pub fn neighbors(&self, node: NodeId) -> Result<BTreeSet<NodeId>> {
        if node == SUPPORT {
            return Err(Error::Precondition(
                "the support has no neighbourhood".into(),
            ));
        }
        let n = self.nodes.get(&node).ok_or(Error::UnknownNode(node.0))?;
        let mut out: BTreeSet<NodeId> = n.children.iter().copied().collect();
        if let Some(p) = n.parent.filter(|&p| p != SUPPORT) {
            out.insert(p);
        }
        Ok(out)
    }

    /// Checks the structural invariants: a single parentless support, one
    /// consistent parent per node, at most `l_max` daughters, every node
    /// reachable from the support (hence no cycles).
    pub fn check_structure(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Precondition(m));
        for node in self.nodes.values() {
            if node.children.len() > self.l_max {
                return fail(format!(
                    "node {} has {} daughters",
                    node.id.0,
                    node.children.len()
                ));
            }
            match (node.id == SUPPORT, node.parent) {
                (true, Some(_)) => return fail("support has a parent".into()),
                (false, None) => return fail(format!("node {} has no parent", node.id.0)),
                (false, Some(p)) => {
                    let ok = self
                        .nodes
                        .get(&p)
                        .is_some_and(|pn| pn.children.iter().filter(|&&c| c == node.id).count() == 1);
                    if !ok {
                        return fail(format!("node {} not listed under its parent", node.id.0));
                    }
                }
                (true, None) => {}
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![SUPPORT];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return fail(format!("node {} reached twice", id.0));
            }
            stack.extend(self.nodes[&id].children.iter().copied());
        }
        if seen.len() != self.nodes.len() {
            return fail("unreachable nodes".into());
        }
        Ok(())
    }
}

impl AntTree {
    /// Builds the tree from the first window. Ant `i` of the window becomes
    /// node `i + 1`.
    pub fn build(window: &WindowBatch, l_max: usize) -> Result<AntTree> {
        if window.is_empty() {
            return Err(Error::EmptyInput);
        }
        if l_max < 2 {
            return Err(Error::InvalidConfig("l_max must be at least 2".into()));
        }
        let dim = window.dim()?;
        let (d_max, base_radius) = diameter_and_mean_nn(&window.points);
        let mut tree = Tree::empty(dim, l_max, Similarity { d_max }, base_radius);

        let mut queue: VecDeque<Ant<DataPoint>> = window
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| Ant {
                id: NodeId(i as u64 + 1),
                payload: p.clone(),
            })
            .collect();
        while let Some(ant) = queue.pop_front() {
            let (_, displaced) = tree.place(ant)?;
            queue.extend(displaced);
        }
        tree.next_id = window.len() as u64 + 1;
        Ok(tree)
    }

    /// Folds every subtree rooted at depth `fold_depth` into its root and
    /// discards all raw points. Returns the synopsis and, for every window
    /// point (by arrival index), the node that absorbed it.
    pub fn aggregate(self, fold_depth: usize) -> (TreeSynopsis, Vec<(u64, NodeId)>) {
        let depth = self.depths();
        let mut synopsis: TreeSynopsis = Tree::empty(
            self.dim,
            self.l_max,
            self.similarity,
            self.base_radius,
        );
        synopsis.support_reset_done = true;
        synopsis.next_id = self.next_id;
        let mut absorbed_by = Vec::new();

        // preorder from the support keeps parents ahead of children
        for id in self.subtree(SUPPORT).into_iter().skip(1) {
            let d = depth[&id];
            if d > fold_depth {
                continue;
            }
            let node = &self.nodes[&id];
            let members: Vec<&DataPoint> = if d == fold_depth {
                self.subtree(id)
                    .iter()
                    .map(|m| self.nodes[m].payload.as_ref().expect("non-support"))
                    .collect()
            } else {
                vec![node.payload.as_ref().expect("non-support")]
            };
            let n = members.len() as f64;
            let mut prototype = vec![0.0; self.dim];
            for p in &members {
                for (acc, x) in prototype.iter_mut().zip(&p.coords) {
                    *acc += x;
                }
            }
            prototype.iter_mut().for_each(|v| *v /= n);
            absorbed_by.extend(members.iter().map(|p| (p.index, id)));

            let parent = node.parent.expect("non-support");
            synopsis
                .nodes
                .get_mut(&parent)
                .expect("parent kept")
                .children
                .push(id);
            synopsis.nodes.insert(
                id,
                AntNode {
                    id,
                    payload: Some(SynopsisNode {
                        summary: ClusterSummary::new(prototype, n),
                        radius: self.base_radius,
                        radius_samples: 1.0,
                        absorbed: 0.0,
                    }),
                    parent: Some(parent),
                    children: Vec::new(),
                },
            );
        }
        absorbed_by.sort_unstable();
        (synopsis, absorbed_by)
    }
}

impl TreeSynopsis {
    fn synopsis(&self, id: NodeId) -> &SynopsisNode {
        self.nodes[&id].payload.as_ref().expect("non-support")
    }

    fn synopsis_mut(&mut self, id: NodeId) -> &mut SynopsisNode {
        self.nodes
            .get_mut(&id)
            .and_then(|n| n.payload.as_mut())
            .expect("non-support")
    }

    pub fn summary(&self, id: NodeId) -> Option<&ClusterSummary> {
        self.nodes
            .get(&id)
            .and_then(|n| n.payload.as_ref())
            .map(|s| &s.summary)
    }

    /// Initial acceptance radius given to new nodes.
    pub fn base_radius(&self) -> f64 {
        self.base_radius
    }

    /// Absorbs `point` into its nearest node when it lies within that node's
    /// acceptance radius (boundary included); otherwise the point becomes a
    /// new node, placed by the connection rule from the support.
    pub fn map_point(&mut self, point: &DataPoint, gamma: f64) -> Result<MapEvent> {
        if point.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.dim(),
            });
        }
        let mut nearest: Option<(NodeId, f64)> = None;
        for node in self.nodes() {
            let d = euclidean(&node.payload.as_ref().expect("non-support").summary.prototype, &point.coords);
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((node.id, d));
            }
        }
        if let Some((id, dist)) = nearest {
            let node = self.synopsis(id);
            if dist <= ACCEPT_FACTOR * node.radius {
                let merged = merge_prototype(&node.summary, &point.coords, 1.0, gamma)?;
                let node = self.synopsis_mut(id);
                node.summary = merged;
                node.radius = (node.radius * node.radius_samples + dist) / (node.radius_samples + 1.0);
                node.radius_samples += 1.0;
                node.absorbed += 1.0;
                return Ok(MapEvent::Updated(id));
            }
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let ant = Ant {
            id,
            payload: SynopsisNode {
                summary: ClusterSummary {
                    prototype: point.coords.clone(),
                    count: 1.0,
                    weight: 0.0,
                    compactness_acc: 0.0,
                },
                radius: self.base_radius,
                radius_samples: 1.0,
                absorbed: 1.0,
            },
        };
        self.place(ant)?;
        Ok(MapEvent::Created(id))
    }

    /// Window commit: fades every node weight (refreshed by the points it
    /// absorbed this window) and removes outdated leaves, repeatedly, so a
    /// parent whose daughters were all removed can go too. At least one node
    /// always survives. Returns the number of removed nodes.
    pub fn end_window(&mut self, gamma: f64, prune_threshold: f64) -> usize {
        let ids: Vec<NodeId> = self.nodes().map(|n| n.id).collect();
        for id in ids {
            let node = self.synopsis_mut(id);
            node.summary.weight = gamma * node.summary.weight + node.absorbed;
            node.absorbed = 0.0;
        }
        let mut removed = 0;
        loop {
            let outdated: Vec<NodeId> = self
                .nodes()
                .filter(|n| n.children.is_empty())
                .filter(|n| n.payload.as_ref().expect("non-support").summary.weight < prune_threshold)
                .map(|n| n.id)
                .collect();
            if outdated.is_empty() {
                break;
            }
            let mut progressed = false;
            for id in outdated {
                if self.node_count() <= 1 {
                    break;
                }
                self.detach_subtree(id);
                removed += 1;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        removed
    }

    /// One cluster per first-level subtree: count-weighted mean of its node
    /// prototypes, with summed counts and weights.
    pub fn macro_clusters(&self, id: SolutionId) -> Result<ClusteringSolution> {
        let roots = self.children(SUPPORT);
        if roots.is_empty() {
            return Err(Error::Precondition("tree has no first-level subtree".into()));
        }
        let clusters = roots
            .iter()
            .map(|&root| {
                let members = self.subtree(root);
                let mut prototype = vec![0.0; self.dim];
                let (mut count, mut weight) = (0.0, 0.0);
                for &m in &members {
                    let s = &self.synopsis(m).summary;
                    for (acc, x) in prototype.iter_mut().zip(&s.prototype) {
                        *acc += x * s.count;
                    }
                    count += s.count;
                    weight += s.weight;
                }
                if count > 0.0 {
                    prototype.iter_mut().for_each(|v| *v /= count);
                } else {
                    prototype = self.synopsis(root).summary.prototype.clone();
                }
                ClusterSummary {
                    prototype,
                    count,
                    weight,
                    compactness_acc: 0.0,
                }
            })
            .collect();
        Ok(ClusteringSolution::new(clusters, Origin::Anttree, id))
    }

    /// Flat snapshot records, one per non-support node, in id order.
    pub fn snapshot_records(&self) -> Vec<SnapshotRecord> {
        self.nodes()
            .map(|n| {
                let s = &n.payload.as_ref().expect("non-support").summary;
                SnapshotRecord {
                    node_id: n.id.0,
                    parent_id: n.parent.expect("non-support").0,
                    count: s.count,
                    weight: s.weight,
                    prototype: s.prototype.clone(),
                }
            })
            .collect()
    }
}

/// One line of a tree snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub node_id: u64,
    pub parent_id: u64,
    pub count: f64,
    pub weight: f64,
    pub prototype: Vec<f64>,
}

/// Diameter and mean nearest-neighbour distance of a point set.
fn diameter_and_mean_nn(points: &[DataPoint]) -> (f64, f64) {
    let n = points.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let mut d_max: f64 = 0.0;
    let mut nn = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&points[i].coords, &points[j].coords);
            d_max = d_max.max(d);
            nn[i] = nn[i].min(d);
            nn[j] = nn[j].min(d);
        }
    }
    (d_max, nn.iter().sum::<f64>() / n as f64)
}
