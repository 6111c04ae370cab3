//! Latent interpolation: straight lines and curvature-guided grid paths.
//!
//! The curvature-guided path runs Dijkstra over the 8-connected nodes of a
//! [`ResponseGrid`], weighting each node by `exp(-gamma * H)` with the mean
//! curvature clipped at its 99th-percentile magnitude. High-curvature
//! regions mark the neighborhood of the model's self-consistent set, so the
//! path prefers them; singular cells (where the field norm vanishes) sit on
//! that set and get the full clip value.

use std::collections::BinaryHeap;

use crate::geometry::{ResponseGrid, ScalarMap};
use crate::stats::percentile;
use crate::vae::VaeModel;
use crate::{Error, Result};

/// `n_points` evenly spaced points from `a` to `b` inclusive, computed as
/// `a * (1 - t) + b * t` so the endpoints are reproduced exactly.
pub fn straight_path(a: &[f64], b: &[f64], n_points: usize) -> Result<Vec<Vec<f64>>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "endpoints have different dimensions: {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("endpoints must be finite"));
    }
    if n_points < 2 {
        return Err(Error::invalid("a path needs at least 2 points"));
    }
    let last = (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            let t = i as f64 / last;
            // Equal coordinates are pinned: the blend below would wobble by
            // an ulp at interior t.
            a.iter()
                .zip(b)
                .map(|(x, y)| if x == y { *x } else { x * (1.0 - t) + y * t })
                .collect()
        })
        .collect())
}

/// A node path on a [`ResponseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    /// Visited nodes as `(ix, iy)`, endpoints included.
    pub nodes: Vec<(usize, usize)>,
    /// Full latent-space positions of the nodes.
    pub points: Vec<Vec<f64>>,
    /// Accumulated edge cost.
    pub cost: f64,
}

/// Traversal weight of every node, flat-indexed `iy * resolution + ix`.
///
/// Curvature is clipped at the 99th percentile of its magnitude over regular
/// cells; singular cells count as the positive clip value.
pub(crate) fn node_weights(map: &ScalarMap, gamma: f64) -> Result<Vec<f64>> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let regular = map.regular_values();
    if regular.is_empty() {
        return Err(Error::invalid("map has no regular cells"));
    }
    let magnitudes: Vec<f64> = regular.iter().map(|v| v.abs()).collect();
    let cap = percentile(&magnitudes, 99.0)?;
    let r = map.resolution();
    let mut weights = Vec::with_capacity(r * r);
    for iy in 0..r {
        for ix in 0..r {
            let h = match map.value(ix, iy) {
                Some(v) => v.clamp(-cap, cap),
                None => cap,
            };
            let w = (-gamma * h).exp();
            if !w.is_finite() {
                return Err(Error::non_finite(format!(
                    "node weight overflowed at gamma {gamma}, curvature {h}"
                )));
            }
            weights.push(w);
        }
    }
    Ok(weights)
}

const NEIGHBOR_OFFSETS: [(i64, i64); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Min-heap entry ordered by cost, then node index (for a deterministic pop
/// order among equal costs).
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the cheapest first.
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest 8-connected node path from `start` to `goal` (in-plane positions
/// inside the grid range, snapped to their nearest grid nodes).
///
/// An edge from `p` to `q` costs `|p - q| * (w_p + w_q) / 2` with the node
/// weights of [`node_weights`]; all costs are positive, so the path is a true
/// shortest path. Ties are broken deterministically: a relaxation replaces
/// the stored predecessor only for strictly smaller cost, or for equal cost
/// and a smaller flat predecessor index.
///
/// The returned waypoints are the node positions with the exact requested
/// endpoints prepended/appended (dropped when they coincide with the snapped
/// node), so the path always starts at `start` and ends at `goal`. Equal
/// endpoints yield a single-point path with zero cost.
pub fn curvature_path(
    grid: &ResponseGrid,
    map: &ScalarMap,
    start: (f64, f64),
    goal: (f64, f64),
    gamma: f64,
) -> Result<GridPath> {
    if map.resolution() != grid.resolution()
        || map.dims() != grid.dims()
        || map.range() != grid.range()
    {
        return Err(Error::shape("map geometry does not match the grid".to_string()));
    }
    if ![start.0, start.1, goal.0, goal.1].iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("endpoints must be finite"));
    }
    let (lo, hi) = grid.range();
    for (label, (x, y)) in [("start", start), ("goal", goal)] {
        if x < lo || x > hi || y < lo || y > hi {
            return Err(Error::invalid(format!(
                "{label} endpoint ({x}, {y}) lies outside the grid range [{lo}, {hi}]"
            )));
        }
    }
    let weights = node_weights(map, gamma)?;
    let r = grid.resolution();
    let flat = |ix: usize, iy: usize| iy * r + ix;

    let dims = grid.dims();
    let exact = |(x, y): (f64, f64)| {
        let mut p = grid.anchor().to_vec();
        p[dims.0] = x;
        p[dims.1] = y;
        p
    };

    let (sx, sy) = grid.nearest_node(start.0, start.1);
    let (gx, gy) = grid.nearest_node(goal.0, goal.1);
    let (start_id, goal_id) = (flat(sx, sy), flat(gx, gy));
    if start == goal {
        return Ok(GridPath { nodes: vec![(sx, sy)], points: vec![exact(start)], cost: 0.0 });
    }
    if start_id == goal_id {
        // Distinct endpoints in the same cell: keep the shared node between
        // them so consecutive waypoints stay within one grid step.
        let mut points = vec![exact(start), grid.point(sx, sy), exact(goal)];
        points.dedup();
        return Ok(GridPath { nodes: vec![(sx, sy)], points, cost: 0.0 });
    }

    let step = grid.step();
    let n = r * r;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    dist[start_id] = 0.0;
    pred[start_id] = start_id;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { cost: 0.0, node: start_id });

    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        if cost > dist[node] {
            continue;
        }
        settled[node] = true;
        let (iy, ix) = (node / r, node % r);
        for (dy, dx) in NEIGHBOR_OFFSETS {
            let (nyi, nxi) = (iy as i64 + dy, ix as i64 + dx);
            if nyi < 0 || nxi < 0 || nyi >= r as i64 || nxi >= r as i64 {
                continue;
            }
            let neighbor = flat(nxi as usize, nyi as usize);
            let length = step * ((dx * dx + dy * dy) as f64).sqrt();
            let cand = dist[node] + length * (weights[node] + weights[neighbor]) * 0.5;
            if cand < dist[neighbor] {
                dist[neighbor] = cand;
                pred[neighbor] = node;
                heap.push(HeapEntry { cost: cand, node: neighbor });
            } else if cand == dist[neighbor] && node < pred[neighbor] {
                pred[neighbor] = node;
            }
        }
    }

    let mut nodes_rev = Vec::new();
    let mut cur = goal_id;
    loop {
        nodes_rev.push((cur % r, cur / r));
        if cur == start_id {
            break;
        }
        cur = pred[cur];
    }
    nodes_rev.reverse();
    let mut points = Vec::with_capacity(nodes_rev.len() + 2);
    points.push(exact(start));
    points.extend(nodes_rev.iter().map(|&(ix, iy)| grid.point(ix, iy)));
    points.push(exact(goal));
    points.dedup();
    Ok(GridPath { nodes: nodes_rev, points, cost: dist[goal_id] })
}

/// Total polyline length of a point sequence.
pub fn path_length(points: &[Vec<f64>]) -> f64 {
    points.windows(2).map(|w| euclid(&w[0], &w[1])).sum()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// How a latent path behaves in observation space.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AmbientMetrics {
    /// Summed distance between consecutive decoded points.
    pub total_length: f64,
    /// Largest single decoded segment — the "jump" a path makes when it
    /// crosses a hole in the data manifold.
    pub max_jump: f64,
}

/// Decodes `path` and measures its observation-space geometry. A single-point
/// path has zero length and zero jump.
pub fn ambient_metrics(model: &VaeModel, path: &[Vec<f64>]) -> Result<AmbientMetrics> {
    if path.is_empty() {
        return Err(Error::invalid("path has no points"));
    }
    for p in path {
        if p.len() != model.latent_dim() {
            return Err(Error::shape(format!(
                "path point has {} coordinates, model latent dim is {}",
                p.len(),
                model.latent_dim()
            )));
        }
    }
    let decoded: Vec<Vec<f64>> = path.iter().map(|p| model.decode(p)).collect();
    let mut total = 0.0;
    let mut max_jump = 0.0f64;
    for w in decoded.windows(2) {
        let d = euclid(&w[0], &w[1]);
        total += d;
        max_jump = max_jump.max(d);
    }
    if !total.is_finite() {
        return Err(Error::non_finite("decoded path length is non-finite"));
    }
    Ok(AmbientMetrics { total_length: total, max_jump })
}
