//! Graph-metric distance machinery.
//!
//! Two discrete metrics coexist. The measured metric runs over edges plus
//! unfolded triangle-pair chords (and arcs inherited through refinement); it
//! is what every reported distance, diameter, and width uses, and it tracks
//! the piecewise-flat metric closely. The pure edge metric is kept for
//! constructions whose correctness arguments need paths lying in the
//! 1-skeleton (cycle searches, cut curves, map assembly). Both metrics bound
//! the true one from above, and `measured <= edge` pointwise.
//!
//! All searches are deterministic Dijkstras: heap ties break on vertex id, so
//! fields, parents, and everything derived from them are reproducible bit for
//! bit. Internally every accumulation runs over unscaled base lengths and the
//! surface's scale factor is applied once on output, which makes scaling a
//! surface by `lambda` scale every derived distance by exactly `lambda` (bit
//! for bit when the original scale factor is 1). The declared gap against the
//! piecewise-flat metric is [`metric_tolerance`].

use crate::surface::{EdgeId, TriSurface, VertexId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("vertex {0:?} is unreachable from the source")]
    Unreachable(VertexId),
    #[error("empty point set")]
    EmptySet,
}

/// f64 with the IEEE total order, for use as a heap key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct TotalF64(pub f64);

impl Eq for TotalF64 {}

impl PartialOrd for TotalF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TotalF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shortest-path distances from a source (a vertex, or a weighted seed set).
pub struct DistanceField {
    pub source: Option<VertexId>,
    /// Distances in base (unscaled) units.
    pub(crate) base: Vec<f64>,
    pub(crate) scale: f64,
    pub parent: Vec<Option<VertexId>>,
    /// Declared relative bound of this field against the piecewise-flat
    /// metric (distances may exceed the true ones by at most this fraction).
    pub tolerance: f64,
}

impl DistanceField {
    /// Distance from the source set to `v`, in metric units.
    pub fn value(&self, v: VertexId) -> f64 {
        self.base[v.idx()] * self.scale
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Farthest vertex and its distance; ties break on the smaller id.
    pub fn max(&self) -> (VertexId, f64) {
        let mut best = (VertexId(0), f64::NEG_INFINITY);
        for (i, &d) in self.base.iter().enumerate() {
            if d > best.1 {
                best = (VertexId(i as u32), d);
            }
        }
        (best.0, best.1 * self.scale)
    }

    /// Vertex chain from the source (or nearest seed) to `v`, inclusive.
    pub fn path_to(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = vec![v];
        while let Some(p) = self.parent[path.last().unwrap().idx()] {
            path.push(p);
        }
        path.reverse();
        path
    }

    /// All distances in metric units (no copy when the scale factor is 1).
    pub fn into_values(self) -> Vec<f64> {
        let mut d = self.base;
        if self.scale != 1.0 {
            for x in &mut d {
                *x *= self.scale;
            }
        }
        d
    }
}

fn dijkstra(
    s: &TriSurface,
    seeds: &[(VertexId, f64)],
    measured: bool,
) -> (Vec<f64>, Vec<Option<VertexId>>) {
    let nv = s.vertex_count();
    let mut dist = vec![f64::INFINITY; nv];
    let mut parent: Vec<Option<VertexId>> = vec![None; nv];
    let mut heap: BinaryHeap<Reverse<(TotalF64, u32)>> = BinaryHeap::new();
    for &(v, d0) in seeds {
        if d0 < dist[v.idx()] {
            dist[v.idx()] = d0;
            heap.push(Reverse((TotalF64(d0), v.0)));
        }
    }
    let mut relax = |d: f64,
                     v: u32,
                     w: VertexId,
                     len: f64,
                     dist: &mut Vec<f64>,
                     heap: &mut BinaryHeap<Reverse<(TotalF64, u32)>>| {
        let nd = d + len;
        if nd < dist[w.idx()] {
            dist[w.idx()] = nd;
            parent[w.idx()] = Some(VertexId(v));
            heap.push(Reverse((TotalF64(nd), w.0)));
        }
    };
    while let Some(Reverse((TotalF64(d), v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        if measured {
            for (w, len) in s.measured_neighbors_base(VertexId(v)) {
                relax(d, v, w, len, &mut dist, &mut heap);
            }
        } else {
            for (w, e) in s.neighbors(VertexId(v)) {
                relax(d, v, w, s.base_edge_length(e), &mut dist, &mut heap);
            }
        }
    }
    (dist, parent)
}

fn finish_field(
    s: &TriSurface,
    source: Option<VertexId>,
    base: Vec<f64>,
    parent: Vec<Option<VertexId>>,
    measured: bool,
) -> Result<DistanceField, GeodesicError> {
    if let Some(i) = base.iter().position(|d| !d.is_finite()) {
        return Err(GeodesicError::Unreachable(VertexId(i as u32)));
    }
    Ok(DistanceField {
        source,
        base,
        scale: s.metric_scale(),
        parent,
        tolerance: gap_tolerance(s.direction_gap(measured)),
    })
}

/// Distance field from a single vertex in the measured metric.
pub fn distance_field(s: &TriSurface, src: VertexId) -> Result<DistanceField, GeodesicError> {
    let (dist, parent) = dijkstra(s, &[(src, 0.0)], true);
    finish_field(s, Some(src), dist, parent, true)
}

/// Distance field from a single vertex in the pure edge metric. Parent
/// chains are honest edge paths, which cut-and-label constructions need.
pub fn edge_distance_field(s: &TriSurface, src: VertexId) -> Result<DistanceField, GeodesicError> {
    let (dist, parent) = dijkstra(s, &[(src, 0.0)], false);
    finish_field(s, Some(src), dist, parent, false)
}

fn to_base_seeds(s: &TriSurface, seeds: &[(VertexId, f64)]) -> Vec<(VertexId, f64)> {
    let inv = 1.0 / s.metric_scale();
    seeds.iter().map(|&(v, d)| (v, d * inv)).collect()
}

/// Measured-metric field from a weighted seed set. Seed offsets are in
/// metric units.
pub fn multi_source_field(
    s: &TriSurface,
    seeds: &[(VertexId, f64)],
) -> Result<DistanceField, GeodesicError> {
    if seeds.is_empty() {
        return Err(GeodesicError::EmptySet);
    }
    let (dist, parent) = dijkstra(s, &to_base_seeds(s, seeds), true);
    finish_field(s, None, dist, parent, true)
}

/// Edge-metric field from a weighted seed set (offsets in metric units).
pub fn edge_multi_source_field(
    s: &TriSurface,
    seeds: &[(VertexId, f64)],
) -> Result<DistanceField, GeodesicError> {
    if seeds.is_empty() {
        return Err(GeodesicError::EmptySet);
    }
    let (dist, parent) = dijkstra(s, &to_base_seeds(s, seeds), false);
    finish_field(s, None, dist, parent, false)
}

/// A point of the surface: a vertex, or a point interior to an edge at
/// parameter `t` in [0, 1] measured from the canonical smaller endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SurfacePoint {
    Vertex(VertexId),
    EdgePoint { edge: EdgeId, t: f64 },
}

impl SurfacePoint {
    /// Weighted vertex seeds realizing distances through this point, with
    /// offsets in metric units.
    pub fn seeds(&self, s: &TriSurface) -> Vec<(VertexId, f64)> {
        self.seeds_base(s)
            .into_iter()
            .map(|(v, d)| (v, d * s.metric_scale()))
            .collect()
    }

    pub(crate) fn seeds_base(&self, s: &TriSurface) -> Vec<(VertexId, f64)> {
        match *self {
            SurfacePoint::Vertex(v) => vec![(v, 0.0)],
            SurfacePoint::EdgePoint { edge, t } => {
                let t = t.clamp(0.0, 1.0);
                let [u, v] = s.edge(edge);
                let len = s.base_edge_length(edge);
                vec![(u, t * len), (v, (1.0 - t) * len)]
            }
        }
    }

    /// Distance from a field's source set to this point, in metric units.
    pub fn eval(&self, s: &TriSurface, field: &DistanceField) -> f64 {
        self.eval_base(s, &field.base) * field.scale
    }

    /// Same, over raw base-unit vertex distances.
    pub(crate) fn eval_base(&self, s: &TriSurface, base: &[f64]) -> f64 {
        match *self {
            SurfacePoint::Vertex(v) => base[v.idx()],
            SurfacePoint::EdgePoint { edge, t } => {
                let t = t.clamp(0.0, 1.0);
                let [u, v] = s.edge(edge);
                let len = s.base_edge_length(edge);
                (base[u.idx()] + t * len).min(base[v.idx()] + (1.0 - t) * len)
            }
        }
    }

    /// Ambient position when the surface is embedded.
    pub fn position(&self, s: &TriSurface) -> Option<[f64; 3]> {
        match *self {
            SurfacePoint::Vertex(v) => s.position(v),
            SurfacePoint::EdgePoint { edge, t } => {
                let t = t.clamp(0.0, 1.0);
                let [u, v] = s.edge(edge);
                let pu = s.position(u)?;
                let pv = s.position(v)?;
                Some([
                    pu[0] + t * (pv[0] - pu[0]),
                    pu[1] + t * (pv[1] - pu[1]),
                    pu[2] + t * (pv[2] - pu[2]),
                ])
            }
        }
    }
}

/// Distance field from an arbitrary surface point.
pub fn point_distance_field(
    s: &TriSurface,
    p: &SurfacePoint,
) -> Result<DistanceField, GeodesicError> {
    let seeds = p.seeds_base(s);
    let (dist, parent) = dijkstra(s, &seeds, true);
    finish_field(s, None, dist, parent, true)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SubsetDiameter {
    pub value: f64,
    /// Indices into the queried point set realizing the diameter.
    pub witness: (usize, usize),
}

/// Exact graph-metric diameter of a point set, with a realizing pair.
///
/// Runs one Dijkstra per point, pruned by the standard eccentricity bound:
/// once some point has eccentricity `e0` within the set, any point at
/// distance `d` from it has set-eccentricity at most `d + e0`, so points
/// whose upper bound cannot beat the running maximum are skipped.
pub fn subset_diameter(
    s: &TriSurface,
    pts: &[SurfacePoint],
) -> Result<SubsetDiameter, GeodesicError> {
    let (value, witness) = subset_diameter_base(s, pts)?;
    Ok(SubsetDiameter {
        value: value * s.metric_scale(),
        witness,
    })
}

pub(crate) fn subset_diameter_base(
    s: &TriSurface,
    pts: &[SurfacePoint],
) -> Result<(f64, (usize, usize)), GeodesicError> {
    if pts.is_empty() {
        return Err(GeodesicError::EmptySet);
    }
    if pts.len() == 1 {
        return Ok((0.0, (0, 0)));
    }
    let mut upper = vec![f64::INFINITY; pts.len()];
    let mut best = (-1.0f64, (0usize, 0usize));
    for i in 0..pts.len() {
        if upper[i] <= best.0 {
            continue;
        }
        let (base, _) = dijkstra(s, &pts[i].seeds_base(s), true);
        let mut ecc = 0.0f64;
        for (j, q) in pts.iter().enumerate() {
            let d = q.eval_base(s, &base);
            if d > ecc {
                ecc = d;
            }
            if d > best.0 && i != j {
                best = (d, (i.min(j), i.max(j)));
            }
        }
        for (j, q) in pts.iter().enumerate() {
            let through = q.eval_base(s, &base) + ecc;
            if through < upper[j] {
                upper[j] = through;
            }
        }
    }
    Ok((best.0.max(0.0), best.1))
}

/// Largest distance from `v` to any vertex.
pub fn eccentricity(s: &TriSurface, v: VertexId) -> Result<f64, GeodesicError> {
    Ok(distance_field(s, v)?.max().1)
}

/// Candidate of minimum eccentricity (ties on vertex id), evaluated in
/// parallel, one full field per candidate.
pub fn eccentricity_scan(
    s: &TriSurface,
    candidates: &[VertexId],
) -> Result<(VertexId, f64), GeodesicError> {
    if candidates.is_empty() {
        return Err(GeodesicError::EmptySet);
    }
    let eccs: Vec<(VertexId, f64)> = candidates
        .par_iter()
        .map(|&v| eccentricity(s, v).map(|e| (v, e)))
        .collect::<Result<_, _>>()?;
    Ok(eccs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0 .0.cmp(&b.0 .0)))
        .unwrap())
}

/// Basepoint heuristic: a near-central vertex, chosen as the minimum
/// eccentricity point of a small farthest-point sample.
pub fn choose_basepoint(s: &TriSurface) -> VertexId {
    let sample = farthest_point_sample(s, VertexId(0), 16, None);
    eccentricity_scan(s, &sample).expect("closed surface is connected").0
}

/// Greedy farthest-point sample starting at `start`.
///
/// Stops after `max_count` points, or as soon as every vertex lies within
/// `stop_radius` (metric units) of the chosen set, when given. Always returns
/// at least one point. Ties in the farthest vertex break on id.
pub fn farthest_point_sample(
    s: &TriSurface,
    start: VertexId,
    max_count: usize,
    stop_radius: Option<f64>,
) -> Vec<VertexId> {
    let nv = s.vertex_count();
    let stop_base = stop_radius.map(|r| r / s.metric_scale());
    let mut chosen = vec![start];
    let mut mindist = dijkstra(s, &[(start, 0.0)], true).0;
    loop {
        if chosen.len() >= max_count || chosen.len() >= nv {
            break;
        }
        let mut far = (VertexId(0), f64::NEG_INFINITY);
        for (i, &d) in mindist.iter().enumerate() {
            if d > far.1 {
                far = (VertexId(i as u32), d);
            }
        }
        if let Some(r) = stop_base {
            if far.1 <= r {
                break;
            }
        }
        if far.1 <= 0.0 {
            break;
        }
        chosen.push(far.0);
        let (dnew, _) = dijkstra(s, &[(far.0, 0.0)], true);
        for (m, d) in mindist.iter_mut().zip(&dnew) {
            if *d < *m {
                *m = *d;
            }
        }
    }
    chosen
}

fn gap_tolerance(gap: f64) -> f64 {
    1.0 / (gap / 2.0).cos() - 1.0
}

/// Declared relative tolerance of the measured metric against the underlying
/// piecewise-flat metric: `sec(gap / 2) - 1` for the worst residual direction
/// gap. A shortest path forced across an angular gap of that size overshoots
/// the straight segment by at most that factor.
pub fn metric_tolerance(s: &TriSurface) -> f64 {
    gap_tolerance(s.direction_gap(true))
}

/// Same bound for the pure edge metric (chords ignored).
pub fn edge_metric_tolerance(s: &TriSurface) -> f64 {
    gap_tolerance(s.direction_gap(false))
}

/// Reusable scratch for repeated bounded Dijkstra runs. All quantities are in
/// base (unscaled) units.
///
/// Distances are valid only for entries whose stamp matches the current
/// epoch, so clearing between runs is O(1).
pub(crate) struct DijkstraScratch {
    dist: Vec<f64>,
    parent: Vec<Option<VertexId>>,
    stamp: Vec<u32>,
    /// Pending-target marker, valid when stamped with the current epoch.
    tflag: Vec<u32>,
    epoch: u32,
    heap: BinaryHeap<Reverse<(TotalF64, u32)>>,
}

impl DijkstraScratch {
    pub fn new() -> Self {
        DijkstraScratch {
            dist: Vec::new(),
            parent: Vec::new(),
            stamp: Vec::new(),
            tflag: Vec::new(),
            epoch: 0,
            heap: BinaryHeap::new(),
        }
    }

    fn begin(&mut self, nv: usize) {
        if self.dist.len() != nv {
            self.dist = vec![f64::INFINITY; nv];
            self.parent = vec![None; nv];
            self.stamp = vec![0; nv];
            self.tflag = vec![0; nv];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.tflag.fill(0);
            self.epoch = 1;
        }
        self.heap.clear();
    }

    fn get(&self, v: usize) -> f64 {
        if self.stamp[v] == self.epoch {
            self.dist[v]
        } else {
            f64::INFINITY
        }
    }

    fn set(&mut self, v: usize, d: f64, p: Option<VertexId>) {
        self.dist[v] = d;
        self.parent[v] = p;
        self.stamp[v] = self.epoch;
    }

    /// Runs Dijkstra from `seeds` (base-unit offsets) in the chosen metric,
    /// never expanding beyond distance `cap`, stopping early once every
    /// target vertex is settled. Returns the settled base distance of each
    /// target (infinite if not reached under the cap).
    pub fn bounded_run(
        &mut self,
        s: &TriSurface,
        seeds: &[(VertexId, f64)],
        cap: f64,
        targets: &[VertexId],
        measured: bool,
    ) -> Vec<f64> {
        self.begin(s.vertex_count());
        for &(v, d0) in seeds {
            if d0 <= cap && d0 < self.get(v.idx()) {
                self.set(v.idx(), d0, None);
                self.heap.push(Reverse((TotalF64(d0), v.0)));
            }
        }
        let mut remaining = 0usize;
        for &t in targets {
            if self.tflag[t.idx()] != self.epoch {
                self.tflag[t.idx()] = self.epoch;
                remaining += 1;
            }
        }
        while let Some(&Reverse((TotalF64(d), v))) = self.heap.peek() {
            self.heap.pop();
            if d > self.get(v as usize) {
                continue;
            }
            if self.tflag[v as usize] == self.epoch {
                self.tflag[v as usize] = self.epoch.wrapping_sub(1);
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            if measured {
                for (w, len) in s.measured_neighbors_base(VertexId(v)) {
                    let nd = d + len;
                    if nd <= cap && nd < self.get(w.idx()) {
                        self.set(w.idx(), nd, Some(VertexId(v)));
                        self.heap.push(Reverse((TotalF64(nd), w.0)));
                    }
                }
            } else {
                for (w, e) in s.neighbors(VertexId(v)) {
                    let nd = d + s.base_edge_length(e);
                    if nd <= cap && nd < self.get(w.idx()) {
                        self.set(w.idx(), nd, Some(VertexId(v)));
                        self.heap.push(Reverse((TotalF64(nd), w.0)));
                    }
                }
            }
        }
        targets.iter().map(|&t| self.get(t.idx())).collect()
    }

    /// Base distance of `v` in the most recent run (infinite if unreached).
    pub fn dist_of(&self, v: VertexId) -> f64 {
        self.get(v.idx())
    }

    /// Vertex chain from the nearest seed of the most recent run to `v`.
    pub fn path_to(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = vec![v];
        loop {
            let last = path.last().unwrap().idx();
            if self.stamp[last] != self.epoch {
                break;
            }
            match self.parent[last] {
                Some(p) => path.push(p),
                None => break,
            }
        }
        path.reverse();
        path
    }
}

impl Default for DijkstraScratch {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};

    fn tetra() -> TriSurface {
        TriSurface::from_positions(
            vec![
                [1.0, 1.0, 1.0],
                [1.0, -1.0, -1.0],
                [-1.0, 1.0, -1.0],
                [-1.0, -1.0, 1.0],
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_distances_are_edge_lengths() {
        let s = tetra();
        let f = distance_field(&s, VertexId(0)).unwrap();
        let l = 8.0_f64.sqrt();
        assert_eq!(f.value(VertexId(0)), 0.0);
        for v in 1..4 {
            assert!((f.value(VertexId(v)) - l).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_symmetric() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let s = &g.surface;
        let fa = distance_field(s, VertexId(3)).unwrap();
        let fb = distance_field(s, VertexId(100)).unwrap();
        // Path sums run in opposite orders, so equality is up to rounding.
        let (x, y) = (fa.value(VertexId(100)), fb.value(VertexId(3)));
        assert!((x - y).abs() <= 1e-9 * x.max(y), "{x} vs {y}");
    }

    #[test]
    fn scaling_scales_distances_exactly() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let lambda = 1.0 / 3.0;
        let scaled = g.surface.scale_metric(lambda).unwrap();
        let f = distance_field(&g.surface, VertexId(7)).unwrap();
        let fs = distance_field(&scaled, VertexId(7)).unwrap();
        for v in 0..g.surface.vertex_count() as u32 {
            let v = VertexId(v);
            assert_eq!((f.value(v) * lambda).to_bits(), fs.value(v).to_bits());
        }
    }

    #[test]
    fn edge_point_distance_through_both_endpoints() {
        let s = tetra();
        let e = EdgeId(0);
        let p = SurfacePoint::EdgePoint { edge: e, t: 0.25 };
        let f = point_distance_field(&s, &p).unwrap();
        let [u, v] = s.edge(e);
        let len = s.edge_length(e);
        assert!((f.value(u) - 0.25 * len).abs() < 1e-12);
        assert!((f.value(v) - 0.75 * len).abs() < 1e-12);
    }

    #[test]
    fn subset_diameter_matches_brute_force() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 1,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let s = &g.surface;
        let pts: Vec<SurfacePoint> = [0u32, 7, 13, 21, 30, 41]
            .iter()
            .map(|&v| SurfacePoint::Vertex(VertexId(v)))
            .collect();
        let sd = subset_diameter(s, &pts).unwrap();
        let mut brute = 0.0f64;
        for &p in &pts {
            let f = point_distance_field(s, &p).unwrap();
            for &q in &pts {
                brute = brute.max(q.eval(s, &f));
            }
        }
        assert!((sd.value - brute).abs() < 1e-12);
        let SurfacePoint::Vertex(wa) = pts[sd.witness.0] else {
            unreachable!()
        };
        let wb = pts[sd.witness.1];
        let f = distance_field(s, wa).unwrap();
        assert!((wb.eval(s, &f) - sd.value).abs() < 1e-12);
    }

    #[test]
    fn farthest_point_sample_covers() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let s = &g.surface;
        let pts = farthest_point_sample(s, VertexId(0), usize::MAX, Some(0.8));
        let seeds: Vec<(VertexId, f64)> = pts.iter().map(|&v| (v, 0.0)).collect();
        let f = multi_source_field(s, &seeds).unwrap();
        assert!(f.max().1 <= 0.8);
        assert!(pts.len() >= 4);
    }

    #[test]
    fn bounded_run_matches_full_dijkstra() {
        let g = generate(
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 1.0,
                n: 8,
            },
            0,
        )
        .unwrap();
        let s = &g.surface;
        let full = distance_field(s, VertexId(5)).unwrap();
        let mut scratch = DijkstraScratch::new();
        let targets = [VertexId(60), VertexId(12)];
        let got = scratch.bounded_run(s, &[(VertexId(5), 0.0)], f64::INFINITY, &targets, true);
        assert_eq!(got[0].to_bits(), full.value(targets[0]).to_bits());
        assert_eq!(got[1].to_bits(), full.value(targets[1]).to_bits());
        // Reuse across epochs stays correct, and the edge metric dominates.
        let got2 =
            scratch.bounded_run(s, &[(VertexId(0), 0.0)], f64::INFINITY, &[VertexId(63)], false);
        let full2 = edge_distance_field(s, VertexId(0)).unwrap();
        assert_eq!(got2[0].to_bits(), full2.value(VertexId(63)).to_bits());
    }

    #[test]
    fn measured_metric_never_exceeds_edge_metric() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let s = &g.surface;
        let edge = edge_distance_field(s, VertexId(9)).unwrap();
        let meas = distance_field(s, VertexId(9)).unwrap();
        for v in 0..s.vertex_count() as u32 {
            let v = VertexId(v);
            assert!(meas.value(v) <= edge.value(v) + 1e-12);
        }
        assert!(meas.tolerance < edge.tolerance);
    }

    #[test]
    fn measured_distances_monotone_under_refinement() {
        for kind in [
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 2.0,
                n: 6,
            },
        ] {
            let s = generate(kind, 0).unwrap().surface;
            let fine = s.refine(1);
            let coarse = distance_field(&s, VertexId(1)).unwrap();
            let refined = distance_field(&fine, VertexId(1)).unwrap();
            for v in 0..s.vertex_count() as u32 {
                let v = VertexId(v);
                assert!(
                    refined.value(v) <= coarse.value(v) + 1e-12,
                    "vertex {v:?}: {} vs {}",
                    refined.value(v),
                    coarse.value(v)
                );
            }
        }
    }

    #[test]
    fn icosphere_eccentricity_near_pi() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 3,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let f = distance_field(&g.surface, VertexId(0)).unwrap();
        let (_, ecc) = f.max();
        let ratio = ecc / std::f64::consts::PI;
        assert!(ratio > 0.95 && ratio < 1.05, "ecc/pi = {ratio}");
    }

    #[test]
    fn basepoint_choice_is_deterministic_and_central() {
        let g = generate(
            GenKind::Ellipsoid {
                a: 1.0,
                b: 1.0,
                c: 0.5,
                subdiv: 2,
            },
            0,
        )
        .unwrap();
        let p = choose_basepoint(&g.surface);
        assert_eq!(p, choose_basepoint(&g.surface));
        let ecc_p = eccentricity(&g.surface, p).unwrap();
        let ecc_0 = eccentricity(&g.surface, VertexId(0)).unwrap();
        assert!(ecc_p <= ecc_0 + 1e-12);
    }

    #[test]
    fn metric_tolerance_for_equilateral_fans() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 3,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let edge_tol = edge_metric_tolerance(&g.surface);
        // Near-equilateral triangles: worst corner a bit above 60 degrees,
        // roughly halved once chords split the corners.
        assert!(edge_tol > 0.10 && edge_tol < 0.25, "edge tol {edge_tol}");
        let tol = metric_tolerance(&g.surface);
        assert!(tol > 0.01 && tol < edge_tol, "measured tol {tol}");
    }
}
