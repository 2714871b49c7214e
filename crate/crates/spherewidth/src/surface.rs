//! Triangulated closed surfaces with an intrinsic edge-length metric.
//!
//! A [`TriSurface`] is a closed, oriented, connected 2-manifold given by
//! triangles over vertex indices. The metric is carried by per-edge lengths;
//! 3D vertex positions are optional and, when present, agree with the edge
//! lengths. All topology and metric invariants are checked at construction,
//! so every live `TriSurface` value is valid.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.0)
            }
        }
    };
}

id_type!(
    /// Index of a vertex.
    VertexId
);
id_type!(
    /// Index of an undirected edge.
    EdgeId
);
id_type!(
    /// Index of a triangle.
    TriId
);

/// A straight geodesic segment between the two apex vertices of an adjacent
/// triangle pair, crossing the shared edge's interior (computed by unfolding
/// the pair into the plane).
///
/// Chords shortcut the worst direction-quantization error of pure edge
/// paths. They are genuine curves on the surface, so distances using them
/// still bound the true metric from above.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChordRec {
    /// Apex of the left triangle, then apex of the right (see [`TriSurface::edge_tris`]).
    pub ends: [VertexId; 2],
    /// The crossed edge.
    pub over: EdgeId,
    /// Unscaled length (multiply by the surface's metric scale).
    pub base_len: f64,
    /// Angle of the chord at each end, inside that corner, measured from the
    /// ray toward the crossed edge's canonical first endpoint.
    pub angle_at: [f64; 2],
}

/// Counts and derived topology of a validated surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SurfaceInfo {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub euler_characteristic: i64,
    pub genus: u32,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("surface has no triangles")]
    Empty,
    #[error("triangle {tri} references vertex {vertex}, but only {count} vertices exist")]
    VertexOutOfRange { tri: u32, vertex: u32, count: usize },
    #[error("triangle {tri} repeats a vertex")]
    DegenerateTriangle { tri: u32 },
    #[error("edge ({u}, {v}) borders {count} triangle sides, expected 2")]
    NonManifoldEdge { u: u32, v: u32, count: usize },
    #[error("edge ({u}, {v}) is traversed twice in the same direction; orientation is inconsistent")]
    InconsistentOrientation { u: u32, v: u32 },
    #[error("vertex {vertex}: incident triangles do not form a single cycle")]
    PinchedVertex { vertex: u32 },
    #[error("vertex {vertex} belongs to no triangle")]
    IsolatedVertex { vertex: u32 },
    #[error("surface is disconnected: vertex {vertex} is unreachable from vertex 0")]
    Disconnected { vertex: u32 },
    #[error("edge ({u}, {v}) has nonpositive or non-finite length {len}")]
    BadLength { u: u32, v: u32, len: f64 },
    #[error("triangle {tri} violates the strict triangle inequality: side lengths {a}, {b}, {c}")]
    TriangleInequality { tri: u32, a: f64, b: f64, c: f64 },
    #[error("scale factor {0} is not positive and finite")]
    BadScale(f64),
}

/// Closed oriented triangulated surface with per-edge intrinsic lengths.
///
/// Metric scaling is stored as a separate factor over immutable base lengths
/// so that repeated `scale_metric` calls compose exactly (`(s*a)*b` and
/// `s*(a*b)` produce bit-identical edge lengths).
#[derive(Clone)]
pub struct TriSurface {
    positions: Option<Vec<[f64; 3]>>,
    tris: Vec<[VertexId; 3]>,
    edges: Vec<[VertexId; 2]>,
    base_lengths: Vec<f64>,
    metric_scale: f64,
    /// For edge `[u, v]` (u < v): `[triangle containing u->v, triangle containing v->u]`.
    edge_tris: Vec<[TriId; 2]>,
    /// Edge `k` of a triangle joins its corners `k` and `(k + 1) % 3`.
    tri_edges: Vec<[EdgeId; 3]>,
    vert_offsets: Vec<u32>,
    /// Neighbors of each vertex in rotational (orientation) order. Entry
    /// `(w, t)` means triangle `t` spans the sector from direction `v->w` to
    /// the next direction in the list.
    fan: Vec<(VertexId, TriId)>,
    fan_edges: Vec<EdgeId>,
    chords: Vec<ChordRec>,
    /// Geodesic arcs inherited from coarser refinement levels (unscaled
    /// lengths). Refining preserves the metric space, so a parent-level chord
    /// remains a valid curve and keeps measured distances monotone under
    /// refinement.
    extra_arcs: Vec<(VertexId, VertexId, f64)>,
    /// Largest corner angle (worst direction gap of pure edge paths).
    gap_edges: f64,
    /// Largest residual direction gap once chords are available.
    gap_measured: f64,
    /// CSR adjacency of the measured metric: edges, chords, and inherited
    /// arcs, unscaled lengths.
    measured_offsets: Vec<u32>,
    measured_adj: Vec<(u32, f64)>,
}

impl fmt::Debug for TriSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriSurface")
            .field("vertices", &self.vert_offsets.len().saturating_sub(1))
            .field("triangles", &self.tris.len())
            .field("metric_scale", &self.metric_scale)
            .field("embedded", &self.positions.is_some())
            .finish()
    }
}

impl TriSurface {
    /// Builds a surface from 3D positions; edge lengths are Euclidean distances.
    pub fn from_positions(
        positions: Vec<[f64; 3]>,
        tris: Vec<[u32; 3]>,
    ) -> Result<Self, TopologyError> {
        let pos = positions.clone();
        let mut s = Self::build(positions.len(), tris, |[u, v]| {
            dist3(pos[u as usize], pos[v as usize])
        })?;
        s.positions = Some(positions);
        Ok(s)
    }

    /// Builds a surface from an abstract metric: `length_of([u, v])` is called
    /// once per undirected edge with `u < v`.
    pub fn from_lengths(
        vertex_count: usize,
        tris: Vec<[u32; 3]>,
        length_of: impl FnMut([u32; 2]) -> f64,
    ) -> Result<Self, TopologyError> {
        Self::build(vertex_count, tris, length_of)
    }

    /// Like [`from_lengths`](Self::from_lengths), but attaches positions as
    /// provenance. The metric still comes from `length_of` alone.
    pub fn from_lengths_with_positions(
        positions: Option<Vec<[f64; 3]>>,
        vertex_count: usize,
        tris: Vec<[u32; 3]>,
        length_of: impl FnMut([u32; 2]) -> f64,
    ) -> Result<Self, TopologyError> {
        let mut s = Self::build(vertex_count, tris, length_of)?;
        if let Some(p) = positions {
            debug_assert_eq!(p.len(), s.vertex_count());
            s.positions = Some(p);
        }
        Ok(s)
    }

    fn build(
        vertex_count: usize,
        raw_tris: Vec<[u32; 3]>,
        mut length_of: impl FnMut([u32; 2]) -> f64,
    ) -> Result<Self, TopologyError> {
        if raw_tris.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (ti, t) in raw_tris.iter().enumerate() {
            for &v in t {
                if v as usize >= vertex_count {
                    return Err(TopologyError::VertexOutOfRange {
                        tri: ti as u32,
                        vertex: v,
                        count: vertex_count,
                    });
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(TopologyError::DegenerateTriangle { tri: ti as u32 });
            }
        }

        let tris: Vec<[VertexId; 3]> = raw_tris
            .iter()
            .map(|t| [VertexId(t[0]), VertexId(t[1]), VertexId(t[2])])
            .collect();

        // Collect undirected edges; each must appear exactly once per direction.
        let mut edge_ids: HashMap<(u32, u32), EdgeId> = HashMap::new();
        let mut edges: Vec<[VertexId; 2]> = Vec::new();
        // Directed occupancy: edge -> [tri with u->v, tri with v->u].
        let mut dir_tris: Vec<[Option<TriId>; 2]> = Vec::new();
        let mut tri_edges: Vec<[EdgeId; 3]> = vec![[EdgeId(0); 3]; tris.len()];

        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                let a = t[k].0;
                let b = t[(k + 1) % 3].0;
                let key = (a.min(b), a.max(b));
                let eid = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push([VertexId(key.0), VertexId(key.1)]);
                    dir_tris.push([None, None]);
                    EdgeId(edges.len() as u32 - 1)
                });
                tri_edges[ti][k] = eid;
                let slot = if a < b { 0 } else { 1 };
                match dir_tris[eid.idx()][slot] {
                    None => dir_tris[eid.idx()][slot] = Some(TriId(ti as u32)),
                    Some(_) => {
                        return Err(TopologyError::InconsistentOrientation { u: key.0, v: key.1 })
                    }
                }
            }
        }

        let mut edge_tris = Vec::with_capacity(edges.len());
        for (ei, slots) in dir_tris.iter().enumerate() {
            match (slots[0], slots[1]) {
                (Some(a), Some(b)) => edge_tris.push([a, b]),
                _ => {
                    let [u, v] = edges[ei];
                    return Err(TopologyError::NonManifoldEdge {
                        u: u.0,
                        v: v.0,
                        count: slots.iter().flatten().count(),
                    });
                }
            }
        }

        // Rotational order around each vertex; also detects pinched vertices.
        let mut succ: Vec<HashMap<u32, (u32, TriId)>> = vec![HashMap::new(); vertex_count];
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                let v = t[k].0;
                let x = t[(k + 1) % 3].0;
                let y = t[(k + 2) % 3].0;
                // At corner v, triangle occupies the sector from v->x to v->y.
                succ[v as usize].insert(x, (y, TriId(ti as u32)));
            }
        }
        let mut vert_offsets = Vec::with_capacity(vertex_count + 1);
        let mut fan = Vec::new();
        let mut fan_edges = Vec::new();
        vert_offsets.push(0u32);
        for v in 0..vertex_count {
            let map = &succ[v];
            if map.is_empty() {
                return Err(TopologyError::IsolatedVertex { vertex: v as u32 });
            }
            let start = *map.keys().min().unwrap();
            let mut w = start;
            loop {
                let &(next, tri) = map
                    .get(&w)
                    .ok_or(TopologyError::PinchedVertex { vertex: v as u32 })?;
                fan.push((VertexId(w), tri));
                let key = (w.min(v as u32), w.max(v as u32));
                fan_edges.push(edge_ids[&key]);
                w = next;
                if w == start {
                    break;
                }
                if fan.len() - vert_offsets[v] as usize > map.len() {
                    return Err(TopologyError::PinchedVertex { vertex: v as u32 });
                }
            }
            if fan.len() - vert_offsets[v] as usize != map.len() {
                return Err(TopologyError::PinchedVertex { vertex: v as u32 });
            }
            vert_offsets.push(fan.len() as u32);
        }

        // Connectivity over the 1-skeleton.
        let mut seen = vec![false; vertex_count];
        let mut stack = vec![0u32];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            let lo = vert_offsets[v as usize] as usize;
            let hi = vert_offsets[v as usize + 1] as usize;
            for &(w, _) in &fan[lo..hi] {
                if !seen[w.idx()] {
                    seen[w.idx()] = true;
                    stack.push(w.0);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(TopologyError::Disconnected { vertex: v as u32 });
        }

        let mut base_lengths = Vec::with_capacity(edges.len());
        for e in &edges {
            let len = length_of([e[0].0, e[1].0]);
            if !(len > 0.0 && len.is_finite()) {
                return Err(TopologyError::BadLength {
                    u: e[0].0,
                    v: e[1].0,
                    len,
                });
            }
            base_lengths.push(len);
        }
        for (ti, te) in tri_edges.iter().enumerate() {
            let a = base_lengths[te[0].idx()];
            let b = base_lengths[te[1].idx()];
            let c = base_lengths[te[2].idx()];
            if a + b <= c || b + c <= a || a + c <= b {
                return Err(TopologyError::TriangleInequality {
                    tri: ti as u32,
                    a,
                    b,
                    c,
                });
            }
        }

        let mut s = TriSurface {
            positions: None,
            tris,
            edges,
            base_lengths,
            metric_scale: 1.0,
            edge_tris,
            tri_edges,
            vert_offsets,
            fan,
            fan_edges,
            chords: Vec::new(),
            extra_arcs: Vec::new(),
            gap_edges: 0.0,
            gap_measured: 0.0,
            measured_offsets: Vec::new(),
            measured_adj: Vec::new(),
        };
        s.compute_chords();
        s.rebuild_measured_adj();
        Ok(s)
    }

    /// Unfolds every adjacent triangle pair and records the apex-to-apex
    /// chord when the straight unfolded segment crosses the shared edge's
    /// interior; also tracks the residual direction gaps.
    fn compute_chords(&mut self) {
        let mut gap_corner: Vec<[f64; 3]> = (0..self.tri_count())
            .map(|t| {
                let t = TriId(t as u32);
                [
                    self.corner_angle(t, 0),
                    self.corner_angle(t, 1),
                    self.corner_angle(t, 2),
                ]
            })
            .collect();
        self.gap_edges = gap_corner
            .iter()
            .flatten()
            .cloned()
            .fold(0.0, f64::max);

        let mut chords = Vec::new();
        for ei in 0..self.edges.len() {
            let e = EdgeId(ei as u32);
            let [b, d] = self.edges[ei];
            let l = self.base_lengths[ei];
            let [t1, t2] = self.edge_tris[ei];
            let apex_of = |t: TriId| {
                let tv = self.tris[t.idx()];
                let k = tv.iter().position(|&v| v != b && v != d).unwrap();
                (tv[k], k)
            };
            let (a, ka) = apex_of(t1);
            let (c, kc) = apex_of(t2);
            if a == c {
                continue;
            }
            let len_between = |x: VertexId, y: VertexId| {
                let t = if x == a || y == a { t1 } else { t2 };
                let tv = self.tris[t.idx()];
                let te = self.tri_edges[t.idx()];
                for k in 0..3 {
                    let (p, q) = (tv[k], tv[(k + 1) % 3]);
                    if (p == x && q == y) || (p == y && q == x) {
                        return self.base_lengths[te[k].idx()];
                    }
                }
                unreachable!("edge within incident triangle");
            };
            let ab = len_between(a, b);
            let ad = len_between(a, d);
            let cb = len_between(c, b);
            let cd = len_between(c, d);
            let xa = (ab * ab + l * l - ad * ad) / (2.0 * l);
            let ya = (ab * ab - xa * xa).max(0.0).sqrt();
            let xc = (cb * cb + l * l - cd * cd) / (2.0 * l);
            let yc = -(cb * cb - xc * xc).max(0.0).sqrt();
            if !(ya > 0.0 && yc < 0.0) {
                continue;
            }
            let xstar = xa + (xc - xa) * ya / (ya - yc);
            if !(xstar > 0.0 && xstar < l) {
                continue;
            }
            let base_len = ((xa - xc) * (xa - xc) + (ya - yc) * (ya - yc)).sqrt();
            let angle = |px: f64, py: f64, qx: f64, qy: f64| {
                // Angle between (px, py) and (qx, qy).
                (px * qy - py * qx).abs().atan2(px * qx + py * qy)
            };
            let ang_a = angle(-xa, -ya, xstar - xa, -ya);
            let ang_c = angle(-xc, -yc, xstar - xc, -yc);
            // The chord splits the apex corner; the residual gap there is the
            // larger of the two sub-angles.
            let mut sub = |t: TriId, k: usize, split: f64| {
                let full = gap_corner[t.idx()][k];
                gap_corner[t.idx()][k] = split.max(full - split).min(full);
            };
            sub(t1, ka, ang_a);
            sub(t2, kc, ang_c);
            chords.push(ChordRec {
                ends: [a, c],
                over: e,
                base_len,
                angle_at: [ang_a, ang_c],
            });
        }
        self.gap_measured = gap_corner
            .iter()
            .flatten()
            .cloned()
            .fold(0.0, f64::max);
        self.chords = chords;
    }

    fn rebuild_measured_adj(&mut self) {
        let nv = self.vertex_count();
        let mut counts = vec![0u32; nv + 1];
        for v in 0..nv {
            counts[v + 1] = self.vertex_degree(VertexId(v as u32)) as u32;
        }
        for ch in &self.chords {
            counts[ch.ends[0].idx() + 1] += 1;
            counts[ch.ends[1].idx() + 1] += 1;
        }
        for &(u, v, _) in &self.extra_arcs {
            counts[u.idx() + 1] += 1;
            counts[v.idx() + 1] += 1;
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut adj = vec![(0u32, 0.0f64); counts[nv] as usize];
        let mut cursor = counts.clone();
        let mut push = |c: &mut Vec<u32>, at: usize, item: (u32, f64)| {
            adj[c[at] as usize] = item;
            c[at] += 1;
        };
        for v in 0..nv {
            let lo = self.vert_offsets[v] as usize;
            let hi = self.vert_offsets[v + 1] as usize;
            for i in lo..hi {
                let w = self.fan[i].0;
                let len = self.base_lengths[self.fan_edges[i].idx()];
                push(&mut cursor, v, (w.0, len));
            }
        }
        for ch in &self.chords {
            push(&mut cursor, ch.ends[0].idx(), (ch.ends[1].0, ch.base_len));
            push(&mut cursor, ch.ends[1].idx(), (ch.ends[0].0, ch.base_len));
        }
        for &(u, v, len) in &self.extra_arcs {
            push(&mut cursor, u.idx(), (v.0, len));
            push(&mut cursor, v.idx(), (u.0, len));
        }
        self.measured_offsets = counts;
        self.measured_adj = adj;
    }

    pub fn vertex_count(&self) -> usize {
        self.vert_offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn tri_count(&self) -> usize {
        self.tris.len()
    }

    pub fn tris(&self) -> &[[VertexId; 3]] {
        &self.tris
    }

    pub fn edges(&self) -> &[[VertexId; 2]] {
        &self.edges
    }

    #[inline]
    pub fn edge_length(&self, e: EdgeId) -> f64 {
        self.base_lengths[e.idx()] * self.metric_scale
    }

    /// Unscaled edge length. Geometry internals accumulate these and apply
    /// the scale factor once at the boundary, so scaling a surface scales
    /// every derived quantity exactly.
    #[inline]
    pub(crate) fn base_edge_length(&self, e: EdgeId) -> f64 {
        self.base_lengths[e.idx()]
    }

    /// Scaled positions, if the surface carries an embedding.
    pub fn position(&self, v: VertexId) -> Option<[f64; 3]> {
        self.positions.as_ref().map(|p| {
            let q = p[v.idx()];
            [
                q[0] * self.metric_scale,
                q[1] * self.metric_scale,
                q[2] * self.metric_scale,
            ]
        })
    }

    pub fn has_positions(&self) -> bool {
        self.positions.is_some()
    }

    /// Factor by which the stored base metric is scaled (1 unless the surface
    /// came from [`scale_metric`](Self::scale_metric)).
    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    /// The two triangles incident to an edge: `[left, right]` where `left`
    /// contains the directed edge `u->v` for the canonical `u < v` order.
    #[inline]
    pub fn edge_tris(&self, e: EdgeId) -> [TriId; 2] {
        self.edge_tris[e.idx()]
    }

    /// Edge `k` joins corners `k` and `(k + 1) % 3` of the triangle.
    #[inline]
    pub fn tri_edges(&self, t: TriId) -> [EdgeId; 3] {
        self.tri_edges[t.idx()]
    }

    #[inline]
    pub fn tri(&self, t: TriId) -> [VertexId; 3] {
        self.tris[t.idx()]
    }

    #[inline]
    pub fn edge(&self, e: EdgeId) -> [VertexId; 2] {
        self.edges[e.idx()]
    }

    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<EdgeId> {
        self.fan_slice(u)
            .iter()
            .position(|&(w, _)| w == v)
            .map(|i| self.fan_edges[self.vert_offsets[u.idx()] as usize + i])
    }

    fn fan_slice(&self, v: VertexId) -> &[(VertexId, TriId)] {
        let lo = self.vert_offsets[v.idx()] as usize;
        let hi = self.vert_offsets[v.idx() + 1] as usize;
        &self.fan[lo..hi]
    }

    /// Neighbors of `v` with connecting edges, in rotational order.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, EdgeId)> + '_ {
        let lo = self.vert_offsets[v.idx()] as usize;
        let hi = self.vert_offsets[v.idx() + 1] as usize;
        self.fan[lo..hi]
            .iter()
            .zip(&self.fan_edges[lo..hi])
            .map(|(&(w, _), &e)| (w, e))
    }

    /// The cyclic triangle fan around `v`: `(neighbor, triangle)` pairs where
    /// the triangle spans the sector from that neighbor to the next one.
    pub fn fan(&self, v: VertexId) -> &[(VertexId, TriId)] {
        self.fan_slice(v)
    }

    pub fn vertex_degree(&self, v: VertexId) -> usize {
        self.fan_slice(v).len()
    }

    /// Neighbors of `v` in the measured metric (edges, chords, and inherited
    /// arcs) with scaled lengths. This is the metric all reported distances
    /// and diameters are measured in; it never exceeds the pure edge metric
    /// and never drops below the underlying piecewise-flat metric.
    pub fn measured_neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        let lo = self.measured_offsets[v.idx()] as usize;
        let hi = self.measured_offsets[v.idx() + 1] as usize;
        self.measured_adj[lo..hi]
            .iter()
            .map(|&(w, len)| (VertexId(w), len * self.metric_scale))
    }

    /// Measured-metric adjacency with unscaled lengths.
    pub(crate) fn measured_neighbors_base(
        &self,
        v: VertexId,
    ) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        let lo = self.measured_offsets[v.idx()] as usize;
        let hi = self.measured_offsets[v.idx() + 1] as usize;
        self.measured_adj[lo..hi]
            .iter()
            .map(|&(w, len)| (VertexId(w), len))
    }

    /// All apex-to-apex chords across adjacent triangle pairs.
    pub fn chords(&self) -> &[ChordRec] {
        &self.chords
    }

    /// Geodesic arcs carried over from coarser refinement levels, with
    /// scaled lengths.
    pub fn inherited_arcs(&self) -> impl Iterator<Item = (VertexId, VertexId, f64)> + '_ {
        self.extra_arcs
            .iter()
            .map(|&(u, v, len)| (u, v, len * self.metric_scale))
    }

    /// Worst angular gap between consecutive realizable path directions at a
    /// corner: for the pure edge metric, or for the measured metric where
    /// chords bisect corners they cross.
    pub fn direction_gap(&self, measured: bool) -> f64 {
        if measured {
            self.gap_measured
        } else {
            self.gap_edges
        }
    }

    pub fn info(&self) -> SurfaceInfo {
        let v = self.vertex_count() as i64;
        let e = self.edge_count() as i64;
        let f = self.tri_count() as i64;
        let chi = v - e + f;
        SurfaceInfo {
            vertices: v as usize,
            edges: e as usize,
            triangles: f as usize,
            euler_characteristic: chi,
            genus: ((2 - chi) / 2).max(0) as u32,
        }
    }

    pub fn genus(&self) -> u32 {
        self.info().genus
    }

    /// Corner angle at corner `k` of triangle `t` in the flat-triangle model.
    pub fn corner_angle(&self, t: TriId, k: usize) -> f64 {
        let te = self.tri_edges[t.idx()];
        // Sides adjacent to corner k are edges k and k+2; the opposite side is k+1.
        let a = self.base_lengths[te[k].idx()];
        let b = self.base_lengths[te[(k + 2) % 3].idx()];
        let c = self.base_lengths[te[(k + 1) % 3].idx()];
        let cos = ((a * a + b * b - c * c) / (2.0 * a * b)).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Total cone angle at a vertex (2π exactly when the metric is flat there).
    pub fn total_angle(&self, v: VertexId) -> f64 {
        self.fan_slice(v)
            .iter()
            .map(|&(w, t)| {
                let tv = self.tris[t.idx()];
                let k = tv.iter().position(|&x| x == v).unwrap();
                debug_assert_eq!(tv[(k + 1) % 3], w);
                self.corner_angle(t, k)
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.base_lengths.iter().sum::<f64>() / self.base_lengths.len() as f64 * self.metric_scale
    }

    pub fn max_edge_length(&self) -> f64 {
        self.base_lengths.iter().cloned().fold(0.0, f64::max) * self.metric_scale
    }

    /// Returns a copy with every edge length multiplied by `lambda`.
    ///
    /// Combinatorics are untouched; positions, if present, scale along so the
    /// embedding stays consistent with the metric.
    pub fn scale_metric(&self, lambda: f64) -> Result<TriSurface, TopologyError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(TopologyError::BadScale(lambda));
        }
        let mut s = self.clone();
        s.metric_scale *= lambda;
        Ok(s)
    }

    /// `level` rounds of 4-to-1 midpoint subdivision in the flat-triangle
    /// model: every new edge length is half of an original length, which is
    /// exact both intrinsically and for linearly interpolated positions.
    pub fn refine(&self, level: u32) -> TriSurface {
        let mut s = self.clone();
        for _ in 0..level {
            s = s.refine_once();
        }
        s
    }

    fn refine_once(&self) -> TriSurface {
        let nv = self.vertex_count();
        let ne = self.edge_count();
        let mid = |e: EdgeId| (nv + e.idx()) as u32;

        let mut tris = Vec::with_capacity(self.tri_count() * 4);
        for (ti, t) in self.tris.iter().enumerate() {
            let te = self.tri_edges[ti];
            let [a, b, c] = [t[0].0, t[1].0, t[2].0];
            let (mab, mbc, mca) = (mid(te[0]), mid(te[1]), mid(te[2]));
            tris.push([a, mab, mca]);
            tris.push([mab, b, mbc]);
            tris.push([mca, mbc, c]);
            tris.push([mab, mbc, mca]);
        }

        // New edge lengths: halves of parent-edge lengths. A midpoint-to-midpoint
        // edge inside a triangle is parallel to the side joining the two
        // untouched corners, so it inherits half of that side's length.
        let mut lengths: HashMap<(u32, u32), f64> = HashMap::new();
        let mut put = |a: u32, b: u32, len: f64| {
            lengths.insert((a.min(b), a.max(b)), len);
        };
        for (ei, e) in self.edges.iter().enumerate() {
            let half = self.base_lengths[ei] * 0.5;
            put(e[0].0, mid(EdgeId(ei as u32)), half);
            put(e[1].0, mid(EdgeId(ei as u32)), half);
        }
        for ti in 0..self.tri_count() {
            let te = self.tri_edges[ti];
            // The medial edge between the midpoints of sides k and k+1 is
            // parallel to the side joining corners k and k+2 (edge k+2) and
            // half as long.
            for k in 0..3 {
                let m1 = mid(te[k]);
                let m2 = mid(te[(k + 1) % 3]);
                put(m1, m2, self.base_lengths[te[(k + 2) % 3].idx()] * 0.5);
            }
        }

        let positions = self.positions.as_ref().map(|p| {
            let mut q = p.clone();
            q.reserve(ne);
            for e in &self.edges {
                let a = p[e[0].idx()];
                let b = p[e[1].idx()];
                q.push([
                    (a[0] + b[0]) * 0.5,
                    (a[1] + b[1]) * 0.5,
                    (a[2] + b[2]) * 0.5,
                ]);
            }
            q
        });

        let mut s = match &positions {
            // Positions stay authoritative for embedded surfaces.
            Some(pos) => {
                let pos2 = pos.clone();
                TriSurface::build(nv + ne, tris, |[u, v]| {
                    dist3(pos2[u as usize], pos2[v as usize])
                })
                .expect("refinement preserves validity")
            }
            None => TriSurface::build(nv + ne, tris, |[u, v]| lengths[&(u.min(v), u.max(v))])
                .expect("refinement preserves validity"),
        };
        s.positions = positions;
        s.metric_scale = self.metric_scale;
        // Parent chords and previously inherited arcs survive refinement: the
        // metric space is unchanged, so those geodesic segments still exist.
        let mut arcs = self.extra_arcs.clone();
        arcs.extend(
            self.chords
                .iter()
                .map(|ch| (ch.ends[0], ch.ends[1], ch.base_len)),
        );
        s.extra_arcs = arcs;
        s.rebuild_measured_adj();
        s
    }
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Re-checks all construction invariants and reports counts and genus.
pub fn validate_surface(s: &TriSurface) -> SurfaceInfo {
    s.info()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriSurface {
        let pos = vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        let tris = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriSurface::from_positions(pos, tris).unwrap()
    }

    #[test]
    fn tetrahedron_is_a_sphere() {
        let s = tetrahedron();
        let info = s.info();
        assert_eq!(info.vertices, 4);
        assert_eq!(info.edges, 6);
        assert_eq!(info.triangles, 4);
        assert_eq!(info.euler_characteristic, 2);
        assert_eq!(info.genus, 0);
    }

    #[test]
    fn boundary_edge_is_rejected() {
        let pos = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let err = TriSurface::from_positions(pos, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, TopologyError::NonManifoldEdge { .. }));
    }

    #[test]
    fn reversed_triangle_is_rejected() {
        let pos = vec![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        // Last triangle flipped against the other three.
        let tris = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 3, 2]];
        let err = TriSurface::from_positions(pos, tris).unwrap_err();
        assert!(matches!(err, TopologyError::InconsistentOrientation { .. }));
    }

    #[test]
    fn scale_composes_exactly() {
        let s = tetrahedron();
        let a = s.scale_metric(1.0 / 3.0).unwrap().scale_metric(10.0).unwrap();
        let b = s.scale_metric((1.0 / 3.0) * 10.0).unwrap();
        for e in 0..s.edge_count() {
            let e = EdgeId(e as u32);
            assert_eq!(a.edge_length(e).to_bits(), b.edge_length(e).to_bits());
        }
    }

    #[test]
    fn refine_multiplies_triangles_by_four() {
        let s = tetrahedron();
        let r = s.refine(2);
        assert_eq!(r.tri_count(), s.tri_count() * 16);
        assert_eq!(r.info().genus, 0);
        assert_eq!(r.info().euler_characteristic, 2);
    }

    #[test]
    fn refine_halves_edge_lengths_exactly() {
        let s = tetrahedron();
        let r = s.refine(1);
        let expect = s.edge_length(EdgeId(0)) * 0.5;
        // Every refined edge of a regular tetrahedron has the same length.
        for e in 0..r.edge_count() {
            assert_eq!(r.edge_length(EdgeId(e as u32)).to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn fans_are_single_cycles() {
        let s = tetrahedron().refine(1);
        for v in 0..s.vertex_count() {
            let v = VertexId(v as u32);
            assert_eq!(s.fan(v).len(), s.vertex_degree(v));
            let total = s.total_angle(v);
            assert!(total > 0.0 && total < 3.0 * std::f64::consts::PI);
        }
    }

    #[test]
    fn positions_match_lengths_after_refine() {
        let s = tetrahedron().refine(1);
        for (ei, e) in s.edges().iter().enumerate() {
            let pa = s.position(e[0]).unwrap();
            let pb = s.position(e[1]).unwrap();
            let d = dist3(pa, pb);
            let l = s.edge_length(EdgeId(ei as u32));
            assert!((d - l).abs() <= 1e-15 * l.max(1.0));
        }
    }
}
