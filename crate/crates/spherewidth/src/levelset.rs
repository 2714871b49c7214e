//! Level sets of distance fields: component extraction, the diameter
//! estimator `D`, Reeb graphs, and widths of maps.
//!
//! The central sweep orders vertices by `(distance, id)`; the id acts as a
//! symbolic perturbation making the field injective, so between consecutive
//! sorted vertices the combinatorics of the level set is constant (a slab).
//! An edge is active in slab `i` when exactly one endpoint ranks at or below
//! `i`. Triangles then contain zero or two active edges, which chains the
//! edge crossings of one level component into a closed polyline.
//!
//! Component diameters are certified by branch and bound: every sampled
//! component gets a cheap upper bound (half its polyline hop length, and a
//! landmark triangle-inequality bound), and only components whose bound beats
//! the best exact diameter so far are measured exactly. Reported per-fiber
//! values are therefore either exact or upper bounds no larger than `D`.
//!
//! Everything runs in base (unscaled) units internally; public values are in
//! metric units. See the module notes in [`crate::geodesic`].

use crate::geodesic::{
    distance_field, farthest_point_sample, metric_tolerance, subset_diameter_base, DijkstraScratch,
    DistanceField, GeodesicError, SurfacePoint,
};
use crate::surface::{EdgeId, TriId, TriSurface, VertexId};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error("radius {radius} is outside the open range (0, {max})")]
    RadiusOutOfRange { radius: f64, max: f64 },
    #[error("vertex map has {got} entries for {expected} domain vertices")]
    MapSizeMismatch { got: usize, expected: usize },
    #[error("map is not simplicial: {0}")]
    NonSimplicial(String),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// Radius schedule for the level-set scan.
///
/// The default scans every vertex distance value plus the midpoints between
/// consecutive distinct values; component topology only changes at vertex
/// values, so the supremum over all radii is attained at these samples up to
/// interpolation tolerance.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum RadiiPolicy {
    #[default]
    VertexValuesAndMidpoints,
    /// `count` radii spaced evenly in the open range (0, max distance).
    Uniform { count: usize },
    /// Explicit radii in metric units; values outside (0, max) are skipped.
    Explicit(Vec<f64>),
}

/// One connected component of a level set `{dist = R}`.
#[derive(Clone, Debug, Serialize)]
pub struct LevelComponent {
    /// The level value, in metric units.
    pub radius: f64,
    /// Edge crossings in closed polyline order.
    pub points: Vec<SurfacePoint>,
    /// Exact graph-metric diameter of the crossing set.
    pub diameter: f64,
    /// Pair of points realizing the diameter.
    pub witness: (SurfacePoint, SurfacePoint),
}

/// Witness data for the estimator value.
#[derive(Clone, Debug, Serialize)]
pub struct DWitness {
    /// Level value attaining the maximum, in metric units.
    pub radius: f64,
    /// Component id: the smallest active edge of the component.
    pub component: EdgeId,
    /// Pair of level points realizing the diameter.
    pub pair: (SurfacePoint, SurfacePoint),
}

/// Output of [`estimate_D`]: the largest certified diameter of any connected
/// component of a distance sphere around the basepoint, with the closed-form
/// two-sided bounds it induces.
#[derive(Clone, Debug, Serialize)]
pub struct DEstimate {
    pub basepoint: Option<VertexId>,
    /// The estimator value, in metric units.
    pub d: f64,
    pub witness: Option<DWitness>,
    /// `[d / (pi (2 + sqrt 2)), 2 d / pi]`: two-sided bound for the degree-1
    /// hypersphericity (the upper bound also bounds the hypersphericity).
    pub hs_sandwich: [f64; 2],
    /// `[d / (2 (2 + sqrt 2)), d]`: two-sided bound for the Uryson 1-width.
    pub uw1_sandwich: [f64; 2],
    /// Absolute distance slack: `d` times the declared relative metric
    /// tolerance.
    pub tolerance: f64,
    /// Number of distinct radii scanned.
    pub radii_scanned: usize,
    /// Number of components whose diameter was computed exactly (the rest
    /// were pruned by upper bounds below the running maximum).
    pub certified_exactly: usize,
}

/// Reeb graph of a distance field: nodes where level components are born,
/// die, merge, or split; edges are the cylinders of regular slabs between.
#[derive(Clone, Debug, Serialize)]
pub struct ReebGraph {
    pub nodes: Vec<ReebNode>,
    pub edges: Vec<ReebEdge>,
    /// Whether the graph is a tree (`E = V - 1` and connected); guaranteed
    /// for genus-0 surfaces.
    pub is_tree: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReebNode {
    /// Mesh vertex at which the topology event happens.
    pub vertex: VertexId,
    /// Field value at that vertex, in metric units.
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReebEdge {
    /// Node indices at the lower and upper end of the cylinder.
    pub ends: [u32; 2],
    /// Field values spanned, in metric units.
    pub span: [f64; 2],
    /// Largest fiber diameter seen on this cylinder: exact when
    /// `diameter_is_exact`, otherwise a certified upper bound not exceeding
    /// the estimator value for the same field.
    pub fiber_diameter: f64,
    pub diameter_is_exact: bool,
    /// Radius of the fiber attaining `fiber_diameter` (metric units).
    pub witness_radius: f64,
    /// Number of sampled fibers on this cylinder.
    pub samples: u32,
}

impl ReebGraph {
    /// Largest per-fiber diameter over all cylinders.
    pub fn max_fiber_diameter(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.fiber_diameter)
            .fold(0.0, f64::max)
    }

    /// GraphViz DOT rendering with fiber diameters as edge labels.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("graph reeb {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  n{} [label=\"v{} @ {:.6}\"];", i, n.vertex.0, n.value);
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  n{} -- n{} [label=\"diam {:.6}{}\"];",
                e.ends[0],
                e.ends[1],
                e.fiber_diameter,
                if e.diameter_is_exact { "" } else { " (bound)" }
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("reeb graph serializes")
    }
}

/// Width of a map or field: the supremal sampled fiber diameter.
#[derive(Clone, Debug, Serialize)]
pub struct MapWidth {
    /// Largest fiber diameter over the sampled fibers, in metric units.
    pub width: f64,
    pub witness: FiberWitness,
    /// Number of fibers sampled.
    pub samples: usize,
    /// Absolute slack: width times the relative metric tolerance.
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberWitness {
    pub target: TargetSample,
    pub points: Vec<SurfacePoint>,
    /// Pair realizing the fiber diameter, when the fiber has two points.
    pub pair: Option<(SurfacePoint, SurfacePoint)>,
}

/// Where a fiber was sampled.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum TargetSample {
    /// Level set of a distance field at this radius.
    LevelRadius(f64),
    /// Preimage of a target vertex.
    Vertex(VertexId),
    /// Preimage of the point at parameter `t` along a target edge.
    EdgeInterior { edge: EdgeId, t: f64 },
}

// ---------------------------------------------------------------------------
// Slab machinery
// ---------------------------------------------------------------------------

/// Vertex order of the symbolically perturbed field.
struct VertexOrder {
    /// Vertex ids sorted by `(base distance, id)`.
    sorted: Vec<u32>,
    /// Position of each vertex in `sorted`.
    rank: Vec<u32>,
    /// Base distance at `sorted[i]`.
    values: Vec<f64>,
}

fn order_vertices(field: &DistanceField) -> VertexOrder {
    let nv = field.len();
    let mut sorted: Vec<u32> = (0..nv as u32).collect();
    sorted.sort_unstable_by(|&a, &b| {
        field.base[a as usize]
            .total_cmp(&field.base[b as usize])
            .then(a.cmp(&b))
    });
    let mut rank = vec![0u32; nv];
    for (i, &v) in sorted.iter().enumerate() {
        rank[v as usize] = i as u32;
    }
    let values = sorted.iter().map(|&v| field.base[v as usize]).collect();
    VertexOrder {
        sorted,
        rank,
        values,
    }
}

impl VertexOrder {
    /// An edge is active in slab `i` when its endpoint ranks straddle the cut
    /// after `i + 1` vertices.
    fn active(&self, s: &TriSurface, e: EdgeId, slab: u32) -> bool {
        let [u, v] = s.edge(e);
        let (ru, rv) = (self.rank[u.idx()], self.rank[v.idx()]);
        ru.min(rv) <= slab && slab < ru.max(rv)
    }

    /// Slab containing radius `r` (base units), or None when out of range.
    fn slab_of(&self, r: f64) -> Option<u32> {
        let cut = self.values.partition_point(|&v| v < r);
        if cut == 0 || cut >= self.values.len() {
            None
        } else {
            Some(cut as u32 - 1)
        }
    }

    /// Crossing point of active edge `e` at level `r`, plus base offsets of
    /// the crossing to the two endpoints `(below, above)`.
    fn crossing(
        &self,
        s: &TriSurface,
        field: &DistanceField,
        e: EdgeId,
        r: f64,
    ) -> (SurfacePoint, VertexId, f64, VertexId, f64) {
        let [u, v] = s.edge(e);
        let (below, above) = if self.rank[u.idx()] < self.rank[v.idx()] {
            (u, v)
        } else {
            (v, u)
        };
        let (dlo, dhi) = (field.base[below.idx()], field.base[above.idx()]);
        let t_below = ((r - dlo) / (dhi - dlo)).clamp(0.0, 1.0);
        let len = s.base_edge_length(e);
        let t = if below == u { t_below } else { 1.0 - t_below };
        (
            SurfacePoint::EdgePoint { edge: e, t },
            below,
            t_below * len,
            above,
            (1.0 - t_below) * len,
        )
    }
}

/// Union-find over edge ids with O(1) epoch reset; the root of a class is
/// always its smallest edge id.
struct EdgeDsu {
    parent: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl EdgeDsu {
    fn new(n: usize) -> Self {
        EdgeDsu {
            parent: vec![0; n],
            stamp: vec![0; n],
            epoch: 0,
        }
    }

    fn begin(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
    }

    fn find(&mut self, e: u32) -> u32 {
        let mut x = e as usize;
        if self.stamp[x] != self.epoch {
            self.stamp[x] = self.epoch;
            self.parent[x] = e;
            return e;
        }
        while self.parent[x] != x as u32 {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = self.parent[x] as usize;
        }
        x as u32
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
        }
    }
}

/// Groups the active edges of a slab into level components in the DSU.
fn slab_components(
    s: &TriSurface,
    order: &VertexOrder,
    dsu: &mut EdgeDsu,
    active: &[u32],
    slab: u32,
) {
    dsu.begin();
    for &e in active {
        dsu.find(e);
        for t in s.edge_tris(EdgeId(e)) {
            for o in s.tri_edges(t) {
                if o.0 != e && order.active(s, o, slab) {
                    dsu.union(e, o.0);
                }
            }
        }
    }
}

/// The partner of active edge `e` through triangle `t` (the unique other
/// active edge of `t`).
fn level_partner(s: &TriSurface, order: &VertexOrder, e: EdgeId, t: TriId, slab: u32) -> EdgeId {
    for o in s.tri_edges(t) {
        if o != e && order.active(s, o, slab) {
            return o;
        }
    }
    unreachable!("a triangle crossed by a level set has exactly two active edges");
}

/// Walks the closed polyline of the component rooted at `root`, calling
/// `visit(edge, next_edge)` once per crossing in cyclic order.
fn walk_component(
    s: &TriSurface,
    order: &VertexOrder,
    root: EdgeId,
    slab: u32,
    mut visit: impl FnMut(EdgeId, EdgeId),
) {
    let mut e = root;
    let mut tri = s.edge_tris(root)[0];
    loop {
        let next = level_partner(s, order, e, tri, slab);
        visit(e, next);
        let nt = s.edge_tris(next);
        tri = if nt[0] == tri { nt[1] } else { nt[0] };
        e = next;
        if e == root {
            break;
        }
    }
}

/// Shared endpoint of two edges lying in a common triangle.
fn shared_vertex(s: &TriSurface, a: EdgeId, b: EdgeId) -> VertexId {
    let [a0, a1] = s.edge(a);
    let [b0, b1] = s.edge(b);
    if a0 == b0 || a0 == b1 {
        a0
    } else {
        debug_assert!(a1 == b0 || a1 == b1);
        a1
    }
}

// ---------------------------------------------------------------------------
// The sweep
// ---------------------------------------------------------------------------

struct Candidate {
    ub: f64,
    /// Exact diameter when `exact`, otherwise an upper bound that the branch
    /// and bound certified to be at most the global maximum (base units).
    value: f64,
    exact: bool,
    radius: f64,
    slab: u32,
    root: EdgeId,
    cylinder: u32,
    witness: Option<(SurfacePoint, SurfacePoint)>,
}

struct Cylinder {
    start: u32,
    end: u32,
}

struct SweepData {
    nodes: Vec<ReebNode>,
    cylinders: Vec<Cylinder>,
    candidates: Vec<Candidate>,
    radii_scanned: usize,
}

const LANDMARKS: usize = 12;

/// Sampled radii per the policy, in base units, sorted by slab.
fn sample_schedule(
    s: &TriSurface,
    order: &VertexOrder,
    policy: &RadiiPolicy,
) -> (Vec<(u32, f64)>, usize) {
    let nv = order.values.len();
    let mut samples: Vec<(u32, f64)> = Vec::new();
    match policy {
        RadiiPolicy::VertexValuesAndMidpoints => {
            for i in 0..nv - 1 {
                let (lo, hi) = (order.values[i], order.values[i + 1]);
                if lo < hi {
                    let mid = 0.5 * (lo + hi);
                    if mid > lo && mid < hi {
                        samples.push((i as u32, mid));
                    }
                    if i + 2 < nv {
                        samples.push((i as u32, hi));
                    }
                }
            }
        }
        RadiiPolicy::Uniform { count } => {
            let dmax = order.values[nv - 1];
            for k in 1..=*count {
                let r = dmax * k as f64 / (*count as f64 + 1.0);
                if let Some(slab) = order.slab_of(r) {
                    samples.push((slab, r));
                }
            }
        }
        RadiiPolicy::Explicit(rs) => {
            let inv = 1.0 / s.metric_scale();
            for &r in rs {
                let rb = r * inv;
                if let Some(slab) = order.slab_of(rb) {
                    samples.push((slab, rb));
                }
            }
        }
    }
    samples.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let scanned = samples.len();
    (samples, scanned)
}

fn landmark_fields(s: &TriSurface, start: VertexId) -> Vec<Vec<f64>> {
    use rayon::prelude::*;
    let ids = farthest_point_sample(s, start, LANDMARKS.min(s.vertex_count()), None);
    ids.par_iter()
        .map(|&l| distance_field(s, l).expect("connected surface").base)
        .collect()
}

fn field_min_vertex(field: &DistanceField) -> VertexId {
    let mut best = (0u32, f64::INFINITY);
    for (i, &d) in field.base.iter().enumerate() {
        if d < best.1 {
            best = (i as u32, d);
        }
    }
    VertexId(best.0)
}

fn field_sweep(s: &TriSurface, field: &DistanceField, policy: &RadiiPolicy) -> SweepData {
    let order = order_vertices(field);
    let nv = order.sorted.len();
    let ne = s.edge_count();
    let (samples, radii_scanned) = sample_schedule(s, &order, policy);
    let lm = landmark_fields(s, field.source.unwrap_or_else(|| field_min_vertex(field)));

    let mut dsu = EdgeDsu::new(ne);
    let mut active: Vec<u32> = Vec::new();
    let mut pos: Vec<u32> = vec![u32::MAX; ne];
    // Component root of each edge as of the previous slab.
    let mut prev_root: Vec<u32> = vec![u32::MAX; ne];
    // Open cylinders of the previous slab: (component root, cylinder id),
    // sorted by root.
    let mut open: Vec<(u32, u32)> = Vec::new();

    let mut nodes: Vec<ReebNode> = Vec::new();
    let mut cylinders: Vec<Cylinder> = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();

    let scale = s.metric_scale();
    let mut cursor = 0usize;
    let mut dying: Vec<u32> = Vec::new();
    let mut born: Vec<u32> = Vec::new();
    // Scratch for per-component sample accumulators.
    let mut slab_radii: Vec<f64> = Vec::new();
    let mut hop_sum: Vec<f64> = Vec::new();
    let mut lm_tops: Vec<(f64, f64)> = Vec::new();

    for i in 0..nv {
        let w = VertexId(order.sorted[i]);
        let iu = i as u32;
        dying.clear();
        born.clear();
        for (x, e) in s.neighbors(w) {
            if order.rank[x.idx()] < iu {
                dying.push(e.0);
            } else {
                born.push(e.0);
            }
        }

        // Update the active set.
        for &e in &dying {
            let p = pos[e as usize];
            debug_assert!(p != u32::MAX);
            let last = *active.last().unwrap();
            active.swap_remove(p as usize);
            if last != e {
                pos[last as usize] = p;
            }
            pos[e as usize] = u32::MAX;
        }
        for &e in &born {
            pos[e as usize] = active.len() as u32;
            active.push(e);
        }

        let node_value = order.values[i] * scale;
        if i + 1 == nv {
            // Global last vertex: every remaining component dies here.
            debug_assert!(active.is_empty());
            let node = nodes.len() as u32;
            nodes.push(ReebNode {
                vertex: w,
                value: node_value,
            });
            for &(_, cyl) in &open {
                cylinders[cyl as usize].end = node;
            }
            open.clear();
            break;
        }

        // Components of the new slab.
        slab_components(s, &order, &mut dsu, &active, iu);
        let mut cur_roots: Vec<u32> = active.iter().map(|&e| dsu.find(e)).collect();
        cur_roots.sort_unstable();
        cur_roots.dedup();

        // Event classes over previous components, current components, and the
        // vertex w: a tiny union-find decides which cylinders continue.
        let np = open.len();
        let ncur = cur_roots.len();
        let mut class: Vec<u32> = (0..(np + ncur + 1) as u32).collect();
        fn cfind(class: &mut [u32], mut x: u32) -> u32 {
            while class[x as usize] != x {
                class[x as usize] = class[class[x as usize] as usize];
                x = class[x as usize];
            }
            x
        }
        fn cunion(class: &mut [u32], a: u32, b: u32) {
            let (ra, rb) = (cfind(class, a), cfind(class, b));
            if ra != rb {
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                class[hi as usize] = lo;
            }
        }
        let widx = (np + ncur) as u32;
        let prev_idx = |open: &[(u32, u32)], root: u32| -> u32 {
            open.binary_search_by_key(&root, |&(r, _)| r).unwrap() as u32
        };
        let cur_idx =
            |roots: &[u32], root: u32| -> u32 { roots.binary_search(&root).unwrap() as u32 };
        for &e in &dying {
            let pi = prev_idx(&open, prev_root[e as usize]);
            cunion(&mut class, pi, widx);
        }
        for &e in &born {
            let ci = cur_idx(&cur_roots, dsu.find(e)) + np as u32;
            cunion(&mut class, ci, widx);
        }
        for &e in &active {
            // Persisting edges: active now and in the previous slab.
            let [u, v] = s.edge(EdgeId(e));
            let lo = order.rank[u.idx()].min(order.rank[v.idx()]);
            if lo < iu {
                let pi = prev_idx(&open, prev_root[e as usize]);
                let ci = cur_idx(&cur_roots, dsu.find(e)) + np as u32;
                cunion(&mut class, pi, ci);
            }
        }

        // Tally each class.
        let mut members: HashMap<u32, (Vec<u32>, Vec<u32>)> = HashMap::new();
        for p in 0..np as u32 {
            let r = cfind(&mut class, p);
            members.entry(r).or_default().0.push(p);
        }
        for c in 0..ncur as u32 {
            let r = cfind(&mut class, c + np as u32);
            members.entry(r).or_default().1.push(c);
        }
        let mut keys: Vec<u32> = members.keys().copied().collect();
        keys.sort_unstable();
        let mut new_open: Vec<(u32, u32)> = Vec::with_capacity(ncur);
        for k in keys {
            let (prevs, curs) = &members[&k];
            if prevs.len() == 1 && curs.len() == 1 {
                let cyl = open[prevs[0] as usize].1;
                new_open.push((cur_roots[curs[0] as usize], cyl));
            } else {
                let node = nodes.len() as u32;
                nodes.push(ReebNode {
                    vertex: w,
                    value: node_value,
                });
                for &p in prevs {
                    let cyl = open[p as usize].1;
                    cylinders[cyl as usize].end = node;
                }
                for &c in curs {
                    let cyl = cylinders.len() as u32;
                    cylinders.push(Cylinder {
                        start: node,
                        end: u32::MAX,
                    });
                    new_open.push((cur_roots[c as usize], cyl));
                }
            }
        }
        new_open.sort_unstable();
        open = new_open;

        // Record current roots for the next event.
        for &e in &active {
            prev_root[e as usize] = dsu.find(e);
        }

        // Sampled fibers of this slab.
        slab_radii.clear();
        while cursor < samples.len() && samples[cursor].0 == iu {
            slab_radii.push(samples[cursor].1);
            cursor += 1;
        }
        if slab_radii.is_empty() {
            continue;
        }
        let ns = slab_radii.len();
        let nl = lm.len();
        for &root in &cur_roots {
            hop_sum.clear();
            hop_sum.resize(ns, 0.0);
            lm_tops.clear();
            lm_tops.resize(ns * nl, (0.0, 0.0));
            let cyl = open
                .binary_search_by_key(&root, |&(r, _)| r)
                .map(|p| open[p].1)
                .expect("every component belongs to an open cylinder");
            walk_component(s, &order, EdgeId(root), iu, |e, next| {
                let sv = shared_vertex(s, e, next);
                for (si, &r) in slab_radii.iter().enumerate() {
                    let (_, below, off_b, above, off_a) = order.crossing(s, field, e, r);
                    let off_e = if sv == below { off_b } else { off_a };
                    let (_, nbelow, noff_b, _, noff_a) = order.crossing(s, field, next, r);
                    let off_n = if sv == nbelow { noff_b } else { noff_a };
                    hop_sum[si] += off_e + off_n;
                    for (li, lf) in lm.iter().enumerate() {
                        let ub = (lf[below.idx()] + off_b).min(lf[above.idx()] + off_a);
                        let slot = &mut lm_tops[si * nl + li];
                        if ub > slot.0 {
                            slot.1 = slot.0;
                            slot.0 = ub;
                        } else if ub > slot.1 {
                            slot.1 = ub;
                        }
                    }
                }
            });
            for (si, &r) in slab_radii.iter().enumerate() {
                let mut ub = hop_sum[si] / 2.0;
                for li in 0..nl {
                    let (t1, t2) = lm_tops[si * nl + li];
                    ub = ub.min(t1 + t2);
                }
                candidates.push(Candidate {
                    ub,
                    value: f64::NAN,
                    exact: false,
                    radius: r,
                    slab: iu,
                    root: EdgeId(root),
                    cylinder: cyl,
                    witness: None,
                });
            }
        }
    }
    debug_assert!(cylinders.iter().all(|c| c.end != u32::MAX));

    SweepData {
        nodes,
        cylinders,
        candidates,
        radii_scanned,
    }
}

/// Crossing points of one slab component at the given level.
fn component_points(
    s: &TriSurface,
    field: &DistanceField,
    order: &VertexOrder,
    dsu: &mut EdgeDsu,
    slab: u32,
    root: EdgeId,
    radius: f64,
) -> Vec<SurfacePoint> {
    let active: Vec<u32> = (0..s.edge_count() as u32)
        .filter(|&e| order.active(s, EdgeId(e), slab))
        .collect();
    slab_components(s, order, dsu, &active, slab);
    let mut pts = Vec::new();
    walk_component(s, order, root, slab, |e, _| {
        pts.push(order.crossing(s, field, e, radius).0);
    });
    debug_assert_eq!(dsu.find(root.0), root.0);
    pts
}

/// Branch and bound: certifies the maximum component diameter exactly.
/// Returns the index of the best candidate and the number certified exactly.
fn certify(
    s: &TriSurface,
    field: &DistanceField,
    order: &VertexOrder,
    candidates: &mut [Candidate],
) -> (Option<usize>, usize) {
    let mut idxs: Vec<usize> = (0..candidates.len()).collect();
    idxs.sort_by(|&a, &b| {
        candidates[b]
            .ub
            .total_cmp(&candidates[a].ub)
            .then(candidates[a].slab.cmp(&candidates[b].slab))
            .then(candidates[a].root.0.cmp(&candidates[b].root.0))
            .then(candidates[a].radius.total_cmp(&candidates[b].radius))
    });
    let mut dsu = EdgeDsu::new(s.edge_count());
    let mut scratch = DijkstraScratch::new();
    let mut best: Option<(f64, usize)> = None;
    let mut exact_count = 0usize;
    for (k, &idx) in idxs.iter().enumerate() {
        if let Some((bv, _)) = best {
            if candidates[idx].ub <= bv {
                for &j in &idxs[k..] {
                    candidates[j].value = candidates[j].ub;
                }
                break;
            }
        }
        let c = &candidates[idx];
        let pts = component_points(s, field, order, &mut dsu, c.slab, c.root, c.radius);
        let cap = c.ub * (1.0 + 1e-9) + 1e-12;
        let (d, (a, b)) = certify_diameter(s, &pts, cap, &mut scratch);
        let c = &mut candidates[idx];
        c.value = d;
        c.exact = true;
        c.witness = Some((pts[a], pts[b]));
        exact_count += 1;
        if best.map_or(true, |(bv, _)| d > bv) {
            best = Some((d, idx));
        }
    }
    (best.map(|(_, i)| i), exact_count)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Joint result of one field sweep: the estimator and the Reeb graph come
/// from the same certified fiber computation, so the graph's fiber diameters
/// never exceed the estimate.
pub struct FieldAnalysis {
    pub estimate: DEstimate,
    pub reeb: ReebGraph,
}

pub fn analyze_field(s: &TriSurface, field: &DistanceField, policy: &RadiiPolicy) -> FieldAnalysis {
    let order = order_vertices(field);
    let mut data = field_sweep(s, field, policy);
    let (best, exact_count) = certify(s, field, &order, &mut data.candidates);
    let scale = s.metric_scale();
    let rel_tol = metric_tolerance(s);

    let (d, witness) = match best {
        Some(i) => {
            let c = &data.candidates[i];
            let (q, r) = c.witness.expect("best candidate is exact");
            (
                c.value * scale,
                Some(DWitness {
                    radius: c.radius * scale,
                    component: c.root,
                    pair: (q, r),
                }),
            )
        }
        None => (0.0, None),
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    let pi = std::f64::consts::PI;
    let estimate = DEstimate {
        basepoint: field.source,
        d,
        witness,
        hs_sandwich: [d / (pi * (2.0 + sqrt2)), 2.0 * d / pi],
        uw1_sandwich: [d / (2.0 * (2.0 + sqrt2)), d],
        tolerance: d * rel_tol,
        radii_scanned: data.radii_scanned,
        certified_exactly: exact_count,
    };

    let mut edges: Vec<ReebEdge> = data
        .cylinders
        .iter()
        .map(|c| ReebEdge {
            ends: [c.start, c.end],
            span: [
                data.nodes[c.start as usize].value,
                data.nodes[c.end as usize].value,
            ],
            fiber_diameter: 0.0,
            diameter_is_exact: true,
            witness_radius: f64::NAN,
            samples: 0,
        })
        .collect();
    for c in &data.candidates {
        let e = &mut edges[c.cylinder as usize];
        e.samples += 1;
        let v = c.value * scale;
        if v > e.fiber_diameter {
            e.fiber_diameter = v;
            e.diameter_is_exact = c.exact;
            e.witness_radius = c.radius * scale;
        }
    }

    let nn = data.nodes.len();
    let mut parent: Vec<u32> = (0..nn as u32).collect();
    fn nfind(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for e in &edges {
        let (a, b) = (nfind(&mut parent, e.ends[0]), nfind(&mut parent, e.ends[1]));
        if a != b {
            parent[a.max(b) as usize] = a.min(b);
        }
    }
    let connected = (0..nn as u32).all(|v| nfind(&mut parent, v) == 0);
    let is_tree = connected && edges.len() + 1 == nn;

    FieldAnalysis {
        estimate,
        reeb: ReebGraph {
            nodes: data.nodes,
            edges,
            is_tree,
        },
    }
}

/// The estimator: scans level sets of the distance field around `p` per the
/// radius policy and certifies the largest component diameter, attaching the
/// closed-form hypersphericity and width bounds it induces.
pub fn estimate_d(s: &TriSurface, p: VertexId, policy: &RadiiPolicy) -> DEstimate {
    let field = distance_field(s, p).expect("closed surfaces are connected");
    analyze_field(s, &field, policy).estimate
}

/// Reeb graph of the field, with per-cylinder fiber diameters from the
/// default radius schedule.
pub fn reeb_graph(s: &TriSurface, field: &DistanceField) -> ReebGraph {
    analyze_field(s, field, &RadiiPolicy::default()).reeb
}

/// Upper bound for the Uryson 1-width from the field's Reeb quotient: the
/// certified maximum fiber diameter.
pub fn uryson_width_upper(s: &TriSurface, field: &DistanceField) -> MapWidth {
    let order = order_vertices(field);
    let mut data = field_sweep(s, field, &RadiiPolicy::default());
    let (best, _) = certify(s, field, &order, &mut data.candidates);
    let scale = s.metric_scale();
    match best {
        Some(i) => {
            let c = &data.candidates[i];
            let mut dsu = EdgeDsu::new(s.edge_count());
            let points = component_points(s, field, &order, &mut dsu, c.slab, c.root, c.radius);
            MapWidth {
                width: c.value * scale,
                witness: FiberWitness {
                    target: TargetSample::LevelRadius(c.radius * scale),
                    points,
                    pair: c.witness,
                },
                samples: data.candidates.len(),
                tolerance: c.value * scale * metric_tolerance(s),
            }
        }
        None => MapWidth {
            width: 0.0,
            witness: FiberWitness {
                target: TargetSample::LevelRadius(0.0),
                points: Vec::new(),
                pair: None,
            },
            samples: 0,
            tolerance: 0.0,
        },
    }
}

/// Connected components of the level set `{dist = radius}`, with exact
/// diameters. Crossing points are linearly interpolated on the straddling
/// edges; a value hitting a vertex exactly is resolved by the symbolic
/// perturbation (the vertex counts as above the level).
pub fn extract_level_components(
    s: &TriSurface,
    field: &DistanceField,
    radius: f64,
) -> Result<Vec<LevelComponent>, LevelSetError> {
    let (_, dmax) = field.max();
    if !(radius > 0.0 && radius < dmax) {
        return Err(LevelSetError::RadiusOutOfRange {
            radius,
            max: dmax,
        });
    }
    let scale = s.metric_scale();
    let rb = radius / scale;
    let order = order_vertices(field);
    let slab = order
        .slab_of(rb)
        .ok_or(LevelSetError::RadiusOutOfRange { radius, max: dmax })?;
    let active: Vec<u32> = (0..s.edge_count() as u32)
        .filter(|&e| order.active(s, EdgeId(e), slab))
        .collect();
    let mut dsu = EdgeDsu::new(s.edge_count());
    slab_components(s, &order, &mut dsu, &active, slab);
    let mut roots: Vec<u32> = active.iter().map(|&e| dsu.find(e)).collect();
    roots.sort_unstable();
    roots.dedup();
    let mut comps = Vec::with_capacity(roots.len());
    for root in roots {
        let mut points = Vec::new();
        walk_component(s, &order, EdgeId(root), slab, |e, _| {
            points.push(order.crossing(s, field, e, rb).0);
        });
        let (d, (a, b)) = subset_diameter_base(s, &points)?;
        comps.push(LevelComponent {
            radius,
            diameter: d * scale,
            witness: (points[a], points[b]),
            points,
        });
    }
    Ok(comps)
}

// ---------------------------------------------------------------------------
// Width of a simplicial map
// ---------------------------------------------------------------------------

/// Width of a simplicial map with fibers sampled at every target vertex and
/// at each target edge's midpoint.
pub fn map_width(
    dom: &TriSurface,
    tgt: &TriSurface,
    vertex_map: &[VertexId],
) -> Result<MapWidth, LevelSetError> {
    map_width_sampled(dom, tgt, vertex_map, &[0.5])
}

/// Width of a simplicial map: the largest diameter (in the domain metric) of
/// a sampled fiber. Fibers are the full preimages of target vertices and of
/// interior points of target edges at the given parameters; preimages of
/// collapsed domain edges contribute their midpoints.
pub fn map_width_sampled(
    dom: &TriSurface,
    tgt: &TriSurface,
    vertex_map: &[VertexId],
    edge_ts: &[f64],
) -> Result<MapWidth, LevelSetError> {
    if vertex_map.len() != dom.vertex_count() {
        return Err(LevelSetError::MapSizeMismatch {
            got: vertex_map.len(),
            expected: dom.vertex_count(),
        });
    }
    let tv = tgt.vertex_count() as u32;
    for (i, m) in vertex_map.iter().enumerate() {
        if m.0 >= tv {
            return Err(LevelSetError::NonSimplicial(format!(
                "vertex {i} maps to {} but the target has {tv} vertices",
                m.0
            )));
        }
    }

    let mut tgt_edge: HashMap<(u32, u32), EdgeId> = HashMap::with_capacity(tgt.edge_count());
    for (ei, e) in tgt.edges().iter().enumerate() {
        tgt_edge.insert((e[0].0, e[1].0), EdgeId(ei as u32));
    }
    let tgt_tris: std::collections::HashSet<[u32; 3]> = tgt
        .tris()
        .iter()
        .map(|t| {
            let mut k = [t[0].0, t[1].0, t[2].0];
            k.sort_unstable();
            k
        })
        .collect();

    // Per target edge: domain edges over it and whether orientations agree.
    let mut over: Vec<Vec<(EdgeId, bool)>> = vec![Vec::new(); tgt.edge_count()];
    // Per target vertex: preimage vertices, then midpoints of collapsed edges.
    let mut vertex_fibers: Vec<Vec<SurfacePoint>> = vec![Vec::new(); tgt.vertex_count()];
    for (v, m) in vertex_map.iter().enumerate() {
        vertex_fibers[m.idx()].push(SurfacePoint::Vertex(VertexId(v as u32)));
    }
    for (ei, e) in dom.edges().iter().enumerate() {
        let (ia, ib) = (vertex_map[e[0].idx()], vertex_map[e[1].idx()]);
        if ia == ib {
            vertex_fibers[ia.idx()].push(SurfacePoint::EdgePoint {
                edge: EdgeId(ei as u32),
                t: 0.5,
            });
        } else {
            let key = (ia.0.min(ib.0), ia.0.max(ib.0));
            let te = tgt_edge.get(&key).ok_or_else(|| {
                LevelSetError::NonSimplicial(format!(
                    "domain edge ({}, {}) maps to ({}, {}), not a target edge",
                    e[0].0, e[1].0, ia.0, ib.0
                ))
            })?;
            over[te.idx()].push((EdgeId(ei as u32), ia.0 < ib.0));
        }
    }
    for (ti, t) in dom.tris().iter().enumerate() {
        let mut img = [
            vertex_map[t[0].idx()].0,
            vertex_map[t[1].idx()].0,
            vertex_map[t[2].idx()].0,
        ];
        img.sort_unstable();
        if img[0] != img[1] && img[1] != img[2] && !tgt_tris.contains(&img) {
            return Err(LevelSetError::NonSimplicial(format!(
                "domain triangle {ti} maps onto ({}, {}, {}), not a target triangle",
                img[0], img[1], img[2]
            )));
        }
    }

    // Assemble fibers.
    let mut fibers: Vec<(TargetSample, Vec<SurfacePoint>)> = Vec::new();
    for (v, pts) in vertex_fibers.into_iter().enumerate() {
        if !pts.is_empty() {
            fibers.push((TargetSample::Vertex(VertexId(v as u32)), pts));
        }
    }
    for &t in edge_ts {
        if !(t > 0.0 && t < 1.0) {
            continue;
        }
        for (ei, lifted) in over.iter().enumerate() {
            if lifted.is_empty() {
                continue;
            }
            let pts: Vec<SurfacePoint> = lifted
                .iter()
                .map(|&(e, same)| SurfacePoint::EdgePoint {
                    edge: e,
                    t: if same { t } else { 1.0 - t },
                })
                .collect();
            fibers.push((
                TargetSample::EdgeInterior {
                    edge: EdgeId(ei as u32),
                    t,
                },
                pts,
            ));
        }
    }

    // Landmark upper bounds, then branch and bound with capped searches.
    let lm = landmark_fields(dom, VertexId(0));
    let ub_of = |pts: &[SurfacePoint]| -> f64 {
        let mut best = f64::INFINITY;
        for lf in &lm {
            let (mut t1, mut t2) = (0.0f64, 0.0f64);
            for p in pts {
                let ub = p.eval_base(dom, lf);
                if ub > t1 {
                    t2 = t1;
                    t1 = ub;
                } else if ub > t2 {
                    t2 = ub;
                }
            }
            best = best.min(t1 + t2);
        }
        best
    };
    let mut order: Vec<usize> = (0..fibers.len()).collect();
    let ubs: Vec<f64> = fibers
        .iter()
        .map(|(_, pts)| if pts.len() < 2 { 0.0 } else { ub_of(pts) })
        .collect();
    order.sort_by(|&a, &b| ubs[b].total_cmp(&ubs[a]).then(a.cmp(&b)));

    let mut scratch = DijkstraScratch::new();
    let mut best = (0.0f64, 0usize, None::<(usize, usize)>);
    for &fi in &order {
        if ubs[fi] <= best.0 && fibers[fi].1.len() >= 2 {
            break;
        }
        let pts = &fibers[fi].1;
        if pts.len() < 2 {
            continue;
        }
        let cap = if best.0 > 0.0 { best.0 } else { f64::INFINITY };
        let measured = match fiber_diameter_capped(dom, pts, cap, &mut scratch) {
            Some(x) => x,
            None => fiber_diameter_capped(dom, pts, f64::INFINITY, &mut scratch)
                .expect("uncapped search settles"),
        };
        if measured.0 > best.0 {
            best = (measured.0, fi, Some(measured.1));
        }
    }

    let scale = dom.metric_scale();
    let (target, points) = fibers.swap_remove(best.1);
    Ok(MapWidth {
        width: best.0 * scale,
        witness: FiberWitness {
            target,
            pair: best.2.map(|(a, b)| (points[a], points[b])),
            points,
        },
        samples: fibers.len() + 1,
        tolerance: best.0 * scale * metric_tolerance(dom),
    })
}

/// Exact diameter of a small point set, abandoning early when it provably
/// exceeds `cap` (returns None in that case).
/// Exact diameter of a point set known in advance to fit under `cap`
/// (a certified upper bound), with a realizing pair. Combines the
/// eccentricity-pruned point loop with cap-bounded early-exit runs.
fn certify_diameter(
    s: &TriSurface,
    pts: &[SurfacePoint],
    cap: f64,
    scratch: &mut DijkstraScratch,
) -> (f64, (usize, usize)) {
    if pts.len() < 2 {
        return (0.0, (0, 0));
    }
    let mut targets: Vec<VertexId> = Vec::new();
    for p in pts {
        match *p {
            SurfacePoint::Vertex(v) => targets.push(v),
            SurfacePoint::EdgePoint { edge, .. } => targets.extend(s.edge(edge)),
        }
    }
    let mut upper = vec![f64::INFINITY; pts.len()];
    let mut best = (-1.0f64, (0usize, 0usize));
    for i in 0..pts.len() {
        if upper[i] <= best.0 {
            continue;
        }
        let seeds = pts[i].seeds_base(s);
        scratch.bounded_run(s, &seeds, cap, &targets, true);
        let eval = |q: &SurfacePoint| match *q {
            SurfacePoint::Vertex(v) => scratch.dist_of(v),
            SurfacePoint::EdgePoint { edge, t } => {
                let [u, v] = s.edge(edge);
                let len = s.base_edge_length(edge);
                (scratch.dist_of(u) + t * len).min(scratch.dist_of(v) + (1.0 - t) * len)
            }
        };
        let mut ecc = 0.0f64;
        for (j, q) in pts.iter().enumerate() {
            let d = eval(q);
            if d > ecc {
                ecc = d;
            }
            if i != j && d > best.0 {
                best = (d, (i.min(j), i.max(j)));
            }
        }
        for (j, q) in pts.iter().enumerate() {
            let through = eval(q) + ecc;
            if through < upper[j] {
                upper[j] = through;
            }
        }
    }
    (best.0.max(0.0), best.1)
}

fn fiber_diameter_capped(
    s: &TriSurface,
    pts: &[SurfacePoint],
    cap: f64,
    scratch: &mut DijkstraScratch,
) -> Option<(f64, (usize, usize))> {
    let mut best = (0.0f64, (0usize, 0usize));
    for i in 0..pts.len() - 1 {
        let seeds = pts[i].seeds_base(s);
        let mut targets: Vec<VertexId> = Vec::new();
        for p in &pts[i + 1..] {
            match *p {
                SurfacePoint::Vertex(v) => targets.push(v),
                SurfacePoint::EdgePoint { edge, .. } => {
                    let [u, v] = s.edge(edge);
                    targets.push(u);
                    targets.push(v);
                }
            }
        }
        scratch.bounded_run(s, &seeds, cap, &targets, true);
        for (j, p) in pts.iter().enumerate().skip(i + 1) {
            let d = match *p {
                SurfacePoint::Vertex(v) => scratch.dist_of(v),
                SurfacePoint::EdgePoint { edge, t } => {
                    let [u, v] = s.edge(edge);
                    let len = s.base_edge_length(edge);
                    (scratch.dist_of(u) + t * len).min(scratch.dist_of(v) + (1.0 - t) * len)
                }
            };
            if !(d <= cap) {
                return None;
            }
            if d > best.0 {
                best = (d, (i, j));
            }
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};
    use crate::geodesic::{eccentricity, subset_diameter};
    use std::f64::consts::PI;

    fn icosphere(subdiv: u32) -> TriSurface {
        generate(
            GenKind::Icosphere {
                subdiv,
                radius: 1.0,
            },
            0,
        )
        .unwrap()
        .surface
    }

    #[test]
    fn round_sphere_estimate_brackets_pi() {
        let s = icosphere(3);
        let est = estimate_d(&s, VertexId(0), &RadiiPolicy::default());
        let ratio = est.d / PI;
        assert!(ratio > 0.95 && ratio < 1.05, "D/pi = {ratio}");
        assert!(est.hs_sandwich[0] <= 1.0 && 1.0 <= est.hs_sandwich[1]);
        let want = 2.0 * (2.0 + std::f64::consts::SQRT_2);
        let got = est.hs_sandwich[1] / est.hs_sandwich[0];
        assert!((got - want).abs() < 1e-9);
        assert!(est.uw1_sandwich[0] <= est.uw1_sandwich[1]);
        assert_eq!(est.uw1_sandwich[1], est.d);
        let w = est.witness.as_ref().unwrap();
        assert!((w.radius - PI / 2.0).abs() < 0.35, "radius {}", w.radius);
    }

    #[test]
    fn equator_is_one_component_of_diameter_pi() {
        let s = icosphere(3);
        let f = distance_field(&s, VertexId(0)).unwrap();
        let comps = extract_level_components(&s, &f, PI / 2.0).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert!(c.points.len() > 10);
        assert!((c.diameter - PI).abs() < 0.12, "diameter {}", c.diameter);
        // The interpolated crossing sits at the radius up to the gradient
        // defect of the crossed edge, never below it.
        for p in &c.points {
            let v = p.eval(&s, &f);
            assert!(v >= PI / 2.0 - 1e-9, "{v}");
            assert!(v <= PI / 2.0 + s.max_edge_length(), "{v}");
        }
    }

    #[test]
    fn small_radius_is_a_loop_around_the_basepoint() {
        let s = icosphere(2);
        let f = distance_field(&s, VertexId(7)).unwrap();
        let r = 0.5
            * s.neighbors(VertexId(7))
                .map(|(_, e)| s.edge_length(e))
                .fold(f64::INFINITY, f64::min);
        let comps = extract_level_components(&s, &f, r).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].points.len(), s.vertex_degree(VertexId(7)));
    }

    #[test]
    fn radius_out_of_range_is_an_error() {
        let s = icosphere(1);
        let f = distance_field(&s, VertexId(0)).unwrap();
        assert!(matches!(
            extract_level_components(&s, &f, 0.0),
            Err(LevelSetError::RadiusOutOfRange { .. })
        ));
        assert!(matches!(
            extract_level_components(&s, &f, 100.0),
            Err(LevelSetError::RadiusOutOfRange { .. })
        ));
    }

    #[test]
    fn neck_basepoint_sees_two_lobes() {
        let g = generate(
            GenKind::Dumbbell {
                neck_radius: 0.25,
                segments: 12,
            },
            0,
        )
        .unwrap();
        let s = g.surface;
        // A vertex on the waist: nearest to the z = 0 plane.
        let p = (0..s.vertex_count() as u32)
            .map(VertexId)
            .min_by(|&a, &b| {
                let (za, zb) = (s.position(a).unwrap()[2], s.position(b).unwrap()[2]);
                za.abs().total_cmp(&zb.abs()).then(a.0.cmp(&b.0))
            })
            .unwrap();
        let f = distance_field(&s, p).unwrap();
        let (_, ecc) = f.max();
        let comps = extract_level_components(&s, &f, 0.6 * ecc).unwrap();
        assert_eq!(comps.len(), 2, "one circle per lobe");
    }

    #[test]
    fn sphere_reeb_graph_is_a_path() {
        let s = icosphere(2);
        let f = distance_field(&s, VertexId(0)).unwrap();
        let g = reeb_graph(&s, &f);
        assert!(g.is_tree);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.nodes[0].vertex, VertexId(0));
        assert_eq!(g.nodes[0].value, 0.0);
        let dot = g.to_dot();
        assert!(dot.contains("n0 -- n1"), "{dot}");
    }

    #[test]
    fn torus_reeb_graph_has_a_cycle() {
        let g = generate(
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 1.0,
                n: 8,
            },
            0,
        )
        .unwrap();
        let f = distance_field(&g.surface, VertexId(0)).unwrap();
        let reeb = reeb_graph(&g.surface, &f);
        assert!(!reeb.is_tree);
        assert!(reeb.edges.len() >= reeb.nodes.len());
    }

    #[test]
    fn reeb_fibers_never_exceed_the_estimate() {
        for (kind, p) in [
            (
                GenKind::Dumbbell {
                    neck_radius: 0.3,
                    segments: 10,
                },
                VertexId(0),
            ),
            (
                GenKind::FlatTorus {
                    l1: 1.0,
                    l2: 2.0,
                    n: 10,
                },
                VertexId(3),
            ),
        ] {
            let s = generate(kind, 0).unwrap().surface;
            let f = distance_field(&s, p).unwrap();
            let out = analyze_field(&s, &f, &RadiiPolicy::default());
            let maxf = out.reeb.max_fiber_diameter();
            assert!(
                maxf <= out.estimate.d + out.estimate.tolerance,
                "{maxf} vs {}",
                out.estimate.d
            );
            assert_eq!(maxf, out.estimate.d);
        }
    }

    #[test]
    fn uryson_upper_equals_estimate_for_same_field() {
        let s = icosphere(2);
        let f = distance_field(&s, VertexId(5)).unwrap();
        let est = estimate_d(&s, VertexId(5), &RadiiPolicy::default());
        let mw = uryson_width_upper(&s, &f);
        assert_eq!(mw.width.to_bits(), est.d.to_bits());
        assert!(!mw.witness.points.is_empty());
    }

    #[test]
    fn thin_cigar_has_small_width() {
        let g = generate(
            GenKind::Ellipsoid {
                a: 1.0,
                b: 0.1,
                c: 0.1,
                subdiv: 3,
            },
            0,
        )
        .unwrap();
        let s = g.surface;
        let p = (0..s.vertex_count() as u32)
            .map(VertexId)
            .max_by(|&a, &b| {
                let (xa, xb) = (s.position(a).unwrap()[0], s.position(b).unwrap()[0]);
                xa.total_cmp(&xb).then(b.0.cmp(&a.0))
            })
            .unwrap();
        let f = distance_field(&s, p).unwrap();
        let mw = uryson_width_upper(&s, &f);
        assert!(mw.width < 0.75, "width {}", mw.width);
    }

    #[test]
    fn estimate_scales_exactly() {
        let s = icosphere(2);
        let lambda = 1.0 / 3.0;
        let scaled = s.scale_metric(lambda).unwrap();
        let a = estimate_d(&s, VertexId(4), &RadiiPolicy::default());
        let b = estimate_d(&scaled, VertexId(4), &RadiiPolicy::default());
        assert_eq!((a.d * lambda).to_bits(), b.d.to_bits());
        let (wa, wb) = (a.witness.unwrap(), b.witness.unwrap());
        assert_eq!(wa.component, wb.component);
        assert_eq!((wa.radius * lambda).to_bits(), wb.radius.to_bits());
    }

    #[test]
    fn uniform_policy_tracks_the_default() {
        let s = icosphere(2);
        let fine = estimate_d(&s, VertexId(0), &RadiiPolicy::default());
        let coarse = estimate_d(&s, VertexId(0), &RadiiPolicy::Uniform { count: 12 });
        assert!((coarse.d - fine.d).abs() < 0.1 * fine.d);
        assert_eq!(coarse.radii_scanned, 12);
        let explicit = estimate_d(
            &s,
            VertexId(0),
            &RadiiPolicy::Explicit(vec![-1.0, fine.witness.as_ref().unwrap().radius, 99.0]),
        );
        assert_eq!(explicit.radii_scanned, 1);
        assert_eq!(explicit.d.to_bits(), fine.d.to_bits());
    }

    #[test]
    fn identity_map_has_zero_width() {
        let s = icosphere(1);
        let idmap: Vec<VertexId> = (0..s.vertex_count() as u32).map(VertexId).collect();
        let mw = map_width(&s, &s, &idmap).unwrap();
        assert_eq!(mw.width, 0.0);
    }

    #[test]
    fn constant_map_width_is_the_domain_diameter() {
        let s = icosphere(1);
        let single = TriSurface::from_positions(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap();
        let cmap = vec![VertexId(0); s.vertex_count()];
        let mw = map_width(&s, &single, &cmap).unwrap();
        let verts: Vec<SurfacePoint> = (0..s.vertex_count() as u32)
            .map(|v| SurfacePoint::Vertex(VertexId(v)))
            .collect();
        let diam = subset_diameter(&s, &verts).unwrap().value;
        // Collapsed-edge midpoints can only add up to half an edge per side.
        assert!(mw.width >= diam - 1e-12);
        assert!(mw.width <= diam + s.max_edge_length() + 1e-12);
    }

    #[test]
    fn non_simplicial_map_is_rejected() {
        let s = icosphere(1);
        let mut vmap: Vec<VertexId> = (0..s.vertex_count() as u32).map(VertexId).collect();
        // Send one vertex somewhere far: its edges no longer map to edges.
        let far = distance_field(&s, VertexId(0)).unwrap().max().0;
        vmap[0] = far;
        assert!(matches!(
            map_width(&s, &s, &vmap),
            Err(LevelSetError::NonSimplicial(_))
        ));
        assert!(matches!(
            map_width(&s, &s, &vmap[1..]),
            Err(LevelSetError::MapSizeMismatch { .. })
        ));
    }

    #[test]
    fn estimate_tracks_eccentricity_tolerance() {
        let s = icosphere(2);
        let est = estimate_d(&s, VertexId(0), &RadiiPolicy::default());
        let ecc = eccentricity(&s, VertexId(0)).unwrap();
        // Two points at level r are within 2r of each other through the
        // basepoint, plus interpolation slack on each side.
        assert!(est.d <= 2.0 * ecc + 2.0 * s.max_edge_length());
        assert!(est.d > 0.8 * ecc);
        assert!(est.certified_exactly >= 1);
        // At least one sample lands in every band between consecutive
        // distinct distance values (symmetric meshes tie heavily).
        let mut vals = distance_field(&s, VertexId(0)).unwrap().into_values();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert!(est.radii_scanned >= vals.len() - 1);
    }
}
