//! First homology over Z2: cycle signatures, exact systoles on the edge
//! graph, greedy minimal bases, intersection parity, and the planarity
//! radius.
//!
//! Signatures come from a tree-cotree decomposition: a spanning tree of the
//! vertex graph plus a spanning tree of the dual graph leave exactly `2G`
//! edges, whose elementary loops form a homology basis. Each basis loop is
//! pushed off the 1-skeleton to one side; the parity with which the pushed
//! copy crosses each edge is a Z2-cocycle, so XORing those per-edge masks
//! along any closed walk yields its intersection parities with the basis,
//! a complete homology invariant.
//!
//! Cycle lengths are left-folds of unscaled edge lengths in a canonical
//! traversal order (smallest vertex first, toward its smaller cycle
//! neighbor), multiplied by the metric scale once, so equal cycles always
//! report bit-identical lengths and scaling a surface scales every reported
//! length exactly.

use crate::geodesic::{GeodesicError, TotalF64};
use crate::surface::{EdgeId, TriId, TriSurface, VertexId};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomologyError {
    #[error("surface has genus 0: no homologically nontrivial cycles")]
    GenusZero,
    #[error("genus {0} exceeds the 32-handle signature budget")]
    TooManyHandles(u32),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// A closed edge path with its length and Z2-homology signature.
#[derive(Clone, Debug, Serialize)]
pub struct Cycle {
    /// Vertices in canonical traversal order; the first is not repeated.
    pub vertices: Vec<VertexId>,
    /// Edges between consecutive vertices, closing back to the first.
    pub edges: Vec<EdgeId>,
    /// Sum of edge lengths in metric units.
    pub length: f64,
    /// Intersection parities with the reference basis loops; zero iff the
    /// cycle bounds.
    pub signature: u64,
}

/// A set of `2G` independent cycles with their pairwise intersection matrix.
#[derive(Clone, Debug, Serialize)]
pub struct CycleBasis {
    /// Cycles with lengths nondecreasing.
    pub cycles: Vec<Cycle>,
    /// Mod-2 intersection parities, `intersection[i][j] = cycles[i] . cycles[j]`.
    pub intersection: Vec<Vec<u8>>,
    pub genus: u32,
}

/// Result of the planarity-radius scan.
#[derive(Clone, Debug, Serialize)]
pub struct PlanarityReport {
    /// Largest radius below which every metric ball is a planar domain; for
    /// genus 0 this is a diameter upper bound (every ball is planar).
    pub radius: f64,
    /// Center whose ball first carries a nonvanishing intersection form.
    pub witness: Option<VertexId>,
    /// True when the surface is genus 0 and `radius` only bounds the diameter.
    pub bound_is_diameter: bool,
    pub notes: String,
}

/// A-posteriori audit that a cycle is strictly straight: along-cycle arc
/// distances between sampled vertex pairs match surface distances.
#[derive(Clone, Debug, Serialize)]
pub struct StraightnessReport {
    pub pairs: usize,
    /// Largest excess of arc distance over surface distance, metric units.
    pub max_defect: f64,
    /// The same, relative to the arc distance.
    pub max_defect_relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

// ---------------------------------------------------------------------------
// Signature system
// ---------------------------------------------------------------------------

/// Per-surface homology reference: basis loops, per-edge signature masks,
/// and the inverse of the basis intersection matrix (for evaluating the
/// intersection pairing on signatures).
pub struct HomologySystem {
    genus: u32,
    /// Bit `i` set: the pushed copy of basis loop `i` crosses this edge.
    edge_sig: Vec<u64>,
    loops: Vec<Cycle>,
    /// Rows of the inverse intersection matrix over GF(2).
    minv: Vec<u64>,
}

impl HomologySystem {
    pub fn new(s: &TriSurface) -> Result<HomologySystem, HomologyError> {
        let genus = s.genus();
        if genus > 32 {
            return Err(HomologyError::TooManyHandles(genus));
        }
        let (parent, in_tree) = spanning_tree(s);
        let in_cotree = dual_spanning_tree(s, &in_tree);
        let leftover: Vec<EdgeId> = (0..s.edge_count() as u32)
            .map(EdgeId)
            .filter(|e| !in_tree[e.idx()] && !in_cotree[e.idx()])
            .collect();
        debug_assert_eq!(leftover.len(), 2 * genus as usize);

        let mut edge_sig = vec![0u64; s.edge_count()];
        let mut loop_vertices: Vec<Vec<VertexId>> = Vec::with_capacity(leftover.len());
        for &l in &leftover {
            let verts = elementary_loop(s, &parent, l);
            push_off(s, &verts, |e| edge_sig[e.idx()] ^= 1 << loop_vertices.len());
            loop_vertices.push(verts);
        }

        let loops: Vec<Cycle> = loop_vertices
            .into_iter()
            .map(|mut verts| {
                canonicalize(&mut verts);
                cycle_from_vertices(s, &edge_sig, verts)
            })
            .collect();

        // Intersection matrix of the basis loops; nondegenerate by duality.
        let m: Vec<u64> = loops.iter().map(|c| c.signature).collect();
        let minv = invert_gf2(&m);
        Ok(HomologySystem {
            genus,
            edge_sig,
            loops,
            minv,
        })
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    /// The tree-cotree basis loops.
    pub fn basis_loops(&self) -> &[Cycle] {
        &self.loops
    }

    /// Signature of a closed edge walk; zero iff it bounds.
    pub fn signature(&self, edges: &[EdgeId]) -> u64 {
        edges.iter().fold(0, |acc, e| acc ^ self.edge_sig[e.idx()])
    }

    pub(crate) fn edge_mask(&self, e: EdgeId) -> u64 {
        self.edge_sig[e.idx()]
    }

    /// Intersection parity of two homology classes given by signatures.
    pub fn pairing(&self, a: u64, b: u64) -> u8 {
        let mut acc = 0u32;
        for (i, &row) in self.minv.iter().enumerate() {
            if a >> i & 1 == 1 {
                acc ^= (row & b).count_ones() & 1;
            }
        }
        acc as u8
    }

    /// Builds a cycle record from a closed vertex walk; consecutive vertices
    /// (and last back to first) must be adjacent. The walk is canonicalized,
    /// so equal cycles always produce identical records.
    pub fn cycle(&self, s: &TriSurface, mut verts: Vec<VertexId>) -> Cycle {
        canonicalize(&mut verts);
        cycle_from_vertices(s, &self.edge_sig, verts)
    }
}

/// BFS spanning tree over vertices; edges relaxed in fan order from vertex 0.
fn spanning_tree(s: &TriSurface) -> (Vec<Option<(VertexId, EdgeId)>>, Vec<bool>) {
    let nv = s.vertex_count();
    let mut parent: Vec<Option<(VertexId, EdgeId)>> = vec![None; nv];
    let mut seen = vec![false; nv];
    let mut in_tree = vec![false; s.edge_count()];
    let mut queue = std::collections::VecDeque::from([VertexId(0)]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for (w, e) in s.neighbors(v) {
            if !seen[w.idx()] {
                seen[w.idx()] = true;
                parent[w.idx()] = Some((v, e));
                in_tree[e.idx()] = true;
                queue.push_back(w);
            }
        }
    }
    debug_assert!(seen.iter().all(|&x| x));
    (parent, in_tree)
}

/// BFS spanning tree of the dual graph avoiding primal tree edges.
fn dual_spanning_tree(s: &TriSurface, in_tree: &[bool]) -> Vec<bool> {
    let nt = s.tri_count();
    let mut seen = vec![false; nt];
    let mut in_cotree = vec![false; s.edge_count()];
    let mut queue = std::collections::VecDeque::from([TriId(0)]);
    seen[0] = true;
    while let Some(t) = queue.pop_front() {
        for e in s.tri_edges(t) {
            if in_tree[e.idx()] {
                continue;
            }
            let [a, b] = s.edge_tris(e);
            let other = if a == t { b } else { a };
            if !seen[other.idx()] {
                seen[other.idx()] = true;
                in_cotree[e.idx()] = true;
                queue.push_back(other);
            }
        }
    }
    debug_assert!(seen.iter().all(|&x| x));
    in_cotree
}

/// The elementary cycle of a non-tree edge: tree paths from both endpoints
/// to their common ancestor, closed by the edge itself.
fn elementary_loop(
    s: &TriSurface,
    parent: &[Option<(VertexId, EdgeId)>],
    l: EdgeId,
) -> Vec<VertexId> {
    let [u, v] = s.edge(l);
    let chain = |mut x: VertexId| {
        let mut c = vec![x];
        while let Some((p, _)) = parent[x.idx()] {
            c.push(p);
            x = p;
        }
        c
    };
    let mut cu = chain(u);
    let mut cv = chain(v);
    while cu.len() >= 2
        && cv.len() >= 2
        && cu[cu.len() - 1] == cv[cv.len() - 1]
        && cu[cu.len() - 2] == cv[cv.len() - 2]
    {
        cu.pop();
        cv.pop();
    }
    debug_assert_eq!(cu.last(), cv.last());
    cv.pop();
    cv.reverse();
    cu.extend(cv);
    cu
}

/// Rotates and orients a closed vertex walk into canonical form: smallest
/// vertex first, heading toward its smaller cycle neighbor.
fn canonicalize(verts: &mut Vec<VertexId>) {
    let n = verts.len();
    let start = (0..n).min_by_key(|&i| (verts[i].0, i)).unwrap();
    verts.rotate_left(start);
    if verts[n - 1].0 < verts[1].0 {
        verts[1..].reverse();
    }
}

fn cycle_from_vertices(s: &TriSurface, edge_sig: &[u64], verts: Vec<VertexId>) -> Cycle {
    let n = verts.len();
    let edges: Vec<EdgeId> = (0..n)
        .map(|i| {
            s.edge_between(verts[i], verts[(i + 1) % n])
                .expect("consecutive cycle vertices are adjacent")
        })
        .collect();
    let base: f64 = edges.iter().fold(0.0, |acc, e| acc + s.base_edge_length(*e));
    let signature = edges.iter().fold(0u64, |acc, e| acc ^ edge_sig[e.idx()]);
    Cycle {
        vertices: verts,
        length: base * s.metric_scale(),
        edges,
        signature,
    }
}

/// Marks every edge crossed by the pushed-off copy of the closed walk: at
/// each corner the copy rounds the vertex on a fixed side, crossing the fan
/// edges strictly between the incoming and outgoing edges in rotation order.
fn push_off(s: &TriSurface, verts: &[VertexId], mut mark: impl FnMut(EdgeId)) {
    let n = verts.len();
    for i in 0..n {
        let v = verts[i];
        let e_in = s
            .edge_between(verts[(i + n - 1) % n], v)
            .expect("cycle edge");
        let e_out = s.edge_between(v, verts[(i + 1) % n]).expect("cycle edge");
        debug_assert_ne!(e_in, e_out, "cycle backtracks at a corner");
        let fan: Vec<EdgeId> = s.neighbors(v).map(|(_, e)| e).collect();
        let pa = fan.iter().position(|&e| e == e_in).unwrap();
        let pb = fan.iter().position(|&e| e == e_out).unwrap();
        let mut k = (pa + 1) % fan.len();
        while k != pb {
            mark(fan[k]);
            k = (k + 1) % fan.len();
        }
    }
}

/// Inverts a symmetric nondegenerate GF(2) matrix given as row bitmasks.
fn invert_gf2(m: &[u64]) -> Vec<u64> {
    let n = m.len();
    let mut a = m.to_vec();
    let mut inv: Vec<u64> = (0..n).map(|i| 1 << i).collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| a[r] >> col & 1 == 1)
            .expect("intersection form of a closed oriented surface is nondegenerate");
        a.swap(col, pivot);
        inv.swap(col, pivot);
        for r in 0..n {
            if r != col && a[r] >> col & 1 == 1 {
                a[r] ^= a[col];
                inv[r] ^= inv[col];
            }
        }
    }
    inv
}

// ---------------------------------------------------------------------------
// Shortest nontrivial cycles
// ---------------------------------------------------------------------------

/// Shortest-path tree on the pure edge graph with signature accumulation.
struct SigTree {
    dist: Vec<f64>,
    parent: Vec<Option<(VertexId, EdgeId)>>,
    sig: Vec<u64>,
}

fn sig_dijkstra(s: &TriSurface, sys: &HomologySystem, src: VertexId) -> SigTree {
    use std::cmp::Reverse;
    let nv = s.vertex_count();
    let mut dist = vec![f64::INFINITY; nv];
    let mut parent: Vec<Option<(VertexId, EdgeId)>> = vec![None; nv];
    let mut sig = vec![0u64; nv];
    let mut heap = std::collections::BinaryHeap::new();
    dist[src.idx()] = 0.0;
    heap.push(Reverse((TotalF64(0.0), src.0)));
    while let Some(Reverse((TotalF64(d), v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for (w, e) in s.neighbors(VertexId(v)) {
            let nd = d + s.base_edge_length(e);
            if nd < dist[w.idx()] {
                dist[w.idx()] = nd;
                parent[w.idx()] = Some((VertexId(v), e));
                sig[w.idx()] = sig[v as usize] ^ sys.edge_mask(e);
                heap.push(Reverse((TotalF64(nd), w.0)));
            }
        }
    }
    SigTree { dist, parent, sig }
}

/// Loop candidate: tree paths to both endpoints of `edge` plus the edge.
#[derive(Clone, Copy)]
struct LoopCandidate {
    value: f64,
    source: u32,
    edge: u32,
}

fn candidate_order(a: &LoopCandidate, b: &LoopCandidate) -> std::cmp::Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.source.cmp(&b.source))
        .then(a.edge.cmp(&b.edge))
}

/// Best nonzero-signature loop through the source, if any.
fn best_source_loop(s: &TriSurface, sys: &HomologySystem, src: VertexId) -> Option<LoopCandidate> {
    let tree = sig_dijkstra(s, sys, src);
    let mut best: Option<LoopCandidate> = None;
    for (ei, e) in s.edges().iter().enumerate() {
        let eid = EdgeId(ei as u32);
        let (a, b) = (e[0].idx(), e[1].idx());
        if tree.sig[a] ^ tree.sig[b] ^ sys.edge_mask(eid) == 0 {
            continue;
        }
        let cand = LoopCandidate {
            value: tree.dist[a] + s.base_edge_length(eid) + tree.dist[b],
            source: src.0,
            edge: ei as u32,
        };
        if best.map_or(true, |c| candidate_order(&cand, &c).is_lt()) {
            best = Some(cand);
        }
    }
    best
}

/// Reconstructs the loop of a candidate as a closed vertex walk, trimming
/// any shared tree prefix of the two paths.
fn candidate_loop(s: &TriSurface, sys: &HomologySystem, cand: LoopCandidate) -> Vec<VertexId> {
    let tree = sig_dijkstra(s, sys, VertexId(cand.source));
    let walk_down = |mut x: VertexId| {
        let mut path = vec![x];
        while let Some((p, _)) = tree.parent[x.idx()] {
            path.push(p);
            x = p;
        }
        path.reverse();
        path
    };
    let [a, b] = s.edge(EdgeId(cand.edge));
    let mut pa = walk_down(a);
    let mut pb = walk_down(b);
    let shared = pa
        .iter()
        .zip(pb.iter())
        .take_while(|(x, y)| x == y)
        .count();
    pa.drain(..shared - 1);
    pb.drain(..shared - 1);
    pb.reverse();
    pb.pop();
    pa.extend(pb);
    pa
}

/// The systole: shortest cycle with nonzero Z2 homology class, exact on the
/// edge graph. Every vertex is scanned as a loop base in parallel; the
/// three-path exchange argument guarantees some scan realizes the minimum.
pub fn systole(s: &TriSurface) -> Result<Cycle, HomologyError> {
    let sys = HomologySystem::new(s)?;
    systole_with(s, &sys)
}

pub fn systole_with(s: &TriSurface, sys: &HomologySystem) -> Result<Cycle, HomologyError> {
    if sys.genus() == 0 {
        return Err(HomologyError::GenusZero);
    }
    let best = (0..s.vertex_count() as u32)
        .into_par_iter()
        .filter_map(|v| best_source_loop(s, sys, VertexId(v)))
        .min_by(candidate_order)
        .expect("positive genus yields nontrivial loops");
    let cycle = sys.cycle(s, candidate_loop(s, sys, best));
    debug_assert!(cycle.signature != 0);
    debug_assert!((cycle.length / s.metric_scale() - best.value).abs() <= 1e-9 * best.value);
    Ok(cycle)
}

/// Tree-cotree homology basis with the pairwise intersection matrix. For a
/// genus-0 surface the basis is empty.
pub fn homology_basis(s: &TriSurface) -> Result<CycleBasis, HomologyError> {
    let sys = HomologySystem::new(s)?;
    let mut cycles = sys.loops.clone();
    cycles.sort_by(|a, b| a.length.total_cmp(&b.length));
    Ok(finish_basis(&sys, cycles))
}

fn finish_basis(sys: &HomologySystem, cycles: Vec<Cycle>) -> CycleBasis {
    let k = cycles.len();
    let mut intersection = vec![vec![0u8; k]; k];
    for i in 0..k {
        for j in 0..k {
            intersection[i][j] = sys.pairing(cycles[i].signature, cycles[j].signature);
        }
    }
    CycleBasis {
        cycles,
        intersection,
        genus: sys.genus(),
    }
}

/// Greedy minimal homology basis: repeatedly the shortest loop candidate
/// whose class is independent of those already chosen. Loop candidates from
/// all shortest-path trees suffice for minimality.
pub fn greedy_minimal_basis(s: &TriSurface) -> Result<CycleBasis, HomologyError> {
    let sys = HomologySystem::new(s)?;
    if sys.genus() == 0 {
        return Ok(finish_basis(&sys, Vec::new()));
    }
    // Cheapest candidate per signature class.
    let maps: Vec<HashMap<u64, LoopCandidate>> = (0..s.vertex_count() as u32)
        .into_par_iter()
        .map(|v| {
            let src = VertexId(v);
            let tree = sig_dijkstra(s, &sys, src);
            let mut best: HashMap<u64, LoopCandidate> = HashMap::new();
            for (ei, e) in s.edges().iter().enumerate() {
                let eid = EdgeId(ei as u32);
                let (a, b) = (e[0].idx(), e[1].idx());
                let sig = tree.sig[a] ^ tree.sig[b] ^ sys.edge_mask(eid);
                if sig == 0 {
                    continue;
                }
                let cand = LoopCandidate {
                    value: tree.dist[a] + s.base_edge_length(eid) + tree.dist[b],
                    source: v,
                    edge: ei as u32,
                };
                best.entry(sig)
                    .and_modify(|c| {
                        if candidate_order(&cand, c).is_lt() {
                            *c = cand;
                        }
                    })
                    .or_insert(cand);
            }
            best
        })
        .collect();
    let mut merged: HashMap<u64, LoopCandidate> = HashMap::new();
    for m in maps {
        for (sig, cand) in m {
            merged
                .entry(sig)
                .and_modify(|c| {
                    if candidate_order(&cand, c).is_lt() {
                        *c = cand;
                    }
                })
                .or_insert(cand);
        }
    }
    let mut pool: Vec<(u64, LoopCandidate)> = merged.into_iter().collect();
    pool.sort_by(|a, b| candidate_order(&a.1, &b.1).then(a.0.cmp(&b.0)));

    // GF(2) elimination in length order.
    let want = 2 * sys.genus() as usize;
    let mut pivots: Vec<u64> = Vec::with_capacity(want);
    let mut chosen: Vec<LoopCandidate> = Vec::with_capacity(want);
    for (sig, cand) in pool {
        let mut r = sig;
        for &p in &pivots {
            let low = p & p.wrapping_neg();
            if r & low != 0 {
                r ^= p;
            }
        }
        if r != 0 {
            pivots.push(r);
            chosen.push(cand);
            if chosen.len() == want {
                break;
            }
        }
    }
    debug_assert_eq!(chosen.len(), want);
    let cycles: Vec<Cycle> = chosen
        .iter()
        .map(|&c| sys.cycle(s, candidate_loop(s, &sys, c)))
        .collect();
    debug_assert!(cycles.windows(2).all(|w| w[0].length <= w[1].length));
    Ok(finish_basis(&sys, cycles))
}

/// Parity of transverse crossings between two cycles: the second is pushed
/// off the skeleton and its crossings are counted along the first. Purely
/// combinatorial (rotation-system based), so no perturbation retries.
pub fn intersection_mod2(s: &TriSurface, c1: &Cycle, c2: &Cycle) -> u8 {
    let mut crossed: HashMap<u32, bool> = HashMap::new();
    push_off(s, &c2.vertices, |e| {
        *crossed.entry(e.0).or_insert(false) ^= true;
    });
    let mut parity = false;
    for e in &c1.edges {
        if crossed.get(&e.0).copied().unwrap_or(false) {
            parity = !parity;
        }
    }
    parity as u8
}

// ---------------------------------------------------------------------------
// Boundary-space oracle
// ---------------------------------------------------------------------------

/// Whether the edge set bounds: reduces its indicator vector against the row
/// space of the triangle boundary matrix over GF(2). Cost grows with
/// edge_count squared; intended as an independent check on small meshes.
pub fn is_boundary(s: &TriSurface, edges: &[EdgeId]) -> bool {
    let ne = s.edge_count();
    let words = ne.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(s.tri_count());
    for t in 0..s.tri_count() as u32 {
        let mut row = vec![0u64; words];
        for e in s.tri_edges(TriId(t)) {
            row[e.idx() / 64] ^= 1 << (e.idx() % 64);
        }
        rows.push(row);
    }
    let mut target = vec![0u64; words];
    for e in edges {
        target[e.idx() / 64] ^= 1 << (e.idx() % 64);
    }
    // Row echelon with on-the-fly reduction of the target.
    let mut pivot_rows: Vec<(usize, Vec<u64>)> = Vec::new();
    for mut row in rows {
        for (bit, prow) in &pivot_rows {
            if row[bit / 64] >> (bit % 64) & 1 == 1 {
                for (a, b) in row.iter_mut().zip(prow) {
                    *a ^= b;
                }
            }
        }
        if let Some(bit) = first_bit(&row) {
            pivot_rows.push((bit, row));
        }
    }
    for (bit, prow) in &pivot_rows {
        if target[bit / 64] >> (bit % 64) & 1 == 1 {
            for (a, b) in target.iter_mut().zip(prow) {
                *a ^= b;
            }
        }
    }
    target.iter().all(|&w| w == 0)
}

fn first_bit(row: &[u64]) -> Option<usize> {
    row.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + w.trailing_zeros() as usize)
}

// ---------------------------------------------------------------------------
// Planarity radius
// ---------------------------------------------------------------------------

/// Largest radius below which every metric ball is planar (vanishing mod-2
/// intersection form on its cycles). Balls are vertex subcomplexes of the
/// measured metric; the scan walks the sorted distance values, so the
/// reported threshold is exact for that ball convention.
pub fn planarity_radius(s: &TriSurface) -> Result<PlanarityReport, HomologyError> {
    let sys = HomologySystem::new(s)?;
    if sys.genus() == 0 {
        let ecc = crate::geodesic::eccentricity(s, VertexId(0))?;
        return Ok(PlanarityReport {
            radius: 2.0 * ecc,
            witness: None,
            bound_is_diameter: true,
            notes: "genus 0: every ball is planar; radius reports a diameter bound".into(),
        });
    }
    let fields: Vec<Vec<f64>> = (0..s.vertex_count() as u32)
        .into_par_iter()
        .map(|v| {
            crate::geodesic::distance_field(s, VertexId(v))
                .expect("closed surfaces are connected")
                .base
        })
        .collect();
    let mut values: Vec<f64> = fields
        .iter()
        .flat_map(|f| f.iter().copied())
        .filter(|&d| d > 0.0)
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let bad = |r: f64| -> bool {
        fields
            .par_iter()
            .any(|dist| ball_nonplanar(s, &sys, dist, r))
    };
    // First distance value whose balls go non-planar; the full surface (the
    // largest value) is non-planar since the genus is positive.
    let mut lo = 0usize;
    let mut hi = values.len() - 1;
    debug_assert!(bad(values[hi]));
    if bad(values[0]) {
        hi = 0;
    }
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if bad(values[mid]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let threshold = values[hi];
    let witness = fields
        .iter()
        .position(|dist| ball_nonplanar(s, &sys, dist, threshold))
        .map(|i| VertexId(i as u32));
    Ok(PlanarityReport {
        radius: threshold * s.metric_scale(),
        witness,
        bound_is_diameter: false,
        notes: format!(
            "threshold over {} distinct radii; ball = vertices within r, edges and \
             triangles with all corners inside",
            values.len()
        ),
    })
}

/// Whether the ball `{dist <= r}` (base units) carries two cycles with odd
/// intersection parity.
fn ball_nonplanar(s: &TriSurface, sys: &HomologySystem, dist: &[f64], r: f64) -> bool {
    let nv = s.vertex_count();
    let in_ball = |v: VertexId| dist[v.idx()] <= r;
    let mut seen = vec![false; nv];
    let mut sig_root = vec![0u64; nv];
    let mut sigs: Vec<u64> = Vec::new();
    let mut stack: Vec<VertexId> = Vec::new();
    for v0 in 0..nv as u32 {
        let v0 = VertexId(v0);
        if seen[v0.idx()] || !in_ball(v0) {
            continue;
        }
        seen[v0.idx()] = true;
        stack.push(v0);
        while let Some(v) = stack.pop() {
            for (w, e) in s.neighbors(v) {
                if !in_ball(w) {
                    continue;
                }
                if !seen[w.idx()] {
                    seen[w.idx()] = true;
                    sig_root[w.idx()] = sig_root[v.idx()] ^ sys.edge_mask(e);
                    stack.push(w);
                } else if w.0 > v.0 {
                    // Non-forest edge: an independent loop of the ball.
                    let sig = sig_root[v.idx()] ^ sig_root[w.idx()] ^ sys.edge_mask(e);
                    if sig != 0 {
                        sigs.push(sig);
                    }
                }
            }
        }
    }
    // Reduce to a basis of the ball's class span, then test the form there.
    let mut pivots: Vec<u64> = Vec::new();
    for mut sig in sigs {
        for &p in &pivots {
            let low = p & p.wrapping_neg();
            if sig & low != 0 {
                sig ^= p;
            }
        }
        if sig != 0 {
            pivots.push(sig);
        }
    }
    for i in 0..pivots.len() {
        for j in i + 1..pivots.len() {
            if sys.pairing(pivots[i], pivots[j]) == 1 {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Straightness audit
// ---------------------------------------------------------------------------

/// Samples vertex pairs along the cycle and compares arc distance against
/// surface distance. A strictly straight cycle has zero defect; the audit
/// passes when the worst relative defect stays within `tolerance`.
pub fn straightness_audit(s: &TriSurface, cycle: &Cycle, tolerance: f64) -> StraightnessReport {
    let n = cycle.vertices.len();
    let k = n.min(12);
    let idxs: Vec<usize> = (0..k).map(|j| j * n / k).collect();
    let mut prefix = vec![0.0f64];
    for e in &cycle.edges {
        prefix.push(prefix.last().unwrap() + s.base_edge_length(*e));
    }
    let total = *prefix.last().unwrap();
    let mut scratch = crate::geodesic::DijkstraScratch::new();
    let mut max_defect = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut pairs = 0usize;
    for (a, &ia) in idxs.iter().enumerate() {
        let targets: Vec<VertexId> = idxs[a + 1..].iter().map(|&ib| cycle.vertices[ib]).collect();
        if targets.is_empty() {
            break;
        }
        scratch.bounded_run(
            s,
            &[(cycle.vertices[ia], 0.0)],
            f64::INFINITY,
            &targets,
            true,
        );
        for &ib in &idxs[a + 1..] {
            let arc = (prefix[ib] - prefix[ia]).min(total - (prefix[ib] - prefix[ia]));
            let surf = scratch.dist_of(cycle.vertices[ib]);
            let defect = (arc - surf).max(0.0) * s.metric_scale();
            pairs += 1;
            if defect > max_defect {
                max_defect = defect;
            }
            if arc > 0.0 {
                let rel = (arc - surf).max(0.0) / arc;
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
    }
    StraightnessReport {
        pairs,
        max_defect,
        max_defect_relative: max_rel,
        tolerance,
        pass: max_rel <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};

    fn torus(n: u32) -> TriSurface {
        generate(
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 1.0,
                n,
            },
            0,
        )
        .unwrap()
        .surface
    }

    fn genus2(handle_scale: f64, n: u32) -> crate::generators::Generated {
        generate(
            GenKind::GenusG {
                genus: 2,
                handle_scale,
                n,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn cocycles_are_closed_on_every_triangle() {
        for s in [
            torus(6),
            genus2(0.5, 10).surface,
            generate(
                GenKind::Icosphere {
                    subdiv: 1,
                    radius: 1.0,
                },
                0,
            )
            .unwrap()
            .surface,
        ] {
            let sys = HomologySystem::new(&s).unwrap();
            for t in 0..s.tri_count() as u32 {
                let [e1, e2, e3] = s.tri_edges(TriId(t));
                assert_eq!(
                    sys.edge_mask(e1) ^ sys.edge_mask(e2) ^ sys.edge_mask(e3),
                    0,
                    "triangle {t} sees an odd crossing"
                );
            }
        }
    }

    #[test]
    fn sphere_has_empty_basis_and_no_systole() {
        let s = generate(
            GenKind::Icosphere {
                subdiv: 1,
                radius: 1.0,
            },
            0,
        )
        .unwrap()
        .surface;
        let basis = homology_basis(&s).unwrap();
        assert_eq!(basis.genus, 0);
        assert!(basis.cycles.is_empty());
        assert!(matches!(systole(&s), Err(HomologyError::GenusZero)));
        let greedy = greedy_minimal_basis(&s).unwrap();
        assert!(greedy.cycles.is_empty());
    }

    #[test]
    fn torus_basis_is_symplectic() {
        let s = torus(8);
        for basis in [homology_basis(&s).unwrap(), greedy_minimal_basis(&s).unwrap()] {
            assert_eq!(basis.cycles.len(), 2);
            assert_eq!(basis.intersection[0], vec![0, 1]);
            assert_eq!(basis.intersection[1], vec![1, 0]);
            for c in &basis.cycles {
                assert_ne!(c.signature, 0);
            }
        }
    }

    #[test]
    fn torus_greedy_basis_has_two_unit_loops() {
        let s = torus(8);
        let basis = greedy_minimal_basis(&s).unwrap();
        assert_eq!(basis.cycles[0].length, 1.0);
        assert_eq!(basis.cycles[1].length, 1.0);
        let sys_cycle = systole(&s).unwrap();
        assert_eq!(sys_cycle.length, 1.0);
        for c in &basis.cycles {
            assert!(sys_cycle.length <= c.length);
        }
    }

    /// Independent systole oracle for the square flat torus: depth-first
    /// enumeration of simple cycles, homology class read off the grid
    /// wrapping parities, lengths folded in the same canonical order.
    fn brute_force_torus_systole(s: &TriSurface, n: u32) -> f64 {
        let nn = n as i64;
        let coord = |v: VertexId| ((v.0 as i64) / nn, (v.0 as i64) % nn);
        let step = |a: i64, b: i64| -> i64 {
            let d = (b - a).rem_euclid(nn);
            if d > nn / 2 {
                d - nn
            } else {
                d
            }
        };
        let canonical_len = |verts: &[VertexId]| -> f64 {
            let mut v = verts.to_vec();
            canonicalize(&mut v);
            let m = v.len();
            (0..m).fold(0.0, |acc, i| {
                acc + s.base_edge_length(s.edge_between(v[i], v[(i + 1) % m]).unwrap())
            })
        };
        // Seed with the straight row loop through vertex 0.
        let row: Vec<VertexId> = (0..n).map(|j| VertexId(j)).collect();
        let mut best = canonical_len(&row);

        let nv = s.vertex_count();
        let mut on_path = vec![false; nv];
        // Stack frames: (vertex, partial length, wrap accumulators).
        fn dfs(
            s: &TriSurface,
            canonical_len: &dyn Fn(&[VertexId]) -> f64,
            coord: &dyn Fn(VertexId) -> (i64, i64),
            step: &dyn Fn(i64, i64) -> i64,
            nn: i64,
            start: VertexId,
            path: &mut Vec<VertexId>,
            on_path: &mut [bool],
            len: f64,
            wrap: (i64, i64),
            best: &mut f64,
        ) {
            let v = *path.last().unwrap();
            for (w, e) in s.neighbors(v) {
                let nl = len + s.base_edge_length(e);
                if nl > *best + 1e-9 {
                    continue;
                }
                let (vi, vj) = coord(v);
                let (wi, wj) = coord(w);
                let nw = (wrap.0 + step(vi, wi), wrap.1 + step(vj, wj));
                if w == start && path.len() >= 3 {
                    let (wx, wy) = (nw.0 / nn, nw.1 / nn);
                    debug_assert_eq!(nw.0 % nn, 0);
                    if wx.rem_euclid(2) != 0 || wy.rem_euclid(2) != 0 {
                        let exact = canonical_len(path);
                        if exact < *best {
                            *best = exact;
                        }
                    }
                    continue;
                }
                if w.0 <= start.0 || on_path[w.idx()] {
                    continue;
                }
                on_path[w.idx()] = true;
                path.push(w);
                dfs(
                    s,
                    canonical_len,
                    coord,
                    step,
                    nn,
                    start,
                    path,
                    on_path,
                    nl,
                    nw,
                    best,
                );
                path.pop();
                on_path[w.idx()] = false;
            }
        }
        for v0 in 0..nv as u32 {
            let start = VertexId(v0);
            let mut path = vec![start];
            on_path[start.idx()] = true;
            dfs(
                s,
                &canonical_len,
                &coord,
                &step,
                nn,
                start,
                &mut path,
                &mut on_path,
                0.0,
                (0, 0),
                &mut best,
            );
            on_path[start.idx()] = false;
        }
        best
    }

    #[test]
    fn systole_matches_brute_force_on_the_small_torus() {
        let s = torus(6);
        let sys_cycle = systole(&s).unwrap();
        let brute = brute_force_torus_systole(&s, 6);
        assert_eq!(sys_cycle.length.to_bits(), brute.to_bits());
    }

    #[test]
    fn systole_of_the_unit_torus_is_one() {
        let s = torus(16);
        let c = systole(&s).unwrap();
        assert!((c.length - 1.0).abs() < 1e-9, "{}", c.length);
        assert_eq!(c.edges.len(), 16);
    }

    #[test]
    fn systole_scales_exactly() {
        let s = torus(8);
        let lambda = 1.0 / 3.0;
        let scaled = s.scale_metric(lambda).unwrap();
        let a = systole(&s).unwrap();
        let b = systole(&scaled).unwrap();
        assert_eq!((a.length * lambda).to_bits(), b.length.to_bits());
        assert_eq!(a.vertices, b.vertices);
    }

    #[test]
    fn thin_handle_waist_is_the_genus2_systole() {
        let g = genus2(0.3, 12);
        let expected = g.sidecar.analytic.as_ref().unwrap()["expected_systole"]
            .as_f64()
            .unwrap();
        let c = systole(&g.surface).unwrap();
        assert_eq!(c.length.to_bits(), expected.to_bits());
        assert_eq!(c.edges.len(), 3);
        let basis = greedy_minimal_basis(&g.surface).unwrap();
        assert_eq!(basis.cycles.len(), 4);
        assert_eq!(basis.cycles[0].length.to_bits(), c.length.to_bits());
        // Signatures of the greedy basis span rank 4.
        let mut pivots: Vec<u64> = Vec::new();
        for c in &basis.cycles {
            let mut r = c.signature;
            for &p in &pivots {
                let low = p & p.wrapping_neg();
                if r & low != 0 {
                    r ^= p;
                }
            }
            assert_ne!(r, 0);
            pivots.push(r);
        }
    }

    #[test]
    fn intersection_agrees_with_signature_pairing() {
        let g = genus2(0.5, 10);
        let s = &g.surface;
        let sys = HomologySystem::new(s).unwrap();
        let basis = homology_basis(s).unwrap();
        for c1 in &basis.cycles {
            for c2 in &basis.cycles {
                assert_eq!(
                    intersection_mod2(s, c1, c2),
                    sys.pairing(c1.signature, c2.signature)
                );
            }
        }
        for c in &basis.cycles {
            assert_eq!(intersection_mod2(s, c, c), 0);
        }
    }

    #[test]
    fn vertex_link_bounds() {
        let s = torus(8);
        let sys = HomologySystem::new(&s).unwrap();
        // The link of a vertex is a closed cycle bounding its star.
        let link: Vec<VertexId> = s.fan(VertexId(20)).iter().map(|&(w, _)| w).collect();
        let c = sys.cycle(&s, link);
        assert_eq!(c.signature, 0);
        assert!(is_boundary(&s, &c.edges));
        // Basis loops do not bound; their edge sets fail the oracle.
        for l in sys.basis_loops() {
            assert_ne!(l.signature, 0);
            assert!(!is_boundary(&s, &l.edges));
        }
    }

    #[test]
    fn torus_planarity_threshold_is_half() {
        let r = planarity_radius(&torus(16)).unwrap();
        assert!(!r.bound_is_diameter);
        assert!((r.radius - 0.5).abs() < 1e-9, "{}", r.radius);
        assert!(r.witness.is_some());
    }

    #[test]
    fn sphere_planarity_is_a_diameter_bound() {
        let s = generate(
            GenKind::Icosphere {
                subdiv: 1,
                radius: 1.0,
            },
            0,
        )
        .unwrap()
        .surface;
        let r = planarity_radius(&s).unwrap();
        assert!(r.bound_is_diameter);
        assert!(r.witness.is_none());
        assert!(r.radius > std::f64::consts::PI * 0.9);
    }

    #[test]
    fn smaller_handles_shrink_the_planarity_radius() {
        let small = planarity_radius(&genus2(0.2, 12).surface).unwrap();
        let large = planarity_radius(&genus2(0.8, 12).surface).unwrap();
        assert!(small.radius > 0.0);
        assert!(small.radius <= large.radius + 1e-12);
        assert!(small.radius < 0.5);
    }

    #[test]
    fn straight_loop_passes_the_audit_and_staircase_fails() {
        let s = torus(16);
        let c = systole(&s).unwrap();
        let report = straightness_audit(&s, &c, 1e-9);
        assert!(report.pass, "defect {}", report.max_defect_relative);
        assert!(report.pairs > 10);

        let n = 16u32;
        let v = |i: u32, j: u32| VertexId((i % n) * n + (j % n));
        let stair: Vec<VertexId> = (0..n)
            .flat_map(|k| [v(k, k), v(k, k + 1)])
            .collect();
        let sys = HomologySystem::new(&s).unwrap();
        let zigzag = sys.cycle(&s, stair);
        assert_ne!(zigzag.signature, 0);
        let report = straightness_audit(&s, &zigzag, 1e-6);
        assert!(!report.pass);
        assert!(report.max_defect_relative > 0.1);
    }

    #[test]
    fn scaling_preserves_combinatorics_of_basis() {
        let s = torus(8);
        let scaled = s.scale_metric(10.0).unwrap();
        let a = greedy_minimal_basis(&s).unwrap();
        let b = greedy_minimal_basis(&scaled).unwrap();
        assert_eq!(a.cycles.len(), b.cycles.len());
        for (x, y) in a.cycles.iter().zip(&b.cycles) {
            assert_eq!(x.vertices, y.vertices);
            assert_eq!((x.length * 10.0).to_bits(), y.length.to_bits());
        }
        assert_eq!(a.intersection, b.intersection);
    }
}
