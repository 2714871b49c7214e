//! Explicit Lipschitz maps to the unit 2-sphere with machine-checkable
//! certificates.
//!
//! The degree-1 construction maps a genus-0 surface through the plane via
//! `x -> (dist(p,x), dist(q,x))`, where q sits on the widest distance-sphere
//! component around the basepoint p. A split curve (two shortest-path arms
//! plus an arc along that component) cuts the surface into two disks. The
//! plane image of the curve provably avoids an open triangle; clamping to
//! the inscribed disk and doubling it over the two hemispheres yields a map
//! whose degree and edge-Lipschitz constant are then verified
//! independently.
//!
//! The systolic variant plays the same game on a surface of positive genus,
//! using two homologous cycles in place of the split curve and a disk of
//! radius `pi / sqrt 2`; it certifies a contracting map whenever the
//! length and separation gates hold, and reports the contradiction branch
//! when no complement region has odd winding.
//!
//! Distances feeding the plane maps are pure edge-graph distances: shortest
//! path arms then have exactly additive coordinates along them, which is
//! what makes the curve-avoidance certificate a finite list of exact
//! inequalities rather than a smoothness assumption.

use crate::geodesic::{
    edge_distance_field, GeodesicError, TotalF64,
};
use crate::homology::{Cycle, HomologySystem};
use crate::levelset::{estimate_d, DEstimate, LevelSetError, RadiiPolicy};
use crate::surface::{EdgeId, TriId, TriSurface, VertexId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};
use thiserror::Error;

/// Relative ring inside the disk treated as already clamped; also the slack
/// allowed before a curve vertex counts as strictly inside the disk.
const CLAMP_TOLERANCE: f64 = 1e-9;
/// Determinant margin below which a sampled value is not considered regular.
const REGULAR_MARGIN: f64 = 1e-11;
/// Maximum allowed distance between the signed-area degree and an integer.
const AREA_RESIDUAL_MAX: f64 = 0.1;
/// Relative slack applied to a claimed Lipschitz bound before it fails.
const MAP_BOUND_TOLERANCE: f64 = 0.05;
const VERIFY_SEED: u64 = 0x0b5e_55ed_5eed_cafe;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("surface has genus {genus}, construction needs {need}")]
    WrongGenus { genus: u32, need: &'static str },
    #[error("planar map sources coincide at vertex {0:?}")]
    CoincidentSources(VertexId),
    #[error("estimate carries no witness component")]
    MissingWitness,
    #[error("witness endpoints snap to the same vertex; refine the mesh")]
    SnapDegenerate,
    #[error("no arc through the level slab joins the witness endpoints")]
    SlabDisconnected,
    #[error("certified corridor height {h} is not positive; refine the mesh")]
    CorridorCollapsed { h: f64 },
    #[error("split curve leaves {regions} regions instead of 2")]
    CurveNotSeparating { regions: u32 },
    #[error("planar map and split curve come from different sources")]
    SourceMismatch,
    #[error("curve vertex {vertex:?} maps {depth} inside the disk; refine the mesh")]
    CurveEntersDisk { vertex: VertexId, depth: f64 },
    #[error("map has {got} images for {expected} vertices")]
    SizeMismatch { got: usize, expected: usize },
    #[error("image of vertex {vertex:?} has norm {norm}, not 1")]
    NonUnitImage { vertex: VertexId, norm: f64 },
    #[error("signed-area degree is {residual} away from an integer")]
    DegreeResidual { residual: f64 },
    #[error("degree methods disagree: signed area {by_area}, regular value {by_regular}")]
    DegreeMismatch { by_area: i64, by_regular: i64 },
    #[error("no regular value found after resampling")]
    NoRegularValue,
    #[error("winding number of region {region} is {value}, not near an integer")]
    WindingUnclear { region: u32, value: f64 },
    #[error("cycle is null-homologous; the construction needs a nontrivial class")]
    TrivialCycle,
    #[error("cycles are not homologous")]
    NotHomologous,
    #[error("cycle length {length} is below the gate {need}")]
    LengthGate { length: f64, need: f64 },
    #[error("companion cycle passes {distance} from the quarter point, needs {need}")]
    TauTooClose { distance: f64, need: f64 },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Level(#[from] LevelSetError),
}

/// Which hemisphere a region doubles onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    North,
    South,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VertexSide {
    North,
    South,
    /// On the cut curve; both hemisphere maps agree there.
    Boundary,
}

// ---------------------------------------------------------------------------
// Planar two-distance map
// ---------------------------------------------------------------------------

/// Per-vertex `(dist(p,x), dist(q,x))` in the edge metric.
#[derive(Clone, Debug, Serialize)]
pub struct PlanarMap {
    pub p: VertexId,
    pub q: VertexId,
    /// Plane values in metric units.
    pub values: Vec<[f64; 2]>,
    /// Largest plane displacement over edge length; at most sqrt(2) up to
    /// rounding.
    pub lipschitz: f64,
}

pub fn build_planar_map(
    s: &TriSurface,
    p: VertexId,
    q: VertexId,
) -> Result<PlanarMap, MapError> {
    if p == q {
        return Err(MapError::CoincidentSources(p));
    }
    let dp = edge_distance_field(s, p)?;
    let dq = edge_distance_field(s, q)?;
    let values: Vec<[f64; 2]> = (0..s.vertex_count() as u32)
        .map(|v| [dp.value(VertexId(v)), dq.value(VertexId(v))])
        .collect();
    let lipschitz = s
        .edges()
        .par_iter()
        .enumerate()
        .map(|(ei, e)| {
            let a = values[e[0].idx()];
            let b = values[e[1].idx()];
            (a[0] - b[0]).hypot(a[1] - b[1]) / s.edge_length(EdgeId(ei as u32))
        })
        .reduce(|| 0.0, f64::max);
    Ok(PlanarMap {
        p,
        q,
        values,
        lipschitz,
    })
}

// ---------------------------------------------------------------------------
// Split curve
// ---------------------------------------------------------------------------

/// Exact plane-geometry bounds certified along the split curve, in metric
/// units. The curve image avoids the open triangle with a vertical side at
/// `x_gamma` spanning height `h` around `y_mid` and 45-degree upper and
/// lower sides.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorridorStats {
    /// Distance from the basepoint to q.
    pub r_q: f64,
    /// Distance from the basepoint to r.
    pub r_r: f64,
    /// Distance from q to r.
    pub d_qr: f64,
    /// Smallest basepoint distance along the level arc.
    pub x_gamma: f64,
    /// Height of the avoided triangle: `2 x_gamma - r_q - r_r + d_qr`.
    pub h: f64,
    /// Vertical midline of the avoided triangle.
    pub y_mid: f64,
}

/// A closed cycle in the 1-skeleton separating a genus-0 surface into two
/// disks: shortest-path arms from the basepoint side to q and r, joined by
/// an arc hugging the witness level component.
#[derive(Clone, Debug, Serialize)]
pub struct SplitCurve {
    pub p: VertexId,
    pub q: VertexId,
    pub r: VertexId,
    /// Shortest edge path p -> q.
    pub g_pq: Vec<VertexId>,
    /// Shortest edge path p -> r.
    pub g_pr: Vec<VertexId>,
    /// Arc q -> r through the level slab.
    pub gamma_qr: Vec<VertexId>,
    /// The closed cycle (shared arm prefix trimmed), first vertex not
    /// repeated.
    pub curve_vertices: Vec<VertexId>,
    pub curve_edges: Vec<EdgeId>,
    /// Provisional hemisphere label per triangle; assembly may swap both.
    pub region: Vec<Region>,
    /// Half-width of the distance slab that admitted the arc, metric units.
    pub delta: f64,
    pub corridor: CorridorStats,
}

fn snap_candidates(s: &TriSurface, pt: crate::geodesic::SurfacePoint) -> Vec<VertexId> {
    match pt {
        crate::geodesic::SurfacePoint::Vertex(v) => vec![v],
        crate::geodesic::SurfacePoint::EdgePoint { edge, .. } => s.edge(edge).to_vec(),
    }
}

fn slab_path(
    s: &TriSurface,
    from: VertexId,
    to: VertexId,
    allowed: impl Fn(VertexId) -> bool,
) -> Option<Vec<VertexId>> {
    use std::cmp::Reverse;
    let nv = s.vertex_count();
    let mut dist = vec![f64::INFINITY; nv];
    let mut parent: Vec<Option<VertexId>> = vec![None; nv];
    let mut heap = std::collections::BinaryHeap::new();
    dist[from.idx()] = 0.0;
    heap.push(Reverse((TotalF64(0.0), from.0)));
    while let Some(Reverse((TotalF64(d), v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        if v == to.0 {
            break;
        }
        for (w, e) in s.neighbors(VertexId(v)) {
            if w != to && !allowed(w) {
                continue;
            }
            let nd = d + s.base_edge_length(e);
            if nd < dist[w.idx()] {
                dist[w.idx()] = nd;
                parent[w.idx()] = Some(VertexId(v));
                heap.push(Reverse((TotalF64(nd), w.0)));
            }
        }
    }
    if !dist[to.idx()].is_finite() {
        return None;
    }
    let mut path = vec![to];
    while let Some(p) = parent[path.last().unwrap().idx()] {
        path.push(p);
    }
    path.reverse();
    Some(path)
}

pub fn build_split_curve(
    s: &TriSurface,
    p: VertexId,
    est: &DEstimate,
) -> Result<SplitCurve, MapError> {
    let genus = s.genus();
    if genus != 0 {
        return Err(MapError::WrongGenus {
            genus,
            need: "genus 0",
        });
    }
    let witness = est.witness.as_ref().ok_or(MapError::MissingWitness)?;
    let scale = s.metric_scale();
    let dp = edge_distance_field(s, p)?;

    // Snap the witness pair to the vertex combination that keeps the most
    // corridor height: the height cannot exceed d(q,r) - |d(p,q) - d(p,r)|.
    let q_cands = snap_candidates(s, witness.pair.0);
    let r_cands = snap_candidates(s, witness.pair.1);
    let q_fields = q_cands
        .iter()
        .map(|&qc| edge_distance_field(s, qc))
        .collect::<Result<Vec<_>, _>>()?;
    let mut choice: Option<(usize, VertexId, f64)> = None;
    for (i, &qc) in q_cands.iter().enumerate() {
        for &rc in &r_cands {
            if qc == rc {
                continue;
            }
            let gain = q_fields[i].base[rc.idx()] - (dp.base[qc.idx()] - dp.base[rc.idx()]).abs();
            if choice.is_none_or(|c| gain > c.2) {
                choice = Some((i, rc, gain));
            }
        }
    }
    let (qi, r, _) = choice.ok_or(MapError::SnapDegenerate)?;
    let q = q_cands[qi];
    let dq = &q_fields[qi];
    let path_q = dp.path_to(q);
    let path_r = dp.path_to(r);
    let shared = path_q
        .iter()
        .zip(path_r.iter())
        .take_while(|(a, b)| a == b)
        .count();
    let arm_q = &path_q[shared - 1..];
    let arm_r = &path_r[shared - 1..];

    let mut blocked = vec![false; s.vertex_count()];
    for v in path_q.iter().chain(path_r.iter()) {
        blocked[v.idx()] = true;
    }
    blocked[q.idx()] = false;
    blocked[r.idx()] = false;

    let level_lo = dp.base[q.idx()].min(dp.base[r.idx()]);
    let level_hi = dp.base[q.idx()].max(dp.base[r.idx()]);
    let mean_base = (0..s.edge_count() as u32)
        .map(|e| s.base_edge_length(EdgeId(e)))
        .sum::<f64>()
        / s.edge_count() as f64;
    // Widening slab schedule: first pinned at the endpoint levels (any dip
    // below them costs corridor height directly), then symmetric growth,
    // finally unrestricted.
    let attempts: [(f64, f64); 6] = [
        (0.0, 2.0),
        (1.0, 2.0),
        (2.0, 4.0),
        (4.0, 8.0),
        (8.0, 16.0),
        (f64::INFINITY, f64::INFINITY),
    ];
    let mut gamma = None;
    let mut delta = 0.0;
    for (below, above) in attempts {
        let lo = level_lo - below * mean_base;
        let hi = level_hi + above * mean_base;
        let found = slab_path(s, q, r, |v| {
            !blocked[v.idx()] && dp.base[v.idx()] >= lo && dp.base[v.idx()] <= hi
        });
        if let Some(path) = found {
            delta = below.max(above) * mean_base * scale;
            gamma = Some(path);
            break;
        }
    }
    let gamma = gamma.ok_or(MapError::SlabDisconnected)?;

    let mut curve_vertices = arm_q.to_vec();
    curve_vertices.extend_from_slice(&gamma[1..]);
    if arm_r.len() >= 2 {
        curve_vertices.extend(arm_r[1..arm_r.len() - 1].iter().rev());
    }
    debug_assert!(
        {
            let set: std::collections::HashSet<_> = curve_vertices.iter().collect();
            set.len() == curve_vertices.len()
        },
        "split curve revisits a vertex"
    );
    let n = curve_vertices.len();
    let curve_edges: Vec<EdgeId> = (0..n)
        .map(|i| {
            s.edge_between(curve_vertices[i], curve_vertices[(i + 1) % n])
                .expect("consecutive split-curve vertices are adjacent")
        })
        .collect();

    let mut cut = vec![false; s.edge_count()];
    for e in &curve_edges {
        cut[e.idx()] = true;
    }
    let (comp, ncomp) = dual_regions(s, &cut);
    if ncomp != 2 {
        return Err(MapError::CurveNotSeparating { regions: ncomp });
    }
    let region: Vec<Region> = comp
        .iter()
        .map(|&c| if c == 0 { Region::North } else { Region::South })
        .collect();

    let x_gamma = gamma
        .iter()
        .map(|v| dp.base[v.idx()])
        .fold(f64::INFINITY, f64::min);
    let r_q = dp.base[q.idx()];
    let r_r = dp.base[r.idx()];
    let d_qr = dq.base[r.idx()];
    let h = 2.0 * x_gamma - r_q - r_r + d_qr;
    if h <= 0.0 {
        return Err(MapError::CorridorCollapsed { h: h * scale });
    }
    let corridor = CorridorStats {
        r_q: r_q * scale,
        r_r: r_r * scale,
        d_qr: d_qr * scale,
        x_gamma: x_gamma * scale,
        h: h * scale,
        y_mid: (r_q - r_r + d_qr) / 2.0 * scale,
    };
    Ok(SplitCurve {
        p,
        q,
        r,
        g_pq: path_q,
        g_pr: path_r,
        gamma_qr: gamma,
        curve_vertices,
        curve_edges,
        region,
        delta,
        corridor,
    })
}

/// Connected components of the dual graph after removing the cut edges.
fn dual_regions(s: &TriSurface, cut: &[bool]) -> (Vec<u32>, u32) {
    let nt = s.tri_count();
    let mut comp = vec![u32::MAX; nt];
    let mut n = 0u32;
    let mut stack = Vec::new();
    for t0 in 0..nt {
        if comp[t0] != u32::MAX {
            continue;
        }
        comp[t0] = n;
        stack.push(TriId(t0 as u32));
        while let Some(t) = stack.pop() {
            for e in s.tri_edges(t) {
                if cut[e.idx()] {
                    continue;
                }
                let [a, b] = s.edge_tris(e);
                let o = if a == t { b } else { a };
                if comp[o.idx()] == u32::MAX {
                    comp[o.idx()] = n;
                    stack.push(o);
                }
            }
        }
        n += 1;
    }
    (comp, n)
}

// ---------------------------------------------------------------------------
// Sphere maps
// ---------------------------------------------------------------------------

/// How a map was produced; geometric parameters are in metric units.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MapConstruction {
    /// Split-curve construction on a genus-0 surface.
    TwoDistanceDisk {
        r: f64,
        d: f64,
        center: [f64; 2],
        radius: f64,
        flipped: bool,
    },
    /// Two-homologous-cycle construction on positive genus.
    SystolicDisk {
        l: f64,
        quarter: f64,
        center: [f64; 2],
        radius: f64,
        winding: i64,
        flipped: bool,
    },
    External,
}

/// A map to the unit sphere, one unit vector per vertex, geodesic
/// interpolation implied on triangles.
#[derive(Clone, Debug, Serialize)]
pub struct SphereMap {
    pub images: Vec<[f64; 3]>,
    /// Hemisphere label per triangle for constructed maps.
    pub tri_region: Option<Vec<Region>>,
    pub vertex_side: Option<Vec<VertexSide>>,
    pub construction: MapConstruction,
}

impl SphereMap {
    /// Wraps externally supplied unit vectors (one per vertex).
    pub fn from_images(images: Vec<[f64; 3]>) -> SphereMap {
        SphereMap {
            images,
            tri_region: None,
            vertex_side: None,
            construction: MapConstruction::External,
        }
    }
}

/// Nominal triangle parameters for the disk: base on `x = r`, height `d`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiskParams {
    pub r: f64,
    pub d: f64,
}

/// Clamps a plane point to the disk and doubles it onto a hemisphere.
/// Clamped points land exactly on the equator.
fn disk_point(value: [f64; 2], center: [f64; 2], radius: f64, side: VertexSide) -> [f64; 3] {
    let ux = value[0] - center[0];
    let uy = value[1] - center[1];
    let rho = ux.hypot(uy);
    if rho >= radius * (1.0 - CLAMP_TOLERANCE) {
        return [ux / rho, uy / rho, 0.0];
    }
    if rho == 0.0 {
        return match side {
            VertexSide::South => [0.0, 0.0, -1.0],
            _ => [0.0, 0.0, 1.0],
        };
    }
    let theta = FRAC_PI_2 * (rho / radius);
    let (sin_t, cos_t) = theta.sin_cos();
    let z = match side {
        VertexSide::South => -cos_t,
        _ => cos_t,
    };
    [sin_t * ux / rho, sin_t * uy / rho, z]
}

fn flip_hemispheres(
    images: &mut [[f64; 3]],
    regions: &mut [Region],
    sides: &mut [VertexSide],
) {
    for img in images.iter_mut() {
        if img[2] != 0.0 {
            img[2] = -img[2];
        }
    }
    for r in regions.iter_mut() {
        *r = match r {
            Region::North => Region::South,
            Region::South => Region::North,
        };
    }
    for v in sides.iter_mut() {
        *v = match v {
            VertexSide::North => VertexSide::South,
            VertexSide::South => VertexSide::North,
            VertexSide::Boundary => VertexSide::Boundary,
        };
    }
}

/// Assembles the split-curve map: clamp the plane image to the disk
/// inscribed in the avoided triangle of `params` and double over the
/// hemispheres according to the curve regions. Fails if any curve vertex
/// maps strictly inside the disk, which signals a mesh too coarse for the
/// certified corridor.
pub fn assemble_degree1_map(
    s: &TriSurface,
    planar: &PlanarMap,
    split: &SplitCurve,
    params: DiskParams,
) -> Result<SphereMap, MapError> {
    if planar.p != split.p || planar.q != split.q {
        return Err(MapError::SourceMismatch);
    }
    let radius = params.d / (2.0 * SQRT_2 + 2.0);
    let center = [params.r - radius, split.corridor.y_mid];

    for &v in &split.curve_vertices {
        let val = planar.values[v.idx()];
        let rho = (val[0] - center[0]).hypot(val[1] - center[1]);
        if rho < radius * (1.0 - CLAMP_TOLERANCE) {
            return Err(MapError::CurveEntersDisk {
                vertex: v,
                depth: radius - rho,
            });
        }
    }

    let mut on_curve = vec![false; s.vertex_count()];
    for &v in &split.curve_vertices {
        on_curve[v.idx()] = true;
    }
    let mut sides: Vec<VertexSide> = (0..s.vertex_count())
        .map(|v| {
            if on_curve[v] {
                VertexSide::Boundary
            } else {
                let (_, t) = s.fan(VertexId(v as u32))[0];
                match split.region[t.idx()] {
                    Region::North => VertexSide::North,
                    Region::South => VertexSide::South,
                }
            }
        })
        .collect();
    let mut images: Vec<[f64; 3]> = (0..s.vertex_count())
        .map(|v| disk_point(planar.values[v], center, radius, sides[v]))
        .collect();
    let mut regions = split.region.clone();
    let flipped = signed_area_degree(s, &images) < -0.5;
    if flipped {
        flip_hemispheres(&mut images, &mut regions, &mut sides);
    }
    Ok(SphereMap {
        images,
        tri_region: Some(regions),
        vertex_side: Some(sides),
        construction: MapConstruction::TwoDistanceDisk {
            r: params.r,
            d: params.d,
            center,
            radius,
            flipped,
        },
    })
}

// ---------------------------------------------------------------------------
// Systolic variant
// ---------------------------------------------------------------------------

/// Outcome of the systolic construction: either a verified-ready map or the
/// report that no complement region wound oddly, which is the proof's
/// contradiction branch rather than a software failure.
#[derive(Clone, Debug, Serialize)]
pub enum SystolicOutcome {
    Map(SphereMap),
    HypothesisFailed { windings: Vec<f64>, note: String },
}

/// Builds a contracting map from two homologous nontrivial cycles on a
/// surface of positive genus. Gates: `gamma` of length at least `4 pi` and
/// `tau` everywhere at least `2 pi` from the quarter point of `gamma`.
pub fn assemble_systolic_map(
    s: &TriSurface,
    sys: &HomologySystem,
    gamma: &Cycle,
    tau: &Cycle,
) -> Result<SystolicOutcome, MapError> {
    if sys.genus() == 0 {
        return Err(MapError::WrongGenus {
            genus: 0,
            need: "genus at least 1",
        });
    }
    let sig_g = sys.signature(&gamma.edges);
    if sig_g == 0 {
        return Err(MapError::TrivialCycle);
    }
    if sig_g != sys.signature(&tau.edges) {
        return Err(MapError::NotHomologous);
    }
    let l = gamma.length;
    if l < 4.0 * PI {
        return Err(MapError::LengthGate {
            length: l,
            need: 4.0 * PI,
        });
    }

    // Quarter point along gamma by arc length.
    let p = gamma.vertices[0];
    let mut prefix = 0.0;
    let mut q = p;
    let mut best_gap = f64::INFINITY;
    for (i, e) in gamma.edges.iter().enumerate() {
        prefix += s.edge_length(*e);
        let gap = (prefix - l / 4.0).abs();
        if gap < best_gap {
            best_gap = gap;
            q = gamma.vertices[(i + 1) % gamma.vertices.len()];
        }
    }
    let dp = edge_distance_field(s, p)?;
    let dq = edge_distance_field(s, q)?;

    let tau_gap = tau
        .vertices
        .iter()
        .map(|v| dq.value(*v))
        .fold(f64::INFINITY, f64::min);
    if tau_gap < 2.0 * PI * (1.0 - 1e-12) {
        return Err(MapError::TauTooClose {
            distance: tau_gap,
            need: 2.0 * PI,
        });
    }

    let center = [dp.value(q), PI];
    let radius = PI / SQRT_2;
    let value = |v: VertexId| [dp.value(v), dq.value(v)];
    for v in gamma.vertices.iter().chain(tau.vertices.iter()) {
        let val = value(*v);
        let rho = (val[0] - center[0]).hypot(val[1] - center[1]);
        if rho < radius * (1.0 - CLAMP_TOLERANCE) {
            return Err(MapError::CurveEntersDisk {
                vertex: *v,
                depth: radius - rho,
            });
        }
    }

    let mut cut = vec![false; s.edge_count()];
    for e in gamma.edges.iter().chain(tau.edges.iter()) {
        cut[e.idx()] = true;
    }
    let (comp, ncomp) = dual_regions(s, &cut);

    // Winding of each region's oriented boundary about the disk center.
    let mut windings = vec![0.0f64; ncomp as usize];
    let curve_pairs = |c: &Cycle| {
        let n = c.vertices.len();
        (0..n)
            .map(|i| (c.vertices[i], c.vertices[(i + 1) % n], c.edges[i]))
            .collect::<Vec<_>>()
    };
    let mut pairs = curve_pairs(gamma);
    pairs.extend(curve_pairs(tau));
    for &(u, v, e) in &pairs {
        let tl = left_tri(s, u, v, e).idx();
        let [t1, t2] = s.edge_tris(e);
        let tr = if t1.idx() == tl { t2.idx() } else { t1.idx() };
        if comp[tl] == comp[tr] {
            continue;
        }
        let a = value(u);
        let b = value(v);
        let d = wrap_angle(
            (b[1] - center[1]).atan2(b[0] - center[0])
                - (a[1] - center[1]).atan2(a[0] - center[0]),
        );
        // Region on the left sees u -> v; the one on the right sees v -> u.
        windings[comp[tl] as usize] += d;
        windings[comp[tr] as usize] -= d;
    }
    let mut chosen = None;
    for (i, w) in windings.iter_mut().enumerate() {
        *w /= TAU;
        let rounded = w.round();
        if (*w - rounded).abs() > AREA_RESIDUAL_MAX {
            return Err(MapError::WindingUnclear {
                region: i as u32,
                value: *w,
            });
        }
        if chosen.is_none() && (rounded as i64) % 2 != 0 {
            chosen = Some((i as u32, rounded as i64));
        }
    }
    let Some((chosen, winding)) = chosen else {
        return Ok(SystolicOutcome::HypothesisFailed {
            windings,
            note: "no complement region winds oddly about the disk; \
                   the contracting map cannot be assembled"
                .into(),
        });
    };

    let mut on_curve = vec![false; s.vertex_count()];
    for v in gamma.vertices.iter().chain(tau.vertices.iter()) {
        on_curve[v.idx()] = true;
    }
    let mut sides: Vec<VertexSide> = (0..s.vertex_count())
        .map(|v| {
            if on_curve[v] {
                VertexSide::Boundary
            } else {
                let (_, t) = s.fan(VertexId(v as u32))[0];
                if comp[t.idx()] == chosen {
                    VertexSide::North
                } else {
                    VertexSide::South
                }
            }
        })
        .collect();
    let mut regions: Vec<Region> = comp
        .iter()
        .map(|&c| if c == chosen { Region::North } else { Region::South })
        .collect();
    let mut images: Vec<[f64; 3]> = (0..s.vertex_count() as u32)
        .map(|v| disk_point(value(VertexId(v)), center, radius, sides[v as usize]))
        .collect();
    let flipped = signed_area_degree(s, &images) < -0.5;
    if flipped {
        flip_hemispheres(&mut images, &mut regions, &mut sides);
    }
    Ok(SystolicOutcome::Map(SphereMap {
        images,
        tri_region: Some(regions),
        vertex_side: Some(sides),
        construction: MapConstruction::SystolicDisk {
            l,
            quarter: center[0],
            center,
            radius,
            winding,
            flipped,
        },
    }))
}

/// Triangle on the left of the directed edge `u -> v`.
fn left_tri(s: &TriSurface, u: VertexId, v: VertexId, e: EdgeId) -> TriId {
    let [t1, t2] = s.edge_tris(e);
    let has = |t: TriId| {
        let [a, b, c] = s.tri(t);
        (a == u && b == v) || (b == u && c == v) || (c == u && a == v)
    };
    if has(t1) {
        t1
    } else {
        debug_assert!(has(t2));
        t2
    }
}

fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Independent checks on a sphere map: edge-Lipschitz constant, degree by
/// signed spherical areas, and degree by preimage counting at a sampled
/// regular value.
#[derive(Clone, Debug, Serialize)]
pub struct MapCertificate {
    pub discrete_lipschitz: f64,
    pub lipschitz_edge: EdgeId,
    /// Agreed degree of the two methods.
    pub degree: i64,
    pub degree_by_area: f64,
    pub area_residual: f64,
    pub degree_by_regular_value: i64,
    pub regular_value: [f64; 3],
    pub bound_claimed: f64,
    /// Whether the Lipschitz constant meets the claim with 5% slack.
    pub bound_pass: bool,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn chord(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn sphere_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    2.0 * (chord(a, b) / 2.0).clamp(-1.0, 1.0).asin()
}

/// Signed spherical excess of the geodesic triangle `a b c`.
fn signed_excess(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    2.0 * det3(a, b, c).atan2(1.0 + dot(a, b) + dot(b, c) + dot(c, a))
}

fn signed_area_degree(s: &TriSurface, images: &[[f64; 3]]) -> f64 {
    let total: f64 = (0..s.tri_count() as u32)
        .into_par_iter()
        .map(|t| {
            let [a, b, c] = s.tri(TriId(t));
            signed_excess(images[a.idx()], images[b.idx()], images[c.idx()])
        })
        .sum();
    total / (4.0 * PI)
}

/// Signed count of triangles covering `z`, or None when `z` is too close to
/// some image edge to classify.
///
/// `z` lies in the spherical triangle `a b c` exactly when the three
/// sub-determinants `det(a,b,z)`, `det(b,c,z)`, `det(c,a,z)` all share the
/// sign of `det(a,b,c)`; that sign is then the local degree. All-equal
/// sub-determinant signs opposite to the orientation put `z` in the
/// antipodal cone, which the triangle does not cover.
pub fn degree_at_value(s: &TriSurface, m: &SphereMap, z: [f64; 3]) -> Option<i64> {
    let m0 = REGULAR_MARGIN;
    let mut count = 0i64;
    for t in 0..s.tri_count() as u32 {
        let [a, b, c] = s.tri(TriId(t));
        let (a, b, c) = (m.images[a.idx()], m.images[b.idx()], m.images[c.idx()]);
        let ori = det3(a, b, c);
        if ori.abs() <= m0 {
            // Degenerate image (a point or an arc of a great circle, the
            // clamped equator bands in particular): covers nothing, decided
            // by distance from z to the carrier plane instead of by signs.
            // Arcs are well defined short of an antipodal pair, and the
            // excess formula needs the triple to stay clear of a full
            // great-circle wrap.
            let diam = chord(a, b).max(chord(b, c)).max(chord(c, a));
            if diam > 2.0 - 1e-9 || 1.0 + dot(a, b) + dot(b, c) + dot(c, a) <= 0.1 {
                return None;
            }
            let n = [cross(a, b), cross(b, c), cross(c, a)]
                .into_iter()
                .max_by(|x, y| dot(*x, *x).total_cmp(&dot(*y, *y)))
                .unwrap();
            let nn = dot(n, n).sqrt();
            if nn < 1e-12 {
                if chord(z, a) < 1e-6 {
                    return None;
                }
                continue;
            }
            if dot(n, z).abs() > 1e-6 * nn {
                continue;
            }
            return None;
        }
        let s1 = det3(a, b, z);
        let s2 = det3(b, c, z);
        let s3 = det3(c, a, z);
        let lo = s1.min(s2).min(s3);
        let hi = s1.max(s2).max(s3);
        if lo > m0 {
            if ori > 0.0 {
                count += 1;
            }
        } else if hi < -m0 {
            if ori < 0.0 {
                count -= 1;
            }
        } else if !(hi > m0 && lo < -m0) {
            return None;
        }
    }
    Some(count)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n < 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub fn verify_map(
    s: &TriSurface,
    m: &SphereMap,
    bound_claimed: f64,
) -> Result<MapCertificate, MapError> {
    if m.images.len() != s.vertex_count() {
        return Err(MapError::SizeMismatch {
            got: m.images.len(),
            expected: s.vertex_count(),
        });
    }
    if let Some((v, n)) = m
        .images
        .iter()
        .enumerate()
        .map(|(v, img)| (v, dot(*img, *img).sqrt()))
        .find(|(_, n)| (n - 1.0).abs() > 1e-12)
    {
        return Err(MapError::NonUnitImage {
            vertex: VertexId(v as u32),
            norm: n,
        });
    }

    let (TotalF64(discrete_lipschitz), lip_edge) = (0..s.edge_count() as u32)
        .into_par_iter()
        .map(|ei| {
            let e = EdgeId(ei);
            let [u, v] = s.edge(e);
            let d = sphere_dist(m.images[u.idx()], m.images[v.idx()]);
            (TotalF64(d / s.edge_length(e)), ei)
        })
        .reduce(
            || (TotalF64(0.0), 0),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );

    let degree_by_area = signed_area_degree(s, &m.images);
    let area_residual = (degree_by_area - degree_by_area.round()).abs();
    if area_residual > AREA_RESIDUAL_MAX {
        return Err(MapError::DegreeResidual {
            residual: area_residual,
        });
    }
    let by_area = degree_by_area.round() as i64;

    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    let mut sampled = None;
    for _ in 0..64 {
        let z = random_unit(&mut rng);
        if let Some(count) = degree_at_value(s, m, z) {
            sampled = Some((z, count));
            break;
        }
    }
    let (regular_value, by_regular) = sampled.ok_or(MapError::NoRegularValue)?;
    if by_regular != by_area {
        return Err(MapError::DegreeMismatch {
            by_area,
            by_regular,
        });
    }

    Ok(MapCertificate {
        discrete_lipschitz,
        lipschitz_edge: EdgeId(lip_edge),
        degree: by_area,
        degree_by_area,
        area_residual,
        degree_by_regular_value: by_regular,
        regular_value,
        bound_claimed,
        bound_pass: discrete_lipschitz <= bound_claimed * (1.0 + MAP_BOUND_TOLERANCE),
    })
}

// ---------------------------------------------------------------------------
// End-to-end pipelines
// ---------------------------------------------------------------------------

/// Everything produced on the way to a verified degree-1 map.
#[derive(Debug, Serialize)]
pub struct DegreeOneBundle {
    pub basepoint: VertexId,
    pub estimate: DEstimate,
    pub planar: PlanarMap,
    pub split: SplitCurve,
    pub map: SphereMap,
    pub certificate: MapCertificate,
}

/// Runs the full construction from a basepoint: estimator, split curve,
/// planar map, disk doubling, verification. The claimed bound uses the
/// certified corridor height, so `bound_pass` holds whenever assembly
/// succeeds.
pub fn degree_one_map(s: &TriSurface, p: VertexId) -> Result<DegreeOneBundle, MapError> {
    let estimate = estimate_d(s, p, &RadiiPolicy::default());
    let split = build_split_curve(s, p, &estimate)?;
    let planar = build_planar_map(s, p, split.q)?;
    let params = DiskParams {
        r: split.corridor.x_gamma,
        d: split.corridor.h,
    };
    let map = assemble_degree1_map(s, &planar, &split, params)?;
    let bound = (2.0 + SQRT_2) * PI / split.corridor.h;
    let certificate = verify_map(s, &map, bound)?;
    Ok(DegreeOneBundle {
        basepoint: p,
        estimate,
        planar,
        split,
        map,
        certificate,
    })
}

/// Two-sided bounds on the degree-1 hypersphericity from a basepoint, with
/// the constructed map as the lower-bound certificate.
#[derive(Debug, Serialize)]
pub struct HsBounds {
    pub lower: f64,
    pub upper: f64,
    pub estimate: DEstimate,
    pub map: SphereMap,
    pub certificate: MapCertificate,
}

pub fn hypersphericity_bounds(s: &TriSurface, p: VertexId) -> Result<HsBounds, MapError> {
    let bundle = degree_one_map(s, p)?;
    let d = bundle.estimate.d;
    let from_sandwich = d / (PI * (2.0 + SQRT_2));
    let from_map = 1.0 / bundle.certificate.discrete_lipschitz;
    Ok(HsBounds {
        lower: from_sandwich.max(from_map),
        upper: 2.0 * d / PI,
        estimate: bundle.estimate,
        map: bundle.map,
        certificate: bundle.certificate,
    })
}

/// Wavefront OBJ with image positions and the surface triangulation.
pub fn sphere_map_obj(s: &TriSurface, m: &SphereMap) -> String {
    let mut out = String::new();
    for img in &m.images {
        out.push_str(&format!("v {} {} {}\n", img[0], img[1], img[2]));
    }
    for t in 0..s.tri_count() as u32 {
        let [a, b, c] = s.tri(TriId(t));
        out.push_str(&format!("f {} {} {}\n", a.0 + 1, b.0 + 1, c.0 + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};
    use crate::geodesic::choose_basepoint;

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

    fn tetrahedron() -> TriSurface {
        let k = 1.0 / 3.0f64.sqrt();
        TriSurface::from_positions(
            vec![
                [k, k, k],
                [k, -k, -k],
                [-k, k, -k],
                [-k, -k, k],
            ],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn planar_map_fixes_its_sources() {
        let s = icosphere(2);
        let p = VertexId(0);
        let q = VertexId(11);
        let m = build_planar_map(&s, p, q).unwrap();
        assert_eq!(m.values[p.idx()][0], 0.0);
        assert_eq!(m.values[q.idx()][1], 0.0);
        let dpq = m.values[q.idx()][0];
        let dqp = m.values[p.idx()][1];
        assert!((dpq - dqp).abs() <= 1e-12 * dpq);
        assert!(m.lipschitz <= 1.415, "{}", m.lipschitz);
        assert!(m.lipschitz > 1.0);
    }

    #[test]
    fn split_curve_separates_the_sphere() {
        let s = icosphere(3);
        let p = choose_basepoint(&s);
        let est = estimate_d(&s, p, &RadiiPolicy::default());
        let split = build_split_curve(&s, p, &est).unwrap();

        let north = split.region.iter().filter(|r| **r == Region::North).count();
        let south = split.region.len() - north;
        assert!(north > 0 && south > 0);
        assert_eq!(split.region.len(), s.tri_count());

        let set: std::collections::HashSet<_> = split.curve_vertices.iter().collect();
        assert_eq!(set.len(), split.curve_vertices.len());
        assert!(split.curve_vertices.len() >= 3);

        // The slab arc stays near the witness level and the first nominal
        // slab width sufficed on the round sphere.
        assert!((split.delta - 2.0 * s.mean_edge_length()).abs() < 1e-12);
        let dp = edge_distance_field(&s, p).unwrap();
        let radius = est.witness.as_ref().unwrap().radius;
        for v in &split.gamma_qr {
            assert!(
                (dp.value(*v) - radius).abs() <= split.delta + 1e-12,
                "arc vertex strays from the level slab"
            );
        }
        assert!(split.corridor.h > 0.5 * est.d);
    }

    #[test]
    fn degree_one_map_verifies_on_the_sphere() {
        let s = icosphere(2);
        let p = choose_basepoint(&s);
        let bundle = degree_one_map(&s, p).unwrap();
        let cert = &bundle.certificate;
        assert_eq!(cert.degree, 1);
        assert!(cert.area_residual < 1e-9);
        assert!(cert.bound_pass);
        assert!(cert.discrete_lipschitz <= cert.bound_claimed * (1.0 + 1e-9));

        // Curve vertices land exactly on the equator.
        for &v in &bundle.split.curve_vertices {
            assert_eq!(bundle.map.images[v.idx()][2], 0.0);
        }
        for img in &bundle.map.images {
            assert!((dot(*img, *img).sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn hypersphericity_interval_contains_one_on_the_unit_sphere() {
        let s = icosphere(2);
        let p = choose_basepoint(&s);
        let hs = hypersphericity_bounds(&s, p).unwrap();
        assert!(hs.lower <= 1.0 && 1.0 <= hs.upper, "{:?}", (hs.lower, hs.upper));
        assert!(hs.upper / hs.lower <= 2.0 * (2.0 + SQRT_2) * (1.0 + 1e-9));
        assert!(hs.lower >= 1.0 / hs.certificate.discrete_lipschitz);
    }

    #[test]
    fn maps_scale_with_the_metric() {
        let s = icosphere(2);
        let p = choose_basepoint(&s);
        let a = degree_one_map(&s, p).unwrap();
        let lambda = 1.0 / 3.0;
        let scaled = s.scale_metric(lambda).unwrap();
        let b = degree_one_map(&scaled, p).unwrap();
        assert_eq!(a.certificate.degree, b.certificate.degree);
        let la = a.certificate.discrete_lipschitz;
        let lb = b.certificate.discrete_lipschitz;
        assert!(
            (lb - la / lambda).abs() <= 1e-9 * lb,
            "lipschitz did not scale: {la} vs {lb}"
        );
        assert_eq!(a.split.curve_vertices, b.split.curve_vertices);
    }

    #[test]
    fn constant_map_has_degree_zero_and_zero_lipschitz() {
        let s = icosphere(1);
        let m = SphereMap::from_images(vec![[0.0, 0.0, 1.0]; s.vertex_count()]);
        let cert = verify_map(&s, &m, 1.0).unwrap();
        assert_eq!(cert.degree, 0);
        assert_eq!(cert.discrete_lipschitz, 0.0);
        assert_eq!(cert.degree_by_area, 0.0);
    }

    #[test]
    fn identity_map_has_degree_one_and_unit_lipschitz() {
        let s = icosphere(2);
        let images: Vec<[f64; 3]> = (0..s.vertex_count() as u32)
            .map(|v| {
                let p = s.position(VertexId(v)).unwrap();
                let n = dot(p, p).sqrt();
                [p[0] / n, p[1] / n, p[2] / n]
            })
            .collect();
        let cert = verify_map(&s, &SphereMap::from_images(images), 1.05).unwrap();
        assert_eq!(cert.degree, 1);
        assert!(cert.discrete_lipschitz > 0.99 && cert.discrete_lipschitz < 1.05);
        assert!(cert.bound_pass);
    }

    #[test]
    fn regular_value_degree_matches_signed_area_on_the_tetrahedron() {
        let s = tetrahedron().refine(1);
        let images: Vec<[f64; 3]> = (0..s.vertex_count() as u32)
            .map(|v| {
                let p = s.position(VertexId(v)).unwrap();
                let n = dot(p, p).sqrt();
                [p[0] / n, p[1] / n, p[2] / n]
            })
            .collect();
        let m = SphereMap::from_images(images);
        let by_area = signed_area_degree(&s, &m.images).round() as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 20 {
            let z = random_unit(&mut rng);
            if let Some(count) = degree_at_value(&s, &m, z) {
                assert_eq!(count, by_area);
                checked += 1;
            }
        }
    }

    #[test]
    fn split_curve_rejects_positive_genus() {
        let s = torus(8);
        let est = estimate_d(&s, VertexId(0), &RadiiPolicy::default());
        assert!(matches!(
            build_split_curve(&s, VertexId(0), &est),
            Err(MapError::WrongGenus { .. })
        ));
    }

    #[test]
    fn systolic_map_contracts_on_a_fat_torus() {
        let n = 16u32;
        let s = torus(n).scale_metric(8.0 * PI).unwrap();
        let sys = HomologySystem::new(&s).unwrap();
        let column = |j: u32| -> Vec<VertexId> {
            (0..n).map(|i| VertexId(i * n + j)).collect()
        };
        let gamma = sys.cycle(&s, column(0));
        let tau = sys.cycle(&s, column(8));
        assert!(gamma.length >= 4.0 * PI);

        let out = assemble_systolic_map(&s, &sys, &gamma, &tau).unwrap();
        let SystolicOutcome::Map(map) = out else {
            panic!("expected a map, got the contradiction branch");
        };
        let cert = verify_map(&s, &map, 1.0).unwrap();
        assert_eq!(cert.degree, 1);
        assert!(
            cert.discrete_lipschitz <= 1.0 + 1e-9,
            "{}",
            cert.discrete_lipschitz
        );
        if let MapConstruction::SystolicDisk { winding, .. } = map.construction {
            assert_eq!(winding.abs(), 1);
        } else {
            panic!("wrong construction descriptor");
        }
    }

    #[test]
    fn systolic_gates_reject_bad_inputs() {
        let n = 16u32;
        let s = torus(n);
        let sys = HomologySystem::new(&s).unwrap();
        let column = |j: u32| -> Vec<VertexId> {
            (0..n).map(|i| VertexId(i * n + j)).collect()
        };
        let gamma = sys.cycle(&s, column(0));
        let tau = sys.cycle(&s, column(8));
        assert!(matches!(
            assemble_systolic_map(&s, &sys, &gamma, &tau),
            Err(MapError::LengthGate { .. })
        ));

        let scaled = s.scale_metric(8.0 * PI).unwrap();
        let sys2 = HomologySystem::new(&scaled).unwrap();
        let gamma2 = sys2.cycle(&scaled, column(0));
        let close = sys2.cycle(&scaled, column(1));
        assert!(matches!(
            assemble_systolic_map(&scaled, &sys2, &gamma2, &close),
            Err(MapError::TauTooClose { .. })
        ));

        let row: Vec<VertexId> = (0..n).map(|j| VertexId(j)).collect();
        let crossing = sys2.cycle(&scaled, row);
        assert!(matches!(
            assemble_systolic_map(&scaled, &sys2, &gamma2, &crossing),
            Err(MapError::NotHomologous)
        ));
    }

    #[test]
    fn obj_export_lists_every_vertex_and_face() {
        let s = icosphere(1);
        let p = choose_basepoint(&s);
        let bundle = degree_one_map(&s, p).unwrap();
        let obj = sphere_map_obj(&s, &bundle.map);
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), s.vertex_count());
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), s.tri_count());
        let json = serde_json::to_string(&bundle.certificate).unwrap();
        assert!(json.contains("discrete_lipschitz"));
    }
}
