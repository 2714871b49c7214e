//! Discrete curve shortening and sweepout search for short closed
//! quasi-geodesics.
//!
//! A curve is a closed loop of mesh vertices; consecutive nodes are joined
//! by shortest paths in the measured metric, the same one distance fields
//! report. One shortening pass resamples the realized polyline to
//! near-uniform node spacing, then runs Birkhoff's alternating scheme:
//! replace every odd node by the midpoint of the shortest path between its
//! neighbors, then every even node. Both moves are replace-by-shortest-
//! segment, so the realized length cannot grow; if rounding ever disagrees
//! the pass is reverted and the curve declared converged.
//!
//! The sweepout search seeds one curve from every distance-sphere component
//! at each Reeb-cylinder radius, shortens the seeds independently, and
//! returns the shortest converged one together with the full outcome table.

use crate::geodesic::{DijkstraScratch, DistanceField, SurfacePoint};
use crate::levelset::{extract_level_components, reeb_graph, LevelSetError};
use crate::surface::{EdgeId, TriSurface, VertexId};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Loops realizing less than this many mean edges are face-scale noise and
/// count as collapsed.
const COLLAPSE_EDGE_FACTOR: f64 = 4.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("a closed curve needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Level(#[from] LevelSetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ShortenOutcome {
    ConvergedGeodesic,
    CollapsedPoint,
    IterLimit,
}

/// A closed vertex loop with its realized length (metric units).
#[derive(Clone, Debug, Serialize)]
pub struct CurveState {
    pub nodes: Vec<VertexId>,
    pub length: f64,
    pub iterations: u32,
}

impl CurveState {
    /// Builds a curve from a closed vertex walk and measures it. Consecutive
    /// duplicates are dropped; at least 3 distinct consecutive nodes remain.
    pub fn new(s: &TriSurface, nodes: Vec<VertexId>) -> Result<CurveState, SweepError> {
        let nodes = dedup_cyclic(nodes);
        if nodes.len() < 3 {
            return Err(SweepError::TooFewNodes(nodes.len()));
        }
        let mut scratch = DijkstraScratch::new();
        let base = realized_length(s, &mut scratch, &nodes);
        Ok(CurveState {
            nodes,
            length: base * s.metric_scale(),
            iterations: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShortenParams {
    /// Full passes before giving up.
    pub max_iters: u32,
    /// Relative stall threshold per pass; doubles as the absolute metric
    /// length below which the curve counts as a point.
    pub tol: f64,
    /// Resampled node spacing in mean-edge multiples.
    pub spacing_edges: f64,
    pub max_nodes: usize,
}

impl Default for ShortenParams {
    fn default() -> Self {
        ShortenParams {
            max_iters: 400,
            tol: 1e-6,
            spacing_edges: 2.0,
            max_nodes: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ShortenReport {
    pub curve: CurveState,
    pub outcome: ShortenOutcome,
    /// Realized metric length before shortening and after each pass;
    /// nonincreasing.
    pub lengths: Vec<f64>,
    /// Largest hinge-angle deviation from pi over the final nodes (radians).
    pub max_turning_defect: f64,
}

fn dedup_cyclic(mut nodes: Vec<VertexId>) -> Vec<VertexId> {
    nodes.dedup();
    while nodes.len() > 1 && nodes.last() == nodes.first() {
        nodes.pop();
    }
    nodes
}

/// Shortest measured path between two vertices, as (vertices, cumulative
/// base lengths).
fn segment(
    s: &TriSurface,
    scratch: &mut DijkstraScratch,
    a: VertexId,
    b: VertexId,
) -> (Vec<VertexId>, Vec<f64>) {
    let d = scratch.bounded_run(s, &[(a, 0.0)], f64::INFINITY, &[b], true);
    debug_assert!(d[0].is_finite(), "surface is connected");
    let path = scratch.path_to(b);
    let cum = path.iter().map(|v| scratch.dist_of(*v)).collect();
    (path, cum)
}

fn segment_length(
    s: &TriSurface,
    scratch: &mut DijkstraScratch,
    a: VertexId,
    b: VertexId,
) -> f64 {
    scratch.bounded_run(s, &[(a, 0.0)], f64::INFINITY, &[b], true)[0]
}

fn realized_length(s: &TriSurface, scratch: &mut DijkstraScratch, nodes: &[VertexId]) -> f64 {
    let n = nodes.len();
    (0..n)
        .map(|i| segment_length(s, scratch, nodes[i], nodes[(i + 1) % n]))
        .sum()
}

/// Concatenated closed polyline realizing the curve, with cumulative base
/// lengths; ends back at the first node.
fn polyline(
    s: &TriSurface,
    scratch: &mut DijkstraScratch,
    nodes: &[VertexId],
) -> (Vec<VertexId>, Vec<f64>) {
    let mut poly = vec![nodes[0]];
    let mut cum = vec![0.0];
    let n = nodes.len();
    for i in 0..n {
        let (path, c) = segment(s, scratch, nodes[i], nodes[(i + 1) % n]);
        let off = *cum.last().unwrap();
        for j in 1..path.len() {
            poly.push(path[j]);
            cum.push(off + c[j]);
        }
    }
    (poly, cum)
}

/// Nodes at near-uniform arc spacing along the realized polyline. Returns
/// the polyline's total base length alongside.
fn resample(
    s: &TriSurface,
    scratch: &mut DijkstraScratch,
    nodes: &[VertexId],
    spacing_base: f64,
    max_nodes: usize,
) -> (Vec<VertexId>, f64) {
    let (poly, cum) = polyline(s, scratch, nodes);
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return (vec![nodes[0]], 0.0);
    }
    let want = ((total / spacing_base).round() as usize).clamp(4, max_nodes) & !1usize;
    let step = total / want as f64;
    let mut out: Vec<VertexId> = Vec::with_capacity(want);
    let mut k = 0usize;
    for i in 0..poly.len() - 1 {
        if k == want {
            break;
        }
        if cum[i] >= k as f64 * step - 1e-12 * total {
            if out.last() != Some(&poly[i]) {
                out.push(poly[i]);
            }
            k += 1;
            while k < want && cum[i] >= k as f64 * step - 1e-12 * total {
                k += 1;
            }
        }
    }
    (dedup_cyclic(out), total)
}

fn midpoint(s: &TriSurface, scratch: &mut DijkstraScratch, a: VertexId, b: VertexId) -> VertexId {
    let (path, cum) = segment(s, scratch, a, b);
    let half = cum.last().unwrap() / 2.0;
    let mut best = 0;
    for (i, c) in cum.iter().enumerate() {
        if (c - half).abs() < (cum[best] - half).abs() {
            best = i;
        }
    }
    path[best]
}

/// Birkhoff shortening. The length sequence in the report is exactly
/// nonincreasing: a pass that fails to shorten (including by rounding) is
/// reverted and the curve declared converged.
pub fn shorten_curve(
    s: &TriSurface,
    seed: CurveState,
    params: &ShortenParams,
) -> Result<ShortenReport, SweepError> {
    if seed.nodes.len() < 3 {
        return Err(SweepError::TooFewNodes(seed.nodes.len()));
    }
    let scale = s.metric_scale();
    let mean_base = (0..s.edge_count() as u32)
        .map(|e| s.base_edge_length(EdgeId(e)))
        .sum::<f64>()
        / s.edge_count() as f64;
    let spacing_base = params.spacing_edges * mean_base;
    let collapse_base = COLLAPSE_EDGE_FACTOR * mean_base;

    let mut scratch = DijkstraScratch::new();
    let mut nodes = seed.nodes;
    let mut len_base = realized_length(s, &mut scratch, &nodes);
    let mut lengths = vec![len_base * scale];
    let mut iterations = seed.iterations;
    let mut outcome = ShortenOutcome::IterLimit;

    for _ in 0..params.max_iters {
        let (resampled, total) = resample(s, &mut scratch, &nodes, spacing_base, params.max_nodes);
        if total <= collapse_base || total * scale < params.tol || resampled.len() < 3 {
            nodes = resampled;
            len_base = total;
            outcome = ShortenOutcome::CollapsedPoint;
            break;
        }
        let before = nodes.clone();
        nodes = resampled;

        let n = nodes.len();
        for parity in [1usize, 0] {
            for i in (parity..n).step_by(2) {
                if parity == 0 && n % 2 == 1 && i == n - 1 {
                    continue;
                }
                let a = nodes[(i + n - 1) % n];
                let b = nodes[(i + 1) % n];
                nodes[i] = midpoint(s, &mut scratch, a, b);
            }
        }
        nodes = dedup_cyclic(nodes);
        if nodes.len() < 3 {
            len_base = realized_length(s, &mut scratch, &nodes);
            outcome = ShortenOutcome::CollapsedPoint;
            break;
        }
        let new_len = realized_length(s, &mut scratch, &nodes);
        if new_len > len_base {
            nodes = before;
            outcome = ShortenOutcome::ConvergedGeodesic;
            break;
        }
        iterations += 1;
        lengths.push(new_len * scale);
        let drop = len_base - new_len;
        len_base = new_len;
        if drop < params.tol * len_base {
            outcome = ShortenOutcome::ConvergedGeodesic;
            break;
        }
    }

    let max_turning_defect = if nodes.len() >= 3 {
        turning_angles(s, &nodes)
            .into_iter()
            .map(|theta| PI - theta)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(ShortenReport {
        curve: CurveState {
            nodes,
            length: len_base * scale,
            iterations,
        },
        outcome,
        lengths,
        max_turning_defect,
    })
}

/// Hinge angle at each node: the comparison-triangle angle built from the
/// measured distances to the neighbor nodes. A geodesic node gives pi.
pub fn turning_angles(s: &TriSurface, nodes: &[VertexId]) -> Vec<f64> {
    let mut scratch = DijkstraScratch::new();
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let a = nodes[(i + n - 1) % n];
            let v = nodes[i];
            let b = nodes[(i + 1) % n];
            let d = scratch.bounded_run(s, &[(v, 0.0)], f64::INFINITY, &[a, b], true);
            let (l1, l2) = (d[0], d[1]);
            let opp = segment_length(s, &mut scratch, a, b);
            if l1 <= 0.0 || l2 <= 0.0 {
                return 0.0;
            }
            let cos = ((l1 * l1 + l2 * l2 - opp * opp) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
            cos.acos()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepoutParams {
    pub shorten: ShortenParams,
    pub max_seeds: usize,
}

impl Default for SweepoutParams {
    fn default() -> Self {
        SweepoutParams {
            shorten: ShortenParams::default(),
            max_seeds: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    /// Field radius the seed fiber was extracted at.
    pub radius: f64,
    pub seed_nodes: usize,
    pub seed_length: f64,
    pub final_length: f64,
    pub outcome: ShortenOutcome,
    pub iterations: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepoutResult {
    /// Shortest converged curve over all seeds, if any converged.
    pub best: Option<ShortenReport>,
    pub records: Vec<SeedRecord>,
}

fn snap_points(s: &TriSurface, points: &[SurfacePoint]) -> Vec<VertexId> {
    let nodes = points
        .iter()
        .map(|p| match *p {
            SurfacePoint::Vertex(v) => v,
            SurfacePoint::EdgePoint { edge, t } => {
                let [a, b] = s.edge(edge);
                if t < 0.5 {
                    a
                } else {
                    b
                }
            }
        })
        .collect();
    dedup_cyclic(nodes)
}

/// Shortens a curve seeded from every level component at every Reeb
/// cylinder's witness and mid-span radii. Seeds run in parallel; the result
/// is deterministic for a fixed field.
pub fn sweepout_search(
    s: &TriSurface,
    field: &DistanceField,
    params: &SweepoutParams,
) -> Result<SweepoutResult, SweepError> {
    let reeb = reeb_graph(s, field);
    let (_, dmax) = field.max();
    let mut radii: Vec<f64> = Vec::new();
    for e in &reeb.edges {
        radii.push(e.witness_radius);
        radii.push((e.span[0] + e.span[1]) / 2.0);
    }
    radii.retain(|r| r.is_finite() && *r > 0.0 && *r < dmax);
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| a.to_bits() == b.to_bits());

    let mut seeds: Vec<(f64, Vec<VertexId>)> = Vec::new();
    for &r in &radii {
        for comp in extract_level_components(s, field, r)? {
            let nodes = snap_points(s, &comp.points);
            if nodes.len() >= 3 {
                seeds.push((r, nodes));
            }
        }
    }
    seeds.truncate(params.max_seeds);

    let runs: Result<Vec<(f64, CurveState, ShortenReport)>, SweepError> = seeds
        .into_par_iter()
        .map(|(r, nodes)| {
            let seed = CurveState::new(s, nodes)?;
            let report = shorten_curve(s, seed.clone(), &params.shorten)?;
            Ok((r, seed, report))
        })
        .collect();
    let runs = runs?;

    let mut records = Vec::with_capacity(runs.len());
    let mut best: Option<ShortenReport> = None;
    for (r, seed, report) in runs {
        records.push(SeedRecord {
            radius: r,
            seed_nodes: seed.nodes.len(),
            seed_length: seed.length,
            final_length: report.curve.length,
            outcome: report.outcome,
            iterations: report.curve.iterations,
        });
        if report.outcome == ShortenOutcome::ConvergedGeodesic
            && best
                .as_ref()
                .map_or(true, |b| report.curve.length < b.curve.length)
        {
            best = Some(report);
        }
    }
    Ok(SweepoutResult { best, records })
}

/// Polyline OBJ for external plotting; None when the surface carries no
/// positions.
pub fn curve_obj(s: &TriSurface, curve: &CurveState) -> Option<String> {
    if !s.has_positions() {
        return None;
    }
    let mut out = String::new();
    for v in &curve.nodes {
        let p = s.position(*v)?;
        out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    out.push('l');
    for i in 1..=curve.nodes.len() {
        out.push_str(&format!(" {i}"));
    }
    out.push_str(" 1\n");
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};
    use crate::geodesic::{choose_basepoint, distance_field};

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
    fn sweepout_finds_the_great_circle_on_the_round_sphere() {
        let s = icosphere(3);
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p).unwrap();
        let out = sweepout_search(&s, &field, &SweepoutParams::default()).unwrap();
        let best = out.best.expect("some seed converges on the sphere");
        let target = 2.0 * PI;
        assert!(
            (best.curve.length - target).abs() <= 0.05 * target,
            "length {} vs {target}",
            best.curve.length
        );
        for w in best.lengths.windows(2) {
            assert!(w[1] <= w[0], "length increased: {:?}", w);
        }
        assert!(!out.records.is_empty());
    }

    #[test]
    fn fan_ring_collapses_to_a_point() {
        let s = icosphere(2);
        let v = choose_basepoint(&s);
        let ring: Vec<VertexId> = s.fan(v).iter().map(|(w, _)| *w).collect();
        let seed = CurveState::new(&s, ring).unwrap();
        let report = shorten_curve(&s, seed, &ShortenParams::default()).unwrap();
        assert_eq!(report.outcome, ShortenOutcome::CollapsedPoint);
        for w in report.lengths.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn latitude_near_the_pole_collapses_monotonically() {
        let s = icosphere(3);
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p).unwrap();
        let comps = extract_level_components(&s, &field, 0.35).unwrap();
        assert_eq!(comps.len(), 1);
        let seed = CurveState::new(&s, snap_points(&s, &comps[0].points)).unwrap();
        let report = shorten_curve(&s, seed, &ShortenParams::default()).unwrap();
        assert_eq!(report.outcome, ShortenOutcome::CollapsedPoint);
        for w in report.lengths.windows(2) {
            assert!(w[1] <= w[0], "length increased: {:?}", w);
        }
    }

    #[test]
    fn converged_curves_are_nearly_straight() {
        let s = icosphere(3);
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p).unwrap();
        let out = sweepout_search(&s, &field, &SweepoutParams::default()).unwrap();
        let best = out.best.unwrap();
        assert!(
            best.max_turning_defect < 0.3,
            "defect {}",
            best.max_turning_defect
        );
    }

    #[test]
    fn ellipsoid_meridian_is_the_shortest_find() {
        let s = generate(
            GenKind::Ellipsoid {
                a: 1.0,
                b: 1.0,
                c: 0.5,
                subdiv: 3,
            },
            0,
        )
        .unwrap()
        .surface;
        // Equatorial basepoint so the fiber family sweeps through the polar
        // ellipses.
        let p = (0..s.vertex_count() as u32)
            .map(VertexId)
            .max_by(|a, b| {
                let pa = s.position(*a).unwrap()[0];
                let pb = s.position(*b).unwrap()[0];
                pa.total_cmp(&pb)
            })
            .unwrap();
        let field = distance_field(&s, p).unwrap();
        let out = sweepout_search(&s, &field, &SweepoutParams::default()).unwrap();
        let best = out.best.expect("a meridian-like seed converges");
        // Circumference of the (1, 0.5) ellipse: 4 E(3/4).
        let target = 4.844224110273838;
        assert!(
            (best.curve.length - target).abs() <= 0.08 * target,
            "length {} vs {target}",
            best.curve.length
        );
    }

    #[test]
    fn shortening_commutes_with_scaling() {
        let s = icosphere(2);
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p).unwrap();
        let comps = extract_level_components(&s, &field, 1.2).unwrap();
        let nodes = snap_points(&s, &comps[0].points);

        let lambda = 3.0;
        let scaled = s.scale_metric(lambda).unwrap();
        let a = shorten_curve(
            &s,
            CurveState::new(&s, nodes.clone()).unwrap(),
            &ShortenParams::default(),
        )
        .unwrap();
        let b = shorten_curve(
            &scaled,
            CurveState::new(&scaled, nodes).unwrap(),
            &ShortenParams::default(),
        )
        .unwrap();
        assert_eq!(a.curve.nodes, b.curve.nodes);
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(
            (a.curve.length * lambda).to_bits(),
            b.curve.length.to_bits()
        );
    }

    #[test]
    fn curve_obj_closes_the_polyline() {
        let s = icosphere(1);
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p).unwrap();
        let comps = extract_level_components(&s, &field, 1.4).unwrap();
        let curve = CurveState::new(&s, snap_points(&s, &comps[0].points)).unwrap();
        let obj = curve_obj(&s, &curve).unwrap();
        assert_eq!(
            obj.lines().filter(|l| l.starts_with("v ")).count(),
            curve.nodes.len()
        );
        let poly = obj.lines().find(|l| l.starts_with('l')).unwrap();
        assert!(poly.ends_with(" 1"));
    }
}
