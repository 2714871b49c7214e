//! Deterministic mesh generators with analytic reference data.
//!
//! Every generator is a pure function of its parameters and seed: identical
//! inputs produce identical surfaces, vertex orders, and sidecar values.
//! Embedded families carry positions; the flat torus and genus-g families are
//! purely intrinsic and carry explicit edge lengths instead.

use crate::geodesic::{distance_field, farthest_point_sample};
use crate::io::{CoveringSidecar, MeshSidecar};
use crate::surface::{EdgeId, TopologyError, TriSurface, VertexId};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("parameter {name} = {value} is out of range: {reason}")]
    BadParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("branch cuts could not be routed disjointly (epsilon {epsilon} too small for the refinement budget)")]
    CutsTooDense { epsilon: f64 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Mesh family and parameters for [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    Icosphere { subdiv: u32, radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64, subdiv: u32 },
    Dumbbell { neck_radius: f64, segments: u32 },
    FingeredSphere { fingers: u32, subdiv: u32 },
    FlatTorus { l1: f64, l2: f64, n: u32 },
    GenusG { genus: u32, handle_scale: f64, n: u32 },
}

pub struct Generated {
    pub surface: TriSurface,
    pub sidecar: MeshSidecar,
}

/// Builds the requested mesh. The seed is recorded and feeds any tie-breaking
/// choices; all families are fully deterministic in `(kind, seed)`.
pub fn generate(kind: GenKind, seed: u64) -> Result<Generated, GenError> {
    match kind {
        GenKind::Icosphere { subdiv, radius } => icosphere_gen(subdiv, radius, seed),
        GenKind::Ellipsoid { a, b, c, subdiv } => ellipsoid_gen(a, b, c, subdiv, seed),
        GenKind::Dumbbell {
            neck_radius,
            segments,
        } => dumbbell_gen(neck_radius, segments, seed),
        GenKind::FingeredSphere { fingers, subdiv } => fingered_gen(fingers, subdiv, seed),
        GenKind::FlatTorus { l1, l2, n } => flat_torus_gen(l1, l2, n, seed),
        GenKind::GenusG {
            genus,
            handle_scale,
            n,
        } => genus_g_gen(genus, handle_scale, n, seed),
    }
}

fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), GenError> {
    if cond {
        Ok(())
    } else {
        Err(GenError::BadParam {
            name,
            value,
            reason,
        })
    }
}

// ---------------------------------------------------------------------------
// Icosphere and derived embedded families
// ---------------------------------------------------------------------------

fn icosahedron() -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let verts = raw.iter().map(|&p| normalize(p)).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Midpoint-subdivides `subdiv` times, reprojecting onto the unit sphere.
fn subdivided_sphere(subdiv: u32) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let (mut verts, mut faces) = icosahedron();
    for _ in 0..subdiv {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let pa = verts[a as usize];
                    let pb = verts[b as usize];
                    verts.push(normalize([
                        (pa[0] + pb[0]) * 0.5,
                        (pa[1] + pb[1]) * 0.5,
                        (pa[2] + pb[2]) * 0.5,
                    ]));
                    verts.len() as u32 - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([m[0], f[1], m[1]]);
            next.push([m[2], m[1], f[2]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn icosphere_gen(subdiv: u32, radius: f64, seed: u64) -> Result<Generated, GenError> {
    check(radius > 0.0 && radius.is_finite(), "radius", radius, "must be positive")?;
    check(subdiv <= 7, "subdiv", subdiv as f64, "must be at most 7")?;
    let (verts, faces) = subdivided_sphere(subdiv);
    let scaled = verts
        .iter()
        .map(|p| [p[0] * radius, p[1] * radius, p[2] * radius])
        .collect();
    let surface = TriSurface::from_positions(scaled, faces)?;
    let analytic = serde_json::json!({
        "round_diameter": std::f64::consts::PI * radius,
        "great_circle_length": 2.0 * std::f64::consts::PI * radius,
        "area": 4.0 * std::f64::consts::PI * radius * radius,
        "genus": 0,
    });
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::Icosphere { subdiv, radius }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths: None,
            covering: None,
        },
    })
}

/// Perimeter of an ellipse with semi-axes `a`, `b` (Gauss AGM evaluation of
/// the complete elliptic integral, accurate to machine precision).
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (mut x, mut y) = (a.max(b), a.min(b));
    let a2 = x * x;
    // P = 2 pi (a^2 - sum 2^(n-1) c_n^2) / agm(a, b) with c_0^2 = a^2 - b^2.
    let mut sum = (x * x - y * y) * 0.5;
    let mut pow = 1.0;
    for _ in 0..64 {
        if x - y <= 4.0 * f64::EPSILON * x {
            break;
        }
        let c = (x - y) * 0.5;
        let xm = 0.5 * (x + y);
        let ym = (x * y).sqrt();
        x = xm;
        y = ym;
        sum += pow * c * c;
        pow *= 2.0;
    }
    2.0 * std::f64::consts::PI * (a2 - sum) / x
}

fn ellipsoid_gen(a: f64, b: f64, c: f64, subdiv: u32, seed: u64) -> Result<Generated, GenError> {
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        check(v > 0.0 && v.is_finite(), name, v, "must be positive")?;
    }
    check(subdiv <= 7, "subdiv", subdiv as f64, "must be at most 7")?;
    let (verts, faces) = subdivided_sphere(subdiv);
    let scaled = verts
        .iter()
        .map(|p| [p[0] * a, p[1] * b, p[2] * c])
        .collect();
    let surface = TriSurface::from_positions(scaled, faces)?;
    let sections = [
        ellipse_perimeter(a, b),
        ellipse_perimeter(b, c),
        ellipse_perimeter(a, c),
    ];
    let analytic = serde_json::json!({
        "principal_section_perimeters": sections,
        "shortest_section_perimeter": sections.iter().cloned().fold(f64::INFINITY, f64::min),
        "genus": 0,
    });
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::Ellipsoid { a, b, c, subdiv }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths: None,
            covering: None,
        },
    })
}

fn fingered_gen(fingers: u32, subdiv: u32, seed: u64) -> Result<Generated, GenError> {
    check((1..=12).contains(&fingers), "fingers", fingers as f64, "must be in 1..=12")?;
    check(subdiv <= 7, "subdiv", subdiv as f64, "must be at most 7")?;
    let (verts, faces) = subdivided_sphere(subdiv);
    let amp = 0.75;
    let width = 0.35;
    let axes: Vec<[f64; 3]> = (0..fingers)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / fingers as f64;
            [th.cos(), th.sin(), 0.0]
        })
        .collect();
    let bumped = verts
        .iter()
        .map(|&p| {
            let mut r = 1.0;
            for ax in &axes {
                let dot = (p[0] * ax[0] + p[1] * ax[1] + p[2] * ax[2]).clamp(-1.0, 1.0);
                let ang = dot.acos();
                r += amp * (-(ang / width) * (ang / width)).exp();
            }
            [p[0] * r, p[1] * r, p[2] * r]
        })
        .collect();
    let surface = TriSurface::from_positions(bumped, faces)?;
    let analytic = serde_json::json!({
        "fingers": fingers,
        "finger_amplitude": amp,
        "genus": 0,
    });
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::FingeredSphere { fingers, subdiv }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths: None,
            covering: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Dumbbell (surface of revolution)
// ---------------------------------------------------------------------------

/// Profile radius of the dumbbell at height `z` in [-2, 2]: two unit lobes
/// tangent at the origin, thickened near z = 0 to a neck of radius `r`.
fn dumbbell_profile(z: f64, r: f64) -> f64 {
    let lobes = (2.0 * z.abs() - z * z).max(0.0);
    let window = (std::f64::consts::PI * z / 4.0).cos();
    (lobes + r * r * window * window).sqrt()
}

fn dumbbell_gen(neck_radius: f64, segments: u32, seed: u64) -> Result<Generated, GenError> {
    check(
        neck_radius > 0.0 && neck_radius < 0.9,
        "neck_radius",
        neck_radius,
        "must be in (0, 0.9)",
    )?;
    check((8..=512).contains(&segments), "segments", segments as f64, "must be in 8..=512")?;
    let n_theta = segments as usize;
    let n_rings = 2 * segments as usize - 1;
    let mut verts: Vec<[f64; 3]> = Vec::new();
    verts.push([0.0, 0.0, -2.0]);
    for k in 1..=n_rings {
        let z = -2.0 + 4.0 * k as f64 / (n_rings + 1) as f64;
        let rho = dumbbell_profile(z, neck_radius);
        for j in 0..n_theta {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
            verts.push([rho * th.cos(), rho * th.sin(), z]);
        }
    }
    verts.push([0.0, 0.0, 2.0]);
    let south = 0u32;
    let north = verts.len() as u32 - 1;
    let ring = |k: usize, j: usize| 1 + ((k - 1) * n_theta + j % n_theta) as u32;

    let mut faces: Vec<[u32; 3]> = Vec::new();
    for j in 0..n_theta {
        faces.push([south, ring(1, j + 1), ring(1, j)]);
    }
    for k in 1..n_rings {
        for j in 0..n_theta {
            let a = ring(k, j);
            let b = ring(k, j + 1);
            let c = ring(k + 1, j + 1);
            let d = ring(k + 1, j);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for j in 0..n_theta {
        faces.push([north, ring(n_rings, j), ring(n_rings, j + 1)]);
    }
    let surface = TriSurface::from_positions(verts, faces)?;
    let analytic = serde_json::json!({
        "neck_circumference": 2.0 * std::f64::consts::PI * neck_radius,
        "height": 4.0,
        "genus": 0,
    });
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::Dumbbell {
                neck_radius,
                segments,
            }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths: None,
            covering: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Flat torus and genus-g (intrinsic metrics)
// ---------------------------------------------------------------------------

fn torus_grid(n: u32) -> Vec<[u32; 3]> {
    let n = n as usize;
    let v = |i: usize, j: usize| ((i % n) * n + (j % n)) as u32;
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            faces.push([v(i, j), v(i, j + 1), v(i + 1, j + 1)]);
            faces.push([v(i, j), v(i + 1, j + 1), v(i + 1, j)]);
        }
    }
    faces
}

/// Edge length on the grid torus: `j` varies along the `l1` direction and `i`
/// along `l2`; the square cells are split along one diagonal.
fn torus_lengths(n: u32, l1: f64, l2: f64) -> impl Fn([u32; 2]) -> f64 {
    let n = n as usize;
    let h1 = l1 / n as f64;
    let h2 = l2 / n as f64;
    let diag = (h1 * h1 + h2 * h2).sqrt();
    move |[u, v]| {
        let (iu, ju) = ((u as usize) / n, (u as usize) % n);
        let (iv, jv) = ((v as usize) / n, (v as usize) % n);
        let di = (iu != iv) as u8;
        let dj = (ju != jv) as u8;
        match (di, dj) {
            (0, 1) => h1,
            (1, 0) => h2,
            (1, 1) => diag,
            _ => unreachable!("grid edge between identical grid coordinates"),
        }
    }
}

fn edge_length_triples(s: &TriSurface) -> Vec<(u32, u32, f64)> {
    s.edges()
        .iter()
        .enumerate()
        .map(|(ei, e)| (e[0].0, e[1].0, s.edge_length(EdgeId(ei as u32))))
        .collect()
}

fn flat_torus_gen(l1: f64, l2: f64, n: u32, seed: u64) -> Result<Generated, GenError> {
    check(l1 > 0.0 && l1.is_finite(), "l1", l1, "must be positive")?;
    check(l2 > 0.0 && l2.is_finite(), "l2", l2, "must be positive")?;
    check((3..=512).contains(&n), "n", n as f64, "must be in 3..=512")?;
    let faces = torus_grid(n);
    let surface = TriSurface::from_lengths((n * n) as usize, faces, torus_lengths(n, l1, l2))?;
    let analytic = serde_json::json!({
        "systole": l1.min(l2),
        "shortest_basis_lengths": [l1.min(l2), l1.max(l2)],
        "genus": 1,
    });
    let edge_lengths = Some(edge_length_triples(&surface));
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::FlatTorus { l1, l2, n }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths,
            covering: None,
        },
    })
}

fn genus_g_gen(genus: u32, handle_scale: f64, n: u32, seed: u64) -> Result<Generated, GenError> {
    check((1..=16).contains(&genus), "genus", genus as f64, "must be in 1..=16")?;
    check(
        handle_scale > 0.0 && handle_scale < 1.5,
        "handle_scale",
        handle_scale,
        "must be in (0, 1.5)",
    )?;
    if genus == 1 {
        return flat_torus_gen(1.0, 1.0, n, seed);
    }
    let handles = (genus - 1) as usize;
    check(
        n >= 6 && (1 + 3 * handles) < n as usize && n <= 256,
        "n",
        n as f64,
        "grid too small for the requested number of handles",
    )?;

    let nn = n as usize;
    let v = |i: usize, j: usize| ((i % nn) * nn + (j % nn)) as u32;
    let h = 1.0 / n as f64;
    let base_len = torus_lengths(n, 1.0, 1.0);

    // Remove one "lower" grid triangle per hole; holes for handle k sit at
    // rows 1 and 1 + n/2, column 1 + 3k, so all hole stars are disjoint.
    let mut faces = torus_grid(n);
    let mut removed: Vec<([u32; 3], [u32; 3])> = Vec::new();
    let mut drop_set: HashSet<[u32; 3]> = HashSet::new();
    for k in 0..handles {
        let (ia, ib) = (1usize, 1 + nn / 2);
        let j = 1 + 3 * k;
        let ta = [v(ia, j), v(ia, j + 1), v(ia + 1, j + 1)];
        let tb = [v(ib, j), v(ib, j + 1), v(ib + 1, j + 1)];
        removed.push((ta, tb));
        drop_set.insert(ta);
        drop_set.insert(tb);
    }
    faces.retain(|f| !drop_set.contains(f));

    // Cross-join each hole pair with a two-ring cylinder through a thin
    // middle ring (m1, m2, m3); the middle ring is the handle waist.
    let mut next_vertex = (nn * nn) as u32;
    let mut extra_lengths: HashMap<(u32, u32), f64> = HashMap::new();
    let rung = h;
    let waist = handle_scale * h;
    for (ta, tb) in &removed {
        let [a1, a2, a3] = *ta;
        let [b1, b2, b3] = *tb;
        let m1 = next_vertex;
        let m2 = next_vertex + 1;
        let m3 = next_vertex + 2;
        next_vertex += 3;
        faces.extend_from_slice(&[
            [a1, a2, m2],
            [m2, m1, a1],
            [a2, a3, m3],
            [m3, m2, a2],
            [a3, a1, m1],
            [m1, m3, a3],
            [m1, m2, b1],
            [b1, b2, m1],
            [m2, m3, b3],
            [b3, b1, m2],
            [m3, m1, b2],
            [b2, b3, m3],
        ]);
        let mut put = |a: u32, b: u32, len: f64| {
            extra_lengths.insert((a.min(b), a.max(b)), len);
        };
        for (x, y) in [(m1, m2), (m2, m3), (m3, m1)] {
            put(x, y, waist);
        }
        for (x, y) in [
            (a1, m1),
            (a1, m2),
            (a2, m2),
            (a2, m3),
            (a3, m3),
            (a3, m1),
            (m1, b1),
            (m1, b2),
            (m2, b1),
            (m2, b3),
            (m3, b2),
            (m3, b3),
        ] {
            put(x, y, rung);
        }
    }

    let surface = TriSurface::from_lengths(next_vertex as usize, faces, |[u, v]| {
        let key = (u.min(v), u.max(v));
        extra_lengths
            .get(&key)
            .copied()
            .unwrap_or_else(|| base_len([u, v]))
    })?;
    debug_assert_eq!(surface.genus(), genus);

    let hole_boundary = 2.0 * h + (2.0f64).sqrt() * h;
    let analytic = serde_json::json!({
        "waist_girth": 3.0 * waist,
        "hole_boundary_length": hole_boundary,
        "expected_systole": (3.0 * waist).min(hole_boundary).min(1.0),
        "genus": genus,
    });
    let edge_lengths = Some(edge_length_triples(&surface));
    Ok(Generated {
        surface,
        sidecar: MeshSidecar {
            schema_version: 1,
            generator: Some(GenKind::GenusG {
                genus,
                handle_scale,
                n,
            }),
            seed: Some(seed),
            analytic: Some(analytic),
            edge_lengths,
            covering: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Branched double cover
// ---------------------------------------------------------------------------

pub struct BranchedCover {
    pub cover: TriSurface,
    pub base: TriSurface,
    /// Base vertex under each cover vertex (a simplicial degree-2 projection).
    pub projection: Vec<VertexId>,
    pub branch_vertices: Vec<VertexId>,
    pub epsilon: f64,
    pub sidecar: MeshSidecar,
}

/// Double cover of the unit sphere branched over a greedy epsilon-net.
///
/// Branch points are paired by nearest-neighbor matching and each pair is
/// joined by a shortest cut path; the two sheets are cross-glued along the
/// cuts. The projection to the base is simplicial of degree 2 and contracts
/// (up to a hair of slack on branch stars, where edge lengths are bumped by a
/// relative 1e-9 to keep the bound strict).
pub fn branched_double_cover(epsilon: f64, seed: u64) -> Result<BranchedCover, GenError> {
    check(
        (0.05..=2.0).contains(&epsilon),
        "epsilon",
        epsilon,
        "must be in [0.05, 2]",
    )?;
    // Pick the coarsest subdivision whose edges are comfortably below epsilon.
    let mut subdiv = 3u32;
    while subdiv < 6 && 1.06 / (1 << subdiv) as f64 > epsilon / 3.0 {
        subdiv += 1;
    }
    if 1.06 / (1 << subdiv) as f64 > epsilon / 2.0 {
        return Err(GenError::CutsTooDense { epsilon });
    }
    let base = icosphere_gen(subdiv, 1.0, seed)?.surface;
    let nv = base.vertex_count();

    // Greedy farthest-point net: every vertex within epsilon of a branch point.
    let start = VertexId((seed % nv as u64) as u32);
    let mut branch = farthest_point_sample(&base, start, usize::MAX, Some(0.999 * epsilon));
    if branch.len() % 2 == 1 {
        // A perfect pairing needs an even count; adding one more greedy point
        // keeps the epsilon coverage and only shrinks the covering radius.
        branch = farthest_point_sample(&base, start, branch.len() + 1, None);
    }
    if branch.len() < 2 {
        return Err(GenError::CutsTooDense { epsilon });
    }

    // Pairwise graph distances among branch points.
    let fields: Vec<Vec<f64>> = branch
        .iter()
        .map(|&b| distance_field(&base, b).expect("connected").into_values())
        .collect();

    // Greedy nearest-neighbor matching.
    let k = branch.len();
    let mut unused: Vec<usize> = (0..k).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    while unused.len() > 1 {
        let mut best = (f64::INFINITY, 0usize, 1usize);
        for (ai, &a) in unused.iter().enumerate() {
            for (bi, &b) in unused.iter().enumerate().skip(ai + 1) {
                let d = fields[a][branch[b].idx()];
                if d < best.0 {
                    best = (d, ai, bi);
                }
            }
        }
        let (_, ai, bi) = best;
        let (a, b) = (unused[ai], unused[bi]);
        unused.retain(|&x| x != a && x != b);
        pairs.push((a, b));
    }

    // Route vertex-disjoint cut paths, shortest pairs first.
    pairs.sort_by(|&(a1, b1), &(a2, b2)| {
        fields[a1][branch[b1].idx()]
            .total_cmp(&fields[a2][branch[b2].idx()])
            .then(a1.cmp(&a2))
    });
    let mut blocked = vec![false; nv];
    for &b in &branch {
        blocked[b.idx()] = true;
    }
    let mut cut_edges: HashSet<EdgeId> = HashSet::new();
    let mut cut_paths: Vec<Vec<VertexId>> = Vec::new();
    for &(a, b) in &pairs {
        let (src, dst) = (branch[a], branch[b]);
        let path = restricted_path(&base, src, dst, &blocked)
            .ok_or(GenError::CutsTooDense { epsilon })?;
        for w in path.windows(2) {
            cut_edges.insert(base.edge_between(w[0], w[1]).unwrap());
        }
        for &v in &path {
            blocked[v.idx()] = true;
        }
        cut_paths.push(path);
    }

    // Orbit construction: corners (triangle, sheet) around each base vertex,
    // glued across the fan with a sheet swap on cut edges.
    let is_branch: HashSet<VertexId> = branch.iter().copied().collect();
    let mut corner_vertex: HashMap<(u32, u8, u32), u32> = HashMap::new();
    let mut proj: Vec<VertexId> = Vec::new();
    let mut next_id = 0u32;
    for vi in 0..nv {
        let vtx = VertexId(vi as u32);
        let fan = base.fan(vtx);
        let m = fan.len();
        let before = next_id;
        let mut assigned: HashSet<(u8, usize)> = HashSet::new();
        for start_sheet in 0..2u8 {
            if assigned.contains(&(start_sheet, 0)) {
                continue;
            }
            let id = next_id;
            next_id += 1;
            proj.push(vtx);
            let mut sheet = start_sheet;
            let mut fi = 0usize;
            loop {
                assigned.insert((sheet, fi));
                corner_vertex.insert((fan[fi].1 .0, sheet, vi as u32), id);
                // The spoke between fan sector fi and fi+1 swaps sheets when cut.
                let nxt = (fi + 1) % m;
                let spoke = base.edge_between(vtx, fan[nxt].0).unwrap();
                if cut_edges.contains(&spoke) {
                    sheet ^= 1;
                }
                fi = nxt;
                if fi == 0 && sheet == start_sheet {
                    break;
                }
            }
        }
        let expected: u32 = if is_branch.contains(&vtx) { 1 } else { 2 };
        if next_id - before != expected {
            return Err(GenError::CutsTooDense { epsilon });
        }
    }

    let mut cover_tris: Vec<[u32; 3]> = Vec::with_capacity(base.tri_count() * 2);
    for sheet in 0..2u8 {
        for ti in 0..base.tri_count() {
            let t = base.tri(crate::surface::TriId(ti as u32));
            cover_tris.push([
                corner_vertex[&(ti as u32, sheet, t[0].0)],
                corner_vertex[&(ti as u32, sheet, t[1].0)],
                corner_vertex[&(ti as u32, sheet, t[2].0)],
            ]);
        }
    }

    let proj_clone = proj.clone();
    let base_ref = &base;
    let branch_ref = &is_branch;
    let cover = TriSurface::from_lengths(next_id as usize, cover_tris, |[u, v]| {
        let bu = proj_clone[u as usize];
        let bv = proj_clone[v as usize];
        let e = base_ref.edge_between(bu, bv).expect("cover edge over base edge");
        let len = base_ref.edge_length(e);
        if branch_ref.contains(&bu) || branch_ref.contains(&bv) {
            len * (1.0 + 1e-9)
        } else {
            len
        }
    })?;

    let sidecar = MeshSidecar {
        schema_version: 1,
        generator: None,
        seed: Some(seed),
        analytic: Some(serde_json::json!({
            "epsilon": epsilon,
            "branch_count": branch.len(),
            "width_bound": 3.0 * epsilon,
            "cover_genus": cover.genus(),
        })),
        edge_lengths: Some(edge_length_triples(&cover)),
        covering: Some(CoveringSidecar {
            projection: proj.iter().map(|p| p.0).collect(),
            branch_vertices: branch.iter().map(|b| b.0).collect(),
            epsilon,
            degree: 2,
        }),
    };

    Ok(BranchedCover {
        cover,
        base,
        projection: proj,
        branch_vertices: branch,
        epsilon,
        sidecar,
    })
}

/// Shortest path between endpoints whose interior avoids blocked vertices.
fn restricted_path(
    s: &TriSurface,
    src: VertexId,
    dst: VertexId,
    blocked: &[bool],
) -> Option<Vec<VertexId>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let nv = s.vertex_count();
    let mut dist = vec![f64::INFINITY; nv];
    let mut parent: Vec<Option<VertexId>> = vec![None; nv];
    let mut heap: BinaryHeap<Reverse<(crate::geodesic::TotalF64, u32)>> = BinaryHeap::new();
    dist[src.idx()] = 0.0;
    heap.push(Reverse((crate::geodesic::TotalF64(0.0), src.0)));
    while let Some(Reverse((crate::geodesic::TotalF64(d), v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        if v == dst.0 {
            break;
        }
        for (w, e) in s.neighbors(VertexId(v)) {
            // Interior vertices must be free; the destination is always allowed.
            if w != dst && blocked[w.idx()] {
                continue;
            }
            let nd = d + s.edge_length(e);
            if nd < dist[w.idx()] {
                dist[w.idx()] = nd;
                parent[w.idx()] = Some(VertexId(v));
                heap.push(Reverse((crate::geodesic::TotalF64(nd), w.0)));
            }
        }
    }
    if !dist[dst.idx()].is_finite() {
        return None;
    }
    let mut path = vec![dst];
    while let Some(p) = parent[path.last().unwrap().idx()] {
        path.push(p);
    }
    if *path.last().unwrap() != src {
        return None;
    }
    path.reverse();
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let info = g.surface.info();
        assert_eq!(info.triangles, 320);
        assert_eq!(info.genus, 0);
        // All vertices on the unit sphere.
        for v in 0..info.vertices {
            let p = g.surface.position(VertexId(v as u32)).unwrap();
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_torus_is_genus_one() {
        let g = generate(
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 2.0,
                n: 8,
            },
            0,
        )
        .unwrap();
        let info = g.surface.info();
        assert_eq!(info.genus, 1);
        assert_eq!(info.euler_characteristic, 0);
        assert_eq!(info.vertices, 64);
    }

    #[test]
    fn dumbbell_is_valid_sphere() {
        let g = generate(
            GenKind::Dumbbell {
                neck_radius: 0.2,
                segments: 16,
            },
            0,
        )
        .unwrap();
        assert_eq!(g.surface.genus(), 0);
    }

    #[test]
    fn fingered_sphere_is_valid() {
        let g = generate(
            GenKind::FingeredSphere {
                fingers: 3,
                subdiv: 3,
            },
            0,
        )
        .unwrap();
        assert_eq!(g.surface.genus(), 0);
    }

    #[test]
    fn genus_two_and_three() {
        for genus in [2u32, 3] {
            let g = generate(
                GenKind::GenusG {
                    genus,
                    handle_scale: 0.5,
                    n: 12,
                },
                0,
            )
            .unwrap();
            assert_eq!(g.surface.genus(), genus, "genus {genus}");
        }
    }

    #[test]
    fn ellipse_perimeter_matches_quadrature() {
        assert!((ellipse_perimeter(1.0, 1.0) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        // Independent oracle: Simpson quadrature of the arclength integrand.
        let quad = |a: f64, b: f64| {
            let n = 1 << 16;
            let h = std::f64::consts::FRAC_PI_2 / n as f64;
            let f = |t: f64| ((a * t.sin()).powi(2) + (b * t.cos()).powi(2)).sqrt();
            let mut s = f(0.0) + f(std::f64::consts::FRAC_PI_2);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            4.0 * s * h / 3.0
        };
        for (a, b) in [(1.0, 0.5), (2.0, 1.5), (1.0, 0.999)] {
            let agm = ellipse_perimeter(a, b);
            let q = quad(a, b);
            assert!((agm - q).abs() < 1e-9 * q, "({a},{b}): agm {agm} quad {q}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = generate(
            GenKind::Dumbbell {
                neck_radius: 0.3,
                segments: 12,
            },
            7,
        )
        .unwrap();
        let b = generate(
            GenKind::Dumbbell {
                neck_radius: 0.3,
                segments: 12,
            },
            7,
        )
        .unwrap();
        assert_eq!(a.surface.tris(), b.surface.tris());
        for e in 0..a.surface.edge_count() {
            let e = EdgeId(e as u32);
            assert_eq!(
                a.surface.edge_length(e).to_bits(),
                b.surface.edge_length(e).to_bits()
            );
        }
    }
}
