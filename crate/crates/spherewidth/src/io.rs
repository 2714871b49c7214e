//! Mesh interchange: ASCII OFF and OBJ, plus a JSON sidecar for metadata.
//!
//! OFF is the canonical format. Floats are written in shortest round-trip
//! form, so `load(save(s))` reproduces edge lengths bit for bit. Surfaces
//! whose metric does not come from an embedding (or whose scale factor is not
//! 1) get their exact edge lengths written into a sidecar file next to the
//! mesh; on load, sidecar lengths take precedence and positions, if any, are
//! kept as provenance only.

use crate::generators::GenKind;
use crate::surface::{EdgeId, TopologyError, TriSurface};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot infer mesh format from path {0:?} (expected .off or .obj)")]
    UnknownFormat(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(IoError::UnknownFormat(path.to_path_buf())),
        }
    }
}

/// Sidecar metadata written next to a mesh file (`<mesh>.json`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshSidecar {
    pub schema_version: u32,
    /// Generator family and parameters, when the mesh came from one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Closed-form reference quantities for tests and audits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Value>,
    /// Exact metric as `[u, v, length]` triples over canonical (u < v) edges;
    /// authoritative over positions when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_lengths: Option<Vec<(u32, u32, f64)>>,
    /// Covering data when the mesh is the total space of a branched cover.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covering: Option<CoveringSidecar>,
}

impl MeshSidecar {
    pub fn empty() -> Self {
        MeshSidecar {
            schema_version: 1,
            generator: None,
            seed: None,
            analytic: None,
            edge_lengths: None,
            covering: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoveringSidecar {
    /// Base vertex under each cover vertex.
    pub projection: Vec<u32>,
    /// Branch vertices in the base mesh.
    pub branch_vertices: Vec<u32>,
    pub epsilon: f64,
    pub degree: u32,
}

#[derive(Debug)]
pub struct LoadedSurface {
    pub surface: TriSurface,
    pub sidecar: Option<MeshSidecar>,
}

/// `<mesh>.json`, e.g. `torus.off` -> `torus.off.json`.
pub fn sidecar_path(mesh: &Path) -> PathBuf {
    let mut os = mesh.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Loads a mesh (format from the extension) and its sidecar if one exists.
/// Sidecar edge lengths, when present, define the metric; positions from the
/// mesh file are kept as provenance.
pub fn load_surface(path: &Path) -> Result<LoadedSurface, IoError> {
    let format = MeshFormat::from_path(path)?;
    let text = std::fs::read_to_string(path)?;
    let (positions, tris) = match format {
        MeshFormat::Off => parse_off(path, &text)?,
        MeshFormat::Obj => parse_obj(path, &text)?,
    };
    let sc_path = sidecar_path(path);
    let sidecar: Option<MeshSidecar> = if sc_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&sc_path)?)?)
    } else {
        None
    };
    let surface = build_loaded(path, positions, tris, sidecar.as_ref())?;
    Ok(LoadedSurface { surface, sidecar })
}

fn build_loaded(
    path: &Path,
    positions: Vec<[f64; 3]>,
    tris: Vec<[u32; 3]>,
    sidecar: Option<&MeshSidecar>,
) -> Result<TriSurface, IoError> {
    if let Some(triples) = sidecar.and_then(|sc| sc.edge_lengths.as_ref()) {
        let mut table = std::collections::HashMap::with_capacity(triples.len());
        for &(u, v, len) in triples {
            table.insert((u.min(v), u.max(v)), len);
        }
        let nonzero = positions
            .iter()
            .any(|p| p.iter().any(|&x| x != 0.0))
            .then_some(positions.clone());
        let mut missing: Option<(u32, u32)> = None;
        let s = TriSurface::from_lengths_with_positions(nonzero, positions.len(), tris, |[u, v]| {
            match table.get(&(u.min(v), u.max(v))) {
                Some(&len) => len,
                None => {
                    missing.get_or_insert((u, v));
                    f64::NAN
                }
            }
        });
        if let Some((u, v)) = missing {
            return Err(IoError::Parse {
                path: display(path),
                line: 0,
                msg: format!("sidecar edge_lengths missing edge ({u}, {v})"),
            });
        }
        Ok(s?)
    } else {
        Ok(TriSurface::from_positions(positions, tris)?)
    }
}

/// Writes a mesh in the given format. When the metric is not faithfully
/// carried by positions (abstract metric or scale factor not 1), exact edge
/// lengths are written to the sidecar; any provided sidecar metadata is
/// merged in.
pub fn save_surface(
    path: &Path,
    s: &TriSurface,
    format: MeshFormat,
    sidecar: Option<&MeshSidecar>,
) -> Result<(), IoError> {
    let needs_lengths = !s.has_positions() || s.metric_scale() != 1.0;
    let text = match format {
        MeshFormat::Off => write_off(s),
        MeshFormat::Obj => write_obj(s),
    };
    std::fs::write(path, text)?;
    let mut sc = sidecar.cloned();
    if needs_lengths {
        let triples: Vec<(u32, u32, f64)> = s
            .edges()
            .iter()
            .enumerate()
            .map(|(ei, e)| (e[0].0, e[1].0, s.edge_length(EdgeId(ei as u32))))
            .collect();
        sc.get_or_insert_with(MeshSidecar::empty).edge_lengths = Some(triples);
    }
    if let Some(sc) = sc {
        let json = serde_json::to_string_pretty(&sc)?;
        std::fs::write(sidecar_path(path), json)?;
    }
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: display(path),
        line,
        msg: msg.into(),
    }
}

/// Lines with comments stripped, keeping 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<[f64; 3]>, Vec<[u32; 3]>), IoError> {
    let mut lines = content_lines(text);
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty file"))?;
    let mut counts_tokens: Vec<&str>;
    if let Some(rest) = header.strip_prefix("OFF") {
        counts_tokens = rest.split_whitespace().collect();
    } else {
        // Headerless dialect: the first line is already the counts.
        counts_tokens = header.split_whitespace().collect();
        if counts_tokens.len() != 3 || counts_tokens.iter().any(|t| t.parse::<u64>().is_err()) {
            return Err(parse_err(path, ln, "expected OFF header"));
        }
    }
    if counts_tokens.is_empty() {
        let (ln2, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, ln, "missing element counts"))?;
        counts_tokens = l.split_whitespace().collect();
        if counts_tokens.len() != 3 {
            return Err(parse_err(path, ln2, "expected `V F E` counts"));
        }
    }
    let nums: Vec<u64> = counts_tokens
        .iter()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(path, ln, format!("bad count: {e}")))?;
    if nums.len() != 3 {
        return Err(parse_err(path, ln, "expected `V F E` counts"));
    }
    let (nv, nf) = (nums[0] as usize, nums[1] as usize);

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in vertex list"))?;
        let mut it = l.split_whitespace();
        let mut p = [0.0f64; 3];
        for slot in &mut p {
            *slot = it
                .next()
                .ok_or_else(|| parse_err(path, ln, "vertex needs 3 coordinates"))?
                .parse()
                .map_err(|e| parse_err(path, ln, format!("bad coordinate: {e}")))?;
        }
        positions.push(p);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "unexpected end of file in face list"))?;
        let mut it = l.split_whitespace();
        let n: usize = it
            .next()
            .ok_or_else(|| parse_err(path, ln, "face needs a vertex count"))?
            .parse()
            .map_err(|e| parse_err(path, ln, format!("bad face size: {e}")))?;
        if n != 3 {
            return Err(parse_err(path, ln, format!("face has {n} vertices, only triangles are supported")));
        }
        let mut f = [0u32; 3];
        for slot in &mut f {
            *slot = it
                .next()
                .ok_or_else(|| parse_err(path, ln, "face needs 3 indices"))?
                .parse()
                .map_err(|e| parse_err(path, ln, format!("bad index: {e}")))?;
        }
        tris.push(f);
    }
    Ok((positions, tris))
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<[f64; 3]>, Vec<[u32; 3]>), IoError> {
    let mut positions = Vec::new();
    let mut tris = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for slot in &mut p {
                    *slot = it
                        .next()
                        .ok_or_else(|| parse_err(path, ln, "v needs 3 coordinates"))?
                        .parse()
                        .map_err(|e| parse_err(path, ln, format!("bad coordinate: {e}")))?;
                }
                positions.push(p);
            }
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(parse_err(
                        path,
                        ln,
                        format!("face has {} vertices, only triangles are supported", idx.len()),
                    ));
                }
                let mut f = [0u32; 3];
                for (slot, tok) in f.iter_mut().zip(&idx) {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| parse_err(path, ln, format!("bad index {first:?}: {e}")))?;
                    if i <= 0 {
                        return Err(parse_err(path, ln, "only positive face indices are supported"));
                    }
                    *slot = (i - 1) as u32;
                }
                tris.push(f);
            }
            _ => {}
        }
    }
    Ok((positions, tris))
}

fn position_or_zero(s: &TriSurface, v: u32) -> [f64; 3] {
    s.position(crate::surface::VertexId(v)).unwrap_or([0.0; 3])
}

fn write_off(s: &TriSurface) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} {}", s.vertex_count(), s.tri_count(), s.edge_count());
    for v in 0..s.vertex_count() as u32 {
        let p = position_or_zero(s, v);
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    for t in s.tris() {
        let _ = writeln!(out, "3 {} {} {}", t[0].0, t[1].0, t[2].0);
    }
    out
}

fn write_obj(s: &TriSurface) -> String {
    let mut out = String::new();
    for v in 0..s.vertex_count() as u32 {
        let p = position_or_zero(s, v);
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    for t in s.tris() {
        let _ = writeln!(out, "f {} {} {}", t[0].0 + 1, t[1].0 + 1, t[2].0 + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};

    #[test]
    fn off_roundtrip_is_bit_exact() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 1,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ico.off");
        save_surface(&path, &g.surface, MeshFormat::Off, None).unwrap();
        let loaded = load_surface(&path).unwrap();
        assert_eq!(loaded.surface.tris(), g.surface.tris());
        for e in 0..g.surface.edge_count() {
            let e = EdgeId(e as u32);
            assert_eq!(
                loaded.surface.edge_length(e).to_bits(),
                g.surface.edge_length(e).to_bits(),
                "edge {e:?}"
            );
        }
        assert!(!sidecar_path(&path).exists());
    }

    #[test]
    fn abstract_metric_roundtrips_via_sidecar() {
        let g = generate(
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 2.0,
                n: 5,
            },
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("torus.off");
        save_surface(&path, &g.surface, MeshFormat::Off, Some(&g.sidecar)).unwrap();
        assert!(sidecar_path(&path).exists());
        let loaded = load_surface(&path).unwrap();
        assert!(!loaded.surface.has_positions());
        for e in 0..g.surface.edge_count() {
            let e = EdgeId(e as u32);
            assert_eq!(
                loaded.surface.edge_length(e).to_bits(),
                g.surface.edge_length(e).to_bits()
            );
        }
        let sc = loaded.sidecar.unwrap();
        assert_eq!(
            sc.generator,
            Some(GenKind::FlatTorus {
                l1: 1.0,
                l2: 2.0,
                n: 5
            })
        );
    }

    #[test]
    fn scaled_embedded_mesh_keeps_exact_lengths() {
        let g = generate(
            GenKind::Icosphere {
                subdiv: 1,
                radius: 1.0,
            },
            0,
        )
        .unwrap();
        let s = g.surface.scale_metric(1.0 / 3.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaled.off");
        save_surface(&path, &s, MeshFormat::Off, None).unwrap();
        let loaded = load_surface(&path).unwrap();
        assert!(loaded.surface.has_positions());
        for e in 0..s.edge_count() {
            let e = EdgeId(e as u32);
            assert_eq!(
                loaded.surface.edge_length(e).to_bits(),
                s.edge_length(e).to_bits()
            );
        }
    }

    #[test]
    fn obj_roundtrip_preserves_combinatorics() {
        let g = generate(
            GenKind::Dumbbell {
                neck_radius: 0.3,
                segments: 8,
            },
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.obj");
        save_surface(&path, &g.surface, MeshFormat::Obj, None).unwrap();
        let loaded = load_surface(&path).unwrap();
        assert_eq!(loaded.surface.tris(), g.surface.tris());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.off");
        std::fs::write(&path, "OFF\n2 1 0\n0 0 0\n1 0 0\n4 0 1 0 1\n").unwrap();
        let err = load_surface(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":5:"), "{msg}");
        assert!(msg.contains("triangles"), "{msg}");
    }

    #[test]
    fn boundary_off_reports_topology_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("open.off");
        std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        let err = load_surface(&path).unwrap_err();
        assert!(matches!(
            err,
            IoError::Topology(TopologyError::NonManifoldEdge { .. })
        ));
    }
}
