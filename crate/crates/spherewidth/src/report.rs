//! Versioned machine-readable reports. Every computed value travels with
//! the constant it is checked against, the threshold, the tolerance
//! granted, and witness identifiers, so a report can be audited without
//! rerunning the computation. Rendering is deterministic: same inputs,
//! byte-identical output, no timestamps.

use crate::generators::{branched_double_cover, generate, GenError, GenKind};
use crate::geodesic::{choose_basepoint, distance_field, metric_tolerance, GeodesicError};
use crate::homology::{greedy_minimal_basis, systole, HomologyError};
use crate::levelset::{estimate_d, map_width, uryson_width_upper, LevelSetError, RadiiPolicy};
use crate::spheremap::{hypersphericity_bounds, verify_map, MapError, SphereMap};
use crate::surface::TriSurface;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Homology(#[from] HomologyError),
    #[error(transparent)]
    Level(#[from] LevelSetError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// One audited inequality or equality.
#[derive(Clone, Debug, Serialize)]
pub struct CheckEntry {
    pub name: String,
    /// Fixed constant the bound is built from, when one exists.
    pub constant: Option<f64>,
    pub computed: f64,
    /// Threshold the computed value is compared against.
    pub bound: f64,
    /// Slack granted beyond the bound.
    pub tolerance: f64,
    pub witness: Value,
    pub pass: bool,
}

impl CheckEntry {
    pub fn at_most(
        name: impl Into<String>,
        computed: f64,
        bound: f64,
        tolerance: f64,
        witness: Value,
    ) -> CheckEntry {
        CheckEntry {
            name: name.into(),
            constant: None,
            computed,
            bound,
            tolerance,
            witness,
            pass: computed <= bound + tolerance,
        }
    }

    pub fn at_least(
        name: impl Into<String>,
        computed: f64,
        bound: f64,
        tolerance: f64,
        witness: Value,
    ) -> CheckEntry {
        CheckEntry {
            name: name.into(),
            constant: None,
            computed,
            bound,
            tolerance,
            witness,
            pass: computed >= bound - tolerance,
        }
    }

    pub fn within(
        name: impl Into<String>,
        computed: f64,
        target: f64,
        tolerance: f64,
        witness: Value,
    ) -> CheckEntry {
        CheckEntry {
            name: name.into(),
            constant: None,
            computed,
            bound: target,
            tolerance,
            witness,
            pass: (computed - target).abs() <= tolerance,
        }
    }

    pub fn with_constant(mut self, c: f64) -> CheckEntry {
        self.constant = Some(c);
        self
    }
}

/// Identity block for the mesh a report was computed on.
#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub source: String,
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub genus: u32,
    pub refine: u32,
    /// Relative slack of measured distances induced by the mesh resolution.
    pub distance_tolerance: f64,
}

impl MeshSummary {
    pub fn new(s: &TriSurface, source: impl Into<String>, refine: u32) -> MeshSummary {
        MeshSummary {
            source: source.into(),
            vertices: s.vertex_count(),
            edges: s.edge_count(),
            triangles: s.tri_count(),
            genus: s.genus(),
            refine,
            distance_tolerance: metric_tolerance(s),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub mesh: Option<MeshSummary>,
    pub checks: Vec<CheckEntry>,
    /// True when every check passed.
    pub passed: bool,
    pub data: Value,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            mesh: None,
            checks: Vec::new(),
            passed: true,
            data: Value::Null,
        }
    }

    pub fn push(&mut self, check: CheckEntry) {
        self.passed &= check.pass;
        self.checks.push(check);
    }

    pub fn render(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Structured error envelope for stderr.
pub fn error_json(kind: &str, message: &str) -> String {
    let mut out = serde_json::to_string_pretty(&json!({
        "schema_version": SCHEMA_VERSION,
        "error": { "kind": kind, "message": message },
    }))
    .expect("error serializes");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Default audit suite
// ---------------------------------------------------------------------------

const LIP_BOUND_SLACK: f64 = 1.05;
const COVER_LIP_BOUND: f64 = 1.02;
const SCHEDULE_PER_CYCLE: f64 = 200.0;
const WIDTH_SCHEDULE_OFFSET: f64 = 12.0;
const SYS_WIDTH_FACTOR: f64 = 8.0;

pub fn genus0_suite(seed: u64, refine: u32) -> Result<Vec<(&'static str, TriSurface)>, GenError> {
    let kinds: [(&'static str, GenKind); 4] = [
        (
            "icosphere",
            GenKind::Icosphere {
                subdiv: 2,
                radius: 1.0,
            },
        ),
        (
            "ellipsoid",
            GenKind::Ellipsoid {
                a: 1.0,
                b: 1.0,
                c: 0.5,
                subdiv: 2,
            },
        ),
        (
            "dumbbell",
            GenKind::Dumbbell {
                neck_radius: 0.2,
                segments: 12,
            },
        ),
        (
            "fingered_sphere",
            GenKind::FingeredSphere {
                fingers: 3,
                subdiv: 2,
            },
        ),
    ];
    kinds
        .into_iter()
        .map(|(name, kind)| Ok((name, generate(kind, seed)?.surface.refine(refine))))
        .collect()
}

pub fn positive_genus_suite(
    seed: u64,
    refine: u32,
) -> Result<Vec<(&'static str, TriSurface)>, GenError> {
    let kinds: [(&'static str, GenKind); 4] = [
        (
            "flat_torus",
            GenKind::FlatTorus {
                l1: 1.0,
                l2: 1.0,
                n: 16,
            },
        ),
        (
            "genus_1",
            GenKind::GenusG {
                genus: 1,
                handle_scale: 0.5,
                n: 10,
            },
        ),
        (
            "genus_2",
            GenKind::GenusG {
                genus: 2,
                handle_scale: 0.5,
                n: 10,
            },
        ),
        (
            "genus_3",
            GenKind::GenusG {
                genus: 3,
                handle_scale: 0.5,
                n: 10,
            },
        ),
    ];
    kinds
        .into_iter()
        .map(|(name, kind)| Ok((name, generate(kind, seed)?.surface.refine(refine))))
        .collect()
}

/// The inequality suite behind the `audit` command: degree-1 certificates
/// and sandwich consistency on the genus-0 meshes, systole against eight
/// times the width upper bound, the 200k length schedule on normalized
/// genus-G meshes, and the branched-cover contraction and width bounds.
pub fn run_default_audit(seed: u64, refine: u32) -> Result<Report, ReportError> {
    let mut report = Report::new("audit");
    report.data = json!({ "suite": "default", "seed": seed, "refine": refine });

    for (name, s) in genus0_suite(seed, refine)? {
        let p = choose_basepoint(&s);
        let hs = hypersphericity_bounds(&s, p)?;
        let d = hs.estimate.d;
        report.push(CheckEntry::at_most(
            format!("{name}: hs sandwich ordered"),
            hs.lower,
            hs.upper,
            0.0,
            json!({ "basepoint": p.0, "d": d }),
        ));
        report.push(CheckEntry::within(
            format!("{name}: constructed map degree"),
            hs.certificate.degree as f64,
            1.0,
            0.0,
            json!({ "by_area": hs.certificate.degree_by_area }),
        ));
        let lip_bound = (2.0 + SQRT_2) * PI / d;
        report.push(
            CheckEntry::at_most(
                format!("{name}: map lipschitz vs (2+sqrt2)pi/D"),
                hs.certificate.discrete_lipschitz,
                LIP_BOUND_SLACK * lip_bound,
                0.0,
                json!({ "d": d, "bound_claimed": hs.certificate.bound_claimed }),
            )
            .with_constant((2.0 + SQRT_2) * PI),
        );
        if name == "icosphere" {
            report.push(CheckEntry::at_most(
                "icosphere: sandwich lower end vs true value",
                hs.lower,
                1.0,
                0.0,
                json!({ "upper": hs.upper }),
            ));
            report.push(CheckEntry::at_least(
                "icosphere: sandwich upper end vs true value",
                hs.upper,
                1.0,
                0.0,
                json!({ "lower": hs.lower }),
            ));
        }
    }

    for (name, s) in positive_genus_suite(seed, refine)? {
        let sys = systole(&s)?;
        let p = choose_basepoint(&s);
        let field = distance_field(&s, p)?;
        let width = uryson_width_upper(&s, &field);
        report.push(
            CheckEntry::at_most(
                format!("{name}: systole vs 8x width upper"),
                sys.length,
                SYS_WIDTH_FACTOR * width.width,
                0.0,
                json!({ "basepoint": p.0, "width": width.width, "systole_edges": sys.edges.len() }),
            )
            .with_constant(SYS_WIDTH_FACTOR),
        );
    }

    for g in 1u32..=3 {
        let s = generate(
            GenKind::GenusG {
                genus: g,
                handle_scale: 0.5,
                n: 10,
            },
            seed,
        )?
        .surface
        .refine(refine);
        let p = choose_basepoint(&s);
        let est = estimate_d(&s, p, &RadiiPolicy::default());
        // Rescale so the certified upper bound 2D/pi equals 1.
        let scaled = s.scale_metric(PI / (2.0 * est.d)).expect("positive scale");
        let basis = greedy_minimal_basis(&scaled)?;
        for (k, cycle) in basis.cycles.iter().enumerate() {
            report.push(
                CheckEntry::at_most(
                    format!("genus_{g}: greedy cycle {} vs 200k schedule", k + 1),
                    cycle.length,
                    SCHEDULE_PER_CYCLE * (k + 1) as f64,
                    0.0,
                    json!({ "edges": cycle.edges.len() }),
                )
                .with_constant(SCHEDULE_PER_CYCLE),
            );
        }
        let fp = choose_basepoint(&scaled);
        let sfield = distance_field(&scaled, fp)?;
        let width = uryson_width_upper(&scaled, &sfield);
        report.push(
            CheckEntry::at_most(
                format!("genus_{g}: width upper vs 200G + 12"),
                width.width,
                SCHEDULE_PER_CYCLE * g as f64 + WIDTH_SCHEDULE_OFFSET,
                0.0,
                json!({ "basepoint": fp.0, "samples": width.samples }),
            )
            .with_constant(SCHEDULE_PER_CYCLE),
        );
    }

    {
        let cover = branched_double_cover(0.3, seed)?;
        let images: Vec<[f64; 3]> = cover
            .projection
            .iter()
            .map(|&b| {
                let p = cover.base.position(b).expect("base has positions");
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                [p[0] / n, p[1] / n, p[2] / n]
            })
            .collect();
        let cert = verify_map(&cover.cover, &SphereMap::from_images(images), COVER_LIP_BOUND)?;
        report.push(CheckEntry::within(
            "branched cover: projection degree",
            cert.degree as f64,
            2.0,
            0.0,
            json!({ "by_area": cert.degree_by_area }),
        ));
        report.push(CheckEntry::at_most(
            "branched cover: projection lipschitz",
            cert.discrete_lipschitz,
            COVER_LIP_BOUND,
            0.0,
            json!({ "branch_points": cover.branch_vertices.len() }),
        ));
        let mw = map_width(&cover.cover, &cover.base, &cover.projection)?;
        report.push(
            CheckEntry::at_most(
                "branched cover: map width vs 3 epsilon",
                mw.width,
                3.0 * cover.epsilon,
                0.0,
                json!({ "epsilon": cover.epsilon, "samples": mw.samples }),
            )
            .with_constant(3.0),
        );
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_entries_compare_with_slack() {
        assert!(CheckEntry::at_most("x", 1.04, 1.0, 0.05, Value::Null).pass);
        assert!(!CheckEntry::at_most("x", 1.06, 1.0, 0.05, Value::Null).pass);
        assert!(CheckEntry::at_least("x", 0.96, 1.0, 0.05, Value::Null).pass);
        assert!(CheckEntry::within("x", 1.02, 1.0, 0.05, Value::Null).pass);
        assert!(!CheckEntry::within("x", 0.9, 1.0, 0.05, Value::Null).pass);
    }

    #[test]
    fn reports_render_deterministically() {
        let build = || {
            let mut r = Report::new("analyze");
            r.data = json!({ "zeta": 1.0, "alpha": 2.0 });
            r.push(CheckEntry::at_most("a", 1.0, 2.0, 0.0, json!({"v": 3})));
            r.render()
        };
        assert_eq!(build(), build());
        let text = build();
        assert!(text.contains("\"schema_version\": 1"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn failing_check_flips_the_report() {
        let mut r = Report::new("audit");
        r.push(CheckEntry::at_most("ok", 1.0, 2.0, 0.0, Value::Null));
        assert!(r.passed);
        r.push(CheckEntry::at_most("bad", 3.0, 2.0, 0.0, Value::Null));
        assert!(!r.passed);
    }

    #[test]
    fn error_envelope_is_structured() {
        let e = error_json("topology", "not a closed surface");
        let v: Value = serde_json::from_str(&e).unwrap();
        assert_eq!(v["error"]["kind"], "topology");
        assert_eq!(v["schema_version"], 1);
    }
}
