use std::path::PathBuf;

use crate::analytic::AnalyticDomain;
use crate::ergodic::{AnalyticCoverage, WeightScheme};
use crate::error::{Error, Result};
use crate::mesh::TurbineParams;
use crate::optim::{EtoConfig, InitKind, LbfgsConfig};

use super::config::{AnalyticReference, MapSource, MeshSource, RunConfig, StateBox};

pub const PRESETS: [&str; 8] = [
    "square",
    "sphere-uniform",
    "sphere-bump",
    "torus-uniform",
    "torus-bump",
    "bunny-uniform",
    "bunny-bump",
    "turbine",
];

const SPHERE_RADIUS: f64 = 0.5;
// Every harmonic with l <= 40. With exp-decay weights the omitted tail of the
// sum is below 1% of the value for 100-state trajectories.
const SPHERE_REFERENCE_MODES: usize = 41 * 41;
// Outer radius 0.5 m and height 0.285 m.
const TORUS_MAJOR: f64 = 0.3575;
const TORUS_MINOR: f64 = 0.1425;

fn curved_surface(mesh: MeshSource, init: InitKind) -> RunConfig {
    RunConfig {
        mesh,
        init,
        sigma: 0.1,
        dt: 0.1,
        horizon: 100,
        clearance: 0.05,
        weights: WeightScheme::ExpDecay,
        fix_end: false,
        ..RunConfig::default()
    }
}

fn sphere() -> RunConfig {
    // 71 rings x 70 segments plus poles: 4902 vertices.
    let base = curved_surface(
        MeshSource::UvSphere { radius: SPHERE_RADIUS, rings: 71, segments: 70 },
        InitKind::Ring {
            center: [0.0; 3],
            axis: [0.0, 0.3, 1.0],
            radius: 0.6,
        },
    );
    RunConfig {
        speed_limit: Some([1.0; 3]),
        ..base
    }
}

fn torus() -> RunConfig {
    curved_surface(
        MeshSource::Torus { major: TORUS_MAJOR, minor: TORUS_MINOR, n_major: 96, n_minor: 40 },
        InitKind::Ring {
            center: [0.0, 0.0, 0.25],
            axis: [0.0, 0.0, 1.0],
            radius: TORUS_MAJOR,
        },
    )
}

fn bunny() -> RunConfig {
    RunConfig {
        speed_limit: Some([0.8; 3]),
        ..curved_surface(
            MeshSource::File {
                path: PathBuf::from("bunny.obj"),
                format: None,
                fit_extent: Some(1.0),
            },
            InitKind::Ring {
                center: [0.0; 3],
                axis: [0.0, 0.0, 1.0],
                radius: 0.7,
            },
        )
    }
}

fn square_solver() -> EtoConfig {
    let base = EtoConfig::default();
    EtoConfig {
        inner: LbfgsConfig { rel_tol: 1e-8, ..base.inner },
        ..base
    }
}

// Waypoints in a plane 8 m in front of the blades: out and back along each
// blade, switching blades on a 12 m arc around the nacelle, then down the
// tower. About 460 m, within the 500 m reachable in 100 steps at 0.5 m/s.
fn turbine_route(params: &TurbineParams) -> Vec<[f64; 3]> {
    const X: f64 = 8.0;
    const INNER: f64 = 12.0;
    let tip = params.blade_radius - 3.0;
    let at = |r: f64, deg: f64| {
        let a = deg.to_radians();
        [X, r * a.cos(), params.hub_height + r * a.sin()]
    };
    let arc = |from: f64, to: f64, steps: usize| (1..=steps).map(move |i| at(INNER, from + (to - from) * i as f64 / steps as f64));
    let mut route = vec![at(tip, 330.0), at(INNER, 330.0)];
    route.extend(arc(330.0, 450.0, 5));
    route.extend([at(tip, 90.0), at(INNER, 90.0)]);
    route.extend(arc(90.0, 210.0, 5));
    route.extend([at(tip, 210.0), at(INNER, 210.0)]);
    route.extend(arc(210.0, 270.0, 2));
    route.push(at(params.hub_height - 6.0, 270.0));
    route
}

/// Named run configurations for the standard experiments.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut cfg = match name {
        "square" => RunConfig {
            mesh: MeshSource::UnitSquare { n: 100 },
            sigma: 0.03,
            dt: 0.1,
            horizon: 100,
            speed_limit: Some([1.0; 3]),
            clearance: 0.0,
            state_box: Some(StateBox {
                lower: [Some(0.0), Some(0.0), None],
                upper: [Some(1.0), Some(1.0), None],
            }),
            weights: WeightScheme::InverseSqrt,
            init: InitKind::StraightLine {
                start: [0.0, 0.0, 0.0],
                end: [1.0, 1.0, 0.0],
            },
            fix_end: true,
            analytic: Some(AnalyticReference {
                domain: AnalyticDomain::Rectangle { lx: 1.0, ly: 1.0 },
                basis_size: 100,
                quadrature: 128,
                coverage: AnalyticCoverage::Point,
            }),
            solver: square_solver(),
            ..RunConfig::default()
        },
        "sphere-uniform" => RunConfig {
            analytic: Some(AnalyticReference {
                domain: AnalyticDomain::Sphere { center: [0.0; 3], radius: SPHERE_RADIUS },
                basis_size: SPHERE_REFERENCE_MODES,
                quadrature: 64,
                coverage: AnalyticCoverage::Point,
            }),
            ..sphere()
        },
        "sphere-bump" => RunConfig {
            map: MapSource::Bump { center: [0.0, 0.0, SPHERE_RADIUS], width: 0.25 },
            ..sphere()
        },
        "torus-uniform" => torus(),
        "torus-bump" => RunConfig {
            map: MapSource::Bump { center: [TORUS_MAJOR + TORUS_MINOR, 0.0, 0.0], width: 0.15 },
            ..torus()
        },
        "bunny-uniform" => bunny(),
        "bunny-bump" => RunConfig {
            map: MapSource::Bump { center: [0.0, 0.0, 0.5], width: 0.25 },
            ..bunny()
        },
        "turbine" => {
            let params = TurbineParams::default();
            RunConfig {
                mesh: MeshSource::Turbine { params },
                sigma: 10.0,
                dt: 10.0,
                horizon: 100,
                clearance: 5.0,
                speed_limit: Some([0.5; 3]),
                weights: WeightScheme::ExpDecay,
                init: InitKind::Polyline { waypoints: turbine_route(&params) },
                fix_end: false,
                solver: EtoConfig { scale_objective: true, ..EtoConfig::default() },
                ..RunConfig::default()
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.preset = Some(name.to_string());
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.preset.as_deref(), Some(name));
            let text = serde_json::to_string(&cfg).unwrap();
            let back: RunConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
