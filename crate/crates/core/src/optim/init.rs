use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ergodic::Trajectory;
use crate::error::{Error, Result};
use crate::geom::{self, Point3};

/// How to build the starting trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitKind {
    StraightLine {
        start: Point3,
        end: Point3,
    },
    /// One full loop of a circle around `axis` through `center`, starting at
    /// angle zero and closing on itself.
    Ring {
        center: Point3,
        axis: Point3,
        radius: f64,
    },
    /// Constant-speed traversal of the polyline through `waypoints`.
    Polyline {
        waypoints: Vec<Point3>,
    },
    File {
        path: PathBuf,
    },
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
fn ring_frame(axis: Point3) -> Option<(Point3, Point3)> {
    let n = geom::normalized(axis)?;
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = geom::normalized(geom::cross(n, helper))?;
    let e2 = geom::cross(n, e1);
    Some((e1, e2))
}

pub fn initial_trajectory(kind: &InitKind, horizon: usize, dt: f64) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be positive".into()));
    }
    let steps = horizon as f64;
    let states: Vec<Point3> = match kind {
        InitKind::StraightLine { start, end } => (0..=horizon)
            .map(|t| {
                if t == horizon {
                    *end
                } else {
                    geom::lerp(*start, *end, t as f64 / steps)
                }
            })
            .collect(),
        InitKind::Ring { center, axis, radius } => {
            if !(*radius > 0.0) {
                return Err(Error::Parameter(format!("ring radius {radius} must be positive")));
            }
            let (e1, e2) = ring_frame(*axis)
                .ok_or_else(|| Error::Parameter("ring axis must be nonzero".into()))?;
            (0..=horizon)
                .map(|t| {
                    let th = TAU * (t % horizon) as f64 / steps;
                    let off = geom::add(geom::scale(e1, radius * th.cos()), geom::scale(e2, radius * th.sin()));
                    geom::add(*center, off)
                })
                .collect()
        }
        InitKind::Polyline { waypoints } => polyline(waypoints, horizon)?,
        InitKind::File { path } => {
            let loaded = Trajectory::read_csv(path)?;
            let resampled = if loaded.horizon() == horizon {
                loaded
            } else {
                loaded.resample(horizon)?
            };
            if resampled.states().len() != horizon + 1 {
                return Err(Error::Parameter(format!(
                    "trajectory {} has {} states after resampling, expected {}",
                    path.display(),
                    resampled.states().len(),
                    horizon + 1
                )));
            }
            resampled.states().to_vec()
        }
    };
    Trajectory::from_states(states, dt)
}

/// `horizon + 1` points evenly spaced by arclength along `waypoints`.
fn polyline(waypoints: &[Point3], horizon: usize) -> Result<Vec<Point3>> {
    if waypoints.len() < 2 {
        return Err(Error::Parameter("a polyline needs at least two waypoints".into()));
    }
    let mut cumulative = vec![0.0];
    for w in waypoints.windows(2) {
        let len = geom::norm(geom::sub(w[1], w[0]));
        cumulative.push(cumulative.last().unwrap() + len);
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Parameter("polyline waypoints must span a positive finite length".into()));
    }
    let mut seg = 0;
    let states = (0..=horizon)
        .map(|t| {
            if t == horizon {
                return waypoints[waypoints.len() - 1];
            }
            let s = total * t as f64 / horizon as f64;
            while cumulative[seg + 1] < s || cumulative[seg + 1] == cumulative[seg] {
                seg += 1;
            }
            let frac = (s - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
            geom::lerp(waypoints[seg], waypoints[seg + 1], frac)
        })
        .collect();
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line() {
        let t = initial_trajectory(
            &InitKind::StraightLine { start: [0.1, 0.1, 0.0], end: [0.9, 0.5, 0.0] },
            4,
            0.5,
        )
        .unwrap();
        assert_eq!(t.states()[4], [0.9, 0.5, 0.0]);
        assert!((t.states()[1][0] - 0.3).abs() < 1e-15);
        assert!((t.controls()[0][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn polyline_is_traversed_at_constant_speed() {
        let waypoints = vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 1.0, 0.0]];
        let t = initial_trajectory(&InitKind::Polyline { waypoints }, 8, 0.5).unwrap();
        for u in t.controls() {
            assert!((geom::norm(*u) - 1.0).abs() < 1e-12, "{u:?}");
        }
        assert_eq!(t.states()[6], [3.0, 0.0, 0.0]);
        assert_eq!(t.states()[8], [3.0, 1.0, 0.0]);
        let short = InitKind::Polyline { waypoints: vec![[1.0; 3]] };
        assert!(initial_trajectory(&short, 4, 0.1).is_err());
        let still = InitKind::Polyline { waypoints: vec![[1.0; 3], [1.0; 3]] };
        assert!(initial_trajectory(&still, 4, 0.1).is_err());
    }

    #[test]
    fn ring_radius_and_closure() {
        let c = [1.0, -2.0, 0.5];
        let axis = [0.3, 0.2, 1.0];
        let t = initial_trajectory(&InitKind::Ring { center: c, axis, radius: 0.6 }, 50, 0.1).unwrap();
        let n = geom::normalized(axis).unwrap();
        for x in t.states() {
            let d = geom::sub(*x, c);
            let along = geom::dot(d, n);
            let radial = (geom::norm2(d) - along * along).sqrt();
            assert!((radial - 0.6).abs() < 1e-12);
            assert!(along.abs() < 1e-12);
        }
        assert_eq!(t.states()[0], t.states()[50]);
    }

    #[test]
    fn file_resampling_keeps_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let src = Trajectory::from_states(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]], 1.0).unwrap();
        src.write_csv(&p).unwrap();
        let t = initial_trajectory(&InitKind::File { path: p }, 9, 0.25).unwrap();
        assert_eq!(t.states().len(), 10);
        assert_eq!(t.states()[0], src.states()[0]);
        assert_eq!(t.states()[9], src.states()[2]);
        assert_eq!(t.dt(), 0.25);
    }
}
