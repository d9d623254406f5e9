use std::io::Write as _;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::geom::{self, Point3};

/// States `x_0..x_T` with controls `u_0..u_{T-1}` under single-integrator
/// dynamics `x_{t+1} = x_t + dt u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<Point3>,
    controls: Vec<Point3>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<Point3>, controls: Vec<Point3>, dt: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Parameter("a trajectory needs at least 2 states".into()));
        }
        check_len(states.len() - 1, controls.len())?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step {dt} must be positive")));
        }
        if states.iter().chain(&controls).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory { states, controls, dt })
    }

    /// Controls set to the forward differences of the states, so the result
    /// is dynamically consistent up to rounding.
    pub fn from_states(states: Vec<Point3>, dt: f64) -> Result<Self> {
        let controls = states
            .windows(2)
            .map(|w| geom::scale(geom::sub(w[1], w[0]), 1.0 / dt))
            .collect();
        Trajectory::new(states, controls, dt)
    }

    pub fn states(&self) -> &[Point3] {
        &self.states
    }

    pub fn controls(&self) -> &[Point3] {
        &self.controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Horizon `T` (number of steps).
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// `max_t ||x_{t+1} - x_t - dt u_t||_inf`.
    pub fn max_defect(&self) -> f64 {
        self.states
            .windows(2)
            .zip(&self.controls)
            .flat_map(|(w, u)| (0..3).map(move |a| (w[1][a] - w[0][a] - self.dt * u[a]).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x,y,z,ux,uy,uz`; the final state has empty controls.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "t,x,y,z,ux,uy,uz").map_err(io)?;
        for (i, x) in self.states.iter().enumerate() {
            let t = i as f64 * self.dt;
            match self.controls.get(i) {
                Some(u) => writeln!(w, "{t},{},{},{},{},{},{}", x[0], x[1], x[2], u[0], u[1], u[2]),
                None => writeln!(w, "{t},{},{},{},,,", x[0], x[1], x[2]),
            }
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read the CSV layout written by [`Trajectory::write_csv`]. Missing
    /// controls are rebuilt from forward differences; `dt` comes from the
    /// time column.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse("trajectory csv", 1, e.to_string()))?
            .clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let (ti, xi, yi, zi) = match (col("t"), col("x"), col("y"), col("z")) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(Error::parse("trajectory csv", 1, "header must contain t,x,y,z")),
        };
        let ui = [col("ux"), col("uy"), col("uz")];
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut controls: Vec<Option<Point3>> = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::parse("trajectory csv", line, e.to_string()))?;
            let num = |i: usize| -> Result<Option<f64>> {
                match rec.get(i).unwrap_or("") {
                    "" => Ok(None),
                    s => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::parse("trajectory csv", line, format!("{s:?}: {e}"))),
                }
            };
            let req = |i: usize| -> Result<f64> {
                num(i)?.ok_or_else(|| Error::parse("trajectory csv", line, "missing value"))
            };
            times.push(req(ti)?);
            states.push([req(xi)?, req(yi)?, req(zi)?]);
            let u = match ui {
                [Some(a), Some(b), Some(c)] => match (num(a)?, num(b)?, num(c)?) {
                    (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                    _ => None,
                },
                _ => None,
            };
            controls.push(u);
        }
        if states.len() < 2 {
            return Err(Error::parse("trajectory csv", 0, "need at least 2 states"));
        }
        let dt = times[1] - times[0];
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(Error::parse(
                    "trajectory csv",
                    i + 3,
                    "time column is not uniformly spaced",
                ));
            }
        }
        let t = states.len() - 1;
        if controls[..t].iter().all(Option::is_some) {
            let controls = controls[..t].iter().map(|u| u.unwrap()).collect();
            Trajectory::new(states, controls, dt)
        } else {
            Trajectory::from_states(states, dt)
        }
    }

    /// Linear resampling to `steps + 1` states over the same time span,
    /// keeping both endpoints exactly.
    pub fn resample(&self, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("resampling needs at least one step".into()));
        }
        let n = self.states.len() - 1;
        let states: Vec<Point3> = (0..=steps)
            .map(|i| {
                if i == steps {
                    return self.states[n];
                }
                let s = i as f64 * n as f64 / steps as f64;
                let k = (s.floor() as usize).min(n - 1);
                geom::lerp(self.states[k], self.states[k + 1], s - k as f64)
            })
            .collect();
        let dt = self.dt * n as f64 / steps as f64;
        Trajectory::from_states(states, dt)
    }
}
