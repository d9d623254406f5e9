use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::geom::{self, Point3};
use crate::mesh::TriangleMesh;

/// Per-vertex information density, normalized so `sum_i A_i phi_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMap {
    density: Vec<f64>,
}

impl InformationMap {
    /// Normalize nonnegative samples by their area-weighted sum.
    pub fn from_values(values: Vec<f64>, areas: &[f64]) -> Result<Self> {
        check_len(areas.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter(format!(
                "information density at vertex {i} is {} (must be finite and >= 0)",
                values[i]
            )));
        }
        let total: f64 = values.iter().zip(areas).map(|(v, a)| v * a).sum();
        if !(total > 0.0) {
            return Err(Error::Parameter("information map integrates to zero".into()));
        }
        Ok(InformationMap {
            density: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn uniform(mesh: &TriangleMesh) -> Self {
        Self::from_values(vec![1.0; mesh.vertex_count()], mesh.vertex_areas().as_slice())
            .expect("mesh areas are positive")
    }

    /// Density taken from a named per-vertex channel of the mesh.
    pub fn from_channel(mesh: &TriangleMesh, name: &str) -> Result<Self> {
        let values = mesh.channel(name).ok_or_else(|| {
            Error::Config(format!("mesh has no per-vertex channel named {name:?}"))
        })?;
        Self::from_values(values.to_vec(), mesh.vertex_areas().as_slice())
    }

    /// Sidecar CSV with rows `vertex_index,density`; unlisted vertices get 0.
    /// A header row is optional.
    pub fn from_csv(path: &Path, mesh: &TriangleMesh) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, mesh)
    }

    pub fn parse_csv(text: &str, mesh: &TriangleMesh) -> Result<Self> {
        let mut values = vec![0.0; mesh.vertex_count()];
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for (row, rec) in reader.records().enumerate() {
            let line = row + 1;
            let rec = rec.map_err(|e| Error::parse("density csv", line, e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::parse("density csv", line, "expected vertex_index,density"));
            }
            let idx = match rec[0].parse::<usize>() {
                Ok(i) => i,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::parse("density csv", line, format!("{:?}: {e}", &rec[0]))),
            };
            let d: f64 = rec[1]
                .parse()
                .map_err(|e| Error::parse("density csv", line, format!("{:?}: {e}", &rec[1])))?;
            if idx >= values.len() {
                return Err(Error::parse(
                    "density csv",
                    line,
                    format!("vertex index {idx} out of range for {} vertices", values.len()),
                ));
            }
            values[idx] = d;
        }
        Self::from_values(values, mesh.vertex_areas().as_slice())
    }

    /// `exp(-|v - center|^2 / (2 width^2))` painted on the vertices.
    pub fn gaussian_bump(mesh: &TriangleMesh, center: Point3, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Parameter(format!("bump width {width} must be positive")));
        }
        let values = mesh
            .vertices()
            .iter()
            .map(|v| (-0.5 * geom::dist2(*v, center) / (width * width)).exp())
            .collect();
        Self::from_values(values, mesh.vertex_areas().as_slice())
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_grid;

    #[test]
    fn normalization() {
        let mesh = unit_square_grid(9);
        let areas = mesh.vertex_areas();
        for map in [
            InformationMap::uniform(&mesh),
            InformationMap::gaussian_bump(&mesh, [0.2, 0.7, 0.0], 0.1).unwrap(),
            InformationMap::from_values(vec![3.0; 81], areas.as_slice()).unwrap(),
        ] {
            let s: f64 = map.density().iter().zip(areas.as_slice()).map(|(d, a)| d * a).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_values() {
        let mesh = unit_square_grid(3);
        let a = mesh.vertex_areas();
        assert!(InformationMap::from_values(vec![0.0; 9], a.as_slice()).is_err());
        let mut v = vec![1.0; 9];
        v[4] = -1.0;
        assert!(InformationMap::from_values(v, a.as_slice()).is_err());
        assert!(InformationMap::from_values(vec![1.0; 8], a.as_slice()).is_err());
    }

    #[test]
    fn csv_and_channel() {
        let mesh = unit_square_grid(3);
        let m = InformationMap::parse_csv("vertex_index,density\n4,2.0\n0,1.0\n", &mesh).unwrap();
        assert_eq!(m.density()[1], 0.0);
        assert!((m.density()[4] / m.density()[0] - 2.0).abs() < 1e-12);
        assert!(InformationMap::parse_csv("99,1\n", &mesh).is_err());
        let mesh = mesh.with_channel("quality", vec![1.0; 9]).unwrap();
        let c = InformationMap::from_channel(&mesh, "quality").unwrap();
        assert_eq!(c, InformationMap::uniform(&mesh));
        assert!(InformationMap::from_channel(&mesh, "nope").is_err());
    }
}
