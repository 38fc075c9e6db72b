use std::io::{Read, Write};
use std::path::Path;

use super::{GeomError, RigidTransform, Vec3};

/// Ordered list of points with optional per-point intensity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            intensity: None,
        }
    }

    pub fn with_intensity(points: Vec<Vec3>, intensity: Vec<f64>) -> Result<Self, GeomError> {
        if points.len() != intensity.len() {
            return Err(GeomError::Parse(format!(
                "{} points but {} intensities",
                points.len(),
                intensity.len()
            )));
        }
        if intensity.iter().any(|i| !(*i >= 0.0)) {
            return Err(GeomError::Parse("intensity must be >= 0".into()));
        }
        Ok(Self {
            points,
            intensity: Some(intensity),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            intensity: self.intensity.clone(),
        }
    }

    /// Reads `x,y,z[,intensity]` CSV (metres).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, GeomError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| GeomError::Parse(e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_intensity = match names.as_slice() {
            ["x", "y", "z"] => false,
            ["x", "y", "z", "intensity"] => true,
            _ => {
                return Err(GeomError::Parse(format!(
                    "expected header x,y,z[,intensity], got {}",
                    names.join(",")
                )))
            }
        };
        let mut points = Vec::new();
        let mut intensity = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GeomError::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<f64, GeomError> {
                let s = rec
                    .get(i)
                    .ok_or_else(|| GeomError::Parse(format!("row {}: missing column {}", row + 1, i)))?;
                let v: f64 = s
                    .parse()
                    .map_err(|_| GeomError::Parse(format!("row {}: invalid number '{}'", row + 1, s)))?;
                if !v.is_finite() {
                    return Err(GeomError::Parse(format!("row {}: non-finite value", row + 1)));
                }
                Ok(v)
            };
            points.push(Vec3::new(field(0)?, field(1)?, field(2)?));
            if has_intensity {
                intensity.push(field(3)?);
            }
        }
        if has_intensity {
            Self::with_intensity(points, intensity)
        } else {
            Ok(Self::new(points))
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeomError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let io = |e: csv::Error| GeomError::Io(e.to_string());
        match &self.intensity {
            Some(int) => {
                w.write_record(["x", "y", "z", "intensity"]).map_err(io)?;
                for (p, i) in self.points.iter().zip(int) {
                    w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string(), i.to_string()])
                        .map_err(io)?;
                }
            }
            None => {
                w.write_record(["x", "y", "z"]).map_err(io)?;
                for p in &self.points {
                    w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string()])
                        .map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| GeomError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GeomError> {
        let f = std::fs::File::open(path).map_err(|e| GeomError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), GeomError> {
        let f = std::fs::File::create(path).map_err(|e| GeomError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}
