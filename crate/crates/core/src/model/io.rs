//! On-disk model format: a JSON manifest pointing at a border CSV and an
//! ASCII PLY surface mesh. Relative paths resolve against the manifest's
//! directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GlassModel, MaterialOptics, ModelError, TriMesh};
use crate::geom::{GeomError, PointCloud, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub border_csv: PathBuf,
    pub surface_ply: PathBuf,
    pub thickness_m: f64,
    pub bevel_radius_m: f64,
    pub refractive_index: f64,
    pub surface_diffuse_albedo: f64,
    pub edge_diffuse_albedo: f64,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub transmissive: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

impl From<GeomError> for ModelError {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::Io(s) => ModelError::Io(s),
            other => ModelError::Parse(other.to_string()),
        }
    }
}

pub fn load_glass_model(manifest_path: &Path) -> Result<GlassModel, ModelError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let border = PointCloud::load(&dir.join(&manifest.border_csv))?;
    let ply = std::fs::read_to_string(dir.join(&manifest.surface_ply))
        .map_err(|e| ModelError::Io(format!("{}: {e}", manifest.surface_ply.display())))?;
    let surface = read_ply(&ply)?;
    GlassModel::new(
        border.points,
        surface,
        manifest.bevel_radius_m,
        manifest.thickness_m,
        MaterialOptics {
            refractive_index: manifest.refractive_index,
            surface_diffuse_albedo: manifest.surface_diffuse_albedo,
            edge_diffuse_albedo: manifest.edge_diffuse_albedo,
            transmissive: manifest.transmissive,
        },
    )
}

/// Writes `<stem>.json`, `<stem>_border.csv` and `<stem>_surface.ply` into
/// `dir`, returning the manifest path.
pub fn save_glass_model(model: &GlassModel, dir: &Path, stem: &str) -> Result<PathBuf, ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| ModelError::Io(e.to_string()))?;
    let border_name = format!("{stem}_border.csv");
    let surface_name = format!("{stem}_surface.ply");
    PointCloud::new(model.border().to_vec()).save(&dir.join(&border_name))?;
    std::fs::write(dir.join(&surface_name), write_ply(model.surface())).map_err(|e| ModelError::Io(e.to_string()))?;
    let m = model.material();
    let manifest = Manifest {
        border_csv: border_name.into(),
        surface_ply: surface_name.into(),
        thickness_m: model.thickness(),
        bevel_radius_m: model.edge_bevel_radius(),
        refractive_index: m.refractive_index,
        surface_diffuse_albedo: m.surface_diffuse_albedo,
        edge_diffuse_albedo: m.edge_diffuse_albedo,
        transmissive: m.transmissive,
    };
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| ModelError::Io(e.to_string()))?;
    Ok(path)
}

pub fn write_ply(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

/// Parses an ASCII PLY with a vertex element carrying x/y/z and a face
/// element of triangles. Other vertex properties are ignored.
pub fn read_ply(text: &str) -> Result<TriMesh, ModelError> {
    let err = |m: String| ModelError::Parse(format!("ply: {m}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(err("missing magic".into()));
    }
    let mut n_vertex = None;
    let mut n_face = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    let mut saw_format = false;
    loop {
        let line = lines.next().ok_or_else(|| err("unterminated header".into()))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => return Err(err(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                n_vertex = Some(n.parse().map_err(|_| err(format!("bad count {n}")))?);
                current = "vertex";
            }
            ["element", "face", n] => {
                n_face = n.parse().map_err(|_| err(format!("bad count {n}")))?;
                current = "face";
            }
            ["element", other, _] => return Err(err(format!("unsupported element {other}"))),
            ["property", "list", ..] if current == "face" => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(err(format!("unexpected header line '{line}'"))),
        }
    }
    if !saw_format {
        return Err(err("missing format line".into()));
    }
    let n_vertex = n_vertex.ok_or_else(|| err("missing vertex element".into()))?;
    let pos = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| err(format!("vertex property {name} missing")))
    };
    let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
    let mut vertices = Vec::with_capacity(n_vertex);
    for i in 0..n_vertex {
        let line = lines.next().ok_or_else(|| err(format!("missing vertex {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(format!("bad vertex line '{line}'")))?;
        if vals.len() != vertex_props.len() {
            return Err(err(format!("vertex {i} has {} values", vals.len())));
        }
        vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
    }
    let mut faces = Vec::with_capacity(n_face);
    for i in 0..n_face {
        let line = lines.next().ok_or_else(|| err(format!("missing face {i}")))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(format!("bad face line '{line}'")))?;
        if vals.first() != Some(&3) || vals.len() != 4 {
            return Err(err(format!("face {i} is not a triangle")));
        }
        if vals[1..].iter().any(|&v| v >= n_vertex) {
            return Err(err(format!("face {i} index out of range")));
        }
        faces.push([vals[1], vals[2], vals[3]]);
    }
    Ok(TriMesh { vertices, faces })
}
