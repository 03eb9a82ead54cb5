//! OBJ and PLY readers/writers.
//!
//! PLY input may be ASCII or binary little-endian with arbitrary extra
//! properties and elements. Meshes are written as binary little-endian PLY
//! with `double` coordinates so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::cloud::OrientedPointCloud;
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

/// Writes through a temporary sibling and renames, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

/// Loads an OBJ or PLY mesh and drops degenerate faces and orphan vertices.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mesh = match extension(path).as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes))?,
        "ply" => {
            let ply = parse_ply(&bytes)?;
            TriangleMesh::new(ply.vertices, ply.faces)?
        }
        other => {
            return Err(Error::invalid(format!(
                "unsupported mesh extension {other:?} for {}",
                path.display()
            )))
        }
    };
    Ok(mesh.cleaned())
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "obj" => obj_bytes(mesh),
        _ => ply_mesh_bytes(mesh),
    };
    write_atomic(path, &bytes)
}

pub fn read_point_cloud(path: &Path) -> Result<OrientedPointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ply = parse_ply(&bytes)?;
    let normals = ply
        .normals
        .ok_or_else(|| Error::format("ply", "point cloud lacks nx/ny/nz properties"))?;
    OrientedPointCloud::with_unnormalized(ply.vertices, normals)
}

pub fn write_point_cloud(path: &Path, cloud: &OrientedPointCloud) -> Result<()> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for (p, n) in cloud.points().iter().zip(cloud.normals()) {
        for c in p.iter().chain(n.iter()) {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::format("obj", format!("line {}: {e}", lineno + 1)))?;
                if coords.len() != 3 {
                    return Err(Error::format(
                        "obj",
                        format!("line {}: vertex needs 3 coordinates", lineno + 1),
                    ));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or_default();
                        let i: i64 = head.parse().map_err(|e| {
                            Error::format("obj", format!("line {}: {e}", lineno + 1))
                        })?;
                        let resolved = if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            i - 1
                        };
                        u32::try_from(resolved).map_err(|_| {
                            Error::format("obj", format!("line {}: bad index {i}", lineno + 1))
                        })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::format(
                        "obj",
                        format!("line {}: face needs at least 3 vertices", lineno + 1),
                    ));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn obj_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut s = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s.into_bytes()
}

/// Binary little-endian PLY encoding used by [`write_mesh`].
pub fn ply_mesh_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    )
    .into_bytes();
    for p in mesh.vertices() {
        for c in p.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for t in mesh.triangles() {
        out.push(3);
        for &v in t {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
    out
}

/// ASCII PLY rendering of a mesh, mainly for inspection and tests.
pub fn ply_ascii_string(mesh: &TriangleMesh) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\n\
         property double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Geometry recovered from a PLY file.
#[derive(Debug, Default)]
pub struct PlyData {
    pub vertices: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub faces: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format("ply", format!("unknown type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Cursor over the body of a PLY file in either encoding.
enum Body<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary { bytes: &'a [u8], pos: usize },
}

impl Body<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        match self {
            Body::Ascii(tokens) => tokens
                .next()
                .ok_or_else(|| Error::format("ply", "unexpected end of ascii body"))?
                .parse::<f64>()
                .map_err(|e| Error::format("ply", e.to_string())),
            Body::Binary { bytes, pos } => {
                let n = ty.size();
                let chunk = bytes
                    .get(*pos..*pos + n)
                    .ok_or_else(|| Error::format("ply", "unexpected end of binary body"))?;
                *pos += n;
                Ok(ty.decode(chunk))
            }
        }
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format("ply", "missing end_header"))?;
    let mut body_start = header_end + END.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::format("ply", "header is not utf-8"))?;

    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::format("ply", "missing magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format("ply", format!("bad element count {count}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .properties
                .push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("ply", "property before element"))?
                .properties
                .push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                }),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => {
                return Err(Error::format(
                    "ply",
                    format!("unrecognized header line {line:?}"),
                ))
            }
        }
    }
    let body_bytes = bytes.get(body_start..).unwrap_or_default();
    let mut body = match format.as_deref() {
        Some("ascii") => Body::Ascii(
            std::str::from_utf8(body_bytes)
                .map_err(|_| Error::format("ply", "ascii body is not utf-8"))?
                .split_ascii_whitespace(),
        ),
        Some("binary_little_endian") => Body::Binary {
            bytes: body_bytes,
            pos: 0,
        },
        other => {
            return Err(Error::format(
                "ply",
                format!("unsupported format {other:?}"),
            ))
        }
    };

    let mut data = PlyData::default();
    for el in &elements {
        let slot = |wanted: &str| {
            el.properties
                .iter()
                .position(|p| matches!(p, Property::Scalar { name, .. } if name == wanted))
        };
        let xyz = [slot("x"), slot("y"), slot("z")];
        let nxyz = [slot("nx"), slot("ny"), slot("nz")];
        let has_normals = el.name == "vertex" && nxyz.iter().all(Option::is_some);
        if has_normals {
            data.normals = Some(Vec::with_capacity(el.count));
        }
        let mut values = vec![0.0; el.properties.len()];
        for _ in 0..el.count {
            let mut face: Vec<u32> = Vec::new();
            for (k, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => values[k] = body.next(*ty)?,
                    Property::List { name, count, item } => {
                        let n = body.next(*count)? as usize;
                        let is_face = el.name == "face"
                            && (name == "vertex_indices" || name == "vertex_index");
                        for _ in 0..n {
                            let v = body.next(*item)?;
                            if is_face {
                                if v < 0.0 {
                                    return Err(Error::format("ply", "negative face index"));
                                }
                                face.push(v as u32);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                let [Some(x), Some(y), Some(z)] = xyz else {
                    return Err(Error::format("ply", "vertex element lacks x/y/z"));
                };
                data.vertices
                    .push(Point3::new(values[x], values[y], values[z]));
                if let (Some(normals), [Some(a), Some(b), Some(c)]) = (&mut data.normals, nxyz) {
                    normals.push(Vector3::new(values[a], values[b], values[c]));
                }
            } else if el.name == "face" {
                if face.len() < 3 {
                    return Err(Error::format("ply", "face with fewer than 3 vertices"));
                }
                for k in 1..face.len() - 1 {
                    data.faces.push([face[0], face[k], face[k + 1]]);
                }
            }
        }
    }
    Ok(data)
}
