//! Triangle meshes and their PLY / OBJ loaders.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::Aabb;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no vertices")]
    Empty,
    #[error("mesh contains non-finite coordinates")]
    NonFinite,
    #[error("triangle {0} references a missing vertex")]
    BadIndex(usize),
    #[error("expected {expected} normals, got {found}")]
    NormalCount { expected: usize, found: usize },
    #[error("unsupported mesh format `{0}` (expected .ply or .obj)")]
    UnsupportedFormat(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(msg: impl Into<String>) -> MeshError {
    MeshError::Parse(msg.into())
}

/// Scene geometry: vertices, triangles and unit per-vertex normals.
///
/// Vertices not referenced by any triangle get a zero normal when normals
/// are computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    #[serde(skip)]
    normals: Vec<Vector3<f64>>,
}

impl SceneMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty);
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite);
        }
        if let Some(i) = triangles.iter().position(|t| t.iter().any(|&v| v as usize >= vertices.len())) {
            return Err(MeshError::BadIndex(i));
        }
        let normals = match normals {
            Some(n) if n.len() != vertices.len() => {
                return Err(MeshError::NormalCount { expected: vertices.len(), found: n.len() })
            }
            Some(n) if n.iter().all(|v| v.iter().all(|c| c.is_finite()) && v.norm() > 1e-12) => {
                n.into_iter().map(|v| v.normalize()).collect()
            }
            _ => compute_vertex_normals(&vertices, &triangles),
        };
        Ok(Self { vertices, triangles, normals })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        match ext.as_str() {
            "ply" => read_ply(reader),
            "obj" => read_obj(reader),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter()).expect("mesh is non-empty")
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }
}

/// Area-weighted average of incident face normals.
pub fn compute_vertex_normals(vertices: &[Point3<f64>], triangles: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| if n.norm() > 1e-12 { n.normalize() } else { Vector3::zeros() })
        .collect()
}

/// Accumulates boxes and quads into a mesh; used to assemble synthetic scenes.
#[derive(Debug, Default, Clone)]
pub struct MeshBuilder {
    vertices: Vec<Point3<f64>>,
    normals: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Planar rectangle `origin + s*u + t*v`, s,t in [0,1], tessellated so
    /// that vertex spacing is at most `spacing`. Triangles wind so that their
    /// geometric normal matches `normal`.
    pub fn add_quad(&mut self, origin: Point3<f64>, u: Vector3<f64>, v: Vector3<f64>, normal: Vector3<f64>, spacing: f64) {
        let nu = ((u.norm() / spacing).ceil() as usize).max(1);
        let nv = ((v.norm() / spacing).ceil() as usize).max(1);
        let base = self.vertices.len() as u32;
        let normal = normal.normalize();
        for j in 0..=nv {
            for i in 0..=nu {
                let p = origin + u * (i as f64 / nu as f64) + v * (j as f64 / nv as f64);
                self.vertices.push(p);
                self.normals.push(normal);
            }
        }
        let flip = u.cross(&v).dot(&normal) < 0.0;
        let idx = |i: usize, j: usize| base + (j * (nu + 1) + i) as u32;
        for j in 0..nv {
            for i in 0..nu {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                if flip {
                    self.triangles.push([a, c, b]);
                    self.triangles.push([a, d, c]);
                } else {
                    self.triangles.push([a, b, c]);
                    self.triangles.push([a, c, d]);
                }
            }
        }
    }

    /// Closed box surface whose normals point away from the box interior,
    /// e.g. the shell of a room (free space inside).
    pub fn add_box(&mut self, b: &Aabb, spacing: f64) {
        self.add_box_faces(b, spacing, 1.0);
    }

    /// Closed box surface whose normals point into the box, e.g. a piece of
    /// furniture standing in free space.
    pub fn add_solid(&mut self, b: &Aabb, spacing: f64) {
        self.add_box_faces(b, spacing, -1.0);
    }

    fn add_box_faces(&mut self, b: &Aabb, spacing: f64, sign: f64) {
        let e = b.extent();
        let (ex, ey, ez) = (Vector3::x() * e.x, Vector3::y() * e.y, Vector3::z() * e.z);
        let lo = b.min;
        let hi = b.max;
        self.add_quad(lo, ey, ez, -Vector3::x() * sign, spacing);
        self.add_quad(Point3::new(hi.x, lo.y, lo.z), ey, ez, Vector3::x() * sign, spacing);
        self.add_quad(lo, ex, ez, -Vector3::y() * sign, spacing);
        self.add_quad(Point3::new(lo.x, hi.y, lo.z), ex, ez, Vector3::y() * sign, spacing);
        self.add_quad(lo, ex, ey, -Vector3::z() * sign, spacing);
        self.add_quad(Point3::new(lo.x, lo.y, hi.z), ex, ey, Vector3::z() * sign, spacing);
    }

    pub fn build(self) -> Result<SceneMesh, MeshError> {
        SceneMesh::new(self.vertices, self.triangles, Some(self.normals))
    }
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
    fn parse(name: &str) -> Result<Self, MeshError> {
        Ok(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(parse_err(format!("unknown PLY type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = bytes[..$n].try_into().unwrap();
                (if little { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }) as f64
            }};
        }
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => num!(i16, 2),
            Self::U16 => num!(u16, 2),
            Self::I32 => num!(i32, 4),
            Self::U32 => num!(u32, 4),
            Self::F32 => num!(f32, 4),
            Self::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    Binary { little: bool },
}

fn read_ply<R: BufRead>(mut reader: R) -> Result<SceneMesh, MeshError> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String, MeshError> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(parse_err("unexpected end of PLY header"));
        }
        Ok(line.trim().to_string())
    };
    if next_line(&mut reader)? != "ply" {
        return Err(parse_err("missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next_line(&mut reader)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::Binary { little: true }),
            ["format", "binary_big_endian", _] => format = Some(PlyFormat::Binary { little: false }),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .properties
                .push(Property::List { name: name.to_string(), count: Scalar::parse(count)?, item: Scalar::parse(item)? }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .properties
                .push(Property::Scalar { name: name.to_string(), ty: Scalar::parse(ty)? }),
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(format!("unexpected PLY header line `{l}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_err("missing PLY format line"))?;

    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let mut body = PlyBody::new(reader, format);
    for element in &elements {
        let index_of = |n: &str| {
            element.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let (xi, yi, zi) = (index_of("x"), index_of("y"), index_of("z"));
        let (nxi, nyi, nzi) = (index_of("nx"), index_of("ny"), index_of("nz"));
        let face_list = element.properties.iter().position(
            |p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"),
        );
        for _ in 0..element.count {
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut lists: Vec<Vec<f64>> = Vec::new();
            for p in &element.properties {
                match p {
                    Property::Scalar { ty, .. } => {
                        scalars.push(body.value(*ty)?);
                        lists.push(Vec::new());
                    }
                    Property::List { count, item, .. } => {
                        let n = body.value(*count)?;
                        if !(0.0..=1e6).contains(&n) {
                            return Err(parse_err("bad list length"));
                        }
                        let items = (0..n as usize).map(|_| body.value(*item)).collect::<Result<Vec<_>, _>>()?;
                        scalars.push(0.0);
                        lists.push(items);
                    }
                }
            }
            if element.name == "vertex" {
                let (Some(x), Some(y), Some(z)) = (xi, yi, zi) else {
                    return Err(parse_err("vertex element lacks x/y/z"));
                };
                vertices.push(Point3::new(scalars[x], scalars[y], scalars[z]));
                if let (Some(a), Some(b), Some(c)) = (nxi, nyi, nzi) {
                    normals.push(Vector3::new(scalars[a], scalars[b], scalars[c]));
                }
            } else if element.name == "face" {
                let Some(li) = face_list else {
                    return Err(parse_err("face element lacks vertex_indices"));
                };
                fan(&lists[li], &mut triangles)?;
            }
        }
    }
    let normals = (!normals.is_empty()).then_some(normals);
    SceneMesh::new(vertices, triangles, normals)
}

fn fan(indices: &[f64], out: &mut Vec<[u32; 3]>) -> Result<(), MeshError> {
    if indices.iter().any(|&i| i < 0.0 || i.fract() != 0.0) {
        return Err(parse_err("negative or fractional face index"));
    }
    for k in 1..indices.len().saturating_sub(1) {
        out.push([indices[0] as u32, indices[k] as u32, indices[k + 1] as u32]);
    }
    Ok(())
}

struct PlyBody<R> {
    reader: R,
    format: PlyFormat,
    tokens: std::collections::VecDeque<String>,
}

impl<R: BufRead> PlyBody<R> {
    fn new(reader: R, format: PlyFormat) -> Self {
        Self { reader, format, tokens: Default::default() }
    }

    fn value(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        match self.format {
            PlyFormat::Ascii => {
                while self.tokens.is_empty() {
                    let mut line = String::new();
                    if self.reader.read_line(&mut line)? == 0 {
                        return Err(parse_err("unexpected end of PLY data"));
                    }
                    self.tokens.extend(line.split_whitespace().map(str::to_string));
                }
                let t = self.tokens.pop_front().unwrap();
                t.parse::<f64>().map_err(|_| parse_err(format!("bad number `{t}`")))
            }
            PlyFormat::Binary { little } => {
                let mut buf = [0u8; 8];
                self.reader
                    .read_exact(&mut buf[..ty.size()])
                    .map_err(|_| parse_err("unexpected end of PLY data"))?;
                Ok(ty.decode(&buf, little))
            }
        }
    }
}

fn read_obj<R: Read>(reader: R) -> Result<SceneMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| parse_err(format!("line {}: bad vertex", lineno + 1)))?;
                if coords.len() != 3 {
                    return Err(parse_err(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut face = Vec::new();
                for t in tokens {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(format!("line {}: bad face index `{t}`", lineno + 1)))?;
                    let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if resolved < 0 {
                        return Err(parse_err(format!("line {}: face index out of range", lineno + 1)));
                    }
                    face.push(resolved as f64);
                }
                fan(&face, &mut triangles)?;
            }
            _ => {}
        }
    }
    SceneMesh::new(vertices, triangles, None)
}
