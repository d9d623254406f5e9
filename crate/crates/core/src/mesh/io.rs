//! ASCII OBJ and ASCII/binary PLY readers and writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path
            .extension()?
            .to_str()?
            .to_ascii_lowercase()
            .as_str()
        {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            _ => None,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" => Ok(MeshFormat::Ply),
            other => Err(Error::Config(format!("unknown mesh format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Obj => {
            let text = String::from_utf8_lossy(&bytes);
            read_obj(&text)
        }
        MeshFormat::Ply => read_ply(&bytes),
    }
}

/// Parse `v` and `f` records; normals, texture coordinates and everything
/// else are ignored. Polygons with more than three corners are fanned.
pub fn read_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse("OBJ", line, "vertex needs three coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| Error::parse("OBJ", line, format!("bad coordinate `{tok}`")))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut corners = Vec::with_capacity(4);
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse("OBJ", line, format!("bad face index `{tok}`")))?;
                    let resolved = if idx > 0 {
                        (idx - 1) as usize
                    } else if idx < 0 && (-idx) as usize <= vertices.len() {
                        (vertices.len() as i64 + idx) as usize
                    } else {
                        return Err(Error::parse("OBJ", line, format!("invalid face index {idx}")));
                    };
                    corners.push(resolved);
                }
                if corners.len() < 3 {
                    return Err(Error::parse("OBJ", line, "face needs at least three vertices"));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str, line: usize) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::parse("PLY", line, format!("unknown type `{other}`"))),
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
enum Encoding {
    Ascii,
    Binary { little: bool },
}

/// Sequential reader over the PLY body, ASCII tokens or binary words.
struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: Encoding,
    line: usize,
    tokens: std::vec::IntoIter<&'a str>,
}

impl<'a> BodyReader<'a> {
    fn next_ascii_token(&mut self) -> Result<&'a str> {
        loop {
            if let Some(t) = self.tokens.next() {
                return Ok(t);
            }
            if self.pos >= self.bytes.len() {
                return Err(Error::parse("PLY", self.line, "unexpected end of file"));
            }
            let rest = &self.bytes[self.pos..];
            let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
            let text = std::str::from_utf8(&rest[..end])
                .map_err(|_| Error::parse("PLY", self.line + 1, "invalid UTF-8"))?;
            self.pos += end + 1;
            self.line += 1;
            self.tokens = text.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            Encoding::Ascii => {
                let tok = self.next_ascii_token()?;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse("PLY", self.line, format!("bad number `{tok}`")))
            }
            Encoding::Binary { little } => {
                let n = ty.size();
                if self.pos + n > self.bytes.len() {
                    return Err(Error::parse("PLY", self.line, "unexpected end of binary data"));
                }
                let mut buf = [0u8; 8];
                buf[..n].copy_from_slice(&self.bytes[self.pos..self.pos + n]);
                self.pos += n;
                if !little {
                    buf[..n].reverse();
                }
                Ok(match ty {
                    Scalar::I8 => buf[0] as i8 as f64,
                    Scalar::U8 => buf[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
                    Scalar::F64 => f64::from_le_bytes(buf),
                })
            }
        }
    }

    /// In ASCII mode each element occupies one line; drop leftovers.
    fn end_record(&mut self) {
        if self.encoding == Encoding::Ascii {
            self.tokens = Vec::new().into_iter();
        }
    }
}

/// Parse a PLY file. Vertex `x, y, z` become positions and every other scalar
/// vertex property becomes a named channel; faces come from the
/// `vertex_indices` (or `vertex_index`) list.
pub fn read_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let mut pos = 0;
    let mut line = 0;
    let mut header_lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse("PLY", line + 1, "header is not terminated by end_header"))?;
        let text = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse("PLY", line + 1, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        pos += end + 1;
        line += 1;
        if text == "end_header" {
            break;
        }
        header_lines.push((line, text.to_string()));
    }

    if header_lines.first().map(|(_, t)| t.as_str()) != Some("ply") {
        return Err(Error::parse("PLY", 1, "missing `ply` magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for (ln, text) in header_lines.iter().skip(1) {
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::Binary { little: true },
                    Some("binary_big_endian") => Encoding::Binary { little: false },
                    other => {
                        return Err(Error::parse("PLY", *ln, format!("unknown format {other:?}")))
                    }
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(Error::parse("PLY", *ln, "malformed element line"));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| Error::parse("PLY", *ln, "bad element count"))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("PLY", *ln, "property before any element"))?;
                let prop = if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(Error::parse("PLY", *ln, "malformed list property"));
                    }
                    Property::List {
                        count: Scalar::parse(toks[2], *ln)?,
                        item: Scalar::parse(toks[3], *ln)?,
                        name: toks[4].to_string(),
                    }
                } else {
                    if toks.len() != 3 {
                        return Err(Error::parse("PLY", *ln, "malformed property"));
                    }
                    Property::Scalar {
                        ty: Scalar::parse(toks[1], *ln)?,
                        name: toks[2].to_string(),
                    }
                };
                el.properties.push(prop);
            }
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(Error::parse("PLY", *ln, format!("unexpected header keyword `{other}`")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse("PLY", 1, "missing format line"))?;

    let mut reader = BodyReader {
        bytes,
        pos,
        encoding,
        line,
        tokens: Vec::new().into_iter(),
    };
    let mut vertices: Vec<Point3> = Vec::new();
    let mut channels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut saw_vertex = false;
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let names: Vec<&str> = el
                    .properties
                    .iter()
                    .map(|p| match p {
                        Property::Scalar { name, .. } | Property::List { name, .. } => name.as_str(),
                    })
                    .collect();
                for axis in ["x", "y", "z"] {
                    if !names.contains(&axis) {
                        return Err(Error::parse("PLY", line, format!("vertex element lacks `{axis}`")));
                    }
                }
                for p in &el.properties {
                    if let Property::Scalar { name, .. } = p {
                        if !matches!(name.as_str(), "x" | "y" | "z") {
                            channels.insert(name.clone(), Vec::with_capacity(el.count));
                        }
                    }
                }
                for _ in 0..el.count {
                    let mut v = [0.0; 3];
                    for p in &el.properties {
                        match p {
                            Property::Scalar { name, ty } => {
                                let val = reader.read(*ty)?;
                                match name.as_str() {
                                    "x" => v[0] = val,
                                    "y" => v[1] = val,
                                    "z" => v[2] = val,
                                    other => channels.get_mut(other).unwrap().push(val),
                                }
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                        }
                    }
                    reader.end_record();
                    vertices.push(v);
                }
            }
            "face" => {
                let mut found = false;
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::List { name, count, item }
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                found = true;
                                let n = reader.read(*count)? as usize;
                                let mut corners = Vec::with_capacity(n);
                                for _ in 0..n {
                                    let idx = reader.read(*item)?;
                                    if idx < 0.0 {
                                        return Err(Error::parse(
                                            "PLY",
                                            reader.line,
                                            "negative face index",
                                        ));
                                    }
                                    corners.push(idx as usize);
                                }
                                if n < 3 {
                                    return Err(Error::parse(
                                        "PLY",
                                        reader.line,
                                        "face needs at least three vertices",
                                    ));
                                }
                                for k in 1..n - 1 {
                                    faces.push([corners[0], corners[k], corners[k + 1]]);
                                }
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                            Property::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                        }
                    }
                    reader.end_record();
                }
                if el.count > 0 && !found {
                    return Err(Error::parse("PLY", line, "face element lacks vertex_indices"));
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                        }
                    }
                    reader.end_record();
                }
            }
        }
    }
    if !saw_vertex {
        return Err(Error::parse("PLY", line, "no vertex element"));
    }
    TriangleMesh::with_channels(vertices, faces, channels)
}

/// Write a PLY with double-precision positions, every mesh channel plus
/// `extra` channels as double vertex properties, and triangle faces.
pub fn write_ply(
    mesh: &TriangleMesh,
    extra: &[(&str, &[f64])],
    encoding: PlyEncoding,
    path: &Path,
) -> Result<()> {
    let mut chans: Vec<(&str, &[f64])> = mesh
        .channels()
        .iter()
        .filter(|(k, _)| !extra.iter().any(|(e, _)| e == k))
        .map(|(k, v)| (k.as_str(), v.as_slice()))
        .collect();
    for &(name, values) in extra {
        if values.len() != mesh.vertex_count() {
            return Err(Error::Dimension {
                expected: mesh.vertex_count(),
                got: values.len(),
            });
        }
        chans.push((name, values));
    }

    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", mesh.vertex_count());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    for (name, _) in &chans {
        let _ = writeln!(header, "property double {name}");
    }
    let _ = writeln!(header, "element face {}", mesh.face_count());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut out: Vec<u8> = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for (i, v) in mesh.vertices().iter().enumerate() {
                let _ = write!(body, "{} {} {}", v[0], v[1], v[2]);
                for (_, vals) in &chans {
                    let _ = write!(body, " {}", vals[i]);
                }
                body.push('\n');
            }
            for f in mesh.faces() {
                let _ = writeln!(body, "3 {} {} {}", f[0], f[1], f[2]);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, v) in mesh.vertices().iter().enumerate() {
                for c in v {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                for (_, vals) in &chans {
                    out.extend_from_slice(&vals[i].to_le_bytes());
                }
            }
            for f in mesh.faces() {
                out.push(3);
                for &i in f {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
