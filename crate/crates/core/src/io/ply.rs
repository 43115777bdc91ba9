//! Binary little-endian PLY in the usual splatting layout.
//!
//! Vertex properties `x y z f_dc_0..2 opacity scale_0..2 rot_0..3` are parsed
//! in any order. Anything else in the vertex element is kept as raw bytes and
//! written back unchanged, so files from other tools survive a load/save.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::atomic_write;
use crate::scene::Gaussian3D;

#[derive(Debug, thiserror::Error)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("PLY payload truncated at byte offset {offset}")]
    TruncatedPayload { offset: usize },
    #[error("unsupported PLY encoding: {0}")]
    UnsupportedEncoding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    pub fn size(&self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn read(&self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Vertex properties this crate does not interpret, stored row by row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtraProperties {
    pub properties: Vec<(String, ScalarType)>,
    pub data: Vec<u8>,
}

impl ExtraProperties {
    pub fn stride(&self) -> usize {
        self.properties.iter().map(|(_, t)| t.size()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    fn row(&self, i: usize) -> &[u8] {
        let s = self.stride();
        &self.data[i * s..(i + 1) * s]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyScene {
    pub gaussians: Vec<Gaussian3D>,
    pub extra: ExtraProperties,
}

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

struct Header {
    vertices: usize,
    properties: Vec<(String, ScalarType)>,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let bad = |m: String| PlyError::MalformedHeader(m);
    if !bytes.starts_with(b"ply\n") && !bytes.starts_with(b"ply\r\n") {
        return Err(bad("missing `ply` magic".into()));
    }
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| bad("no end_header line".into()))?;
    let payload_start = end + 11;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;

    let mut format_seen = false;
    let mut vertices = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    for line in text.lines().skip(1) {
        let line = line.trim_end_matches('\r');
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(PlyError::UnsupportedEncoding(format!(
                        "`{fmt}`; only binary_little_endian is supported"
                    )));
                }
                format_seen = true;
            }
            ["element", name, count] => {
                if vertices.is_some() {
                    return Err(PlyError::UnsupportedEncoding(format!(
                        "element `{name}` after vertex; only a single vertex element is supported"
                    )));
                }
                if *name != "vertex" {
                    return Err(PlyError::UnsupportedEncoding(format!(
                        "element `{name}` is not supported"
                    )));
                }
                vertices = Some(
                    count
                        .parse::<usize>()
                        .map_err(|_| bad(format!("bad vertex count `{count}`")))?,
                );
                in_vertex = true;
            }
            ["property", "list", ..] => {
                return Err(PlyError::UnsupportedEncoding(
                    "list properties are not supported".into(),
                ));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(bad(format!("property `{name}` outside an element")));
                }
                let t = ScalarType::parse(ty).ok_or_else(|| bad(format!("unknown type `{ty}` for `{name}`")))?;
                if properties.iter().any(|(n, _)| n == name) {
                    return Err(bad(format!("duplicate property `{name}`")));
                }
                properties.push((name.to_string(), t));
            }
            _ => return Err(bad(format!("unrecognized line `{line}`"))),
        }
    }
    if !format_seen {
        return Err(bad("missing format line".into()));
    }
    let vertices = vertices.ok_or_else(|| bad("missing vertex element".into()))?;
    for r in REQUIRED {
        if !properties.iter().any(|(n, _)| n == r) {
            return Err(bad(format!("missing vertex property `{r}`")));
        }
    }
    Ok(Header {
        vertices,
        properties,
        payload_start,
    })
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyScene, PlyError> {
    let h = parse_header(bytes)?;
    let stride: usize = h.properties.iter().map(|(_, t)| t.size()).sum();
    let mut offsets = Vec::with_capacity(h.properties.len());
    let mut off = 0;
    for (_, t) in &h.properties {
        offsets.push(off);
        off += t.size();
    }
    let column = |name: &str| h.properties.iter().position(|(n, _)| n == name).unwrap();
    let req: Vec<usize> = REQUIRED.iter().map(|r| column(r)).collect();
    let extra_cols: Vec<usize> = (0..h.properties.len()).filter(|c| !req.contains(c)).collect();
    let extra = ExtraProperties {
        properties: extra_cols.iter().map(|&c| h.properties[c].clone()).collect(),
        data: Vec::new(),
    };
    if !extra.is_empty() {
        let names: Vec<&str> = extra.properties.iter().map(|(n, _)| n.as_str()).collect();
        log::warn!(
            "ignoring {} unknown vertex properties ({}); they are kept for saving",
            names.len(),
            names.join(", ")
        );
    }

    let needed = h
        .vertices
        .checked_mul(stride)
        .and_then(|n| n.checked_add(h.payload_start))
        .ok_or_else(|| PlyError::MalformedHeader("vertex count overflows".into()))?;
    if bytes.len() < needed {
        // first byte of the first incomplete vertex
        let complete = (bytes.len() - h.payload_start) / stride.max(1);
        return Err(PlyError::TruncatedPayload {
            offset: h.payload_start + complete * stride,
        });
    }
    if bytes.len() > needed {
        log::warn!(
            "{} trailing bytes after the vertex payload ignored",
            bytes.len() - needed
        );
    }

    let mut gaussians = Vec::with_capacity(h.vertices);
    let mut extra_data = Vec::with_capacity(h.vertices * extra.stride());
    for i in 0..h.vertices {
        let row = &bytes[h.payload_start + i * stride..h.payload_start + (i + 1) * stride];
        let v = |k: usize| {
            let c = req[k];
            h.properties[c].1.read(&row[offsets[c]..])
        };
        gaussians.push(Gaussian3D {
            position: Vector3::new(v(0), v(1), v(2)),
            sh_dc: [v(3), v(4), v(5)],
            opacity_logit: v(6),
            log_scales: Vector3::new(v(7), v(8), v(9)),
            rotation: [v(10), v(11), v(12), v(13)],
            max_sampling_rate: None,
        });
        for &c in &extra_cols {
            extra_data.extend_from_slice(&row[offsets[c]..offsets[c] + h.properties[c].1.size()]);
        }
    }
    Ok(PlyScene {
        gaussians,
        extra: ExtraProperties {
            data: extra_data,
            ..extra
        },
    })
}

/// Serializes as float32. Extra properties are appended when they still
/// line up with the scene (same vertex count), otherwise dropped.
pub fn encode_ply(gaussians: &[Gaussian3D], extra: Option<&ExtraProperties>) -> Vec<u8> {
    let extra = extra.filter(|e| {
        let ok = e.is_empty() || e.data.len() == e.stride() * gaussians.len();
        if !ok {
            log::warn!("extra PLY properties no longer match the vertex count; dropping them");
        }
        ok && !e.is_empty()
    });
    let mut out = Vec::new();
    let _ = write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        gaussians.len()
    );
    for r in REQUIRED {
        let _ = writeln!(out, "property float {r}");
    }
    if let Some(e) = extra {
        for (n, t) in &e.properties {
            let _ = writeln!(out, "property {} {n}", t.name());
        }
    }
    out.extend_from_slice(b"end_header\n");
    for (i, g) in gaussians.iter().enumerate() {
        let vals = [
            g.position.x,
            g.position.y,
            g.position.z,
            g.sh_dc[0],
            g.sh_dc[1],
            g.sh_dc[2],
            g.opacity_logit,
            g.log_scales.x,
            g.log_scales.y,
            g.log_scales.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(e) = extra {
            out.extend_from_slice(e.row(i));
        }
    }
    out
}

pub fn load_ply(path: &Path) -> Result<PlyScene, PlyError> {
    parse_ply(&std::fs::read(path)?)
}

pub fn save_ply(path: &Path, gaussians: &[Gaussian3D], extra: Option<&ExtraProperties>) -> Result<(), PlyError> {
    atomic_write(path, &encode_ply(gaussians, extra))?;
    Ok(())
}
