//! Binary little-endian PLY in the reference Gaussian splatting field layout.

use std::io::Write;
use std::path::Path;

use crate::cloud::{sh_basis_count, GaussianCloud, MAX_SH_DEGREE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
enum PropType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PropType {
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

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

struct Property {
    name: String,
    ty: PropType,
    offset: usize,
}

struct Header {
    vertex_count: usize,
    properties: Vec<Property>,
    stride: usize,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let err = |line: usize, message: String| Error::PlyParse { line, message };
    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize| -> Option<String> {
        let rest = &bytes[*pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        let line = String::from_utf8_lossy(&rest[..end])
            .trim_end_matches('\r')
            .to_string();
        *pos += end + 1;
        Some(line)
    };

    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut stride = 0;
    let mut in_vertex = false;
    let mut seen_format = false;
    loop {
        line_no += 1;
        let line =
            next_line(&mut pos).ok_or_else(|| err(line_no, "unexpected end of header".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, format!("expected `ply`, found `{line}`")));
            }
            continue;
        }
        match toks.as_slice() {
            ["format", "binary_little_endian", "1.0"] => seen_format = true,
            ["format", other, ..] => {
                return Err(err(line_no, format!("unsupported format `{other}`")));
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                if vertex_count.is_some() {
                    return Err(err(line_no, "duplicate vertex element".into()));
                }
                let n = n
                    .parse::<usize>()
                    .map_err(|_| err(line_no, format!("bad vertex count `{n}`")))?;
                vertex_count = Some(n);
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(err(line_no, format!("unsupported element `{name}`")));
            }
            ["property", "list", ..] => {
                return Err(err(line_no, "list properties are not supported".into()));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(err(line_no, "property before any element".into()));
                }
                let ty = PropType::parse(ty)
                    .ok_or_else(|| err(line_no, format!("unknown property type `{ty}`")))?;
                properties.push(Property {
                    name: name.to_string(),
                    ty,
                    offset: stride,
                });
                stride += ty.size();
            }
            ["end_header"] => break,
            _ => return Err(err(line_no, format!("unrecognized header line `{line}`"))),
        }
    }
    if !seen_format {
        return Err(err(
            line_no,
            "missing `format binary_little_endian 1.0`".into(),
        ));
    }
    let vertex_count = vertex_count.ok_or_else(|| err(line_no, "missing vertex element".into()))?;
    Ok(Header {
        vertex_count,
        properties,
        stride,
        body_offset: pos,
    })
}

fn read_value(bytes: &[u8], ty: PropType) -> f64 {
    match ty {
        PropType::I8 => bytes[0] as i8 as f64,
        PropType::U8 => bytes[0] as f64,
        PropType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        PropType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
        PropType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        PropType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        PropType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        PropType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
    }
}

/// Parses PLY bytes into a cloud, preserving raw (pre-activation) values.
pub fn parse_ply<T: Scalar>(bytes: &[u8]) -> Result<GaussianCloud<T>> {
    let header = parse_header(bytes)?;
    let find = |name: &str| -> Result<&Property> {
        let p = header
            .properties
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::PlySchema(format!("missing required field `{name}`")))?;
        if !matches!(p.ty, PropType::F32 | PropType::F64) {
            return Err(Error::PlySchema(format!(
                "field `{name}` must be float or double"
            )));
        }
        Ok(p)
    };
    let rest_count = header
        .properties
        .iter()
        .filter(|p| p.name.starts_with("f_rest_"))
        .count();
    let sh_degree = (0..=MAX_SH_DEGREE)
        .find(|&d| 3 * (sh_basis_count(d) - 1) == rest_count)
        .ok_or_else(|| {
            Error::PlySchema(format!("{rest_count} f_rest fields match no SH degree ≤ 3"))
        })?;
    let b = sh_basis_count(sh_degree);

    let xyz = [find("x")?, find("y")?, find("z")?];
    let dc = [find("f_dc_0")?, find("f_dc_1")?, find("f_dc_2")?];
    let rest: Vec<&Property> = (0..rest_count)
        .map(|i| find(&format!("f_rest_{i}")))
        .collect::<Result<_>>()?;
    let opacity = find("opacity")?;
    let scale = [find("scale_0")?, find("scale_1")?, find("scale_2")?];
    let rot = [
        find("rot_0")?,
        find("rot_1")?,
        find("rot_2")?,
        find("rot_3")?,
    ];

    let n = header.vertex_count;
    let body = &bytes[header.body_offset..];
    let need = n * header.stride;
    if body.len() < need {
        return Err(Error::Truncated {
            expected: header.body_offset + need,
            found: bytes.len(),
        });
    }
    let mut cloud = GaussianCloud::<T>::zeros(n, sh_degree);
    let get = |row: &[u8], p: &Property| T::lit(read_value(&row[p.offset..], p.ty));
    for i in 0..n {
        let row = &body[i * header.stride..(i + 1) * header.stride];
        for k in 0..3 {
            cloud.positions[3 * i + k] = get(row, xyz[k]);
            cloud.scales_raw[3 * i + k] = get(row, scale[k]);
        }
        cloud.opacities_raw[i] = get(row, opacity);
        for k in 0..4 {
            cloud.rotations[4 * i + k] = get(row, rot[k]);
        }
        let sh = cloud.sh_mut(i);
        for c in 0..3 {
            sh[c] = get(row, dc[c]);
            for k in 1..b {
                sh[3 * k + c] = get(row, rest[c * (b - 1) + (k - 1)]);
            }
        }
    }
    Ok(cloud)
}

/// Canonical field names in file order.
pub fn canonical_fields(sh_degree: usize) -> Vec<String> {
    let mut f: Vec<String> = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..3 * (sh_basis_count(sh_degree) - 1) {
        f.push(format!("f_rest_{i}"));
    }
    f.push("opacity".into());
    for i in 0..3 {
        f.push(format!("scale_{i}"));
    }
    for i in 0..4 {
        f.push(format!("rot_{i}"));
    }
    f
}

/// Serializes in canonical layout with `float` fields and zero normals.
pub fn encode_ply<T: Scalar>(cloud: &GaussianCloud<T>, mut w: impl Write) -> std::io::Result<()> {
    let n = cloud.len();
    let b = cloud.num_basis();
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {n}\n");
    for f in canonical_fields(cloud.sh_degree) {
        header.push_str(&format!("property float {f}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(n * (14 + 3 * b) * 4);
    let mut put = |v: T| buf.extend_from_slice(&v.as_f32().to_le_bytes());
    for i in 0..n {
        for k in 0..3 {
            put(cloud.positions[3 * i + k]);
        }
        for _ in 0..3 {
            put(T::zero());
        }
        let sh = cloud.sh(i);
        for c in 0..3 {
            put(sh[c]);
        }
        for c in 0..3 {
            for k in 1..b {
                put(sh[3 * k + c]);
            }
        }
        put(cloud.opacities_raw[i]);
        for k in 0..3 {
            put(cloud.scales_raw[3 * i + k]);
        }
        for k in 0..4 {
            put(cloud.rotations[4 * i + k]);
        }
    }
    w.write_all(&buf)
}

pub fn load_ply<T: Scalar>(path: impl AsRef<Path>) -> Result<GaussianCloud<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

pub fn write_ply<T: Scalar>(path: impl AsRef<Path>, cloud: &GaussianCloud<T>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode_ply(cloud, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, degree: usize, seed: u64) -> GaussianCloud<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = GaussianCloud::<f32>::zeros(n, degree);
        for group in c.groups_mut() {
            for v in group.1.iter_mut() {
                *v = rng.random_range(-3.0..3.0);
            }
        }
        c
    }

    #[test]
    fn identity_vertex() {
        let c = GaussianCloud::<f32>::zeros(1, 0);
        let mut bytes = Vec::new();
        encode_ply(&c, &mut bytes).unwrap();
        let back: GaussianCloud<f64> = parse_ply(&bytes).unwrap();
        assert_eq!(back.opacity(0), 0.5);
        assert_eq!(back.scale(0), Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(back.rotation_raw(0), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_clouds_survive_save_load_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for degree in 0..=3 {
            let c = random_cloud(100, degree, 11 + degree as u64);
            let p = dir.path().join(format!("c{degree}.ply"));
            write_ply(&p, &c).unwrap();
            let back: GaussianCloud<f32> = load_ply(&p).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let c = random_cloud(17, 1, 2);
        let mut a = Vec::new();
        encode_ply(&c, &mut a).unwrap();
        let back: GaussianCloud<f64> = parse_ply(&a).unwrap();
        let mut b = Vec::new();
        encode_ply(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_header_names_the_line() {
        let bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex x\nend_header\n";
        match parse_ply::<f32>(bytes) {
            Err(Error::PlyParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bytes = b"ply\nformat ascii 1.0\n";
        assert!(matches!(
            parse_ply::<f32>(bytes),
            Err(Error::PlyParse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let c = GaussianCloud::<f32>::zeros(1, 0);
        let mut bytes = Vec::new();
        encode_ply(&c, &mut bytes).unwrap();
        let marker = b"end_header\n";
        let header_end = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .unwrap()
            + marker.len();
        let header = std::str::from_utf8(&bytes[..header_end])
            .unwrap()
            .replace("property float opacity\n", "property float opacityx\n");
        let mut patched = header.into_bytes();
        patched.extend_from_slice(&bytes[header_end..]);
        assert!(matches!(
            parse_ply::<f32>(&patched),
            Err(Error::PlySchema(_))
        ));
    }
}
