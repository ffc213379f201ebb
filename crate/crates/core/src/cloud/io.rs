//! Cloud and transform I/O: PLY (ASCII and binary), whitespace-separated XYZ,
//! and row-major 3x4 transform JSON.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Point, PointCloud, RigidTransform, Role};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
            other => return Err(Error::Format(format!("unknown PLY scalar type `{other}`"))),
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

    fn decode(self, bytes: &[u8], enc: Encoding) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = bytes.try_into().expect("sized slice");
                (if enc == Encoding::Big {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => num!(i8),
            Scalar::U8 => num!(u8),
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        }
    }
}

struct VertexLayout {
    count: usize,
    props: Vec<(String, Scalar)>,
}

impl VertexLayout {
    fn position(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|(n, _)| n == name)
    }
}

/// Reads the `vertex` element of a PLY file: `x y z` and, when all present, `nx ny nz`.
pub fn read_ply(path: impl AsRef<Path>, role: Role) -> Result<PointCloud> {
    let file = fs::File::open(path)?;
    parse_ply(BufReader::new(file), role)
}

pub fn parse_ply<R: BufRead>(mut reader: R, role: Role) -> Result<PointCloud> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Format("unexpected end of PLY header".into()));
        }
        Ok(line.trim().to_string())
    };

    if next_line(&mut reader)? != "ply" {
        return Err(Error::Format("missing `ply` magic".into()));
    }
    let mut encoding = None;
    let mut vertex: Option<VertexLayout> = None;
    let mut before_vertex_bytes = false;
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut reader)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(Error::Format(format!("unknown PLY format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::Format(format!("bad element count `{count}`")))?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex = Some(VertexLayout {
                        count,
                        props: Vec::new(),
                    });
                } else if vertex.is_none() && count > 0 {
                    before_vertex_bytes = true;
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format("list properties on vertices are not supported".into()))
            }
            ["property", ty, name] if in_vertex => {
                let scalar = Scalar::parse(ty)?;
                vertex
                    .as_mut()
                    .expect("inside vertex element")
                    .props
                    .push((name.to_string(), scalar));
            }
            ["property", ..] => {}
            _ => return Err(Error::Format(format!("unrecognized PLY header line `{l}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Format("missing PLY format line".into()))?;
    let layout = vertex.ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    if before_vertex_bytes {
        return Err(Error::Format("elements before `vertex` are not supported".into()));
    }
    let xyz = ["x", "y", "z"].map(|n| layout.position(n));
    let [Some(ix), Some(iy), Some(iz)] = xyz else {
        return Err(Error::Format("vertex element lacks x/y/z".into()));
    };
    let normal_idx = match ["nx", "ny", "nz"].map(|n| layout.position(n)) {
        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
        _ => None,
    };

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(layout.count);
    match encoding {
        Encoding::Ascii => {
            let mut buf = String::new();
            while rows.len() < layout.count {
                buf.clear();
                if reader.read_line(&mut buf)? == 0 {
                    return Err(Error::Format("PLY ends before all vertices were read".into()));
                }
                if buf.trim().is_empty() {
                    continue;
                }
                let vals = buf
                    .split_whitespace()
                    .take(layout.props.len())
                    .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{t}`"))))
                    .collect::<Result<Vec<_>>>()?;
                if vals.len() != layout.props.len() {
                    return Err(Error::Format("short vertex line".into()));
                }
                rows.push(vals);
            }
        }
        enc => {
            let stride: usize = layout.props.iter().map(|(_, s)| s.size()).sum();
            let mut bytes = vec![0u8; stride];
            for _ in 0..layout.count {
                reader.read_exact(&mut bytes)?;
                let mut offset = 0;
                let row = layout
                    .props
                    .iter()
                    .map(|(_, s)| {
                        let v = s.decode(&bytes[offset..offset + s.size()], enc);
                        offset += s.size();
                        v
                    })
                    .collect();
                rows.push(row);
            }
        }
    }

    let points = rows.iter().map(|r| Point::new(r[ix], r[iy], r[iz])).collect();
    match normal_idx {
        Some([a, b, c]) => {
            let normals = rows.iter().map(|r| Point::new(r[a], r[b], r[c]).normalize()).collect();
            PointCloud::with_normals(points, normals, role)
        }
        None => PointCloud::new(points, role),
    }
}

/// Writes points (and normals, if any) as double-precision PLY.
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    encode_ply(&mut w, cloud, format)?;
    w.flush()?;
    Ok(())
}

pub fn encode_ply<W: Write>(w: &mut W, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.normals().is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        let mut vals = vec![p.x, p.y, p.z];
        if let Some(n) = cloud.normals() {
            vals.extend_from_slice(n[i].as_slice());
        }
        match format {
            PlyFormat::Ascii => {
                let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in vals {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// One point per line, `x y z [nx ny nz]`. Blank lines and `#` comments are skipped.
pub fn read_xyz(path: impl AsRef<Path>, role: Role) -> Result<PointCloud> {
    parse_xyz(&fs::read_to_string(path)?, role)
}

pub fn parse_xyz(text: &str, role: Role) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(Error::Format(format!(
                "line {}: expected 3 or 6 columns, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        if *columns.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Format(format!("line {}: inconsistent column count", lineno + 1)));
        }
        points.push(Point::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Point::new(vals[3], vals[4], vals[5]).normalize());
        }
    }
    if normals.is_empty() {
        PointCloud::new(points, role)
    } else {
        PointCloud::with_normals(points, normals, role)
    }
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, p) in cloud.points().iter().enumerate() {
        write!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
        if let Some(n) = cloud.normals() {
            write!(w, " {:?} {:?} {:?}", n[i].x, n[i].y, n[i].z)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads `.ply` or whitespace XYZ (any other extension).
pub fn read_cloud(path: impl AsRef<Path>, role: Role) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ply") => read_ply(path, role),
        _ => read_xyz(path, role),
    }
}

pub fn read_transform(path: impl AsRef<Path>) -> Result<RigidTransform> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_transform(path: impl AsRef<Path>, transform: &RigidTransform) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(transform)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cloud(with_normals: bool) -> PointCloud {
        let pts = vec![
            Point::new(0.1, -2.5, 3.0),
            Point::new(1e-7, 42.0, -0.333333333333),
            Point::new(100.0, 0.0, 7.25),
        ];
        if with_normals {
            PointCloud::with_normals(
                pts,
                vec![Point::x(), Point::y(), Point::new(0.6, 0.0, 0.8)],
                Role::Target,
            )
            .unwrap()
        } else {
            PointCloud::new(pts, Role::Target).unwrap()
        }
    }

    #[test]
    fn ply_round_trips_exactly() {
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            for normals in [false, true] {
                let cloud = sample_cloud(normals);
                let mut buf = Vec::new();
                encode_ply(&mut buf, &cloud, fmt).unwrap();
                let back = parse_ply(buf.as_slice(), Role::Target).unwrap();
                assert_eq!(back.points(), cloud.points());
                assert_eq!(back.normals().is_some(), normals);
            }
        }
    }

    #[test]
    fn reads_float_ply_with_faces_and_extra_props() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment made by hand\n\
element vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n\
element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            .to_vec();
        for (x, y, z, r) in [(1.0f32, 2.0f32, 3.0f32, 9u8), (-1.5, 0.25, 8.0, 1)] {
            bytes.extend(x.to_le_bytes());
            bytes.extend(y.to_le_bytes());
            bytes.extend(z.to_le_bytes());
            bytes.push(r);
        }
        bytes.extend([3u8, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        let cloud = parse_ply(bytes.as_slice(), Role::Source).unwrap();
        assert_eq!(cloud.points()[1], Point::new(-1.5, 0.25, 8.0));
    }

    #[test]
    fn xyz_parsing() {
        let cloud = parse_xyz("# header\n0 0 0\n1 2 3\n\n", Role::Source).unwrap();
        assert_eq!(cloud.len(), 2);
        let with_n = parse_xyz("0 0 0 0 0 1\n1 1 1 0 2 0\n", Role::Source).unwrap();
        assert_eq!(with_n.normals().unwrap()[1], Point::y());
        assert!(parse_xyz("0 0\n", Role::Source).is_err());
        assert!(parse_xyz("0 0 0\n0 0 0 1 0 0\n", Role::Source).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = sample_cloud(true);
        write_xyz(dir.path().join("c.xyz"), &cloud).unwrap();
        assert_eq!(
            read_cloud(dir.path().join("c.xyz"), Role::Target).unwrap().points(),
            cloud.points()
        );
        write_ply(dir.path().join("c.ply"), &cloud, PlyFormat::BinaryLittleEndian).unwrap();
        assert_eq!(
            read_cloud(dir.path().join("c.ply"), Role::Target).unwrap().points(),
            cloud.points()
        );
        let t = RigidTransform::from_euler_xyz(0.1, 0.2, 0.3, Point::new(1.0, 2.0, 3.0));
        write_transform(dir.path().join("t.json"), &t).unwrap();
        assert_eq!(read_transform(dir.path().join("t.json")).unwrap(), t);
    }
}
