//! Point-cloud file formats.
//!
//! - Ascii XYZ: one `x y z` line per point, one cloud per file.
//! - Ascii PLY: standard header, float x/y/z vertex properties, other
//!   properties ignored, one cloud per file.
//! - Packed binary: many clouds per file. Little-endian layout: magic
//!   `PCDS`, u32 version, u32 cloud count, u32 points per cloud, then
//!   cloud-major f32 xyz triples, trailing CRC-32 over everything after
//!   the magic.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Manifest, SourceInfo};
use crate::error::{Error, Result};
use crate::metrics::PointCloud;

pub const PACKED_MAGIC: [u8; 4] = *b"PCDS";
pub const PACKED_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    AsciiXyz,
    AsciiPly,
    PackedBinary,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" | "ascii-xyz" => Ok(FileFormat::AsciiXyz),
            "ply" | "ascii-ply" => Ok(FileFormat::AsciiPly),
            "packed" | "pcds" | "packed-binary" => Ok(FileFormat::PackedBinary),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; expected xyz, ply, or packed"
            ))),
        }
    }
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {msg}", path.display()))
}

fn parse_coord(path: &Path, token: &str, line_no: usize) -> Result<f32> {
    let v: f32 = token
        .parse()
        .map_err(|_| data_err(path, format!("line {line_no}: cannot parse {token:?} as a number")))?;
    if !v.is_finite() {
        return Err(data_err(path, format!("line {line_no}: non-finite coordinate {token}")));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Ascii XYZ

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        // 9 significant digits round-trips f32 exactly.
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", p[0], p[1], p[2]));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(data_err(path, format!("line {}: expected 3 values, found {}", i + 1, tokens.len())));
        }
        points.push([
            parse_coord(path, tokens[0], i + 1)?,
            parse_coord(path, tokens[1], i + 1)?,
            parse_coord(path, tokens[2], i + 1)?,
        ]);
    }
    PointCloud::new(points).map_err(|e| data_err(path, e))
}

// ---------------------------------------------------------------------------
// Ascii PLY

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 48 + 128);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in cloud.points() {
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", p[0], p[1], p[2]));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| data_err(path, "empty file"))?;
    if first.trim() != "ply" {
        return Err(data_err(path, "missing ply magic line"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex_element = false;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut saw_format = false;
    let mut header_end_line = 0usize;
    for (i, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.starts_with("comment") {
            continue;
        }
        if line.starts_with("format") {
            if line != "format ascii 1.0" {
                return Err(data_err(path, format!("unsupported format {line:?}; only ascii 1.0")));
            }
            saw_format = true;
        } else if let Some(rest) = line.strip_prefix("element ") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().unwrap_or("");
            let count: usize = parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| data_err(path, format!("line {}: malformed element", i + 1)))?;
            in_vertex_element = name == "vertex";
            if in_vertex_element {
                vertex_count = Some(count);
            }
        } else if let Some(rest) = line.strip_prefix("property ") {
            if in_vertex_element {
                let name = rest
                    .split_whitespace()
                    .last()
                    .ok_or_else(|| data_err(path, format!("line {}: malformed property", i + 1)))?;
                vertex_props.push(name.to_string());
            }
        } else if line == "end_header" {
            header_end_line = i + 1;
            break;
        }
    }
    if !saw_format {
        return Err(data_err(path, "header has no format line"));
    }
    let vertex_count = vertex_count.ok_or_else(|| data_err(path, "header has no vertex element"))?;
    let col = |name: &str| -> Result<usize> {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| data_err(path, format!("vertex element has no {name} property")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut points = Vec::with_capacity(vertex_count);
    for (i, raw) in lines.take(vertex_count) {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != vertex_props.len() {
            return Err(data_err(
                path,
                format!("line {}: expected {} vertex values, found {}", i + 1, vertex_props.len(), tokens.len()),
            ));
        }
        points.push([
            parse_coord(path, tokens[cx], i + 1)?,
            parse_coord(path, tokens[cy], i + 1)?,
            parse_coord(path, tokens[cz], i + 1)?,
        ]);
    }
    if points.len() != vertex_count {
        return Err(data_err(
            path,
            format!(
                "header after line {header_end_line} promises {vertex_count} vertices, file has {}",
                points.len()
            ),
        ));
    }
    PointCloud::new(points).map_err(|e| data_err(path, e))
}

// ---------------------------------------------------------------------------
// Packed binary

pub fn write_packed(path: &Path, clouds: &[PointCloud]) -> Result<()> {
    if clouds.is_empty() {
        return Err(Error::Data("refusing to write an empty packed file".into()));
    }
    let k = clouds[0].len();
    for c in clouds {
        if c.len() != k {
            return Err(Error::Data(format!(
                "packed files need uniform cloud sizes; found {} and {k}",
                c.len()
            )));
        }
    }
    let mut payload = Vec::with_capacity(12 + clouds.len() * k * 12);
    payload.extend_from_slice(&PACKED_VERSION.to_le_bytes());
    payload.extend_from_slice(&(clouds.len() as u32).to_le_bytes());
    payload.extend_from_slice(&(k as u32).to_le_bytes());
    for cloud in clouds {
        for p in cloud.points() {
            for c in p {
                payload.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&payload);
    let mut file = fs::File::create(path)?;
    file.write_all(&PACKED_MAGIC)?;
    file.write_all(&payload)?;
    file.write_all(&crc.to_le_bytes())?;
    Ok(())
}

pub fn read_packed(path: &Path) -> Result<Vec<PointCloud>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(data_err(path, "truncated packed file"));
    }
    if bytes[..4] != PACKED_MAGIC {
        return Err(data_err(path, "bad magic; not a packed cloud file"));
    }
    let payload = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(data_err(path, "checksum mismatch; file is corrupt"));
    }
    let word = |off: usize| u32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
    let version = word(0);
    if version != PACKED_VERSION {
        return Err(data_err(path, format!("unsupported version {version}")));
    }
    let count = word(4) as usize;
    let k = word(8) as usize;
    let expect = 12 + count * k * 12;
    if payload.len() != expect {
        return Err(data_err(
            path,
            format!("payload is {} bytes, header implies {expect}", payload.len()),
        ));
    }
    let mut clouds = Vec::with_capacity(count);
    let mut off = 12;
    for _ in 0..count {
        let mut points = Vec::with_capacity(k);
        for _ in 0..k {
            let coord = |o: usize| f32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
            let p = [coord(off), coord(off + 4), coord(off + 8)];
            if !p.iter().all(|v| v.is_finite()) {
                return Err(data_err(path, "non-finite coordinate"));
            }
            points.push(p);
            off += 12;
        }
        clouds.push(PointCloud::new(points).map_err(|e| data_err(path, e))?);
    }
    Ok(clouds)
}

// ---------------------------------------------------------------------------
// Dataset-level loading

/// Loads clouds from files into a dataset. Ascii formats hold one cloud per
/// file; the packed format holds many. Every cloud must have exactly
/// `expected_k` points when given (otherwise the first cloud sets the
/// count); there is no silent resampling.
pub fn load_clouds(paths: &[std::path::PathBuf], format: FileFormat, expected_k: Option<usize>) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Data("no input files".into()));
    }
    let mut clouds: Vec<PointCloud> = Vec::new();
    let mut sources = Vec::new();
    let mut k = expected_k;
    for path in paths {
        sources.push(path.display().to_string());
        let file_clouds = match format {
            FileFormat::AsciiXyz => vec![read_xyz(path)?],
            FileFormat::AsciiPly => vec![read_ply(path)?],
            FileFormat::PackedBinary => read_packed(path)?,
        };
        for cloud in file_clouds {
            match k {
                None => k = Some(cloud.len()),
                Some(k) if cloud.len() != k => {
                    return Err(data_err(
                        path,
                        format!("cloud has {} points, expected {k}", cloud.len()),
                    ));
                }
                _ => {}
            }
            clouds.push(cloud);
        }
    }
    let k = k.expect("at least one cloud loaded");
    let count = clouds.len();
    Dataset::from_clouds(
        clouds,
        Manifest {
            source: SourceInfo::Files { paths: sources },
            seed: None,
            normalized: false,
            k,
            count,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn packed_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clouds.pcds");
        let clouds = vec![random_cloud(16, 1), random_cloud(16, 2)];
        write_packed(&path, &clouds).unwrap();
        let back = read_packed(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in clouds.iter().zip(&back) {
            assert_eq!(a.points(), b.points());
        }
    }

    #[test]
    fn packed_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clouds.pcds");
        write_packed(&path, &[random_cloud(8, 3)]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_packed(&path), Err(Error::Data(msg)) if msg.contains("checksum")));
    }

    #[test]
    fn xyz_round_trip_is_exact_at_nine_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        let cloud = random_cloud(32, 4);
        write_xyz(&path, &cloud).unwrap();
        let back = read_xyz(&path).unwrap();
        assert_eq!(cloud.points(), back.points());
    }

    #[test]
    fn xyz_parses_plain_triples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("simple.xyz");
        fs::write(&path, "0 0 0\n1.5 2 -3\n").unwrap();
        let cloud = read_xyz(&path).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], [1.5, 2.0, -3.0]);
    }

    #[test]
    fn ply_round_trip_and_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let cloud = random_cloud(10, 5);
        write_ply(&path, &cloud).unwrap();
        assert_eq!(read_ply(&path).unwrap().points(), cloud.points());

        // Extra properties before and after xyz are ignored.
        let fancy = dir.path().join("fancy.ply");
        fs::write(
            &fancy,
            "ply\nformat ascii 1.0\ncomment colors\nelement vertex 2\nproperty uchar red\n\
             property float x\nproperty float y\nproperty float z\nproperty uchar alpha\n\
             end_header\n255 0 0 0 128\n0 1 2 3 128\n",
        )
        .unwrap();
        let parsed = read_ply(&fancy).unwrap();
        assert_eq!(parsed.points(), &[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
    }

    #[test]
    fn ply_count_mismatch_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n",
        )
        .unwrap();
        match load_clouds(&[path.clone()], FileFormat::AsciiPly, Some(3)) {
            Err(Error::Data(msg)) => assert!(msg.contains("short.ply"), "message {msg:?}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_wrong_point_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        write_xyz(&path, &random_cloud(8, 6)).unwrap();
        match load_clouds(&[path.clone()], FileFormat::AsciiXyz, Some(16)) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("cloud.xyz") && msg.contains("expected 16"), "{msg}");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        fs::write(&path, "0 0 0\n1 nan 0\n").unwrap();
        assert!(read_xyz(&path).is_err());
        let inf = dir.path().join("inf.xyz");
        fs::write(&inf, "0 0 inf\n").unwrap();
        assert!(read_xyz(&inf).is_err());
    }
}
