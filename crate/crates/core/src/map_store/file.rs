//! Binary descriptor map format.
//!
//! ```text
//! 0   8  magic "LSVLMAP1"
//! 8   16 u32 n_x, n_y, n_theta, D
//! 24  24 f64 x_min, y_min, r_xy
//! 48  8  u64 grid fingerprint
//! 56  4  u32 CRC32 of payload
//! 60  4  reserved (zero)
//! 64  .. f64 payload, [i][j][l][D]
//! ```
//! All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DescriptorMap, MapError, MAP_NORM_TOLERANCE};
use crate::belief::GridSpec;
use crate::descriptor::norm_f64;
use crate::scalar::Real;

pub const MAP_MAGIC: &[u8; 8] = b"LSVLMAP1";
pub const MAP_HEADER_LEN: u64 = 64;

/// Values per read/write chunk.
const CHUNK: usize = 1 << 16;

/// Number of evenly spaced vectors whose norm is checked on load.
const NORM_SPOT_CHECKS: usize = 1024;

/// Sidecar metadata written next to a map file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapManifest {
    pub provider: String,
    pub w: f64,
    pub out_res: f64,
    pub d: usize,
    pub grid_fingerprint: String,
    pub version: String,
    pub config_hash: String,
}

/// Exact size in bytes of a stored map.
pub fn predicted_file_size(spec: &GridSpec, d: usize) -> u64 {
    MAP_HEADER_LEN + spec.len() as u64 * d as u64 * 8
}

fn payload_crc<T: Real>(data: &[T]) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    let mut buf = Vec::with_capacity(CHUNK * 8);
    for chunk in data.chunks(CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        hasher.update(&buf);
    }
    hasher.finalize()
}

pub fn write_map<T: Real, W: Write>(map: &DescriptorMap<T>, mut out: W) -> Result<(), MapError> {
    let spec = map.spec();
    let mut header = Vec::with_capacity(MAP_HEADER_LEN as usize);
    header.extend_from_slice(MAP_MAGIC);
    for n in [spec.n_x, spec.n_y, spec.n_theta, map.dim()] {
        let n = u32::try_from(n).map_err(|_| MapError::BadHeader(format!("dimension {n} exceeds u32")))?;
        header.extend_from_slice(&n.to_le_bytes());
    }
    for f in [spec.x_min, spec.y_min, spec.r_xy] {
        header.extend_from_slice(&f.to_le_bytes());
    }
    header.extend_from_slice(&spec.fingerprint().to_le_bytes());
    header.extend_from_slice(&payload_crc(map.data()).to_le_bytes());
    header.extend_from_slice(&[0u8; 4]);
    debug_assert_eq!(header.len() as u64, MAP_HEADER_LEN);
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(CHUNK * 8);
    for chunk in map.data().chunks(CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_map<T: Real>(map: &DescriptorMap<T>, path: impl AsRef<Path>) -> Result<(), MapError> {
    let file = File::create(path)?;
    write_map(map, BufWriter::new(file))
}

fn u32_at(h: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(h[at..at + 4].try_into().expect("4 bytes"))
}

fn f64_at(h: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(h[at..at + 8].try_into().expect("8 bytes"))
}

/// Reads a map, converting stored `f64` values to `T`.
pub fn read_map<T: Real, R: Read>(mut input: R) -> Result<DescriptorMap<T>, MapError> {
    let mut h = [0u8; MAP_HEADER_LEN as usize];
    input.read_exact(&mut h).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => MapError::BadHeader("file shorter than header".into()),
        _ => MapError::Io(e),
    })?;
    if &h[..8] != MAP_MAGIC {
        return Err(MapError::BadMagic);
    }
    let (n_x, n_y, n_theta, d) = (
        u32_at(&h, 8) as usize,
        u32_at(&h, 12) as usize,
        u32_at(&h, 16) as usize,
        u32_at(&h, 20) as usize,
    );
    let (x_min, y_min, r_xy) = (f64_at(&h, 24), f64_at(&h, 32), f64_at(&h, 40));
    let fingerprint = u64::from_le_bytes(h[48..56].try_into().expect("8 bytes"));
    let crc = u32_at(&h, 56);
    if n_x == 0 || n_y == 0 || n_theta == 0 || d == 0 {
        return Err(MapError::BadHeader("zero dimension".into()));
    }
    if !(r_xy.is_finite() && r_xy > 0.0 && x_min.is_finite() && y_min.is_finite()) {
        return Err(MapError::BadHeader("invalid grid geometry".into()));
    }
    let spec = GridSpec::from_parts(x_min, y_min, r_xy, n_x, n_y, n_theta);
    if spec.fingerprint() != fingerprint {
        return Err(MapError::GridMismatch {
            expected: spec.fingerprint(),
            found: fingerprint,
        });
    }
    let total = n_x
        .checked_mul(n_y)
        .and_then(|v| v.checked_mul(n_theta))
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| MapError::BadHeader("dimensions overflow".into()))?;
    let expected_bytes = MAP_HEADER_LEN + total as u64 * 8;
    let mut data: Vec<T> = Vec::with_capacity(total);
    let mut hasher = crc32fast::Hasher::new();
    let mut buf = vec![0u8; CHUNK * 8];
    let mut remaining = total;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        let bytes = &mut buf[..take * 8];
        input.read_exact(bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => MapError::Truncated {
                expected: expected_bytes,
            },
            _ => MapError::Io(e),
        })?;
        hasher.update(bytes);
        data.extend(
            bytes
                .chunks_exact(8)
                .map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes")))),
        );
        remaining -= take;
    }
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(MapError::BadHeader("trailing bytes after payload".into()));
    }
    if hasher.finalize() != crc {
        return Err(MapError::Checksum);
    }
    let voxels = total / d;
    let step = (voxels / NORM_SPOT_CHECKS).max(1);
    for voxel in (0..voxels).step_by(step) {
        let norm = norm_f64(&data[voxel * d..(voxel + 1) * d]);
        if !((norm - 1.0).abs() <= MAP_NORM_TOLERANCE) {
            return Err(MapError::NotUnit { voxel, norm });
        }
    }
    DescriptorMap::from_data_unchecked(spec, d, data)
}

pub fn load_map<T: Real>(path: impl AsRef<Path>) -> Result<DescriptorMap<T>, MapError> {
    read_map(BufReader::new(File::open(path)?))
}

/// Loads a map and checks it is aligned with `spec`.
pub fn load_map_for<T: Real>(path: impl AsRef<Path>, spec: &GridSpec) -> Result<DescriptorMap<T>, MapError> {
    let map = load_map::<T>(path)?;
    if map.spec().fingerprint() != spec.fingerprint() {
        return Err(MapError::GridMismatch {
            expected: spec.fingerprint(),
            found: map.spec().fingerprint(),
        });
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{make_grid_spec, Extent};
    use crate::map_store::{precompute, RasterMap};
    use image::{Rgb, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_map() -> DescriptorMap<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = RgbImage::from_fn(120, 120, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let raster = RasterMap::new(img, -30.0, 90.0, 1.0).unwrap();
        let spec = make_grid_spec(Extent::square(60.0), 10.0, 6).unwrap();
        precompute(&raster, &spec, 20.0, 2.0, 8).unwrap()
    }

    fn bytes_of(map: &DescriptorMap<f64>) -> Vec<u8> {
        let mut v = Vec::new();
        write_map(map, &mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_bitwise() {
        let map = small_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_map(&map, &path).unwrap();
        let back: DescriptorMap<f64> = load_map(&path).unwrap();
        assert_eq!(back, map);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), predicted_file_size(map.spec(), 8));
        let as32: DescriptorMap<f32> = load_map_for(&path, map.spec()).unwrap();
        for (a, b) in as32.data().iter().zip(map.data()) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
    }

    #[test]
    fn deterministic_bytes() {
        assert_eq!(bytes_of(&small_map()), bytes_of(&small_map()));
    }

    #[test]
    fn detects_corruption() {
        let good = bytes_of(&small_map());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_map::<f64, _>(&bad[..]), Err(MapError::BadMagic)));
        let mut bad = good.clone();
        bad[100] ^= 0x01;
        assert!(matches!(read_map::<f64, _>(&bad[..]), Err(MapError::Checksum)));
        assert!(matches!(
            read_map::<f64, _>(&good[..good.len() - 3]),
            Err(MapError::Truncated { .. })
        ));
        assert!(matches!(read_map::<f64, _>(&good[..10]), Err(MapError::BadHeader(_))));
        let mut bad = good.clone();
        bad[8] = 7;
        assert!(matches!(read_map::<f64, _>(&bad[..]), Err(MapError::GridMismatch { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(read_map::<f64, _>(&long[..]), Err(MapError::BadHeader(_))));
    }

    #[test]
    fn rejects_misaligned_grid() {
        let map = small_map();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_map(&map, &path).unwrap();
        let other = make_grid_spec(Extent::square(60.0), 10.0, 12).unwrap();
        assert!(matches!(load_map_for::<f64>(&path, &other), Err(MapError::GridMismatch { .. })));
    }

    #[test]
    fn size_formula() {
        let spec = make_grid_spec(Extent::square(10_000.0), 10.0, 60).unwrap();
        assert_eq!(predicted_file_size(&spec, 8), 64 + 1000 * 1000 * 60 * 8 * 8);
        assert_eq!(predicted_file_size(&spec, 16) - 64, 2 * (predicted_file_size(&spec, 8) - 64));
    }
}
