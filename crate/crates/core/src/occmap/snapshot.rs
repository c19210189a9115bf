//! Binary map snapshots: `OCCM`, u32 version, u32 x3 dims, f64 resolution,
//! f64 x3 origin, then little-endian f32 log-odds (x fastest).

use std::io::{Read, Write};

use super::{MapParams, OccupancyMap};

const MAGIC: &[u8; 4] = b"OCCM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 8 + 24;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("not a map snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot payload is {got} bytes, expected {expected}")]
    Size { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OccupancyMap {
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), SnapshotError> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for d in self.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.resolution().to_le_bytes());
        for o in self.origin {
            buf.extend_from_slice(&o.to_le_bytes());
        }
        for &l in self.log_odds_slice() {
            buf.extend_from_slice(&(l as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Reads a snapshot; sensor-model fields other than the resolution come
    /// from `params`.
    pub fn read_snapshot<R: Read>(mut input: R, params: &MapParams) -> Result<OccupancyMap, SnapshotError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(SnapshotError::Size { got: bytes.len(), expected: HEADER_LEN });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
        let resolution = f64_at(20);
        let origin = [f64_at(28), f64_at(36), f64_at(44)];
        let n = dims[0] * dims[1] * dims[2];
        let expected = HEADER_LEN + 4 * n;
        if bytes.len() != expected {
            return Err(SnapshotError::Size { got: bytes.len(), expected });
        }
        let params = MapParams { resolution_m: resolution, ..params.clone() };
        let mut map = OccupancyMap::new(params, origin, dims);
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            map.set_log_odds(i, f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_errors() {
        let mut m = OccupancyMap::new(MapParams::default(), [0.5, -1.0, 0.0], [3, 4, 5]);
        m.apply_hit(7);
        m.apply_miss(8);
        let mut buf = Vec::new();
        m.write_snapshot(&mut buf).unwrap();
        let back = OccupancyMap::read_snapshot(&buf[..], &MapParams::default()).unwrap();
        assert_eq!(back.dims(), m.dims());
        assert_eq!(back.origin(), m.origin());
        for i in 0..m.len() {
            assert_eq!(back.log_odds(i), m.log_odds(i) as f32 as f64);
        }
        assert_eq!(back.count_surface(), 1);

        assert!(matches!(
            OccupancyMap::read_snapshot(&buf[..buf.len() - 1], &MapParams::default()),
            Err(SnapshotError::Size { .. })
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(OccupancyMap::read_snapshot(&bad[..], &MapParams::default()), Err(SnapshotError::BadMagic)));
        let mut ver = buf;
        ver[4] = 2;
        assert!(matches!(OccupancyMap::read_snapshot(&ver[..], &MapParams::default()), Err(SnapshotError::Version(2))));
    }
}
