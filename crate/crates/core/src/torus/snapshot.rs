//! Binary field snapshots.
//!
//! Layout (all little-endian): 8-byte magic `PHI4SNAP`, `u32` version, `u32`
//! reserved (zero), `u64` N, `f64` L, then `N*N` `f64` real-space samples in
//! row-major order.

use std::io::{Read, Write};

use super::{Field, TorusGrid};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"PHI4SNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut w: W, f: &Field) -> Result<()> {
    let g = f.grid();
    let mut buf = Vec::with_capacity(32 + 8 * g.points());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&(g.n as u64).to_le_bytes());
    buf.extend_from_slice(&g.l.to_le_bytes());
    for x in f.real().iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Field> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a field snapshot (bad magic)".into()));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let n = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(head[24..32].try_into().unwrap());
    let grid = TorusGrid::new(n, l).map_err(|e| Error::Format(e.to_string()))?;
    let mut body = vec![0u8; 8 * grid.points()];
    r.read_exact(&mut body)?;
    let v = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::from_real(grid, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{cell_rng, Domain};
    use crate::torus::gaussian_field;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = TorusGrid::new(8, 1.25).unwrap();
        let f = gaussian_field(g, &mut cell_rng(4, 0, Domain::Test, 0));
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        assert_eq!(bytes.len(), 32 + 8 * 64);
        assert_eq!(&bytes[..8], b"PHI4SNAP");
        let back = read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(back.grid(), f.grid());
        let a = back.real();
        let b = f.real();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_bad_header() {
        let mut bytes = vec![0u8; 64];
        assert!(matches!(read_snapshot(bytes.as_slice()), Err(Error::Format(_))));
        bytes[..8].copy_from_slice(SNAPSHOT_MAGIC);
        bytes[8] = 9;
        assert!(matches!(read_snapshot(bytes.as_slice()), Err(Error::Format(_))));
    }
}
