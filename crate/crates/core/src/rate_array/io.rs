//! Binary rate-array files.
//!
//! Layout (little-endian): magic `SOENRATE`, format version (u32), payload
//! length (u64), payload, CRC-32 of the payload (u32). The payload holds the
//! dendrite kind, circuit parameters, both grids, per-cell status and
//! lengths, then all breakpoints and rates.

use std::path::Path;

use super::{CellStatus, CircuitSpec, RateArray};
use crate::circuit::DendriteKind;
use crate::error::{Error, Result};
use crate::io_util;

pub const MAGIC: &[u8; 8] = b"SOENRATE";
pub const VERSION: u32 = 1;

pub(crate) fn save(a: &RateArray, path: &Path) -> Result<()> {
    let mut p = Vec::with_capacity(64 + 16 * a.s.len());
    p.push(match a.kind {
        DendriteKind::Ri => 0u8,
        DendriteKind::Rtti => 1u8,
    });
    let params = a.circuit.to_values();
    put_u64(&mut p, params.len() as u64);
    put_f64s(&mut p, &params);
    put_u64(&mut p, a.ib_grid.len() as u64);
    put_f64s(&mut p, &a.ib_grid);
    put_u64(&mut p, a.phi_grid.len() as u64);
    put_f64s(&mut p, &a.phi_grid);
    for c in 0..a.status.len() {
        p.push(a.status[c].code());
        put_u64(&mut p, (a.offsets[c + 1] - a.offsets[c]) as u64);
    }
    put_f64s(&mut p, &a.s);
    put_f64s(&mut p, &a.r);

    let mut out = Vec::with_capacity(p.len() + 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u64(&mut out, p.len() as u64);
    out.extend_from_slice(&p);
    out.extend_from_slice(&crc32fast::hash(&p).to_le_bytes());
    io_util::write_atomic(path, &out)
}

pub(crate) fn load(path: &Path) -> Result<RateArray> {
    let bytes = io_util::read(path)?;
    decode(&bytes, path)
}

pub(crate) fn decode(bytes: &[u8], path: &Path) -> Result<RateArray> {
    let truncated = || Error::Truncated { path: path.to_path_buf() };
    if bytes.len() < 8 {
        return Err(truncated());
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: "rate array" });
    }
    let mut r = Reader { buf: &bytes[8..], path };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: VERSION });
    }
    let len = r.u64()? as usize;
    if r.buf.len() < len.saturating_add(4) {
        return Err(truncated());
    }
    let payload = &r.buf[..len];
    let stored = u32::from_le_bytes(r.buf[len..len + 4].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { path: path.to_path_buf(), stored, computed });
    }
    let malformed = |reason: &str| Error::Malformed { path: path.to_path_buf(), reason: reason.into() };

    let mut r = Reader { buf: payload, path };
    let kind = match r.u8()? {
        0 => DendriteKind::Ri,
        1 => DendriteKind::Rtti,
        _ => return Err(malformed("unknown dendrite kind")),
    };
    let n = r.u64()? as usize;
    let params = r.f64s(n)?;
    let circuit = CircuitSpec::from_values(kind, &params).ok_or_else(|| malformed("bad circuit parameter block"))?;
    let n = r.u64()? as usize;
    let ib_grid = r.f64s(n)?;
    let n = r.u64()? as usize;
    let phi_grid = r.f64s(n)?;
    let n_cells = ib_grid.len().checked_mul(phi_grid.len()).ok_or_else(|| malformed("grid too large"))?;
    let mut meta = Vec::with_capacity(n_cells);
    let mut total = 0usize;
    for _ in 0..n_cells {
        let st = CellStatus::from_code(r.u8()?).ok_or_else(|| malformed("unknown cell status"))?;
        let l = r.u64()? as usize;
        total = total.checked_add(l).ok_or_else(|| malformed("cell lengths overflow"))?;
        meta.push((st, l));
    }
    let s = r.f64s(total)?;
    let rates = r.f64s(total)?;
    if !r.buf.is_empty() {
        return Err(malformed("trailing bytes in payload"));
    }
    let mut cells = Vec::with_capacity(n_cells);
    let mut at = 0;
    for (st, l) in meta {
        cells.push((s[at..at + l].to_vec(), rates[at..at + l].to_vec(), st));
        at += l;
    }
    RateArray::from_cells(circuit, ib_grid, phi_grid, cells).map_err(|e| malformed(&e.to_string()))
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated { path: self.path.to_path_buf() });
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or(Error::Truncated { path: self.path.to_path_buf() })?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_array::tests::synthetic_ri;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rates");
        let a = synthetic_ri();
        a.save(&path).unwrap();
        let b = RateArray::load(&path).unwrap();
        assert_eq!(a, b);
        for k in 0..200 {
            let phi = -0.6 + 1.2 * k as f64 / 199.0;
            for s in [0.0, 0.05, 0.2, 0.4] {
                assert_eq!(a.lookup(phi, s, 1.7).unwrap().to_bits(), b.lookup(phi, s, 1.7).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.rates");
        synthetic_ri().save(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(decode(&bad, &path), Err(Error::Checksum { .. })));

        let mut bad = good.clone();
        let n = bad.len();
        bad[n - 1] ^= 1;
        assert!(matches!(decode(&bad, &path), Err(Error::Checksum { .. })));

        assert!(matches!(decode(&good[..good.len() - 9], &path), Err(Error::Truncated { .. })));
        assert!(matches!(decode(&good[..10], &path), Err(Error::Truncated { .. })));

        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(decode(&bad, &path), Err(Error::VersionMismatch { found: 99, .. })));

        let mut bad = good;
        bad[0] = b'X';
        assert!(matches!(decode(&bad, &path), Err(Error::BadMagic { .. })));
    }
}
