//! Compact little-endian dump of a ValueField, used to resume runs.
//!
//! Layout: the magic `MPHJBVF\0`, a `u16` version, a `u8` boundary policy,
//! a reserved byte, a `u32` axis count, then per axis `lower`, `upper`
//! (`f64`) and `points` (`u64`), then `t0`, `T` (`f64`), `steps` and the
//! value count (`u64`), the values (`f64`), and a trailing FNV-1a hash of
//! every preceding byte.

use crate::error::{Error, Result};
use crate::grid::{Axis, BoundaryPolicy, Grid, ValueField};

pub const MAGIC: &[u8; 8] = b"MPHJBVF\0";
pub const VERSION: u16 = 1;
const MAX_AXES: u32 = 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn encode_value_field(field: &ValueField) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(64 + 24 * grid.dim() + 8 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match grid.boundary() {
        BoundaryPolicy::Clamp => 0,
        BoundaryPolicy::Strict => 1,
    });
    out.push(0);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for a in grid.axes() {
        out.extend_from_slice(&a.lower.to_le_bytes());
        out.extend_from_slice(&a.upper.to_le_bytes());
        out.extend_from_slice(&(a.points as u64).to_le_bytes());
    }
    out.extend_from_slice(&grid.t0().to_le_bytes());
    out.extend_from_slice(&grid.horizon().to_le_bytes());
    out.extend_from_slice(&(grid.steps() as u64).to_le_bytes());
    out.extend_from_slice(&(field.values().len() as u64).to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let hash = fnv1a(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse(format!("truncated dump while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Parse(format!("{what} does not fit in memory")))
    }
}

pub fn decode_value_field(bytes: &[u8]) -> Result<ValueField> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Parse("not a value-field dump (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        return Err(Error::Parse("checksum mismatch".into()));
    }
    let mut c = Cursor {
        bytes: body,
        pos: MAGIC.len(),
    };
    let version = u16::from_le_bytes(c.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported dump version {version}")));
    }
    let boundary = match c.take(1, "boundary")?[0] {
        0 => BoundaryPolicy::Clamp,
        1 => BoundaryPolicy::Strict,
        b => return Err(Error::Parse(format!("unknown boundary policy {b}"))),
    };
    c.take(1, "reserved byte")?;
    let n = u32::from_le_bytes(c.take(4, "axis count")?.try_into().expect("4 bytes"));
    if n == 0 || n > MAX_AXES {
        return Err(Error::Parse(format!("axis count {n} outside 1..={MAX_AXES}")));
    }
    let mut axes = Vec::with_capacity(n as usize);
    for k in 0..n {
        let lower = c.f64("axis bounds")?;
        let upper = c.f64("axis bounds")?;
        let points = c.usize("axis points")?;
        if points < 3 {
            return Err(Error::Parse(format!("axis {k} has {points} points")));
        }
        axes.push(Axis::new(lower, upper, points));
    }
    let t0 = c.f64("t0")?;
    let horizon = c.f64("horizon")?;
    let steps = c.usize("steps")?;
    let count = c.usize("value count")?;
    let grid = Grid::new(axes, t0, horizon, steps)?.with_boundary(boundary);
    let expected = grid.len() * (steps + 1);
    if count != expected {
        return Err(Error::Parse(format!(
            "value count {count} does not match the grid ({expected})"
        )));
    }
    if body.len() - c.pos != count * 8 {
        return Err(Error::Parse(format!(
            "payload has {} bytes, expected {}",
            body.len() - c.pos,
            count * 8
        )));
    }
    let values: Vec<f64> = body[c.pos..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("dump contains non-finite values".into()));
    }
    ValueField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ValueField {
        let grid = Grid::new(vec![Axis::new(-1.0, 1.0, 5), Axis::new(0.0, 2.0, 3)], 0.0, 1.0, 2)
            .unwrap()
            .with_boundary(BoundaryPolicy::Strict);
        let values = (0..45).map(|j| j as f64 / 7.0).collect();
        ValueField::new(grid, values).unwrap()
    }

    #[test]
    fn round_trip() {
        let field = sample();
        let bytes = encode_value_field(&field);
        let back = decode_value_field(&bytes).unwrap();
        assert_eq!(back, field);
        assert_eq!(back.grid().boundary(), BoundaryPolicy::Strict);
    }

    #[test]
    fn detects_corruption() {
        let bytes = encode_value_field(&sample());
        for cut in [0, 7, 20, bytes.len() - 1] {
            assert!(decode_value_field(&bytes[..cut]).is_err());
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(decode_value_field(&flipped).is_err());
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(decode_value_field(&bad_magic).is_err());
    }
}
