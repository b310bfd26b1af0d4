//! Binary and CSV dumps of range-angle power maps.
//!
//! Binary layout, little endian: `b"RAMP"`, `u32` version, `u32` n_range,
//! `u32` n_angle, `f64` range_min, range_max, naf_min, naf_max, then
//! `n_range * n_angle` `f64` power values, range-major.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::NafAngle;
use crate::ofdm::RangeAngleMap;

pub const MAGIC: &[u8; 4] = b"RAMP";
pub const VERSION: u32 = 1;

pub fn write_ramp<W: Write>(map: &RangeAngleMap, mut out: W) -> Result<()> {
    let range = map.range_axis();
    let angle = map.angle_axis();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for n in [map.n_range(), map.n_angle()] {
        let n = u32::try_from(n).map_err(|_| Error::input("map too large for the RAMP format"))?;
        out.write_all(&n.to_le_bytes())?;
    }
    for v in [range[0], range[range.len() - 1], angle[0].0, angle[angle.len() - 1].0] {
        out.write_all(&v.to_le_bytes())?;
    }
    for p in map.power() {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Reads a RAMP dump. Axes are reconstructed as uniform grids between the
/// stored end points.
pub fn read_ramp<R: Read>(mut input: R) -> Result<RangeAngleMap> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::input("not a RAMP file"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::input(format!("unsupported RAMP version {version}")));
    }
    let n_range = read_u32(&mut input)? as usize;
    let n_angle = read_u32(&mut input)? as usize;
    let (r0, r1) = (read_f64(&mut input)?, read_f64(&mut input)?);
    let (a0, a1) = (read_f64(&mut input)?, read_f64(&mut input)?);
    let count = n_range
        .checked_mul(n_angle)
        .ok_or_else(|| Error::input("RAMP dimensions overflow"))?;
    let mut power = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        power.push(read_f64(&mut input)?);
    }
    RangeAngleMap::new(
        linspace(r0, r1, n_range),
        linspace(a0, a1, n_angle).into_iter().map(NafAngle).collect(),
        power,
    )
}

/// Long-format CSV: `range_m,naf,power`, range-major like the binary dump.
pub fn write_map_csv<W: Write>(map: &RangeAngleMap, mut out: W) -> Result<()> {
    writeln!(out, "range_m,naf,power")?;
    for (r, range) in map.range_axis().iter().enumerate() {
        for (a, naf) in map.angle_axis().iter().enumerate() {
            writeln!(out, "{range},{},{}", naf.0, map.get(r, a))?;
        }
    }
    out.flush()?;
    Ok(())
}
