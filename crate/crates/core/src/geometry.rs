//! Array layouts, the NAF coordinate system and the sum coarray.
//!
//! Element positions are kept in array-aperture-line units (multiples of the
//! element spacing `d`) and centered on the array, so a uniform array of `N`
//! elements sits at `n - (N - 1) / 2`. Every position is therefore a multiple
//! of one half, which lets the coarray be deduplicated on an integer lattice.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::{Error, Result};

/// Normalized angular frequency `(d / lambda) * sin(azimuth) * cos(elevation)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NafAngle(pub f64);

impl NafAngle {
    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for NafAngle {
    fn from(v: f64) -> Self {
        NafAngle(v)
    }
}

impl fmt::Display for NafAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Scan direction, both angles in radians and strictly inside (-pi/2, pi/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        let open = |a: f64| a.is_finite() && a > -FRAC_PI_2 && a < FRAC_PI_2;
        if !open(azimuth) || !open(elevation) {
            return Err(Error::input(format!(
                "direction ({azimuth}, {elevation}) rad outside (-pi/2, pi/2)"
            )));
        }
        Ok(Self { azimuth, elevation })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }
}

/// Horizontal and vertical components `[cos(el) sin(az), sin(el)]`.
pub fn direction_vector(dir: Direction) -> [f64; 2] {
    [
        dir.elevation.cos() * dir.azimuth.sin(),
        dir.elevation.sin(),
    ]
}

pub fn naf_of_direction(dir: Direction, spacing_wavelengths: f64) -> NafAngle {
    NafAngle(spacing_wavelengths * dir.azimuth.sin() * dir.elevation.cos())
}

/// Inverse of [`naf_of_direction`] for the azimuth, at a fixed elevation.
pub fn azimuth_of_naf(naf: NafAngle, spacing_wavelengths: f64, elevation: f64) -> Result<f64> {
    let s = naf.0 / (spacing_wavelengths * elevation.cos());
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::input(format!(
            "NAF {naf} not reachable with spacing {spacing_wavelengths}"
        )));
    }
    Ok(s.asin())
}

/// Uniform TX and RX arrays with common spacing (horizontal cut only).
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    n_tx: usize,
    n_rx: usize,
    spacing_wavelengths: f64,
    tx_positions: Vec<[f64; 2]>,
    rx_positions: Vec<[f64; 2]>,
}

fn centered_positions(n: usize) -> Vec<[f64; 2]> {
    let center = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| [i as f64 - center, 0.0]).collect()
}

impl ArrayGeometry {
    pub fn uniform(n_tx: usize, n_rx: usize, spacing_wavelengths: f64) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::config("arrays need at least one element"));
        }
        if !(spacing_wavelengths > 0.0 && spacing_wavelengths <= 0.5) {
            return Err(Error::config(format!(
                "element spacing {spacing_wavelengths} wavelengths outside (0, 0.5]"
            )));
        }
        Ok(Self {
            n_tx,
            n_rx,
            spacing_wavelengths,
            tx_positions: centered_positions(n_tx),
            rx_positions: centered_positions(n_rx),
        })
    }

    /// Equal TX and RX arrays at half-wavelength spacing.
    pub fn half_wavelength(n: usize) -> Result<Self> {
        Self::uniform(n, n, 0.5)
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }

    pub fn tx_positions(&self) -> &[[f64; 2]] {
        &self.tx_positions
    }

    pub fn rx_positions(&self) -> &[[f64; 2]] {
        &self.rx_positions
    }

    /// Number of distinct coarray positions, `N + M - 1`.
    pub fn coarray_order(&self) -> usize {
        self.n_tx + self.n_rx - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coarray {
    pub virtual_positions: Vec<[f64; 2]>,
    pub multiplicities: Vec<usize>,
}

impl Coarray {
    pub fn len(&self) -> usize {
        self.virtual_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.virtual_positions.is_empty()
    }
}

/// All pairwise sums of TX and RX positions with their multiplicities,
/// sorted by horizontal then vertical position.
pub fn sum_coarray(geom: &ArrayGeometry) -> Coarray {
    use std::collections::BTreeMap;

    // Positions are multiples of 1/2; doubling puts them on an integer lattice.
    let key = |p: [f64; 2]| ((2.0 * p[0]).round() as i64, (2.0 * p[1]).round() as i64);
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for t in &geom.tx_positions {
        for r in &geom.rx_positions {
            *counts.entry(key([t[0] + r[0], t[1] + r[1]])).or_default() += 1;
        }
    }
    let (virtual_positions, multiplicities) = counts
        .into_iter()
        .map(|((x, z), m)| ([x as f64 / 2.0, z as f64 / 2.0], m))
        .unzip();
    Coarray {
        virtual_positions,
        multiplicities,
    }
}

/// NAF resolution `1 / (2 n - 1)` of a monostatic pair of `n`-element arrays.
pub fn naf_resolution(n_1d: usize) -> Result<f64> {
    if n_1d == 0 {
        return Err(Error::input("resolution needs at least one element"));
    }
    Ok(1.0 / (2 * n_1d - 1) as f64)
}
