//! OFDM channel synthesis per beam and frame, range-Doppler periodograms and
//! the range/Doppler collapse that reduces each acquisition to one value.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::beam::{beamformed_response, BeamformingWeights, Scatterer};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, NafAngle};
use crate::rng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols_per_frame: usize,
    pub frame_duration_s: f64,
    /// Range bins kept for display and detection, starting at 0 m.
    pub n_range_bins: usize,
    /// Range covered by the kept bins.
    pub max_range_m: f64,
    /// Taper applied across subcarriers before the range transform.
    pub range_window: RangeWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeWindow {
    Rectangular,
    #[default]
    Hann,
}

impl RangeWindow {
    /// Window coefficients for `n` subcarriers.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            RangeWindow::Rectangular => vec![1.0; n],
            RangeWindow::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * PI * (k as f64 + 0.5) / n as f64).cos())
                .collect(),
        }
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 27.6e9,
            subcarrier_spacing_hz: 120e3,
            n_subcarriers: 792,
            n_symbols_per_frame: 14,
            frame_duration_s: 0.010,
            n_range_bins: 42,
            max_range_m: 25.0,
            range_window: RangeWindow::default(),
        }
    }
}

fn is_7_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("frame_duration_s", self.frame_duration_s),
            ("max_range_m", self.max_range_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("radio.{name} must be positive, got {v}")));
            }
        }
        if self.n_subcarriers == 0 || self.n_symbols_per_frame == 0 || self.n_range_bins < 2 {
            return Err(Error::config(
                "radio needs subcarriers, symbols and at least two range bins",
            ));
        }
        if self.max_range_m >= self.unambiguous_range_m() {
            return Err(Error::config("max_range_m exceeds the unambiguous range"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Native range resolution `c / (2 N df)`.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.n_subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    pub fn unambiguous_range_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing_hz)
    }

    /// Zero-padded transform length giving `n_range_bins` over `max_range_m`,
    /// rounded up to a 7-smooth size and never shorter than the subcarrier count.
    pub fn fft_len(&self) -> usize {
        let target = (self.n_range_bins as f64 * self.unambiguous_range_m() / self.max_range_m).ceil() as usize;
        let mut n = target.max(self.n_subcarriers);
        while !is_7_smooth(n) {
            n += 1;
        }
        n
    }

    pub fn range_bin_m(&self) -> f64 {
        self.unambiguous_range_m() / self.fft_len() as f64
    }

    pub fn range_axis(&self) -> Vec<f64> {
        let step = self.range_bin_m();
        (0..self.n_range_bins).map(|k| k as f64 * step).collect()
    }
}

/// Whether beams keep a common phase reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceMode {
    /// Each (beam, frame) acquisition carries an independent random phase.
    #[default]
    PocFaithful,
    /// Phase-coherent across beams.
    Ideal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
}

/// Radio numerology plus the arrays that form the beams.
#[derive(Debug, Clone)]
pub struct SensingSetup {
    pub radio: RadioConfig,
    pub geometry: ArrayGeometry,
    pub weights: BeamformingWeights,
}

impl SensingSetup {
    pub fn new(radio: RadioConfig, geometry: ArrayGeometry) -> Result<Self> {
        radio.validate()?;
        let weights = BeamformingWeights::uniform(&geometry);
        Ok(Self {
            radio,
            geometry,
            weights,
        })
    }
}

/// Channel estimates of one frame: subcarriers x symbols, subcarrier-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCsi {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub data: Vec<Complex64>,
}

impl FrameCsi {
    pub fn get(&self, subcarrier: usize, symbol: usize) -> Complex64 {
        self.data[subcarrier * self.n_symbols + symbol]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Noise-free per-subcarrier response of the scene for one steering direction.
fn subcarrier_response(setup: &SensingSetup, scene: &Scene, steer: NafAngle) -> Result<Vec<Complex64>> {
    let radio = &setup.radio;
    let mut out = vec![Complex64::new(0.0, 0.0); radio.n_subcarriers];
    for s in &scene.scatterers {
        let alpha = beamformed_response(&setup.geometry, &setup.weights, std::slice::from_ref(s), steer)?;
        let step = Complex64::from_polar(
            1.0,
            -2.0 * PI * radio.subcarrier_spacing_hz * 2.0 * s.range_m / SPEED_OF_LIGHT,
        );
        // Recurrence drifts slowly; re-anchor every 64 subcarriers.
        let mut phasor = alpha;
        for (n, v) in out.iter_mut().enumerate() {
            if n % 64 == 0 {
                phasor = alpha
                    * Complex64::from_polar(
                        1.0,
                        -2.0 * PI * n as f64 * radio.subcarrier_spacing_hz * 2.0 * s.range_m / SPEED_OF_LIGHT,
                    );
            }
            *v += phasor;
            phasor *= step;
        }
    }
    Ok(out)
}

/// Synthesizes one frame of CSI for a beam steered to `steer`.
///
/// Entry `(n, m)` is `sum_s alpha_s exp(-j 2 pi n df 2 r_s / c)` plus circular
/// Gaussian noise of power `noise_power`. The scene is static, so symbols
/// differ only in their noise.
pub fn synthesize_csi(
    setup: &SensingSetup,
    scene: &Scene,
    steer: NafAngle,
    noise_power: f64,
    seed: u64,
    mode: CoherenceMode,
) -> Result<FrameCsi> {
    if !(noise_power >= 0.0) {
        return Err(Error::input(format!("noise power {noise_power} must be non-negative")));
    }
    let radio = &setup.radio;
    let signal = subcarrier_response(setup, scene, steer)?;
    let mut rng = rng::stream(seed, &[]);
    let rotation = match mode {
        CoherenceMode::Ideal => Complex64::new(1.0, 0.0),
        CoherenceMode::PocFaithful => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
    };
    let sigma = (noise_power / 2.0).sqrt();
    let n_sym = radio.n_symbols_per_frame;
    let mut data = Vec::with_capacity(radio.n_subcarriers * n_sym);
    for s in &signal {
        for _ in 0..n_sym {
            let mut v = *s;
            if noise_power > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                v += Complex64::new(sigma * re, sigma * im);
            }
            data.push(v * rotation);
        }
    }
    Ok(FrameCsi {
        n_subcarriers: radio.n_subcarriers,
        n_symbols: n_sym,
        data,
    })
}

/// Scene-specific subcarrier phase ramps for fast repeated synthesis of the
/// symbol-summed CSI, which is all the zero-Doppler profile needs.
#[derive(Debug, Clone)]
pub struct SceneSynth {
    setup: SensingSetup,
    scatterers: Vec<Scatterer>,
    /// One ramp `exp(-j 2 pi n df 2 r / c)` per scatterer.
    ramps: Vec<Vec<Complex64>>,
}

impl SceneSynth {
    pub fn new(setup: &SensingSetup, scene: &Scene) -> Self {
        let radio = &setup.radio;
        let ramps = scene
            .scatterers
            .iter()
            .map(|s| {
                (0..radio.n_subcarriers)
                    .map(|n| {
                        Complex64::from_polar(
                            1.0,
                            -2.0 * PI * n as f64 * radio.subcarrier_spacing_hz * 2.0 * s.range_m / SPEED_OF_LIGHT,
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            setup: setup.clone(),
            scatterers: scene.scatterers.clone(),
            ramps,
        }
    }

    /// Per-subcarrier sum over the symbols of one frame.
    ///
    /// Statistically identical to summing [`synthesize_csi`] over symbols:
    /// the signal scales by the symbol count and the summed noise has power
    /// `n_symbols * noise_power`.
    pub fn symbol_sum(
        &self,
        steer: NafAngle,
        noise_power: f64,
        seed: u64,
        mode: CoherenceMode,
    ) -> Result<Vec<Complex64>> {
        if !(noise_power >= 0.0) {
            return Err(Error::input(format!("noise power {noise_power} must be non-negative")));
        }
        let radio = &self.setup.radio;
        let n_sym = radio.n_symbols_per_frame as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); radio.n_subcarriers];
        for (s, ramp) in self.scatterers.iter().zip(&self.ramps) {
            let alpha = n_sym
                * beamformed_response(&self.setup.geometry, &self.setup.weights, std::slice::from_ref(s), steer)?;
            for (o, r) in out.iter_mut().zip(ramp) {
                *o += alpha * r;
            }
        }
        let mut rng = rng::stream(seed, &[]);
        let rotation = match mode {
            CoherenceMode::Ideal => Complex64::new(1.0, 0.0),
            CoherenceMode::PocFaithful => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
        };
        let sigma = (n_sym * noise_power / 2.0).sqrt();
        for o in out.iter_mut() {
            if noise_power > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *o += Complex64::new(sigma * re, sigma * im);
            }
            *o *= rotation;
        }
        Ok(out)
    }
}

/// Range x Doppler power, range-major. Doppler bin 0 is zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub n_range: usize,
    pub n_doppler: usize,
    pub power: Vec<f64>,
    pub range_bin_m: f64,
}

impl Periodogram {
    pub fn get(&self, range: usize, doppler: usize) -> f64 {
        self.power[range * self.n_doppler + doppler]
    }

    pub fn zero_doppler(&self) -> Vec<f64> {
        (0..self.n_range).map(|r| self.get(r, 0)).collect()
    }

    pub fn range_axis(&self) -> Vec<f64> {
        (0..self.n_range).map(|k| k as f64 * self.range_bin_m).collect()
    }
}

/// Reusable FFT plans for one radio configuration.
#[derive(Clone)]
pub struct RangeProcessor {
    fft_len: usize,
    range_bin_m: f64,
    range_ifft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl std::fmt::Debug for RangeProcessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RangeProcessor").field("fft_len", &self.fft_len).finish()
    }
}

impl RangeProcessor {
    pub fn new(radio: &RadioConfig) -> Self {
        let fft_len = radio.fft_len();
        let mut planner = FftPlanner::new();
        Self {
            fft_len,
            range_bin_m: radio.range_bin_m(),
            range_ifft: planner.plan_fft_inverse(fft_len),
            doppler_fft: planner.plan_fft_forward(radio.n_symbols_per_frame),
            window: radio.range_window.coefficients(radio.n_subcarriers),
        }
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Squared magnitude of the 2D transform: zero-padded inverse DFT over
    /// subcarriers (range), forward DFT over symbols (Doppler).
    pub fn periodogram(&self, csi: &FrameCsi) -> Result<Periodogram> {
        if csi.n_subcarriers != self.window.len() || csi.data.len() != csi.n_subcarriers * csi.n_symbols {
            return Err(Error::input("CSI dimensions do not match the range processor"));
        }
        if csi.n_symbols != self.doppler_fft.len() {
            return Err(Error::input("CSI symbol count does not match the range processor"));
        }
        let (l, s) = (self.fft_len, csi.n_symbols);
        let mut grid = vec![Complex64::new(0.0, 0.0); l * s];
        // Column per symbol, transformed along range.
        let mut column = vec![Complex64::new(0.0, 0.0); l];
        for m in 0..s {
            column.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (n, (c, w)) in column.iter_mut().zip(&self.window).enumerate().take(csi.n_subcarriers) {
                *c = csi.get(n, m) * w;
            }
            self.range_ifft.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                grid[r * s + m] = *v;
            }
        }
        for row in grid.chunks_mut(s) {
            self.doppler_fft.process(row);
        }
        Ok(Periodogram {
            n_range: l,
            n_doppler: s,
            power: grid.iter().map(|c| c.norm_sqr()).collect(),
            range_bin_m: self.range_bin_m,
        })
    }

    /// Zero-Doppler column of [`Self::periodogram`], truncated to `n_bins`.
    ///
    /// The zero-Doppler bin is the plain sum over symbols, so one range
    /// transform of that sum suffices.
    pub fn zero_doppler_profile(&self, csi: &FrameCsi, n_bins: usize) -> Result<Vec<f64>> {
        if csi.n_subcarriers != self.window.len() || csi.data.len() != csi.n_subcarriers * csi.n_symbols {
            return Err(Error::input("CSI dimensions do not match the range processor"));
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (n, row) in csi.data.chunks(csi.n_symbols).enumerate() {
            column[n] = row.iter().sum::<Complex64>() * self.window[n];
        }
        self.range_ifft.process(&mut column);
        Ok(column.iter().take(n_bins).map(|c| c.norm_sqr()).collect())
    }

    /// Zero-Doppler range power from symbol-summed CSI.
    pub fn profile_from_symbol_sum(&self, summed: &[Complex64], n_bins: usize) -> Result<Vec<f64>> {
        let mut column = vec![Complex64::new(0.0, 0.0); self.fft_len];
        if summed.len() != self.window.len() {
            return Err(Error::input("summed CSI length does not match the subcarrier count"));
        }
        for (n, v) in summed.iter().enumerate() {
            column[n] = v * self.window[n];
        }
        self.range_ifft.process(&mut column);
        Ok(column.iter().take(n_bins).map(|c| c.norm_sqr()).collect())
    }
}

pub fn range_doppler_periodogram(radio: &RadioConfig, csi: &FrameCsi) -> Result<Periodogram> {
    RangeProcessor::new(radio).periodogram(csi)
}

/// Zero-Doppler maximum inside `[gate_min, gate_max]`: `(power, range_m)`.
pub fn collapse_to_angle_value(periodogram: &Periodogram, gate: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = gate;
    let mut best: Option<(f64, f64)> = None;
    for r in 0..periodogram.n_range {
        let range = r as f64 * periodogram.range_bin_m;
        if range < lo || range > hi {
            continue;
        }
        let p = periodogram.get(r, 0);
        if best.is_none_or(|(bp, _)| p > bp) {
            best = Some((p, range));
        }
    }
    best.ok_or_else(|| Error::config(format!("range gate [{lo}, {hi}] m contains no bins")))
}

/// Arithmetic mean of the first `count` values.
pub fn average_frames(values: &[f64], count: usize) -> Result<f64> {
    if count == 0 {
        return Err(Error::input("frame average needs a positive count"));
    }
    if values.len() < count {
        return Err(Error::input(format!(
            "frame average needs {count} frames, got {}",
            values.len()
        )));
    }
    Ok(values[..count].iter().sum::<f64>() / count as f64)
}

/// Range x angle linear power, range-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleMap {
    range_axis: Vec<f64>,
    angle_axis: Vec<NafAngle>,
    power: Vec<f64>,
}

fn strictly_increasing(v: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = v.collect();
    v.windows(2).all(|w| w[1] > w[0])
}

impl RangeAngleMap {
    pub fn new(range_axis: Vec<f64>, angle_axis: Vec<NafAngle>, power: Vec<f64>) -> Result<Self> {
        if power.len() != range_axis.len() * angle_axis.len() {
            return Err(Error::input("map size does not match its axes"));
        }
        if range_axis.is_empty() || angle_axis.is_empty() {
            return Err(Error::input("map axes must be non-empty"));
        }
        if !strictly_increasing(range_axis.iter().copied())
            || !strictly_increasing(angle_axis.iter().map(|a| a.0))
        {
            return Err(Error::input("map axes must be strictly increasing"));
        }
        if power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::input("map power must be non-negative"));
        }
        Ok(Self {
            range_axis,
            angle_axis,
            power,
        })
    }

    pub fn range_axis(&self) -> &[f64] {
        &self.range_axis
    }

    pub fn angle_axis(&self) -> &[NafAngle] {
        &self.angle_axis
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    pub fn n_angle(&self) -> usize {
        self.angle_axis.len()
    }

    pub fn get(&self, range: usize, angle: usize) -> f64 {
        self.power[range * self.n_angle() + angle]
    }

    pub fn row(&self, range: usize) -> &[f64] {
        let n = self.n_angle();
        &self.power[range * n..(range + 1) * n]
    }
}

/// Signed magnitude field over range x angle.
///
/// Interpolated responses can dip below zero; peak search needs those values
/// unclamped, while [`RangeAngleMap`] holds the clamped power for export.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMap {
    pub range_axis: Vec<f64>,
    pub angle_axis: Vec<NafAngle>,
    /// Range-major, `range_axis.len() * angle_axis.len()` values.
    pub values: Vec<f64>,
}

impl AmplitudeMap {
    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    pub fn n_angle(&self) -> usize {
        self.angle_axis.len()
    }

    pub fn get(&self, range: usize, angle: usize) -> f64 {
        self.values[range * self.n_angle() + angle]
    }

    pub fn row(&self, range: usize) -> &[f64] {
        let n = self.n_angle();
        &self.values[range * n..(range + 1) * n]
    }

    pub fn column(&self, angle: usize) -> Vec<f64> {
        (0..self.n_range()).map(|r| self.get(r, angle)).collect()
    }

    /// Keeps only the given angle columns.
    pub fn select_columns(&self, columns: &[usize]) -> AmplitudeMap {
        let mut values = Vec::with_capacity(self.n_range() * columns.len());
        for r in 0..self.n_range() {
            values.extend(columns.iter().map(|&c| self.get(r, c)));
        }
        AmplitudeMap {
            range_axis: self.range_axis.clone(),
            angle_axis: columns.iter().map(|&c| self.angle_axis[c]).collect(),
            values,
        }
    }

    pub fn from_power(map: &RangeAngleMap) -> Self {
        Self {
            range_axis: map.range_axis().to_vec(),
            angle_axis: map.angle_axis().to_vec(),
            values: map.power().iter().map(|p| p.sqrt()).collect(),
        }
    }

    /// Power map with negative values clamped to zero.
    pub fn to_power(&self) -> Result<RangeAngleMap> {
        RangeAngleMap::new(
            self.range_axis.clone(),
            self.angle_axis.clone(),
            self.values.iter().map(|v| v.max(0.0).powi(2)).collect(),
        )
    }
}
