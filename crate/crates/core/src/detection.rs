//! CA-CFAR along range, rear-wall gating and resolution-gated peak search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NafAngle;
use crate::ofdm::{AmplitudeMap, RangeAngleMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarConfig {
    pub p_fa: f64,
    /// Training cells on each side of the cell under test.
    pub n_training: usize,
    /// Guard cells on each side of the cell under test. The default of 5
    /// range bins spans two native range resolution cells at the default
    /// zero-padding.
    pub n_guard: usize,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            p_fa: 1e-6,
            n_training: 8,
            n_guard: 5,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::config(format!("CFAR p_fa {} outside (0, 1)", self.p_fa)));
        }
        if self.n_training == 0 {
            return Err(Error::config("CFAR needs at least one training cell per side"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub naf: NafAngle,
    pub range_m: f64,
    pub power: f64,
}

/// CA-CFAR scaling `N (P_fa^(-1/N) - 1)` for `N` averaged training cells.
pub fn cfar_alpha(n_cells: usize, p_fa: f64) -> f64 {
    let n = n_cells as f64;
    n * (p_fa.powf(-1.0 / n) - 1.0)
}

/// Cell-averaging CFAR over a power profile.
///
/// Near the ends the training window is clipped to the cells that exist and
/// the scaling is recomputed for the reduced cell count.
pub fn ca_cfar(profile: &[f64], config: &CfarConfig) -> Result<Vec<bool>> {
    config.validate()?;
    let (t, g) = (config.n_training, config.n_guard);
    if profile.len() <= 2 * (t + g) {
        return Err(Error::input(format!(
            "profile of {} cells too short for {t} training and {g} guard cells per side",
            profile.len()
        )));
    }
    let n = profile.len() as isize;
    let (t, g) = (t as isize, g as isize);
    let mut mask = Vec::with_capacity(profile.len());
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in (i - g - t..i - g).chain(i + g + 1..=i + g + t) {
            if (0..n).contains(&j) {
                sum += profile[j as usize];
                count += 1;
            }
        }
        let detected = count > 0 && {
            let mean = sum / count as f64;
            profile[i as usize] > cfar_alpha(count, config.p_fa) * mean
        };
        mask.push(detected);
    }
    Ok(mask)
}

fn kept_rows(range_axis: &[f64], exclude: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = exclude;
    let keep: Vec<usize> = range_axis
        .iter()
        .enumerate()
        .filter(|(_, r)| lo > hi || **r < lo || **r > hi)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::input(format!(
            "range exclusion [{lo}, {hi}] m removes the whole axis"
        )));
    }
    Ok(keep)
}

/// Removes the range rows inside `[min_m, max_m]`. An interval with
/// `min_m > max_m` is empty and leaves the map unchanged.
pub fn gate_range(map: &RangeAngleMap, exclude: (f64, f64)) -> Result<RangeAngleMap> {
    let keep = kept_rows(map.range_axis(), exclude)?;
    let mut power = Vec::with_capacity(keep.len() * map.n_angle());
    for &r in &keep {
        power.extend_from_slice(map.row(r));
    }
    RangeAngleMap::new(
        keep.iter().map(|&r| map.range_axis()[r]).collect(),
        map.angle_axis().to_vec(),
        power,
    )
}

/// [`gate_range`] for signed amplitude fields.
pub fn gate_amplitude(map: &AmplitudeMap, exclude: (f64, f64)) -> Result<AmplitudeMap> {
    let keep = kept_rows(&map.range_axis, exclude)?;
    let mut values = Vec::with_capacity(keep.len() * map.n_angle());
    for &r in &keep {
        values.extend_from_slice(map.row(r));
    }
    Ok(AmplitudeMap {
        range_axis: keep.iter().map(|&r| map.range_axis[r]).collect(),
        angle_axis: map.angle_axis.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSearch {
    /// Half-width of the NAF interval cleared around each accepted peak.
    pub resolution: f64,
    pub max_peaks: usize,
    /// Three-point parabolic sub-bin refinement.
    pub refine: bool,
}

const EXCLUSION_TOL: f64 = 1e-12;

fn is_local_max(v: &[f64], i: usize) -> bool {
    let left = i == 0 || v[i] > v[i - 1];
    let right = i + 1 == v.len() || v[i] >= v[i + 1];
    left && right
}

/// Vertex offset of the parabola through three samples, in bins, clamped to
/// half a bin.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Iterative peak search on an angular spectrum.
///
/// Candidates are local maxima with positive value whose `eligible` flag is
/// set. The strongest remaining candidate is accepted, every candidate within
/// `resolution` of it is discarded, and the search repeats until `max_peaks`
/// peaks are found or no candidates remain. `power` of each peak is the
/// spectrum value at its bin, so the caller decides whether the spectrum
/// holds power or amplitude.
pub fn extract_peaks(
    spectrum: &[f64],
    axis: &[NafAngle],
    eligible: &[bool],
    range_m: f64,
    search: &PeakSearch,
) -> Result<Vec<PeakEstimate>> {
    if spectrum.len() != axis.len() || spectrum.len() != eligible.len() {
        return Err(Error::input("spectrum, axis and eligibility lengths differ"));
    }
    if !(search.resolution > 0.0) {
        return Err(Error::input("peak search resolution must be positive"));
    }
    let mut open: Vec<bool> = (0..spectrum.len())
        .map(|i| eligible[i] && spectrum[i] > 0.0 && is_local_max(spectrum, i))
        .collect();
    let mut peaks: Vec<PeakEstimate> = Vec::new();
    while peaks.len() < search.max_peaks {
        let mut best: Option<usize> = None;
        for i in 0..spectrum.len() {
            if open[i] && best.is_none_or(|b| spectrum[i] > spectrum[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        let center = axis[i].0;
        for (j, o) in open.iter_mut().enumerate() {
            if (axis[j].0 - center).abs() <= search.resolution + EXCLUSION_TOL {
                *o = false;
            }
        }
        let mut naf = center;
        if search.refine && i > 0 && i + 1 < spectrum.len() {
            let delta = parabolic_offset(spectrum[i - 1], spectrum[i], spectrum[i + 1]);
            let step = if delta < 0.0 {
                center - axis[i - 1].0
            } else {
                axis[i + 1].0 - center
            };
            let refined = center + delta * step;
            if peaks.iter().all(|p| (p.naf.0 - refined).abs() >= search.resolution) {
                naf = refined;
            }
        }
        peaks.push(PeakEstimate {
            naf: NafAngle(naf),
            range_m,
            power: spectrum[i],
        });
    }
    Ok(peaks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub cfar: CfarConfig,
    /// Rear-wall range exclusion in meters.
    pub exclude_m: (f64, f64),
    pub search: PeakSearch,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            cfar: CfarConfig::default(),
            exclude_m: (21.0, 25.0),
            search: PeakSearch {
                resolution: 1.0 / 15.0,
                max_peaks: 2,
                refine: true,
            },
        }
    }
}

impl Default for PeakSearch {
    fn default() -> Self {
        DetectionConfig::default().search
    }
}

/// Result of the detection chain on one range-angle field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub peaks: Vec<PeakEstimate>,
    /// Index of the selected row in the gated field.
    pub range_index: usize,
    pub range_m: f64,
}

/// Row of the gated field holding the strongest cell (first on ties).
pub fn strongest_row(field: &AmplitudeMap) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for r in 0..field.n_range() {
        for v in field.row(r) {
            let p = v.max(0.0).powi(2);
            if p > best.1 {
                best = (r, p);
            }
        }
    }
    best.0
}

/// Gate, CFAR along range for every angle column, select the strongest
/// remaining range row and extract peaks from its angular spectrum.
///
/// The field holds signed amplitudes; CFAR runs on clamped power and the
/// returned peak powers are squared amplitudes.
pub fn detect_targets(field: &AmplitudeMap, config: &DetectionConfig) -> Result<Detection> {
    let gated = gate_amplitude(field, config.exclude_m)?;
    let r_star = strongest_row(&gated);
    let mut eligible = Vec::with_capacity(gated.n_angle());
    for a in 0..gated.n_angle() {
        let column: Vec<f64> = gated.column(a).iter().map(|v| v.max(0.0).powi(2)).collect();
        eligible.push(ca_cfar(&column, &config.cfar)?[r_star]);
    }
    let range_m = gated.range_axis[r_star];
    let mut peaks = extract_peaks(gated.row(r_star), &gated.angle_axis, &eligible, range_m, &config.search)?;
    for p in &mut peaks {
        p.power *= p.power;
    }
    Ok(Detection {
        peaks,
        range_index: r_star,
        range_m,
    })
}
