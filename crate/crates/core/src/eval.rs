//! Scenario catalog, end-to-end acquisition and reconstruction pipeline,
//! median-of-frames ground truth and NAF RMSE scoring.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::beam::{build_dictionary, Dictionary};
use crate::config::{Config, Method, SceneConfig};
use crate::detection::{
    detect_targets, extract_peaks, gate_amplitude, strongest_row, DetectionConfig, PeakEstimate,
};
use crate::error::{Error, Result};
use crate::geometry::NafAngle;
use crate::ofdm::{AmplitudeMap, RangeAngleMap, RangeProcessor, Scene, SceneSynth, SensingSetup};
use crate::omp::{omp, sparse_spectrum, OmpConfig, SparseEstimate};
use crate::rng;
use crate::sampling::{dft_interpolate, spline_interpolate, AngularSweep, SweepPlan, SweepValues};
use crate::beam::Scatterer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectorKind {
    Octahedral,
    Wall,
}

impl ReflectorKind {
    pub fn name(self) -> &'static str {
        match self {
            ReflectorKind::Octahedral => "octahedral",
            ReflectorKind::Wall => "wall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacingClass {
    ResolutionLimited,
    Near,
    Mid,
    Far,
}

impl SpacingClass {
    pub const ALL: [SpacingClass; 4] = [
        SpacingClass::ResolutionLimited,
        SpacingClass::Near,
        SpacingClass::Mid,
        SpacingClass::Far,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpacingClass::ResolutionLimited => "resolution-limited",
            SpacingClass::Near => "near",
            SpacingClass::Mid => "mid",
            SpacingClass::Far => "far",
        }
    }

    /// Lateral target spacing in meters.
    #[allow(clippy::approx_constant)]
    pub fn spacing_m(self) -> f64 {
        match self {
            SpacingClass::ResolutionLimited => 3.14,
            SpacingClass::Near => 4.70,
            SpacingClass::Mid => 6.25,
            SpacingClass::Far => 7.79,
        }
    }

    /// Target separation in NAF.
    pub fn separation_naf(self) -> f64 {
        match self {
            SpacingClass::ResolutionLimited => 0.084,
            SpacingClass::Near => 0.126,
            SpacingClass::Mid => 0.168,
            SpacingClass::Far => 0.209,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearWall {
    pub range_m: f64,
    pub amplitude_db: f64,
    pub extent_naf: f64,
    pub n_scatterers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub reflector_kind: ReflectorKind,
    pub spacing: SpacingClass,
    pub spacing_m: f64,
    pub separation_naf: f64,
    pub range_m: f64,
    /// Left (T1) and right (T2) target.
    pub target_nafs: [NafAngle; 2],
    pub amplitude_db: f64,
    pub rear_wall: Option<RearWall>,
    pub elevation_deg: f64,
}

impl Scenario {
    /// Builds one scene realization. Every target and wall element gets an
    /// independent uniform phase.
    pub fn scene<R: Rng>(&self, rng: &mut R) -> Result<Scene> {
        let mut phase = || Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let amp = db_to_amplitude(self.amplitude_db);
        let mut scatterers = Vec::new();
        for t in self.target_nafs {
            scatterers.push(Scatterer::new(t.0, self.range_m, amp * phase())?);
        }
        if let Some(wall) = &self.rear_wall {
            let n = wall.n_scatterers;
            let each = db_to_amplitude(wall.amplitude_db - 10.0 * (n as f64).log10());
            for i in 0..n {
                let naf = if n == 1 {
                    0.0
                } else {
                    -wall.extent_naf / 2.0 + wall.extent_naf * i as f64 / (n - 1) as f64
                };
                scatterers.push(Scatterer::new(naf, wall.range_m, each * phase())?);
            }
        }
        Ok(Scene { scatterers })
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// The two reflector kinds at the four target spacings.
pub fn scenario_catalog(scene: &SceneConfig) -> Vec<Scenario> {
    let mut out = Vec::with_capacity(8);
    for kind in [ReflectorKind::Octahedral, ReflectorKind::Wall] {
        for spacing in SpacingClass::ALL {
            let half = spacing.separation_naf() / 2.0;
            let wall = &scene.rear_wall;
            out.push(Scenario {
                name: format!("{}-{}", kind.name(), spacing.name()),
                reflector_kind: kind,
                spacing,
                spacing_m: spacing.spacing_m(),
                separation_naf: spacing.separation_naf(),
                range_m: scene.range_m,
                target_nafs: [NafAngle(scene.center_naf - half), NafAngle(scene.center_naf + half)],
                amplitude_db: match kind {
                    ReflectorKind::Octahedral => scene.octahedral_db,
                    ReflectorKind::Wall => scene.wall_db,
                },
                rear_wall: wall.enabled.then_some(RearWall {
                    range_m: wall.range_m,
                    amplitude_db: wall.amplitude_db,
                    extent_naf: wall.extent_naf,
                    n_scatterers: wall.n_scatterers,
                }),
                elevation_deg: scene.elevation_deg,
            });
        }
    }
    out
}

/// Catalog filtered by name; an empty filter keeps everything.
pub fn select_scenarios(cfg: &Config) -> Result<Vec<Scenario>> {
    let all = scenario_catalog(&cfg.scene);
    if cfg.eval.scenarios.is_empty() {
        return Ok(all);
    }
    cfg.eval
        .scenarios
        .iter()
        .map(|name| {
            all.iter()
                .find(|s| &s.name == name)
                .cloned()
                .ok_or_else(|| Error::config(format!("unknown scenario '{name}'")))
        })
        .collect()
}

/// Per-entry CSI noise power giving `snr_db` for a 0 dB reflector at beam
/// peak in one frame's zero-Doppler range bin.
pub fn noise_power_for_snr(n_tx: usize, n_rx: usize, n_subcarriers: usize, n_symbols: usize, snr_db: f64) -> f64 {
    let gain = (n_tx * n_rx) as f64;
    gain * gain * (n_subcarriers * n_symbols) as f64 / 10f64.powf(snr_db / 10.0)
}

/// Range-profile magnitudes for every frame and beam of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub n_frames: usize,
    pub beam_grid: Vec<NafAngle>,
    pub range_axis: Vec<f64>,
    /// Indexed `(frame * n_beams + beam) * n_range + range`.
    pub magnitudes: Vec<f64>,
}

impl Acquisition {
    pub fn n_beams(&self) -> usize {
        self.beam_grid.len()
    }

    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    fn profile(&self, frame: usize, beam: usize) -> &[f64] {
        let n = self.n_range();
        let start = (frame * self.n_beams() + beam) * n;
        &self.magnitudes[start..start + n]
    }

    /// Range x beam field averaged over the given frames.
    pub fn field(&self, frames: std::ops::Range<usize>) -> Result<AmplitudeMap> {
        if frames.is_empty() || frames.end > self.n_frames {
            return Err(Error::input(format!(
                "frames {frames:?} outside the {} acquired",
                self.n_frames
            )));
        }
        let count = frames.len() as f64;
        let (nb, nr) = (self.n_beams(), self.n_range());
        let mut values = vec![0.0; nr * nb];
        for f in frames {
            for b in 0..nb {
                for (r, v) in self.profile(f, b).iter().enumerate() {
                    values[r * nb + b] += v;
                }
            }
        }
        values.iter_mut().for_each(|v| *v /= count);
        Ok(AmplitudeMap {
            range_axis: self.range_axis.clone(),
            angle_axis: self.beam_grid.clone(),
            values,
        })
    }
}

/// Estimates of one method on one field, plus the dense map it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub method: Method,
    pub peaks: Vec<PeakEstimate>,
    pub field: AmplitudeMap,
    pub sparse: Option<SparseEstimate>,
}

/// Everything needed to turn scenes into per-method estimates.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: Config,
    pub setup: SensingSetup,
    pub processor: RangeProcessor,
    pub oversampled: SweepPlan,
    pub minimal: SweepPlan,
    /// Positions of the minimal beams inside the oversampled grid.
    pub minimal_columns: Vec<usize>,
    pub dictionary: Dictionary,
    pub detection: DetectionConfig,
    pub omp: OmpConfig,
}

impl Pipeline {
    pub fn new(config: &Config) -> Result<Self> {
        config.validate()?;
        let geometry = config.array.geometry()?;
        let setup = SensingSetup::new(config.radio.clone(), geometry.clone())?;
        let oversampled = config.oversampled_plan()?;
        let minimal = config.minimal_plan()?;
        let minimal_columns = oversampled.minimal_indices();
        if minimal_columns.len() != minimal.len() {
            return Err(Error::contract("minimal beams are not a subset of the oversampled sweep"));
        }
        let dictionary = build_dictionary(
            &geometry,
            &setup.weights,
            &minimal.beam_grid,
            &config.omp_candidates(),
            config.omp.atom_model,
        )?;
        let detection = config.detection_config(&geometry)?;
        Ok(Self {
            processor: RangeProcessor::new(&config.radio),
            config: config.clone(),
            setup,
            oversampled,
            minimal,
            minimal_columns,
            dictionary,
            detection,
            omp: config.omp_config(),
        })
    }

    pub fn noise_power(&self) -> f64 {
        let r = &self.config.radio;
        noise_power_for_snr(
            self.setup.geometry.n_tx(),
            self.setup.geometry.n_rx(),
            r.n_subcarriers,
            r.n_symbols_per_frame,
            self.config.scene.snr_db,
        )
    }

    /// Synthesizes `n_frames` oversampled sweeps. The frame of beam `b` at
    /// index `f` draws from the stream `(master, coords.., b, f)`.
    pub fn acquire(&self, scene: &Scene, master: u64, coords: &[u64], n_frames: usize) -> Result<Acquisition> {
        let synth = SceneSynth::new(&self.setup, scene);
        let noise = self.noise_power();
        let n_range = self.config.radio.n_range_bins;
        let n_beams = self.oversampled.len();
        let mode = self.config.scene.mode;
        let mut magnitudes = Vec::with_capacity(n_frames * n_beams * n_range);
        for f in 0..n_frames {
            for (b, steer) in self.oversampled.beam_grid.iter().enumerate() {
                let mut c = coords.to_vec();
                c.extend([b as u64, f as u64]);
                let seed = rng::derive_seed(master, &c);
                let summed = synth.symbol_sum(*steer, noise, seed, mode)?;
                let power = self.processor.profile_from_symbol_sum(&summed, n_range)?;
                magnitudes.extend(power.iter().map(|p| p.sqrt()));
            }
        }
        Ok(Acquisition {
            n_frames,
            beam_grid: self.oversampled.beam_grid.clone(),
            range_axis: self.config.radio.range_axis(),
            magnitudes,
        })
    }

    fn interpolate(&self, minimal: &AmplitudeMap, method: Method) -> Result<AmplitudeMap> {
        let target = &self.oversampled.beam_grid;
        let mut values = Vec::with_capacity(minimal.n_range() * target.len());
        for r in 0..minimal.n_range() {
            let sweep = AngularSweep::new(self.minimal.clone(), SweepValues::Magnitude(minimal.row(r).to_vec()))?;
            let row = match method {
                Method::Dft => match dft_interpolate(&sweep, target)? {
                    SweepValues::Magnitude(v) => v,
                    SweepValues::Complex(_) => return Err(Error::contract("magnitude sweep interpolated to complex")),
                },
                _ => spline_interpolate(&sweep, target)?,
            };
            values.extend(row);
        }
        Ok(AmplitudeMap {
            range_axis: minimal.range_axis.clone(),
            angle_axis: target.clone(),
            values,
        })
    }

    fn run_omp(&self, minimal: &AmplitudeMap) -> Result<MethodOutput> {
        let gated = gate_amplitude(minimal, self.detection.exclude_m)?;
        let r_star = strongest_row(&gated);
        let range_m = gated.range_axis[r_star];
        let y: Vec<f64> = gated.row(r_star).iter().map(|v| v.max(0.0)).collect();
        let est = omp(&y, &self.dictionary, &self.omp)?;
        let spectrum = sparse_spectrum(&est, self.dictionary.n_atoms());
        let eligible: Vec<bool> = spectrum.iter().map(|c| *c > 0.0).collect();
        let search = crate::detection::PeakSearch {
            refine: false,
            ..self.detection.search.clone()
        };
        let mut peaks = extract_peaks(&spectrum, &self.dictionary.grid, &eligible, range_m, &search)?;
        for p in &mut peaks {
            p.power *= p.power;
        }
        // Sparse periodogram: only the selected range row is populated.
        let n_atoms = self.dictionary.n_atoms();
        let mut values = vec![0.0; minimal.n_range() * n_atoms];
        if let Some(row) = minimal.range_axis.iter().position(|r| *r == range_m) {
            values[row * n_atoms..(row + 1) * n_atoms].copy_from_slice(&spectrum);
        }
        Ok(MethodOutput {
            method: Method::Omp,
            peaks,
            field: AmplitudeMap {
                range_axis: minimal.range_axis.clone(),
                angle_axis: self.dictionary.grid.clone(),
                values,
            },
            sparse: Some(est),
        })
    }

    /// Runs one method on a frame-averaged oversampled field. The minimal
    /// methods only read the minimal columns.
    pub fn estimate(&self, field: &AmplitudeMap, method: Method) -> Result<MethodOutput> {
        if !same_grid(&field.angle_axis, &self.oversampled.beam_grid) {
            return Err(Error::input("field is not on the oversampled beam grid"));
        }
        match method {
            Method::Oversampled => Ok(MethodOutput {
                method,
                peaks: detect_targets(field, &self.detection)
                    .map_err(|e| e.context(format!("method {method}")))?
                    .peaks,
                field: field.clone(),
                sparse: None,
            }),
            _ => self.estimate_minimal(&field.select_columns(&self.minimal_columns), method),
        }
    }

    /// Runs a reconstruction method on a field sampled on the minimal grid only.
    pub fn estimate_minimal(&self, minimal: &AmplitudeMap, method: Method) -> Result<MethodOutput> {
        let ctx = |e: Error| e.context(format!("method {method}"));
        if !same_grid(&minimal.angle_axis, &self.minimal.beam_grid) {
            return Err(ctx(Error::input("field is not on the minimal beam grid")));
        }
        match method {
            Method::Oversampled => Err(ctx(Error::input("the oversampled method needs an oversampled field"))),
            Method::Omp => self.run_omp(minimal).map_err(ctx),
            Method::Dft | Method::Spline => {
                let dense = self.interpolate(minimal, method).map_err(ctx)?;
                Ok(MethodOutput {
                    method,
                    peaks: detect_targets(&dense, &self.detection).map_err(ctx)?.peaks,
                    field: dense,
                    sparse: None,
                })
            }
        }
    }
}

fn same_grid(a: &[NafAngle], b: &[NafAngle]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x.0 - y.0).abs() < 1e-9)
}

/// Median of a non-empty sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub nafs: [f64; 2],
    /// Frames that produced an estimate for each target.
    pub n_estimates: [usize; 2],
    /// Target got no estimate in any frame; its nominal NAF was used.
    pub fallback: [bool; 2],
}

/// Assigns each frame's peaks to the nearest nominal target (keeping the
/// closest peak per target) and takes the per-target median over frames.
pub fn estimate_ground_truth(frame_peaks: &[Vec<PeakEstimate>], nominal: [NafAngle; 2]) -> GroundTruth {
    let mut per_target: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for peaks in frame_peaks {
        let mut best: [Option<f64>; 2] = [None, None];
        for p in peaks {
            let d: Vec<f64> = nominal.iter().map(|t| (p.naf.0 - t.0).abs()).collect();
            let t = if d[1] < d[0] { 1 } else { 0 };
            if best[t].is_none_or(|b| (p.naf.0 - nominal[t].0).abs() < (b - nominal[t].0).abs()) {
                best[t] = Some(p.naf.0);
            }
        }
        for t in 0..2 {
            if let Some(v) = best[t] {
                per_target[t].push(v);
            }
        }
    }
    let mut gt = GroundTruth {
        nafs: [nominal[0].0, nominal[1].0],
        n_estimates: [per_target[0].len(), per_target[1].len()],
        fallback: [false, false],
    };
    for (t, values) in per_target.iter().enumerate() {
        match median(values) {
            Some(m) => gt.nafs[t] = m,
            None => gt.fallback[t] = true,
        }
    }
    gt
}

/// Signed error of the estimate nearest to `truth`. Ties in distance resolve
/// to the negative error so the choice never depends on estimate order.
pub fn nearest_error(truth: f64, peaks: &[PeakEstimate]) -> Option<f64> {
    peaks
        .iter()
        .map(|p| p.naf.0 - truth)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
}

/// Lateral offset at `range_m` corresponding to a NAF difference seen from
/// boresight: `range * asin(delta / spacing)`.
pub fn naf_to_cross_track_m(delta_naf: f64, range_m: f64, spacing_wavelengths: f64) -> f64 {
    range_m * (delta_naf / spacing_wavelengths).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodPeaks {
    pub method: Method,
    pub peaks: Vec<PeakEstimate>,
}

/// Ground truth and per-method estimates for one scenario and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub kind: ReflectorKind,
    pub seed_index: u64,
    pub ground_truth: GroundTruth,
    pub estimates: Vec<MethodPeaks>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub n_matched: usize,
    pub n_missed: usize,
    pub rmse: Option<f64>,
    pub mean_error: Option<f64>,
    pub error_variance: Option<f64>,
    /// Share of targets whose nearest estimate lies within the resolution.
    pub detection_rate: f64,
}

#[derive(Debug, Clone, Default)]
struct CellAccumulator {
    errors: Vec<f64>,
    missed: usize,
    detected: usize,
}

impl CellAccumulator {
    fn push(&mut self, error: Option<f64>, resolution: f64) {
        match error {
            Some(e) => {
                self.errors.push(e);
                if e.abs() <= resolution {
                    self.detected += 1;
                }
            }
            None => self.missed += 1,
        }
    }

    fn merge(&mut self, other: &CellAccumulator) {
        self.errors.extend_from_slice(&other.errors);
        self.missed += other.missed;
        self.detected += other.detected;
    }

    fn stats(&self) -> CellStats {
        let n = self.errors.len();
        let total = n + self.missed;
        let (rmse, mean, var) = if n == 0 {
            (None, None, None)
        } else {
            let nf = n as f64;
            let mean = self.errors.iter().sum::<f64>() / nf;
            let mse = self.errors.iter().map(|e| e * e).sum::<f64>() / nf;
            let var = self.errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / nf;
            (Some(mse.sqrt()), Some(mean), Some(var))
        };
        CellStats {
            n_matched: n,
            n_missed: self.missed,
            rmse,
            mean_error: mean,
            error_variance: var,
            detection_rate: if total == 0 {
                0.0
            } else {
                self.detected as f64 / total as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCell {
    pub method: Method,
    pub stats: CellStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// `Reflectors`, `Walls`, `Combined`, `Total`, or a scenario name.
    pub group: String,
    /// `T1`, `T2`, or `all`.
    pub target: String,
    pub cells: Vec<MethodCell>,
}

impl ReportRow {
    pub fn cell(&self, method: Method) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.method == method).map(|c| &c.stats)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    pub methods: Vec<Method>,
    pub n_runs: usize,
    pub resolution: f64,
    pub ground_truth_fallbacks: usize,
    pub rows: Vec<ReportRow>,
    pub scenarios: Vec<ReportRow>,
}

impl RmseReport {
    pub fn row(&self, group: &str, target: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.group == group && r.target == target)
    }

    pub fn scenario_row(&self, scenario: &str, target: &str) -> Option<&ReportRow> {
        self.scenarios.iter().find(|r| r.group == scenario && r.target == target)
    }
}

const TARGETS: [&str; 2] = ["T1", "T2"];

/// Pools nearest-estimate errors per reflector kind, target and method.
///
/// Combined and total rows are computed from the pooled raw errors.
pub fn score_rmse(records: &[RunRecord], methods: &[Method], resolution: f64) -> RmseReport {
    // acc[(group key, target)][method]
    let n_m = methods.len();
    let mut by_kind: [[Vec<CellAccumulator>; 2]; 2] = Default::default();
    for kind in &mut by_kind {
        for t in kind.iter_mut() {
            *t = vec![CellAccumulator::default(); n_m];
        }
    }
    let mut scenario_names: Vec<String> = Vec::new();
    let mut by_scenario: Vec<[Vec<CellAccumulator>; 2]> = Vec::new();
    let mut fallbacks = 0;
    for rec in records {
        let k = match rec.kind {
            ReflectorKind::Octahedral => 0,
            ReflectorKind::Wall => 1,
        };
        let s = match scenario_names.iter().position(|n| n == &rec.scenario) {
            Some(i) => i,
            None => {
                scenario_names.push(rec.scenario.clone());
                by_scenario.push([vec![CellAccumulator::default(); n_m], vec![CellAccumulator::default(); n_m]]);
                by_scenario.len() - 1
            }
        };
        fallbacks += rec.ground_truth.fallback.iter().filter(|f| **f).count();
        for (mi, m) in methods.iter().enumerate() {
            let peaks = rec
                .estimates
                .iter()
                .find(|e| e.method == *m)
                .map(|e| e.peaks.as_slice())
                .unwrap_or(&[]);
            for t in 0..2 {
                let err = nearest_error(rec.ground_truth.nafs[t], peaks);
                by_kind[k][t][mi].push(err, resolution);
                by_scenario[s][t][mi].push(err, resolution);
            }
        }
    }
    let cells = |accs: &[CellAccumulator]| -> Vec<MethodCell> {
        methods
            .iter()
            .zip(accs)
            .map(|(m, a)| MethodCell {
                method: *m,
                stats: a.stats(),
            })
            .collect()
    };
    let mut rows = Vec::new();
    for (k, group) in ["Reflectors", "Walls"].iter().enumerate() {
        for t in 0..2 {
            rows.push(ReportRow {
                group: group.to_string(),
                target: TARGETS[t].into(),
                cells: cells(&by_kind[k][t]),
            });
        }
    }
    let mut total = vec![CellAccumulator::default(); n_m];
    for t in 0..2 {
        let mut combined = vec![CellAccumulator::default(); n_m];
        for kind in &by_kind {
            for mi in 0..n_m {
                combined[mi].merge(&kind[t][mi]);
            }
        }
        for mi in 0..n_m {
            total[mi].merge(&combined[mi]);
        }
        rows.push(ReportRow {
            group: "Combined".into(),
            target: TARGETS[t].into(),
            cells: cells(&combined),
        });
    }
    rows.push(ReportRow {
        group: "Total".into(),
        target: "all".into(),
        cells: cells(&total),
    });
    let scenarios = scenario_names
        .iter()
        .zip(&by_scenario)
        .flat_map(|(name, accs)| {
            (0..2).map(move |t| ReportRow {
                group: name.clone(),
                target: TARGETS[t].into(),
                cells: cells(&accs[t]),
            })
        })
        .collect();
    RmseReport {
        methods: methods.to_vec(),
        n_runs: records.len(),
        resolution,
        ground_truth_fallbacks: fallbacks,
        rows,
        scenarios,
    }
}

/// One scenario and seed pushed through acquisition, ground truth and every method.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub outputs: Vec<MethodOutput>,
}

pub fn run_single(pipeline: &Pipeline, scenario: &Scenario, scenario_index: u64, seed_index: u64) -> Result<RunOutput> {
    let cfg = &pipeline.config;
    let master = cfg.eval.master_seed;
    let ctx = |e: Error| e.context(format!("scenario {} seed {seed_index}", scenario.name));
    let mut scene_rng = rng::stream(master, &[scenario_index, seed_index, u64::MAX]);
    let scene = scenario.scene(&mut scene_rng).map_err(ctx)?;
    let n_gt = cfg.sweep.ground_truth_frames;
    let acq = pipeline
        .acquire(&scene, master, &[scenario_index, seed_index], n_gt)
        .map_err(ctx)?;
    let mut frame_peaks = Vec::with_capacity(n_gt);
    for f in 0..n_gt {
        let field = acq.field(f..f + 1).map_err(ctx)?;
        frame_peaks.push(detect_targets(&field, &pipeline.detection).map_err(ctx)?.peaks);
    }
    let ground_truth = estimate_ground_truth(&frame_peaks, scenario.target_nafs);
    let averaged = acq.field(0..cfg.sweep.dwell_frames).map_err(ctx)?;
    let outputs = cfg
        .eval
        .methods
        .iter()
        .map(|m| pipeline.estimate(&averaged, *m).map_err(ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        record: RunRecord {
            scenario: scenario.name.clone(),
            kind: scenario.reflector_kind,
            seed_index,
            ground_truth,
            estimates: outputs
                .iter()
                .map(|o| MethodPeaks {
                    method: o.method,
                    peaks: o.peaks.clone(),
                })
                .collect(),
        },
        outputs,
    })
}

/// Per-method maps of the first seed plus the run records of every seed.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub scenario: Scenario,
    pub records: Vec<RunRecord>,
    pub maps: Vec<(Method, RangeAngleMap)>,
}

pub fn run_comparison(pipeline: &Pipeline, scenario: &Scenario, scenario_index: u64, seeds: &[u64]) -> Result<Comparison> {
    let runs: Vec<RunOutput> = seeds
        .par_iter()
        .map(|&s| run_single(pipeline, scenario, scenario_index, s))
        .collect::<Result<_>>()?;
    let maps = match runs.first() {
        Some(run) => run
            .outputs
            .iter()
            .map(|o| Ok((o.method, o.field.to_power()?)))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(Comparison {
        scenario: scenario.clone(),
        records: runs.into_iter().map(|r| r.record).collect(),
        maps,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: RmseReport,
    pub records: Vec<RunRecord>,
}

/// Runs the configured scenarios and seeds and scores every method.
///
/// Scenario indices refer to positions in the full catalog, so filtering
/// scenarios leaves the random streams of the others unchanged.
pub fn evaluate(cfg: &Config) -> Result<Evaluation> {
    let pipeline = Pipeline::new(cfg)?;
    let catalog = scenario_catalog(&cfg.scene);
    let selected = select_scenarios(cfg)?;
    let jobs: Vec<(u64, &Scenario, u64)> = selected
        .iter()
        .flat_map(|s| {
            let idx = catalog.iter().position(|c| c.name == s.name).unwrap_or(0) as u64;
            (0..cfg.eval.n_seeds as u64).map(move |seed| (idx, s, seed))
        })
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|(idx, s, seed)| run_single(&pipeline, s, *idx, *seed).map(|r| r.record))
        .collect::<Result<_>>()?;
    let report = score_rmse(&records, &cfg.eval.methods, pipeline.detection.search.resolution);
    Ok(Evaluation { report, records })
}

pub fn report_json(report: &RmseReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// Flat CSV of the table and per-scenario rows.
pub fn write_report_csv<W: Write>(report: &RmseReport, mut out: W) -> Result<()> {
    writeln!(
        out,
        "section,group,target,method,rmse,error_variance,mean_error,n_matched,n_missed,detection_rate"
    )?;
    for (section, rows) in [("table", &report.rows), ("scenario", &report.scenarios)] {
        for row in rows.iter() {
            for c in &row.cells {
                writeln!(
                    out,
                    "{section},{},{},{},{},{},{},{},{},{:.4}",
                    row.group,
                    row.target,
                    c.method,
                    fmt_opt(c.stats.rmse),
                    fmt_opt(c.stats.error_variance),
                    fmt_opt(c.stats.mean_error),
                    c.stats.n_matched,
                    c.stats.n_missed,
                    c.stats.detection_rate
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Peak list CSV: `scenario,method,frame_set,peak_index,naf,range_m,power_db`.
pub fn write_peaks_csv<W: Write>(records: &[RunRecord], frames: usize, mut out: W) -> Result<()> {
    writeln!(out, "scenario,method,frame_set,peak_index,naf,range_m,power_db")?;
    for rec in records {
        for est in &rec.estimates {
            for (i, p) in est.peaks.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},seed{}-avg{frames},{i},{:.6},{:.4},{:.3}",
                    rec.scenario,
                    est.method,
                    rec.seed_index,
                    p.naf.0,
                    p.range_m,
                    10.0 * p.power.log10()
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Human-readable table with one RMSE column per method.
pub fn format_table(report: &RmseReport) -> String {
    let mut s = format!("{:<32}{:<8}", "group", "target");
    for m in &report.methods {
        s += &format!("{:>14}", m.name());
    }
    s.push('\n');
    for row in report.rows.iter().chain(&report.scenarios) {
        s += &format!("{:<32}{:<8}", row.group, row.target);
        for c in &row.cells {
            s += &match c.stats.rmse {
                Some(r) => format!("{r:>14.5}"),
                None => format!("{:>14}", "-"),
            };
        }
        s.push('\n');
    }
    s
}
