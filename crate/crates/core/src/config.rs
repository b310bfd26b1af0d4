//! TOML run configuration. Every table and key is optional.
//!
//! ```toml
//! [array]
//! n_tx = 8
//! n_rx = 8
//!
//! [scene]
//! snr_db = 25.0
//!
//! [eval]
//! master_seed = 7
//! n_seeds = 10
//! scenarios = ["wall-far", "wall-mid"]
//! ```

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::beam::AtomModel;
use crate::detection::{CfarConfig, DetectionConfig, PeakSearch};
use crate::error::{Error, Result};
use crate::geometry::{naf_resolution, ArrayGeometry, NafAngle};
use crate::ofdm::{CoherenceMode, RadioConfig};
use crate::omp::OmpConfig;
use crate::sampling::SweepPlan;

/// Environment variable that overrides `eval.master_seed`.
pub const SEED_ENV: &str = "BEAMSWEEP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_wavelengths: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            spacing_wavelengths: 0.5,
        }
    }
}

impl ArrayConfig {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::uniform(self.n_tx, self.n_rx, self.spacing_wavelengths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Mechanical sweep limit in degrees either side of boresight.
    pub limit_deg: f64,
    pub oversampling: usize,
    /// Frames averaged per beam for the method comparison.
    pub dwell_frames: usize,
    /// Single-frame sweeps used for the ground-truth median.
    pub ground_truth_frames: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            limit_deg: 33.0,
            oversampling: 10,
            dwell_frames: 6,
            ground_truth_frames: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RearWallConfig {
    pub enabled: bool,
    pub range_m: f64,
    /// Total power of the wall relative to the octahedral reflector.
    pub amplitude_db: f64,
    /// Angular width of the wall in NAF, centered on boresight.
    pub extent_naf: f64,
    pub n_scatterers: usize,
}

impl Default for RearWallConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            range_m: 24.0,
            amplitude_db: 20.0,
            extent_naf: 0.5,
            n_scatterers: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub range_m: f64,
    pub elevation_deg: f64,
    pub octahedral_db: f64,
    pub wall_db: f64,
    /// Per-frame SNR of a 0 dB reflector at beam peak in the collapsed value.
    pub snr_db: f64,
    /// NAF of the midpoint between the two targets.
    pub center_naf: f64,
    pub mode: CoherenceMode,
    pub rear_wall: RearWallConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            range_m: 18.0,
            elevation_deg: -3.9,
            octahedral_db: 0.0,
            wall_db: 15.0,
            snr_db: 20.0,
            center_naf: 0.0,
            mode: CoherenceMode::PocFaithful,
            rear_wall: RearWallConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpSettings {
    pub k_max: usize,
    pub epsilon: f64,
    pub atom_model: AtomModel,
    /// Candidate grid spacing is `1 / candidate_step_inv` NAF within the sweep limit.
    pub candidate_step_inv: usize,
}

impl Default for OmpSettings {
    fn default() -> Self {
        Self {
            k_max: 5,
            epsilon: 0.05,
            atom_model: AtomModel::Matched,
            candidate_step_inv: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    pub exclude_m: [f64; 2],
    pub max_peaks: usize,
    pub refine: bool,
    /// Peak exclusion half-width; defaults to the array's NAF resolution.
    pub resolution: Option<f64>,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self {
            exclude_m: [21.0, 25.0],
            max_peaks: 2,
            refine: true,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oversampled,
    Dft,
    Spline,
    Omp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Oversampled, Method::Dft, Method::Spline, Method::Omp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oversampled => "oversampled",
            Method::Dft => "dft",
            Method::Spline => "spline",
            Method::Omp => "omp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub master_seed: u64,
    pub n_seeds: usize,
    /// Scenario names to run; empty runs the whole catalog.
    pub scenarios: Vec<String>,
    pub methods: Vec<Method>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            n_seeds: 20,
            scenarios: Vec::new(),
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub radio: RadioConfig,
    pub array: ArrayConfig,
    pub sweep: SweepConfig,
    pub scene: SceneConfig,
    pub omp: OmpSettings,
    pub cfar: CfarConfig,
    pub detection: DetectionSettings,
    pub eval: EvalSettings,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    /// Applies `BEAMSWEEP_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.eval.master_seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        let geom = self.array.geometry()?;
        if self.array.n_tx != self.array.n_rx {
            return Err(Error::config("beam sweeps need equal TX and RX element counts"));
        }
        if !(self.sweep.limit_deg > 0.0 && self.sweep.limit_deg < 90.0) {
            return Err(Error::config("sweep.limit_deg must lie in (0, 90)"));
        }
        if self.sweep.oversampling == 0 || self.sweep.dwell_frames == 0 || self.sweep.ground_truth_frames == 0 {
            return Err(Error::config("sweep counts must be positive"));
        }
        if self.sweep.dwell_frames > self.sweep.ground_truth_frames {
            return Err(Error::config("sweep.dwell_frames cannot exceed sweep.ground_truth_frames"));
        }
        if !(self.scene.range_m > 0.0 && self.scene.range_m < self.radio.max_range_m) {
            return Err(Error::config("scene.range_m must lie inside the range axis"));
        }
        if !self.scene.snr_db.is_finite() {
            return Err(Error::config("scene.snr_db must be finite"));
        }
        let wall = &self.scene.rear_wall;
        if wall.enabled && (wall.n_scatterers == 0 || !(wall.range_m > 0.0) || wall.extent_naf < 0.0) {
            return Err(Error::config("rear wall needs scatterers, a positive range and a non-negative extent"));
        }
        self.omp_config().validate()?;
        if self.omp.candidate_step_inv == 0 {
            return Err(Error::config("omp.candidate_step_inv must be positive"));
        }
        self.cfar.validate()?;
        let det = self.detection_config(&geom)?;
        if det.search.max_peaks == 0 {
            return Err(Error::config("detection.max_peaks must be positive"));
        }
        if !(det.search.resolution > 0.0) {
            return Err(Error::config("detection.resolution must be positive"));
        }
        if self.eval.n_seeds == 0 {
            return Err(Error::config("eval.n_seeds must be positive"));
        }
        if self.eval.methods.is_empty() {
            return Err(Error::config("eval.methods must not be empty"));
        }
        Ok(())
    }

    /// Sweep limit expressed in NAF.
    pub fn naf_limit(&self) -> f64 {
        self.array.spacing_wavelengths * self.sweep.limit_deg.to_radians().sin()
    }

    pub fn minimal_plan(&self) -> Result<SweepPlan> {
        SweepPlan::minimal(
            self.array.n_tx,
            self.naf_limit(),
            self.sweep.dwell_frames,
            self.radio.frame_duration_s,
        )
    }

    pub fn oversampled_plan(&self) -> Result<SweepPlan> {
        SweepPlan::oversampled(
            self.array.n_tx,
            self.naf_limit(),
            self.sweep.oversampling,
            self.sweep.dwell_frames,
            self.radio.frame_duration_s,
        )
    }

    pub fn omp_config(&self) -> OmpConfig {
        OmpConfig {
            k_max: self.omp.k_max,
            epsilon: self.omp.epsilon,
        }
    }

    pub fn omp_candidates(&self) -> Vec<NafAngle> {
        let step = self.omp.candidate_step_inv;
        let kmax = (self.naf_limit() * step as f64 + 1e-9).floor() as i64;
        (-kmax..=kmax).map(|k| NafAngle(k as f64 / step as f64)).collect()
    }

    pub fn detection_config(&self, geom: &ArrayGeometry) -> Result<DetectionConfig> {
        let resolution = match self.detection.resolution {
            Some(r) => r,
            None => naf_resolution(geom.n_tx())?,
        };
        Ok(DetectionConfig {
            cfar: self.cfar.clone(),
            exclude_m: (self.detection.exclude_m[0], self.detection.exclude_m[1]),
            search: PeakSearch {
                resolution,
                max_peaks: self.detection.max_peaks,
                refine: self.detection.refine,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.minimal_plan().unwrap().len(), 9);
        assert_eq!(cfg.oversampled_plan().unwrap().len(), 81);
        assert_eq!(cfg.omp_candidates().len(), 81);
        let det = cfg.detection_config(&cfg.array.geometry().unwrap()).unwrap();
        assert_eq!(det.search.resolution, 1.0 / 15.0);
        assert_eq!(det.cfar.n_training, 8);
    }

    #[test]
    fn partial_toml_overrides() {
        let cfg = Config::from_toml_str(
            r#"
            [scene]
            snr_db = 30.0
            mode = "ideal"
            [omp]
            atom_model = "flat-kernel"
            [eval]
            n_seeds = 3
            methods = ["dft", "omp"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scene.snr_db, 30.0);
        assert_eq!(cfg.scene.mode, CoherenceMode::Ideal);
        assert_eq!(cfg.omp.atom_model, AtomModel::FlatKernel);
        assert_eq!(cfg.eval.methods, vec![Method::Dft, Method::Omp]);
        assert_eq!(cfg.array.n_tx, 8);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(Config::from_toml_str("[scene]\nbogus = 1\n"), Err(Error::Toml(_))));
        assert!(Config::from_toml_str("[array]\nn_tx = 8\nn_rx = 4\n").is_err());
        assert!(Config::from_toml_str("[omp]\nepsilon = 1.5\n").is_err());
        assert!(Config::from_toml_str("[cfar]\np_fa = 0.0\n").is_err());
        assert!(Config::from_toml_str("[eval]\nn_seeds = 0\n").is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("music".parse::<Method>().is_err());
    }
}
