//! Coherent monostatic beam response, the Dirichlet kernel and the OMP
//! dictionary built from modeled beam patterns.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, NafAngle};

/// Per-element beamforming coefficients applied on top of the steering phase.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingWeights {
    pub tx_weights: Vec<Complex64>,
    pub rx_weights: Vec<Complex64>,
}

impl BeamformingWeights {
    /// Constant coefficients, i.e. no windowing.
    pub fn uniform(geom: &ArrayGeometry) -> Self {
        Self {
            tx_weights: vec![Complex64::new(1.0, 0.0); geom.n_tx()],
            rx_weights: vec![Complex64::new(1.0, 0.0); geom.n_rx()],
        }
    }

    pub fn check(&self, geom: &ArrayGeometry) -> Result<()> {
        if self.tx_weights.len() != geom.n_tx() || self.rx_weights.len() != geom.n_rx() {
            return Err(Error::config(format!(
                "weights ({} tx, {} rx) do not match geometry ({} tx, {} rx)",
                self.tx_weights.len(),
                self.rx_weights.len(),
                geom.n_tx(),
                geom.n_rx()
            )));
        }
        Ok(())
    }
}

/// A point scatterer: angular position, range and lumped complex reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub naf: NafAngle,
    pub range_m: f64,
    pub amplitude: Complex64,
}

impl Scatterer {
    pub fn new(naf: f64, range_m: f64, amplitude: Complex64) -> Result<Self> {
        if !(range_m > 0.0) {
            return Err(Error::input(format!("scatterer range {range_m} m must be positive")));
        }
        Ok(Self {
            naf: NafAngle(naf),
            range_m,
            amplitude,
        })
    }

    /// Unit-amplitude scatterer, used for dictionary atoms and PSFs.
    pub fn unit(naf: f64) -> Self {
        Self {
            naf: NafAngle(naf),
            range_m: 1.0,
            amplitude: Complex64::new(1.0, 0.0),
        }
    }
}

fn array_factor(weights: &[Complex64], positions: &[[f64; 2]], lag: f64) -> Complex64 {
    weights
        .iter()
        .zip(positions)
        .map(|(w, p)| w * Complex64::from_polar(1.0, -2.0 * PI * lag * p[0]))
        .sum()
}

/// Beamformed monostatic response when steering to `steer`.
///
/// Each scatterer contributes `a * sum_n sum_m w_n w_m exp(-j 2 pi (steer - l_s)(p_n + p_m))`.
/// The double sum separates into a product of TX and RX array factors.
pub fn beamformed_response(
    geom: &ArrayGeometry,
    weights: &BeamformingWeights,
    scatterers: &[Scatterer],
    steer: NafAngle,
) -> Result<Complex64> {
    weights.check(geom)?;
    Ok(scatterers
        .iter()
        .map(|s| {
            let lag = steer.0 - s.naf.0;
            s.amplitude
                * array_factor(&weights.tx_weights, geom.tx_positions(), lag)
                * array_factor(&weights.rx_weights, geom.rx_positions(), lag)
        })
        .sum())
}

/// Normalized Dirichlet kernel `sin(pi M x) / (M sin(pi x))`.
///
/// Exact at the removable singularities (integer lags) and exactly zero at the
/// other multiples of `1 / order`.
pub fn dirichlet_kernel(lag: f64, order: usize) -> f64 {
    let m = order.max(1) as f64;
    let scaled = lag * m;
    let nearest = scaled.round();
    if (scaled - nearest).abs() < 1e-12 {
        let k = nearest as i64;
        if k.rem_euclid(order.max(1) as i64) == 0 {
            // Integer lag: (-1)^(lag (M - 1)).
            let l = k / order.max(1) as i64;
            return if (l * (order as i64 - 1)).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            };
        }
        return 0.0;
    }
    (PI * scaled).sin() / (m * (PI * lag).sin())
}

/// Sampled point spread function of the beamformed response.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    pub grid: Vec<NafAngle>,
    pub samples: Vec<Complex64>,
    pub coarray_order: usize,
}

/// Response to a unit scatterer at NAF zero, sampled at `grid`.
pub fn point_spread_function(
    geom: &ArrayGeometry,
    weights: &BeamformingWeights,
    grid: &[NafAngle],
) -> Result<Psf> {
    let unit = [Scatterer::unit(0.0)];
    let samples = grid
        .iter()
        .map(|&g| beamformed_response(geom, weights, &unit, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(Psf {
        grid: grid.to_vec(),
        samples,
        coarray_order: geom.coarray_order(),
    })
}

/// How dictionary atoms model the beam magnitude response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomModel {
    /// Same beam model as the simulated responses (coarray-tapered kernel).
    #[default]
    Matched,
    /// Flat Dirichlet kernel of the coarray order, deliberately mismatched.
    FlatKernel,
}

/// Column-normalized magnitude beam patterns, one atom per candidate direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// Rows index measured beams, columns index candidate directions.
    pub atoms: DMatrix<f64>,
    pub grid: Vec<NafAngle>,
}

impl Dictionary {
    pub fn n_beams(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Largest absolute inner product between distinct atoms.
    pub fn mutual_coherence(&self) -> f64 {
        let gram = self.atoms.transpose() * &self.atoms;
        let mut mu: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                if i != j {
                    mu = mu.max(gram[(i, j)].abs());
                }
            }
        }
        mu
    }
}

pub fn build_dictionary(
    geom: &ArrayGeometry,
    weights: &BeamformingWeights,
    beam_grid: &[NafAngle],
    candidate_grid: &[NafAngle],
    model: AtomModel,
) -> Result<Dictionary> {
    if beam_grid.is_empty() || candidate_grid.is_empty() {
        return Err(Error::config("dictionary needs non-empty beam and candidate grids"));
    }
    weights.check(geom)?;
    let order = geom.coarray_order();
    let mut atoms = DMatrix::<f64>::zeros(beam_grid.len(), candidate_grid.len());
    for (j, c) in candidate_grid.iter().enumerate() {
        let unit = [Scatterer::unit(c.0)];
        for (i, b) in beam_grid.iter().enumerate() {
            atoms[(i, j)] = match model {
                AtomModel::Matched => beamformed_response(geom, weights, &unit, *b)?.norm(),
                AtomModel::FlatKernel => dirichlet_kernel(b.0 - c.0, order).abs(),
            };
        }
        let mut col = atoms.column_mut(j);
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::config(format!(
                "candidate {c} has an all-zero response over the beam grid"
            )));
        }
        col /= norm;
    }
    Ok(Dictionary {
        atoms,
        grid: candidate_grid.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eight() -> (ArrayGeometry, BeamformingWeights) {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&g);
        (g, w)
    }

    /// Literal double sum over all TX/RX element pairs.
    fn brute_force(geom: &ArrayGeometry, w: &BeamformingWeights, s: &[Scatterer], steer: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for sc in s {
            for (n, pt) in geom.tx_positions().iter().enumerate() {
                for (m, pr) in geom.rx_positions().iter().enumerate() {
                    let phase = -2.0 * PI * (steer - sc.naf.0) * (pt[0] + pr[0]);
                    acc += sc.amplitude * w.tx_weights[n] * w.rx_weights[m] * Complex64::from_polar(1.0, phase);
                }
            }
        }
        acc
    }

    #[test]
    fn on_target_gain_is_nm() {
        let (g, w) = eight();
        let s = [Scatterer::unit(0.137)];
        let r = beamformed_response(&g, &w, &s, NafAngle(0.137)).unwrap();
        assert_relative_eq!(r.norm(), 64.0, epsilon = 1e-12);
    }

    #[test]
    fn one_coarray_step_off_target_matches_double_sum() {
        // With unit weights the response is the product of two 8-element kernels,
        // whose nulls sit at multiples of 1/8, so 1/15 off target is not a null.
        let (g, w) = eight();
        let s = [Scatterer::unit(0.05)];
        let steer = 0.05 + 1.0 / 15.0;
        let r = beamformed_response(&g, &w, &s, NafAngle(steer)).unwrap();
        let b = brute_force(&g, &w, &s, steer);
        assert_relative_eq!(r.norm(), b.norm(), max_relative = 1e-12);
        assert_relative_eq!(r.norm(), 22.880782741943563, max_relative = 1e-12);
        let null = beamformed_response(&g, &w, &s, NafAngle(0.05 + 1.0 / 8.0)).unwrap();
        assert!(null.norm() < 1e-12);
    }

    #[test]
    fn empty_scene_is_silent() {
        let (g, w) = eight();
        assert_eq!(beamformed_response(&g, &w, &[], NafAngle(0.1)).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn weight_mismatch_is_config_error() {
        let (g, _) = eight();
        let w = BeamformingWeights {
            tx_weights: vec![Complex64::new(1.0, 0.0); 7],
            rx_weights: vec![Complex64::new(1.0, 0.0); 8],
        };
        let err = beamformed_response(&g, &w, &[], NafAngle(0.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn response_matches_double_sum_on_dense_grid() {
        let g = ArrayGeometry::uniform(8, 5, 0.5).unwrap();
        let w = BeamformingWeights {
            tx_weights: (0..8).map(|i| Complex64::from_polar(1.0 + 0.1 * i as f64, 0.3 * i as f64)).collect(),
            rx_weights: (0..5).map(|i| Complex64::new(0.5 + i as f64, -0.2)).collect(),
        };
        let s = [
            Scatterer::new(-0.21, 18.0, Complex64::new(0.7, 0.2)).unwrap(),
            Scatterer::new(0.03, 18.0, Complex64::new(-1.1, 0.4)).unwrap(),
        ];
        for k in 0..=300 {
            let steer = -0.5 + k as f64 / 300.0;
            let r = beamformed_response(&g, &w, &s, NafAngle(steer)).unwrap();
            let b = brute_force(&g, &w, &s, steer);
            assert!((r - b).norm() <= 1e-10 * b.norm().max(1.0));
        }
    }

    #[test]
    fn unit_weight_response_is_coarray_tapered_kernel() {
        // |response| = N M |D_N(x) D_M(x)|: the triangular coarray taper.
        let (g, w) = eight();
        let s = [Scatterer::unit(-0.08)];
        for k in 0..=500 {
            let steer = -0.5 + k as f64 / 500.0;
            let lag = steer + 0.08;
            let r = beamformed_response(&g, &w, &s, NafAngle(steer)).unwrap();
            let model = 64.0 * (dirichlet_kernel(lag, 8) * dirichlet_kernel(lag, 8)).abs();
            assert!((r.norm() - model).abs() <= 1e-10 * 64.0);
        }
    }

    #[test]
    fn kernel_special_values() {
        for order in [1, 2, 7, 15] {
            assert_eq!(dirichlet_kernel(0.0, order), 1.0);
        }
        for k in 1..15 {
            assert_eq!(dirichlet_kernel(k as f64 / 15.0, 15), 0.0);
        }
        assert_eq!(dirichlet_kernel(1.0, 15), 1.0);
        assert_eq!(dirichlet_kernel(1.0, 8), -1.0);
        assert_eq!(dirichlet_kernel(-2.0, 8), 1.0);
    }

    #[test]
    fn kernel_matches_phasor_sum() {
        let lag = 0.5 / 15.0;
        let direct: Complex64 = (0..15)
            .map(|m| Complex64::from_polar(1.0 / 15.0, 2.0 * PI * (m as f64 - 7.0) * lag))
            .sum();
        assert!(direct.im.abs() < 1e-15);
        assert_relative_eq!(dirichlet_kernel(lag, 15), direct.re, max_relative = 1e-13);
        for i in 0..200 {
            let lag = -1.3 + i as f64 * 0.0131;
            let direct: Complex64 = (0..15)
                .map(|m| Complex64::from_polar(1.0 / 15.0, 2.0 * PI * (m as f64 - 7.0) * lag))
                .sum();
            assert!((dirichlet_kernel(lag, 15) - direct.re).abs() < 1e-12);
        }
    }

    fn minimal_beams() -> Vec<NafAngle> {
        (-4..=4).map(|k| NafAngle(k as f64 / 15.0)).collect()
    }

    #[test]
    fn atom_peaks_at_its_beam() {
        let (g, w) = eight();
        let beams = minimal_beams();
        let dict = build_dictionary(&g, &w, &beams, &[NafAngle(2.0 / 15.0)], AtomModel::Matched).unwrap();
        let col = dict.atoms.column(0);
        let argmax = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 6);
        assert_relative_eq!(col.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dictionary_columns_are_unit_norm() {
        let (g, w) = eight();
        let cands: Vec<NafAngle> = (-40..=40).map(|k| NafAngle(k as f64 / 150.0)).collect();
        for model in [AtomModel::Matched, AtomModel::FlatKernel] {
            let dict = build_dictionary(&g, &w, &minimal_beams(), &cands, model).unwrap();
            assert_eq!(dict.n_atoms(), 81);
            let gram = dict.atoms.transpose() * &dict.atoms;
            for i in 0..81 {
                assert!((gram[(i, i)] - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_candidate_dictionary() {
        let (g, w) = eight();
        let dict = build_dictionary(&g, &w, &minimal_beams(), &[NafAngle(0.0)], AtomModel::Matched).unwrap();
        assert_eq!(dict.n_atoms(), 1);
        assert_relative_eq!(dict.atoms.column(0).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn well_separated_atoms_have_low_coherence() {
        // Baseline for pairs at least two coarray steps apart, over the 81-point grid.
        let (g, w) = eight();
        let cands: Vec<NafAngle> = (-40..=40).map(|k| NafAngle(k as f64 / 150.0)).collect();
        let dict = build_dictionary(&g, &w, &minimal_beams(), &cands, AtomModel::Matched).unwrap();
        let gram = dict.atoms.transpose() * &dict.atoms;
        let mut worst: f64 = 0.0;
        for i in 0..81 {
            for j in 0..81 {
                if (cands[i].0 - cands[j].0).abs() >= 2.0 / 15.0 - 1e-12 {
                    worst = worst.max(gram[(i, j)]);
                }
            }
        }
        assert!(worst < 0.5, "coherence {worst}");
        assert!(worst < 0.14, "coherence {worst}");
    }

    #[test]
    fn empty_grids_rejected() {
        let (g, w) = eight();
        assert!(build_dictionary(&g, &w, &[], &[NafAngle(0.0)], AtomModel::Matched).is_err());
        assert!(build_dictionary(&g, &w, &minimal_beams(), &[], AtomModel::Matched).is_err());
    }

    #[test]
    fn psf_peaks_at_zero_and_is_periodic() {
        let (g, w) = eight();
        let grid: Vec<NafAngle> = (-75..=75).map(|k| NafAngle(k as f64 / 150.0)).collect();
        let psf = point_spread_function(&g, &w, &grid).unwrap();
        assert_eq!(psf.coarray_order, 15);
        let peak = psf.samples.iter().map(|s| s.norm()).enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(psf.grid[peak.0].0, 0.0);
        let a = beamformed_response(&g, &w, &[Scatterer::unit(0.0)], NafAngle(0.23)).unwrap();
        let b = beamformed_response(&g, &w, &[Scatterer::unit(0.0)], NafAngle(1.23)).unwrap();
        assert!((a.norm() - b.norm()).abs() < 1e-10);
    }
}
