//! Orthogonal matching pursuit on magnitude beam responses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::beam::Dictionary;
use crate::detection::PeakEstimate;
use crate::error::{Error, Result};

/// Relative singular-value cutoff for the support least-squares solve.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    pub k_max: usize,
    pub epsilon: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            epsilon: 0.05,
        }
    }
}

impl OmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::config("OMP k_max must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("OMP epsilon {} outside [0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// State after one greedy iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmpIteration {
    pub selected: usize,
    pub residual_norm: f64,
    /// `max |D_S^T R|` after the least-squares update.
    pub orthogonality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseEstimate {
    /// Candidate-grid indices in selection order.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Some least-squares solve hit a numerically rank-deficient support.
    pub rank_deficient: bool,
    /// Some coefficient came out negative.
    pub negative_coefficients: bool,
    pub trace: Vec<OmpIteration>,
}

/// Index of the largest `|p_i|`; the lowest index wins exact ties.
pub fn omp_tie_break(correlations: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in correlations.iter().enumerate() {
        let a = p.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

fn check_dictionary(y: &[f64], dict: &Dictionary) -> Result<()> {
    if y.len() != dict.n_beams() {
        return Err(Error::input(format!(
            "measurement has {} entries, dictionary has {} rows",
            y.len(),
            dict.n_beams()
        )));
    }
    for (j, col) in dict.atoms.column_iter().enumerate() {
        if (col.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("dictionary atom {j} is not unit norm")));
        }
    }
    Ok(())
}

/// Least squares on the support columns via SVD; returns the solution and
/// whether the support matrix was rank deficient.
fn solve_support(dict: &Dictionary, support: &[usize], y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let ds = dict.atoms.select_columns(support);
    let svd = ds.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOLERANCE * smax.max(f64::MIN_POSITIVE);
    let rank = svd.rank(tol);
    let a = svd
        .solve(y, tol)
        .map_err(|e| Error::contract(format!("least-squares solve failed: {e}")))?;
    Ok((a, rank < support.len()))
}

pub fn omp(y: &[f64], dict: &Dictionary, config: &OmpConfig) -> Result<SparseEstimate> {
    config.validate()?;
    check_dictionary(y, dict)?;
    let yv = DVector::from_column_slice(y);
    let y_norm = yv.norm();
    let mut est = SparseEstimate {
        support: Vec::new(),
        coefficients: Vec::new(),
        residual_norm: y_norm,
        iterations: 0,
        rank_deficient: false,
        negative_coefficients: false,
        trace: Vec::new(),
    };
    if y_norm == 0.0 {
        return Ok(est);
    }
    let mut residual = yv.clone();
    let k_limit = config.k_max.min(dict.n_atoms());
    while est.residual_norm > config.epsilon * y_norm && est.support.len() < k_limit {
        let mut p: Vec<f64> = (dict.atoms.transpose() * &residual).iter().copied().collect();
        for &s in &est.support {
            p[s] = 0.0;
        }
        let Some(i) = omp_tie_break(&p) else { break };
        if p[i] == 0.0 {
            break;
        }
        est.support.push(i);
        let (a, deficient) = solve_support(dict, &est.support, &yv)?;
        est.rank_deficient |= deficient;
        let ds: DMatrix<f64> = dict.atoms.select_columns(&est.support);
        residual = &yv - &ds * &a;
        let orthogonality = (ds.transpose() * &residual).amax();
        est.coefficients = a.iter().copied().collect();
        est.residual_norm = residual.norm();
        est.iterations += 1;
        est.trace.push(OmpIteration {
            selected: i,
            residual_norm: est.residual_norm,
            orthogonality,
        });
    }
    est.negative_coefficients = est.coefficients.iter().any(|c| *c < 0.0);
    Ok(est)
}

/// One peak per nonzero support entry at the gated range, strongest first.
pub fn sparse_to_peaks(est: &SparseEstimate, dict: &Dictionary, range_m: f64) -> Vec<PeakEstimate> {
    let mut peaks: Vec<PeakEstimate> = est
        .support
        .iter()
        .zip(&est.coefficients)
        .filter(|(_, c)| **c != 0.0)
        .map(|(&i, c)| PeakEstimate {
            naf: dict.grid[i],
            range_m,
            power: c * c,
        })
        .collect();
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks
}

/// Coefficients scattered onto the full candidate grid.
pub fn sparse_spectrum(est: &SparseEstimate, n_atoms: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_atoms];
    for (&i, &c) in est.support.iter().zip(&est.coefficients) {
        out[i] = c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{build_dictionary, AtomModel, BeamformingWeights};
    use crate::geometry::{ArrayGeometry, NafAngle};
    use crate::sampling::minimal_naf_grid;

    fn dictionary(step_inv: i32) -> Dictionary {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&g);
        let beams = minimal_naf_grid(8, 0.5 * 33f64.to_radians().sin()).unwrap();
        let k = (4 * step_inv) / 15;
        let cands: Vec<NafAngle> = (-k..=k).map(|i| NafAngle(i as f64 / step_inv as f64)).collect();
        build_dictionary(&g, &w, &beams, &cands, AtomModel::Matched).unwrap()
    }

    #[test]
    fn tie_break_examples() {
        assert_eq!(omp_tie_break(&[3.0, 5.0, 5.0]), Some(1));
        assert_eq!(omp_tie_break(&[7.0]), Some(0));
        assert_eq!(omp_tie_break(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(omp_tie_break(&[1.0, -4.0, 4.0]), Some(1));
        assert_eq!(omp_tie_break(&[]), None);
    }

    #[test]
    fn single_atom_is_recovered_in_one_step() {
        let d = dictionary(150);
        let y: Vec<f64> = d.atoms.column(17).iter().copied().collect();
        let est = omp(&y, &d, &OmpConfig::default()).unwrap();
        assert_eq!(est.support, vec![17]);
        assert!((est.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(est.residual_norm < 1e-12);
        assert_eq!(est.iterations, 1);
    }

    #[test]
    fn zero_measurement_gives_empty_support() {
        let d = dictionary(150);
        let est = omp(&[0.0; 9], &d, &OmpConfig::default()).unwrap();
        assert!(est.support.is_empty());
        assert_eq!(est.iterations, 0);
        assert!(sparse_to_peaks(&est, &d, 18.0).is_empty());
    }

    #[test]
    fn two_atom_mixture() {
        let d = dictionary(15);
        let (i, j) = (1, 4);
        let y: Vec<f64> = (0..9).map(|r| 0.8 * d.atoms[(r, i)] + 0.5 * d.atoms[(r, j)]).collect();
        let cfg = OmpConfig {
            k_max: 5,
            epsilon: 1e-6,
        };
        let est = omp(&y, &d, &cfg).unwrap();
        assert!(est.iterations <= 2);
        let mut pairs: Vec<(usize, f64)> = est.support.iter().copied().zip(est.coefficients.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(pairs.iter().map(|p| p.0).collect::<Vec<_>>(), vec![i, j]);
        assert!((pairs[0].1 - 0.8).abs() < 1e-6);
        assert!((pairs[1].1 - 0.5).abs() < 1e-6);

        // Independent check: the exact two-atom fit leaves no residual.
        let ds = d.atoms.select_columns(&[i, j]);
        let r = DVector::from_column_slice(&y) - ds * DVector::from_vec(vec![0.8, 0.5]);
        assert!(r.norm() < 1e-12);

        let peaks = sparse_to_peaks(&est, &d, 18.0);
        assert_eq!(peaks.len(), 2);
        assert_eq!(peaks[0].naf, d.grid[i]);
        assert!((peaks[0].power - 0.64).abs() < 1e-6);
        assert!((peaks[1].power - 0.25).abs() < 1e-6);
        assert!(peaks.iter().all(|p| p.range_m == 18.0));
    }

    #[test]
    fn sparse_to_peaks_squares_coefficients() {
        let d = dictionary(15);
        let est = SparseEstimate {
            support: vec![3],
            coefficients: vec![2.0],
            residual_norm: 0.0,
            iterations: 1,
            rank_deficient: false,
            negative_coefficients: false,
            trace: vec![],
        };
        let peaks = sparse_to_peaks(&est, &d, 10.0);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].power, 4.0);
        assert_eq!(sparse_spectrum(&est, d.n_atoms())[3], 2.0);
    }

    #[test]
    fn trace_is_orthogonal_and_monotone() {
        let d = dictionary(150);
        let y: Vec<f64> = (0..9).map(|r| 1.0 + 0.3 * (r as f64).sin()).collect();
        let est = omp(&y, &d, &OmpConfig { k_max: 5, epsilon: 0.0 }).unwrap();
        assert!(!est.trace.is_empty());
        let mut last = f64::INFINITY;
        for it in &est.trace {
            assert!(it.orthogonality <= 1e-9, "{it:?}");
            assert!(it.residual_norm <= last + 1e-12);
            last = it.residual_norm;
        }
        let mut s = est.support.clone();
        s.dedup();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), est.support.len());
    }

    #[test]
    fn collinear_atoms_are_flagged() {
        let mut d = dictionary(15);
        let c0 = d.atoms.column(2).clone_owned();
        d.atoms.set_column(3, &c0);
        let y: Vec<f64> = (0..9).map(|r| d.atoms[(r, 2)] + 0.5 * d.atoms[(r, 0)]).collect();
        let est = omp(&y, &d, &OmpConfig { k_max: 3, epsilon: 0.0 }).unwrap();
        assert!(est.support.len() <= 3);
        if est.support.contains(&2) && est.support.contains(&3) {
            assert!(est.rank_deficient);
        }
    }

    #[test]
    fn validation() {
        let d = dictionary(15);
        assert!(matches!(omp(&[1.0; 8], &d, &OmpConfig::default()), Err(Error::Input(_))));
        assert!(omp(&[1.0; 9], &d, &OmpConfig { k_max: 0, epsilon: 0.1 }).is_err());
        assert!(omp(&[1.0; 9], &d, &OmpConfig { k_max: 2, epsilon: 1.0 }).is_err());
        let mut bad = d.clone();
        bad.atoms *= 2.0;
        assert!(matches!(omp(&[1.0; 9], &bad, &OmpConfig::default()), Err(Error::Contract(_))));
    }
}
