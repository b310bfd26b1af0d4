//! Beam sweep plans and reconstruction of the dense angular response from
//! the minimal coarray-based sample grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beam::dirichlet_kernel;
use crate::error::{Error, Result};
use crate::geometry::NafAngle;

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Minimal,
    Oversampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub beam_grid: Vec<NafAngle>,
    pub kind: SweepKind,
    /// Coarray order `2N - 1`; the minimal grid spacing is its inverse.
    pub order: usize,
    pub oversampling_factor: usize,
    pub dwell_frames: usize,
    pub frame_duration_s: f64,
}

/// Grid points `k / step_inv` with `|k / step_inv| <= limit`.
fn symmetric_grid(step_inv: usize, limit: f64) -> Vec<NafAngle> {
    let kmax = (limit * step_inv as f64 + GRID_TOL).floor() as i64;
    (-kmax..=kmax)
        .map(|k| NafAngle(k as f64 / step_inv as f64))
        .collect()
}

/// Minimal DFT beam grid for `n_1d`-element arrays: multiples of `1 / (2 n - 1)`
/// within the sweep limit.
pub fn minimal_naf_grid(n_1d: usize, naf_limit: f64) -> Result<Vec<NafAngle>> {
    if n_1d == 0 {
        return Err(Error::input("minimal grid needs at least one element"));
    }
    if !(0.0..=0.5).contains(&naf_limit) {
        return Err(Error::input(format!("sweep limit {naf_limit} outside [0, 0.5]")));
    }
    Ok(symmetric_grid(2 * n_1d - 1, naf_limit))
}

impl SweepPlan {
    pub fn minimal(n_1d: usize, naf_limit: f64, dwell_frames: usize, frame_duration_s: f64) -> Result<Self> {
        Ok(Self {
            beam_grid: minimal_naf_grid(n_1d, naf_limit)?,
            kind: SweepKind::Minimal,
            order: 2 * n_1d - 1,
            oversampling_factor: 1,
            dwell_frames,
            frame_duration_s,
        })
    }

    pub fn oversampled(
        n_1d: usize,
        naf_limit: f64,
        oversampling_factor: usize,
        dwell_frames: usize,
        frame_duration_s: f64,
    ) -> Result<Self> {
        if oversampling_factor == 0 {
            return Err(Error::config("oversampling factor must be positive"));
        }
        minimal_naf_grid(n_1d, naf_limit)?;
        let order = 2 * n_1d - 1;
        Ok(Self {
            beam_grid: symmetric_grid(order * oversampling_factor, naf_limit),
            kind: SweepKind::Oversampled,
            order,
            oversampling_factor,
            dwell_frames,
            frame_duration_s,
        })
    }

    pub fn len(&self) -> usize {
        self.beam_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beam_grid.is_empty()
    }

    /// Indices of beams that lie on the minimal grid of this plan's order.
    pub fn minimal_indices(&self) -> Vec<usize> {
        self.beam_grid
            .iter()
            .enumerate()
            .filter(|(_, b)| on_minimal_grid(b.0, self.order))
            .map(|(i, _)| i)
            .collect()
    }
}

fn on_minimal_grid(naf: f64, order: usize) -> bool {
    let scaled = naf * order as f64;
    (scaled - scaled.round()).abs() < GRID_TOL * order as f64
}

/// Acquisition time of a sweep: beams x dwell frames x frame duration.
pub fn sweep_duration(plan: &SweepPlan) -> f64 {
    plan.beam_grid.len() as f64 * plan.dwell_frames as f64 * plan.frame_duration_s
}

/// Per-beam measurements of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    /// Phase-coherent complex responses.
    Complex(Vec<Complex64>),
    /// Magnitudes only.
    Magnitude(Vec<f64>),
}

impl SweepValues {
    pub fn len(&self) -> usize {
        match self {
            SweepValues::Complex(v) => v.len(),
            SweepValues::Magnitude(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        match self {
            SweepValues::Complex(v) => v.iter().map(|c| c.norm()).collect(),
            SweepValues::Magnitude(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularSweep {
    pub plan: SweepPlan,
    pub values: SweepValues,
}

impl AngularSweep {
    pub fn new(plan: SweepPlan, values: SweepValues) -> Result<Self> {
        if plan.beam_grid.len() != values.len() {
            return Err(Error::input(format!(
                "sweep has {} beams but {} values",
                plan.beam_grid.len(),
                values.len()
            )));
        }
        Ok(Self { plan, values })
    }
}

fn check_minimal(plan: &SweepPlan) -> Result<()> {
    if plan.kind != SweepKind::Minimal {
        return Err(Error::contract("DFT interpolation needs a minimal sweep"));
    }
    if let Some(b) = plan.beam_grid.iter().find(|b| !on_minimal_grid(b.0, plan.order)) {
        return Err(Error::contract(format!(
            "beam {b} is not on the 1/{} grid",
            plan.order
        )));
    }
    Ok(())
}

/// Dirichlet-kernel interpolation `f(l) = sum_k s_k D(l - l_k, order)`.
///
/// Beams outside the sweep limits contribute nothing (zero fill). Works on
/// complex and magnitude sweeps alike.
pub fn dft_interpolate(sweep: &AngularSweep, target_grid: &[NafAngle]) -> Result<SweepValues> {
    check_minimal(&sweep.plan)?;
    let order = sweep.plan.order;
    let kernel_row = |l: f64| -> Vec<f64> {
        sweep
            .plan
            .beam_grid
            .iter()
            .map(|b| dirichlet_kernel(l - b.0, order))
            .collect()
    };
    Ok(match &sweep.values {
        SweepValues::Complex(s) => SweepValues::Complex(
            target_grid
                .iter()
                .map(|t| kernel_row(t.0).iter().zip(s).map(|(k, v)| v * *k).sum())
                .collect(),
        ),
        SweepValues::Magnitude(s) => SweepValues::Magnitude(
            target_grid
                .iter()
                .map(|t| kernel_row(t.0).iter().zip(s).map(|(k, v)| v * k).sum())
                .collect(),
        ),
    })
}

/// Natural cubic spline through `(x_k, y_k)`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::input("spline abscissae and ordinates differ in length"));
        }
        if n < 4 {
            return Err(Error::input(format!("spline needs at least 4 samples, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("spline abscissae must be strictly increasing"));
        }
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut m = vec![0.0; n];
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    /// Evaluates the spline; outside the knots the end segments are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Natural cubic spline through the sweep magnitudes, clamped at zero.
pub fn spline_interpolate(sweep: &AngularSweep, target_grid: &[NafAngle]) -> Result<Vec<f64>> {
    let x: Vec<f64> = sweep.plan.beam_grid.iter().map(|b| b.0).collect();
    let spline = NaturalSpline::new(&x, &sweep.values.magnitudes())?;
    Ok(target_grid.iter().map(|t| spline.eval(t.0).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{beamformed_response, BeamformingWeights, Scatterer};
    use crate::geometry::ArrayGeometry;

    fn limit_33() -> f64 {
        0.5 * 33f64.to_radians().sin()
    }

    #[test]
    fn minimal_grid_examples() {
        let g = minimal_naf_grid(8, limit_33()).unwrap();
        assert_eq!(g.len(), 9);
        for (i, v) in g.iter().enumerate() {
            assert_eq!(v.0, (i as f64 - 4.0) / 15.0);
        }
        assert_eq!(minimal_naf_grid(8, 0.5).unwrap().len(), 15);
        assert_eq!(minimal_naf_grid(1, 0.3).unwrap(), vec![NafAngle(0.0)]);
        assert_eq!(minimal_naf_grid(1, 0.0).unwrap(), vec![NafAngle(0.0)]);
        assert!(minimal_naf_grid(0, 0.3).is_err());
        assert!(minimal_naf_grid(8, 0.6).is_err());
    }

    #[test]
    fn oversampled_grid_has_81_beams() {
        let p = SweepPlan::oversampled(8, limit_33(), 10, 6, 0.01).unwrap();
        assert_eq!(p.len(), 81);
        assert!((p.beam_grid[80].0 - 40.0 / 150.0).abs() < 1e-15);
        assert_eq!(p.minimal_indices(), (0..9).map(|k| 10 * k).collect::<Vec<_>>());
    }

    #[test]
    fn durations() {
        let min = SweepPlan::minimal(8, limit_33(), 6, 0.01).unwrap();
        assert!((sweep_duration(&min) - 0.540).abs() < 1e-12);
        let over = SweepPlan::oversampled(8, limit_33(), 10, 6, 0.01).unwrap();
        assert!((sweep_duration(&over) - 4.860).abs() < 1e-12);
        let mut empty = min.clone();
        empty.beam_grid.clear();
        assert_eq!(sweep_duration(&empty), 0.0);
    }

    fn dense_grid() -> Vec<NafAngle> {
        (-75..75).map(|k| NafAngle(k as f64 / 150.0)).collect()
    }

    #[test]
    fn ideal_single_scatterer_reconstruction_is_exact() {
        let geom = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&geom);
        let scene = [Scatterer::unit(2.0 / 15.0)];
        let plan = SweepPlan::minimal(8, 0.5, 6, 0.01).unwrap();
        let samples = plan
            .beam_grid
            .iter()
            .map(|b| beamformed_response(&geom, &w, &scene, *b).unwrap())
            .collect();
        let sweep = AngularSweep::new(plan, SweepValues::Complex(samples)).unwrap();
        let SweepValues::Complex(rec) = dft_interpolate(&sweep, &dense_grid()).unwrap() else {
            panic!("complex in, complex out");
        };
        for (t, r) in dense_grid().iter().zip(&rec) {
            let truth = beamformed_response(&geom, &w, &scene, *t).unwrap();
            assert!((r - truth).norm() <= 1e-9 * truth.norm().max(1e-3 * 64.0));
        }
    }

    #[test]
    fn constant_samples_reconstruct_constant() {
        let plan = SweepPlan::minimal(8, 0.5, 6, 0.01).unwrap();
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(vec![2.5; 15])).unwrap();
        let SweepValues::Magnitude(rec) = dft_interpolate(&sweep, &dense_grid()).unwrap() else {
            panic!()
        };
        for r in rec {
            assert!((r - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_at_sample_points() {
        let plan = SweepPlan::minimal(8, limit_33(), 6, 0.01).unwrap();
        let values: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let grid = plan.beam_grid.clone();
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(values.clone())).unwrap();
        let SweepValues::Magnitude(rec) = dft_interpolate(&sweep, &grid).unwrap() else {
            panic!()
        };
        assert_eq!(rec, values);
        let spl = spline_interpolate(&sweep, &grid).unwrap();
        for (a, b) in spl.iter().zip(&values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn off_grid_sweep_is_contract_violation() {
        let plan = SweepPlan::oversampled(8, limit_33(), 10, 6, 0.01).unwrap();
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(vec![1.0; 81])).unwrap();
        assert!(matches!(dft_interpolate(&sweep, &dense_grid()), Err(Error::Contract(_))));

        let mut plan = SweepPlan::minimal(8, limit_33(), 6, 0.01).unwrap();
        plan.beam_grid[3] = NafAngle(0.01);
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(vec![1.0; 9])).unwrap();
        assert!(matches!(dft_interpolate(&sweep, &dense_grid()), Err(Error::Contract(_))));
    }

    #[test]
    fn spline_reproduces_cubic_in_interior() {
        let f = |x: f64| 2.0 + x - 0.5 * x * x + 0.1 * x * x * x;
        let xs: Vec<f64> = (0..41).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let s = NaturalSpline::new(&xs, &ys).unwrap();
        for i in 60..100 {
            let t = i as f64 * 0.05 + 0.013;
            assert!((s.eval(t) - f(t)).abs() < 1e-6, "at {t}");
        }
    }

    #[test]
    fn spline_needs_four_samples() {
        let plan = SweepPlan::minimal(2, 0.4, 6, 0.01).unwrap();
        assert_eq!(plan.len(), 3);
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(vec![1.0; 3])).unwrap();
        assert!(matches!(spline_interpolate(&sweep, &dense_grid()), Err(Error::Input(_))));
    }

    #[test]
    fn spline_peak_close_to_truth() {
        let geom = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&geom);
        let scene = [Scatterer::unit(1.0 / 15.0)];
        let plan = SweepPlan::minimal(8, limit_33(), 6, 0.01).unwrap();
        let mags = plan
            .beam_grid
            .iter()
            .map(|b| beamformed_response(&geom, &w, &scene, *b).unwrap().norm())
            .collect();
        let sweep = AngularSweep::new(plan, SweepValues::Magnitude(mags)).unwrap();
        let fine: Vec<NafAngle> = (-40..=40).map(|k| NafAngle(k as f64 / 150.0)).collect();
        let rec = spline_interpolate(&sweep, &fine).unwrap();
        let truth: Vec<f64> = fine
            .iter()
            .map(|t| beamformed_response(&geom, &w, &scene, *t).unwrap().norm())
            .collect();
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(argmax(&rec).abs_diff(argmax(&truth)) < 1);
        assert!(rec.iter().all(|v| *v >= 0.0));
    }
}
