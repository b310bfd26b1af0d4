use num_complex::Complex64;
use proptest::collection::vec;
use proptest::prelude::*;

use beamsweep::beam::{beamformed_response, build_dictionary, dirichlet_kernel, AtomModel, BeamformingWeights, Scatterer};
use beamsweep::config::Method;
use beamsweep::detection::{ca_cfar, extract_peaks, CfarConfig, PeakEstimate, PeakSearch};
use beamsweep::eval::{score_rmse, GroundTruth, MethodPeaks, ReflectorKind, RunRecord};
use beamsweep::geometry::{naf_of_direction, sum_coarray, ArrayGeometry, Direction};
use beamsweep::omp::{omp, OmpConfig};
use beamsweep::ofdm::RangeAngleMap;
use beamsweep::ramp::{read_ramp, write_ramp};
use beamsweep::sampling::{dft_interpolate, spline_interpolate, AngularSweep, SweepPlan, SweepValues};
use beamsweep::NafAngle;

fn minimal_plan() -> SweepPlan {
    SweepPlan::minimal(8, 0.5, 1, 0.01).unwrap()
}

fn dense_grid() -> Vec<NafAngle> {
    (-75..75).map(|k| NafAngle(k as f64 / 150.0)).collect()
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn interpolate_complex(values: Vec<Complex64>) -> Vec<Complex64> {
    let sweep = AngularSweep::new(minimal_plan(), SweepValues::Complex(values)).unwrap();
    match dft_interpolate(&sweep, &dense_grid()).unwrap() {
        SweepValues::Complex(v) => v,
        SweepValues::Magnitude(_) => panic!("complex sweep interpolated to magnitudes"),
    }
}

fn record(seed: u64, truths: [f64; 2], errors: [f64; 2]) -> RunRecord {
    RunRecord {
        scenario: format!("s{}", seed % 3),
        kind: if seed.is_multiple_of(2) {
            ReflectorKind::Octahedral
        } else {
            ReflectorKind::Wall
        },
        seed_index: seed,
        ground_truth: GroundTruth {
            nafs: truths,
            n_estimates: [1, 1],
            fallback: [false, false],
        },
        estimates: vec![MethodPeaks {
            method: Method::Dft,
            peaks: truths
                .iter()
                .zip(errors)
                .map(|(t, e)| PeakEstimate {
                    naf: NafAngle(t + e),
                    range_m: 18.0,
                    power: 1.0,
                })
                .collect(),
        }],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirichlet_is_bounded_and_periodic(lag in -2.0..2.0f64, half in 1usize..12) {
        let order = 2 * half + 1;
        let d = dirichlet_kernel(lag, order);
        prop_assert!(d.abs() <= 1.0 + 1e-12);
        prop_assert!((dirichlet_kernel(lag + 1.0, order) - d).abs() < 1e-9);
    }

    #[test]
    fn dirichlet_zeros_at_grid(k in 1i64..15) {
        prop_assert_eq!(dirichlet_kernel(k as f64 / 15.0, 15), 0.0);
    }

    #[test]
    fn naf_in_half_open_band(az in -89.0..89.0f64, el in -60.0..60.0f64) {
        let naf = naf_of_direction(Direction::from_degrees(az, el).unwrap(), 0.5);
        prop_assert!((-0.5..=0.5).contains(&naf.0));
    }

    #[test]
    fn coarray_has_2n_minus_1_positions(n in 1usize..24) {
        let geom = ArrayGeometry::half_wavelength(n).unwrap();
        let c = sum_coarray(&geom);
        prop_assert_eq!(c.len(), 2 * n - 1);
        prop_assert_eq!(c.multiplicities.iter().sum::<usize>(), n * n);
    }

    #[test]
    fn response_is_linear_in_scatterers(
        a in -0.5..0.5f64, b in -0.5..0.5f64, steer in -0.5..0.5f64, ca in complex(), cb in complex()
    ) {
        let geom = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&geom);
        let sa = Scatterer::new(a, 5.0, ca).unwrap();
        let sb = Scatterer::new(b, 5.0, cb).unwrap();
        let both = beamformed_response(&geom, &w, &[sa, sb], NafAngle(steer)).unwrap();
        let split = beamformed_response(&geom, &w, &[sa], NafAngle(steer)).unwrap()
            + beamformed_response(&geom, &w, &[sb], NafAngle(steer)).unwrap();
        prop_assert!((both - split).norm() < 1e-9);
    }

    #[test]
    fn dft_interpolation_is_linear(
        x in vec(complex(), 15), y in vec(complex(), 15), a in complex(), b in complex()
    ) {
        let mixed: Vec<Complex64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = interpolate_complex(mixed);
        let (ix, iy) = (interpolate_complex(x), interpolate_complex(y));
        for (l, (u, v)) in lhs.iter().zip(ix.iter().zip(&iy)) {
            prop_assert!((l - (a * u + b * v)).norm() < 1e-9);
        }
    }

    #[test]
    fn dft_interpolation_hits_samples(x in vec(complex(), 15)) {
        let plan = minimal_plan();
        let sweep = AngularSweep::new(plan.clone(), SweepValues::Complex(x.clone())).unwrap();
        let SweepValues::Complex(back) = dft_interpolate(&sweep, &plan.beam_grid).unwrap() else {
            panic!("complex sweep interpolated to magnitudes");
        };
        for (u, v) in back.iter().zip(&x) {
            prop_assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn spline_is_nonnegative_and_interpolating(y in vec(0.0..10.0f64, 15)) {
        let plan = minimal_plan();
        let sweep = AngularSweep::new(plan.clone(), SweepValues::Magnitude(y.clone())).unwrap();
        prop_assert!(spline_interpolate(&sweep, &dense_grid()).unwrap().iter().all(|v| *v >= 0.0));
        let at_samples = spline_interpolate(&sweep, &plan.beam_grid).unwrap();
        for (u, v) in at_samples.iter().zip(&y) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn cfar_is_scale_invariant(profile in vec(0.0..10.0f64, 40..120), scale in 1e-3..1e3f64) {
        let cfg = CfarConfig::default();
        let scaled: Vec<f64> = profile.iter().map(|p| p * scale).collect();
        prop_assert_eq!(ca_cfar(&profile, &cfg).unwrap(), ca_cfar(&scaled, &cfg).unwrap());
    }

    #[test]
    fn peaks_are_separated_and_sorted(
        spectrum in vec(-1.0..10.0f64, 81), eligible in vec(any::<bool>(), 81), max_peaks in 1usize..6, refine in any::<bool>()
    ) {
        let axis: Vec<NafAngle> = (-40..=40).map(|k| NafAngle(k as f64 / 150.0)).collect();
        let search = PeakSearch { resolution: 1.0 / 15.0, max_peaks, refine };
        let peaks = extract_peaks(&spectrum, &axis, &eligible, 18.0, &search).unwrap();
        prop_assert!(peaks.len() <= max_peaks);
        for (i, p) in peaks.iter().enumerate() {
            let bin = axis.iter().position(|a| (a.0 - p.naf.0).abs() <= 0.5 / 150.0 + 1e-12);
            prop_assert!(bin.is_some(), "refined peak moved more than half a bin");
            prop_assert!(p.power > 0.0);
            for q in &peaks[i + 1..] {
                prop_assert!((p.naf.0 - q.naf.0).abs() >= search.resolution);
                prop_assert!(p.power >= q.power);
            }
        }
    }

    #[test]
    fn rmse_ignores_record_order(
        runs in vec((-0.3..0.3f64, -0.01..0.01f64, -0.01..0.01f64), 2..12), rotate in 0usize..12
    ) {
        let records: Vec<RunRecord> = runs
            .iter()
            .enumerate()
            .map(|(i, (c, e1, e2))| record(i as u64, [c - 0.1, c + 0.1], [*e1, *e2]))
            .collect();
        let mut shuffled = records.clone();
        shuffled.rotate_left(rotate % records.len());
        shuffled.reverse();
        let a = score_rmse(&records, &[Method::Dft], 1.0 / 15.0);
        let b = score_rmse(&shuffled, &[Method::Dft], 1.0 / 15.0);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let (x, y) = (ra.cells[0].stats.rmse, rb.cells[0].stats.rmse);
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-15),
                _ => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn omp_residual_is_orthogonal_and_shrinks(
        coefs in vec(0.0..1.0f64, 81), noise in vec(-0.05..0.05f64, 9)
    ) {
        let geom = ArrayGeometry::half_wavelength(8).unwrap();
        let w = BeamformingWeights::uniform(&geom);
        let beams: Vec<NafAngle> = (-4..=4).map(|k| NafAngle(k as f64 / 15.0)).collect();
        let candidates: Vec<NafAngle> = (-40..=40).map(|k| NafAngle(k as f64 / 150.0)).collect();
        let dict = build_dictionary(&geom, &w, &beams, &candidates, AtomModel::Matched).unwrap();
        // Sparse-ish scene: keep only the largest few coefficients.
        let mut y = vec![0.0; 9];
        for (j, c) in coefs.iter().enumerate().filter(|(_, c)| **c > 0.9) {
            for (r, v) in y.iter_mut().enumerate() {
                *v += c * dict.atoms[(r, j)];
            }
        }
        for (v, n) in y.iter_mut().zip(&noise) {
            *v += n;
        }
        let est = omp(&y, &dict, &OmpConfig::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        prop_assert!(est.support.iter().all(|s| seen.insert(*s)));
        let mut last = f64::INFINITY;
        for step in &est.trace {
            prop_assert!(step.residual_norm <= last + 1e-12);
            last = step.residual_norm;
        }
        if !est.rank_deficient {
            prop_assert!(est.trace.iter().all(|s| s.orthogonality <= 1e-9));
        }
    }

    #[test]
    fn ramp_roundtrip(n_range in 1usize..20, n_angle in 2usize..20, seed in any::<u64>()) {
        let range: Vec<f64> = (0..n_range).map(|i| i as f64 * 0.595).collect();
        let angle: Vec<NafAngle> = (0..n_angle)
            .map(|k| NafAngle(-0.25 + 0.5 * k as f64 / (n_angle - 1) as f64))
            .collect();
        let power: Vec<f64> = (0..n_range * n_angle)
            .map(|i| ((seed.wrapping_add(i as u64)) % 1000) as f64 * 0.5)
            .collect();
        let map = RangeAngleMap::new(range, angle, power).unwrap();
        let mut buf = Vec::new();
        write_ramp(&map, &mut buf).unwrap();
        let back = read_ramp(buf.as_slice()).unwrap();
        prop_assert_eq!(back.power(), map.power());
        prop_assert_eq!(back.n_range(), map.n_range());
        prop_assert_eq!(back.n_angle(), map.n_angle());
    }
}

#[test]
fn omp_recovers_low_coherence_pairs() {
    let geom = ArrayGeometry::half_wavelength(8).unwrap();
    let w = BeamformingWeights::uniform(&geom);
    let beams: Vec<NafAngle> = (-4..=4).map(|k| NafAngle(k as f64 / 15.0)).collect();
    let candidates: Vec<NafAngle> = (-3..=3).map(|k| NafAngle(2.0 * k as f64 / 15.0)).collect();
    let dict = build_dictionary(&geom, &w, &beams, &candidates, AtomModel::Matched).unwrap();
    let cfg = OmpConfig { k_max: 2, epsilon: 1e-12 };
    for i in 0..dict.n_atoms() {
        for j in i + 1..dict.n_atoms() {
            let y: Vec<f64> = (0..9).map(|r| 0.7 * dict.atoms[(r, i)] + 0.4 * dict.atoms[(r, j)]).collect();
            let est = omp(&y, &dict, &cfg).unwrap();
            let mut support = est.support.clone();
            support.sort_unstable();
            assert_eq!(support, vec![i, j]);
        }
    }
}
