mod common;

use common::*;
use permanental::existence::{laplace_closed_form, PermanentalSpec, WeightVector};
use permanental::fieldsampling::{
    cox_samples, empirical_cox_laplace, empirical_laplace, p5_estimate, p5_weight_has_finite_variance,
    permanental_fields, FieldSample, GaussianSampler, SiteMeasure,
};
use permanental::harness::examples;
use permanental::markovchain::{green_function, simulate_paths, StopRule};
use permanental::matrix;
use permanental::montecarlo::Estimate;
use permanental::permanents::det_alpha;
use permanental::pointprocess::{
    critical_density, kernel_from_resolvent, mass_condition_check, mu_laplace, palm_check, plus_one_transform,
    shifted_cox_samples, shifted_field_laplace, OperatorMatrix, Quadrature, TestFunction,
};
use permanental::Matrix;

const GATE: f64 = 4.0;

#[test]
fn permanent_matches_ryser() {
    for t in 0..40 {
        let mut r = rng(11, t);
        let n = 1 + (t as usize % 7);
        let m = random_matrix(n, &mut r);
        let p = det_alpha(&m, 1.0).unwrap();
        let oracle = ryser_permanent(&m);
        assert!(
            (p - oracle).abs() <= 1e-10 * oracle.abs().max(1.0),
            "n={n}: {p} vs {oracle}"
        );
    }
}

#[test]
fn determinant_matches_cofactor_expansion() {
    for t in 0..40 {
        let mut r = rng(12, t);
        let n = 1 + (t as usize % 7);
        let m = random_matrix(n, &mut r);
        let oracle = cofactor_det(&m);
        let d = det_alpha(&m, -1.0).unwrap();
        let lu = matrix::det(&m).unwrap();
        assert!((d - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        assert!((lu - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }
}

#[test]
fn det_beta_matches_enumeration_for_fractional_beta() {
    for (t, beta) in [0.5, 2.0, 3.0, -0.7].into_iter().enumerate() {
        let mut r = rng(13, t as u64);
        let m = random_matrix(6, &mut r);
        let oracle = brute_det_beta(&m, beta);
        let v = det_alpha(&m, beta).unwrap();
        assert!((v - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "beta={beta}");
    }
}

#[test]
fn monte_carlo_local_times_recover_green_function() {
    let chain = examples::nonsymmetric_four_state();
    let g = green_function(&chain).unwrap();
    for x0 in 0..chain.n() {
        let fields = simulate_paths(&chain, x0, &StopRule::Absorb, 40_000, 100 + x0 as u64).unwrap();
        for y in 0..chain.n() {
            let xs: Vec<f64> = fields.iter().map(|l| l.0[y]).collect();
            let z = Estimate::from_samples(&xs).z(g[(x0, y)]);
            assert!(z.abs() < GATE, "g({x0},{y}): z = {z}");
        }
    }
}

#[test]
fn permanental_samples_match_closed_form_laplace() {
    let k = random_psd(4, &mut rng(14, 0));
    for beta in [2.0, 1.0, 0.5] {
        let spec = PermanentalSpec::new(k.clone(), beta).unwrap();
        let fields = permanental_fields(&k, beta, 50_000, 7).unwrap();
        for alpha in [
            vec![0.5, 0.0, 1.0, 0.2],
            vec![1.5, 1.5, 1.5, 1.5],
            vec![0.0, 0.0, 3.0, 0.0],
        ] {
            let a = WeightVector::new(alpha).unwrap();
            let est = empirical_laplace(&fields, a.as_slice(), 0.5);
            let z = est.z(laplace_closed_form(&spec, &a).unwrap());
            assert!(z.abs() < GATE, "beta={beta}: z = {z}");
        }
    }
}

#[test]
fn cox_samples_match_mu_laplace() {
    let k = random_psd(3, &mut rng(15, 0));
    let w = vec![0.5, 1.0, 2.0];
    let op = OperatorMatrix::new(k.clone(), w.clone()).unwrap();
    let sampler = GaussianSampler::new(&k).unwrap();
    let measure = SiteMeasure::new(w).unwrap();
    let f = TestFunction::new(vec![0.4, 1.2, 0.1]).unwrap();
    // (α/2) ψ_α with ψ_α a sum of 2/α squares.
    for (alpha, m) in [(1.0, 2usize), (2.0, 1), (0.5, 4)] {
        let configs = cox_samples(&measure, 60_000, 21 + m as u64, |r| {
            FieldSample(sampler.sample_squares(m, r)).scaled(alpha / 2.0)
        });
        let z = empirical_cox_laplace(&configs, f.values()).z(mu_laplace(&op, alpha, &f).unwrap());
        assert!(z.abs() < GATE, "alpha={alpha}: z = {z}");
    }
}

#[test]
fn shifted_cox_samples_match_gaussian_integral() {
    let k = random_psd(3, &mut rng(16, 0));
    let op = OperatorMatrix::new(k, vec![1.0, 0.7, 1.3]).unwrap();
    let f = TestFunction::new(vec![0.3, 0.9, 0.5]).unwrap();
    for r in [0.0, 0.8, 1.7] {
        let configs = shifted_cox_samples(&op, r, 1, 60_000, 31).unwrap();
        let z = empirical_cox_laplace(&configs, f.values()).z(shifted_field_laplace(&op, r, &f).unwrap());
        assert!(z.abs() < GATE, "r={r}: z = {z}");
    }
}

#[test]
fn p5_on_nonsymmetric_pair() {
    let g = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.1, 0.8]]).unwrap();
    assert!(p5_weight_has_finite_variance(&g).unwrap());
    for alpha in [vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 2.0]] {
        let a = WeightVector::new(alpha).unwrap();
        let est = p5_estimate(&g, &a, 100_000, 5).unwrap();
        let target = 1.0 / matrix::det(&g.scale_rows(a.as_slice()).plus_identity()).unwrap();
        assert!(est.ratio.z(target).abs() < GATE);
        assert!(est.normalization.z(est.normalization_target).abs() < GATE);
    }
}

#[test]
fn p5_variance_condition_detects_heavy_weights() {
    let g = Matrix::from_rows(&[vec![1.0, 3.0], vec![-2.5, 1.0]]).unwrap();
    assert!(!p5_weight_has_finite_variance(&g).unwrap());
}

#[test]
fn palm_factorization_holds() {
    let k = random_psd(3, &mut rng(17, 0));
    let op = OperatorMatrix::new(k, vec![0.8, 1.0, 1.2]).unwrap();
    let f = TestFunction::new(vec![0.5, 0.2, 1.0]).unwrap();
    for b in 0..3 {
        let c = palm_check(&op, b, &f, 80_000, 40 + b as u64).unwrap();
        assert!(c.z().abs() < GATE, "site {b}: z = {}", c.z());
    }
}

#[test]
fn plus_one_transform_needs_row_masses_too() {
    // Column masses 0.9, 0, 0.9; the first row carries mass 1.8.
    let j = Matrix::from_rows(&[vec![0.9, 0.0, 0.9], vec![0.0; 3], vec![0.0; 3]]).unwrap();
    let jop = OperatorMatrix::uniform(j, 1.0).unwrap();
    let verdict = mass_condition_check(&jop);
    assert!(verdict.columns_pass && !verdict.rows_pass);
    let bar = plus_one_transform(&kernel_from_resolvent(&jop).unwrap()).unwrap();
    assert!((bar.kernel().min_entry() + 4.0 / 11.0).abs() < 1e-12);
}

#[test]
fn critical_density_reference_value() {
    // ζ(3/2) (4π)^{-3/2}
    let reference = 2.612_375_348_685_488 * (4.0 * std::f64::consts::PI).powf(-1.5);
    for q in [Quadrature::Series, Quadrature::Radial] {
        let v = critical_density(3, 1.0, q).unwrap();
        assert!(rel_err(reference, v) < 1e-6, "{q:?}: {v}");
    }
}
