mod common;

use std::time::{Duration, Instant};

use common::*;
use permanental::existence::{
    default_r_grid, resolvent_nonneg_check, shifted_det_identity, vere_jones_check, WeightVector,
};
use permanental::fieldsampling::{
    cox_samples, empirical_cox_laplace, p5_estimate, p5_weight_has_finite_variance, FieldSample, GaussianSampler,
    SiteMeasure,
};
use permanental::harness::{
    default_alpha_panel, examples, run_c1_levy, run_c2_inverse_local_time, run_conjecture, run_id_classify,
    run_t2_isomorphism, BecondConfig, ConjectureConfig, ExperimentReport, DEFAULT_GATE, DEFAULT_N_MC,
};
use permanental::idcheck::{markov_factorization, signature_search};
use permanental::markovchain::{green_function, ChainKind, ChainSpec};
use permanental::matrix;
use permanental::permanents::det_alpha;
use permanental::pointprocess::{
    condition_b_check, critical_density, kernel_from_resolvent, mass_condition_check, mu_laplace, nu_r_laplace,
    plus_one_transform, shifted_cox_samples, shifted_field_laplace, zeta_cox_estimate, zeta_forms, zeta_laplace,
    OperatorMatrix, Quadrature, TestFunction,
};
use permanental::{Error, Matrix};
use rand::Rng;

const SEED: u64 = 20_261_016;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn from_reports(reports: &[ExperimentReport]) -> Outcome {
    let rows: usize = reports.iter().map(|r| r.rows.len()).sum();
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.failures()
                .into_iter()
                .map(move |f| format!("{}: {}", r.name, f.description))
        })
        .collect();
    if failed.is_empty() {
        Outcome::new(true, format!("{rows} rows"))
    } else {
        Outcome::new(
            false,
            format!("{} of {rows} rows failed; first: {}", failed.len(), failed[0]),
        )
    }
}

fn det_alpha_specializations() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..100 {
        let m = random_matrix(5, &mut rng(SEED, t));
        let det = det_alpha(&m, -1.0).unwrap();
        let perm = det_alpha(&m, 1.0).unwrap();
        worst = worst
            .max(rel_err(matrix::det(&m).unwrap(), det))
            .max(rel_err(ryser_permanent(&m), perm));
    }
    Outcome::new(worst <= 1e-10, format!("max relative error {worst:.2e}"))
}

fn shift_identity() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..100 {
        let mut r = rng(SEED + 1, t);
        let g = random_psd(6, &mut r);
        let alpha = WeightVector::new((0..6).map(|_| 2.0 * r.random::<f64>()).collect()).unwrap();
        for delta in [0.1, 1.0, 10.0] {
            let (lhs, rhs) = shifted_det_identity(&g, &alpha, delta).unwrap();
            worst = worst.max(rel_err(lhs, rhs));
        }
    }
    Outcome::new(worst <= 1e-10, format!("max relative error {worst:.2e}"))
}

fn existence_pipeline() -> Outcome {
    let grid = default_r_grid();
    for t in 0..20 {
        let chain = random_transient_chain(4, &mut rng(SEED + 2, t));
        let g = green_function(&chain).unwrap();
        let v = resolvent_nonneg_check(&g, &grid).unwrap();
        if !v.passed() {
            return Outcome::new(false, format!("chain {t}: {v:?}"));
        }
        for beta in [0.5, 1.0, 2.0, 3.0] {
            let v = vere_jones_check(&g, beta, &grid, 5).unwrap();
            if !v.passed() {
                return Outcome::new(false, format!("chain {t}, beta {beta}: {v:?}"));
            }
        }
    }
    Outcome::new(true, "20 chains, 4 indices, order <= 5")
}

fn id_classification() -> Outcome {
    let mut kernels = vec![
        green_function(&examples::symmetric_four_state()).unwrap(),
        green_function(&examples::two_state()).unwrap(),
        green_function(&examples::nonsymmetric_four_state()).unwrap(),
    ];
    for t in 0..20 {
        let mut r = rng(SEED + 3, t);
        let g = green_function(&random_transient_chain(3 + t as usize % 3, &mut r)).unwrap();
        let n = g.n();
        let signs: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let left: Vec<f64> = signs.iter().map(|s| s * (0.5 + r.random::<f64>())).collect();
        kernels.push(g.clone());
        kernels.push(g.scale_rows(&left).scale_cols(&signs));
    }
    let mut worst = 0.0f64;
    for (i, k) in kernels.iter().enumerate() {
        let fac = match markov_factorization(k) {
            Ok(f) => f,
            Err(e) => return Outcome::new(false, format!("kernel {i}: {e}")),
        };
        if let Err(e) = fac.validate(1e-10) {
            return Outcome::new(false, format!("kernel {i}: {e}"));
        }
        worst = worst.max(fac.reconstruct().max_abs_diff(k) / k.max_abs());
        let chain = ChainSpec::from_generator(fac.generator(), ChainKind::Transient).unwrap();
        let g = green_function(&chain).unwrap();
        worst = worst.max(g.max_abs_diff(&fac.green) / fac.green.max_abs());
    }
    let triple = examples::gaussian_triple();
    let not_id = signature_search(&triple).unwrap().is_none()
        && matches!(markov_factorization(&triple), Err(Error::NotInfinitelyDivisible))
        && run_id_classify(&triple, Some(false), 4).unwrap().pass;
    Outcome::new(
        worst <= 1e-10 && not_id,
        format!(
            "{} ID kernels, round-trip {worst:.2e}; triple not ID: {not_id}",
            kernels.len()
        ),
    )
}

fn isomorphism() -> Outcome {
    let chain = examples::symmetric_four_state();
    let panel = default_alpha_panel(4, SEED);
    from_reports(&[run_t2_isomorphism(&chain, 0, &panel, DEFAULT_N_MC, SEED, DEFAULT_GATE).unwrap()])
}

fn levy_measure() -> Outcome {
    let runs = [
        examples::two_state(),
        examples::symmetric_four_state(),
        examples::nonsymmetric_four_state(),
    ];
    let reports: Vec<ExperimentReport> = runs
        .iter()
        .enumerate()
        .map(|(i, chain)| {
            let panel = default_alpha_panel(chain.n(), SEED + i as u64);
            run_c1_levy(chain, 0, &panel, DEFAULT_N_MC, SEED + i as u64, DEFAULT_GATE).unwrap()
        })
        .collect();
    from_reports(&reports)
}

fn inverse_local_time() -> Outcome {
    let chain = examples::four_state_cycle();
    let panel = default_alpha_panel(4, SEED);
    from_reports(&[
        run_c2_inverse_local_time(&chain, 0, &[0.5, 2.0], &panel, 1.0, DEFAULT_N_MC, SEED, DEFAULT_GATE).unwrap(),
    ])
}

fn point_process_identities() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..50 {
        let mut r = rng(SEED + 4, t);
        let k = random_psd(5, &mut r);
        let w: Vec<f64> = (0..5).map(|_| 0.2 + 1.5 * r.random::<f64>()).collect();
        let f = TestFunction::new((0..5).map(|_| 2.0 * r.random::<f64>()).collect()).unwrap();
        let op = OperatorMatrix::new(k, w).unwrap();
        let rr = 3.0 * r.random::<f64>();
        let shifted = shifted_field_laplace(&op, rr, &f).unwrap();
        let factored = mu_laplace(&op, 1.0, &f).unwrap().sqrt() * nu_r_laplace(&op, rr, &f).unwrap();
        worst = worst.max(rel_err(shifted, factored));
        worst = worst.max(zeta_forms(&op, 1.0 + rr, 1.0, &f).unwrap().max_rel_spread());
    }
    let config = BecondConfig {
        grid_sites: 16,
        ..BecondConfig::default()
    };
    let gas = config.gas().unwrap();
    let torus = gas.bose_kernel().unwrap();
    let tf = config.test_function().unwrap();
    let rho_c = gas.rho_c().unwrap();
    worst = worst.max(zeta_forms(&torus, gas.rho, rho_c, &tf).unwrap().max_rel_spread());
    let algebraic = worst <= 1e-10;

    // Cox sampling on a small kernel.
    let n = 100_000;
    let k = random_psd(3, &mut rng(SEED + 5, 0));
    let w = vec![0.6, 1.0, 1.4];
    let op = OperatorMatrix::new(k.clone(), w.clone()).unwrap();
    let f = TestFunction::new(vec![0.5, 1.0, 0.2]).unwrap();
    let sampler = GaussianSampler::new(&k).unwrap();
    let measure = SiteMeasure::new(w).unwrap();
    let mu = cox_samples(&measure, n, SEED + 6, |r| {
        FieldSample(sampler.sample_squares(2, r)).scaled(0.5)
    });
    let mut zs = vec![empirical_cox_laplace(&mu, f.values()).z(mu_laplace(&op, 1.0, &f).unwrap())];
    let shifted = shifted_cox_samples(&op, 1.2, 1, n, SEED + 7).unwrap();
    zs.push(empirical_cox_laplace(&shifted, f.values()).z(shifted_field_laplace(&op, 1.2, &f).unwrap()));
    let zeta = zeta_cox_estimate(&op, 1.8, 1.0, &f, n, SEED + 8).unwrap();
    zs.push(zeta.z(zeta_laplace(&op, 1.8, 1.0, &f).unwrap()));
    let zeta_torus = zeta_cox_estimate(&torus, gas.rho, rho_c, &tf, n, SEED + 9).unwrap();
    zs.push(zeta_torus.z(zeta_laplace(&torus, gas.rho, rho_c, &tf).unwrap()));
    let zmax = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    Outcome::new(
        algebraic && zmax <= DEFAULT_GATE,
        format!(
            "max algebraic error {worst:.2e}, max |z| {zmax:.2} over {} Cox panels",
            zs.len()
        ),
    )
}

fn random_admissible_resolvent(t: u64) -> OperatorMatrix {
    let mut r = rng(SEED + 10, t);
    loop {
        let n = 2 + r.random_range(0..5usize);
        let j = Matrix::from_fn(n, |_, _| {
            if r.random::<f64>() < 0.6 {
                r.random::<f64>()
            } else {
                0.0
            }
        });
        let rows = (0..n).map(|i| j.row(i).iter().sum::<f64>()).fold(0.0, f64::max);
        let cols = (0..n).map(|c| j.column(c).iter().sum::<f64>()).fold(0.0, f64::max);
        let mass = rows.max(cols);
        if mass == 0.0 {
            continue;
        }
        let j = j.scale((0.3 + 0.69 * r.random::<f64>()) / mass);
        let op = OperatorMatrix::uniform(j, 1.0).unwrap();
        if op.spectral_radius().unwrap() < 1.0 {
            return op;
        }
    }
}

fn plus_one_condition() -> Outcome {
    let mut min_entry = f64::INFINITY;
    for t in 0..50 {
        let j = random_admissible_resolvent(t);
        let k = kernel_from_resolvent(&j).unwrap();
        if !condition_b_check(&k, 1.0).unwrap().passed() || !mass_condition_check(&j).passed() {
            return Outcome::new(false, format!("instance {t} is not admissible"));
        }
        min_entry = min_entry.min(plus_one_transform(&k).unwrap().kernel().min_entry());
    }
    Outcome::new(min_entry >= -1e-10, format!("50 instances, min entry {min_entry:.3e}"))
}

fn critical_density_agreement() -> Outcome {
    let series = critical_density(3, 1.0, Quadrature::Series).unwrap();
    let radial = critical_density(3, 1.0, Quadrature::Radial).unwrap();
    let rel = rel_err(series, radial);
    let divergent = [Quadrature::Series, Quadrature::Radial]
        .into_iter()
        .all(|q| matches!(critical_density(2, 1.0, q), Err(Error::DivergentIntegral { d: 2 })));
    Outcome::new(
        rel <= 1e-6 && divergent,
        format!("rho_c = {series:.8} vs {radial:.8} (rel {rel:.1e}); d = 2 divergent: {divergent}"),
    )
}

fn conjecture_suite() -> Outcome {
    from_reports(&[run_conjecture(&ConjectureConfig::default(), SEED).unwrap()])
}

fn self_normalization() -> Outcome {
    let g = green_function(&examples::two_state()).unwrap();
    if g.is_symmetric(1e-12) {
        return Outcome::new(false, "kernel is symmetric");
    }
    if !p5_weight_has_finite_variance(&g).unwrap() {
        return Outcome::new(false, "weight variance is infinite");
    }
    let mut zmax = 0.0f64;
    for (i, alpha) in [vec![0.5, 0.5], vec![1.0, 0.0], vec![2.0, 1.0]].into_iter().enumerate() {
        let a = WeightVector::new(alpha).unwrap();
        let est = p5_estimate(&g, &a, 200_000, SEED + 20 + i as u64).unwrap();
        let target = 1.0 / matrix::det(&g.scale_rows(a.as_slice()).plus_identity()).unwrap();
        zmax = zmax
            .max(est.normalization.z(est.normalization_target).abs())
            .max(est.ratio.z(target).abs());
    }
    Outcome::new(zmax <= DEFAULT_GATE, format!("max |z| {zmax:.2}"))
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("det_alpha specializations", 10, det_alpha_specializations),
        ("shift identity", 5, shift_identity),
        ("existence pipeline", 120, existence_pipeline),
        ("ID classification", 30, id_classification),
        ("local time isomorphism", 180, isomorphism),
        ("Levy measure of psi/2", 120, levy_measure),
        ("inverse local time", 180, inverse_local_time),
        ("point process identities", 180, point_process_identities),
        ("plus-one condition (B)", 30, plus_one_condition),
        ("critical density", 10, critical_density_agreement),
        ("conjecture suite", 300, conjecture_suite),
        ("self-normalized weights", 60, self_normalization),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*limit);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {} ({:.2}s, limit {limit}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
