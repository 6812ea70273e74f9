mod common;

use common::*;
use modewise_jl::cpfit::{
    compressed_ls_coefficients, cp_als, decoupled_ls_slice, decoupled_mode_solve, factor_update,
    ls_coefficients, mode_slice, random_model, reconstruction_error, relative_coefficient_error,
    relative_coefficient_norm, relative_tensor_norm, solve_mode, synthesize, AlsOptions, AlsSketch,
};
use modewise_jl::diagnostics::{
    coefficient_norm_bound, coherence, subgaussian_coherence_check, NormBound,
};
use modewise_jl::tensor::vectorize;
use modewise_jl::{
    CpModel, DenseTensor, Error, MapKind, Matrix, SeededRng, SketchPlan, SynthKind, SynthSpec, C64,
};
use proptest::prelude::*;

fn model_from(weights: Vec<C64>, factors: Vec<Matrix>) -> CpModel {
    CpModel::new(weights, factors).unwrap()
}

fn random_weights(r: usize, rng: &mut SeededRng) -> Vec<C64> {
    (0..r).map(|_| complex_normal(rng) + c(2.0)).collect()
}

/// Max off-diagonal `|G[k,h]|` of the dense basis Gram.
fn dense_basis_coherence(factors: &[Matrix]) -> f64 {
    let g = dense_basis_gram(factors);
    let r = g.len();
    (0..r)
        .flat_map(|k| (0..r).filter(move |&h| h != k).map(move |h| (k, h)))
        .map(|(k, h)| g[k][h].norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coherence_chain_and_dense_oracle(
        shape in prop::collection::vec(2usize..=6, 1..=3),
        r in 1usize..=5,
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let factors = unit_factors(&shape, r, &mut rng);
        let rep = coherence(&model_from(vec![c(1.0); r], factors.clone()));
        let prod: f64 = rep.mode_coherence.iter().product();
        let d = shape.len() as i32;
        let slack = 1e-12;
        prop_assert!(rep.basis_coherence >= 0.0);
        prop_assert!(rep.basis_coherence <= prod + slack);
        prop_assert!(prod <= rep.max_coherence.powi(d) + slack);
        prop_assert!(rep.max_coherence <= 1.0 + slack);
        prop_assert!((rep.basis_coherence - dense_basis_coherence(&factors)).abs() <= 1e-12);
    }

    #[test]
    fn coherence_ignores_unit_phases(shape in prop::collection::vec(2usize..=5, 2..=3), seed: u64) {
        let mut rng = SeededRng::new(seed);
        let r = 3;
        let factors = unit_factors(&shape, r, &mut rng);
        let base = coherence(&model_from(vec![c(1.0); r], factors.clone()));
        let rotated: Vec<Matrix> = factors
            .iter()
            .map(|f| {
                let phases: Vec<C64> = (0..r)
                    .map(|_| C64::from_polar(1.0, 6.0 * rng.standard_normal()))
                    .collect();
                Matrix::from_fn(f.rows(), r, |i, k| f[(i, k)] * phases[k]).unwrap()
            })
            .collect();
        let rot = coherence(&model_from(vec![c(1.0); r], rotated));
        prop_assert!((base.basis_coherence - rot.basis_coherence).abs() <= 1e-12);
        for (a, b) in base.mode_coherence.iter().zip(&rot.mode_coherence) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn norm_bound_holds_for_admissible_models(
        n in 8usize..=24,
        r in 2usize..=4,
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let factors = unit_factors(&[n, n, n], r, &mut rng);
        let model = model_from(random_weights(r, &mut rng), factors.clone());
        let rep = coherence(&model);
        prop_assume!(rep.admissible);
        let b = coefficient_norm_bound(&model);
        // Dense oracle for ‖α‖² / ‖Y‖².
        let y = naive_cp(model.weights(), &factors);
        let alpha_sq: f64 = model.weights().iter().map(|w| w.norm_sqr()).sum();
        let ratio = alpha_sq / vnorm(y.data()).powi(2);
        prop_assert!((ratio - b.ratio).abs() <= 1e-10 * ratio);
        prop_assert!(b.bound.contains(ratio), "{:?} misses {}", b.bound, ratio);
        let bounded = matches!(b.bound, NormBound::Bounded { .. });
        prop_assert!(bounded);
    }

    #[test]
    fn exact_coefficients_recovered(
        shape in prop::collection::vec(3usize..=7, 2..=3),
        r in 1usize..=3,
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let factors = unit_factors(&shape, r, &mut rng);
        let alpha = random_weights(r, &mut rng);
        let x = naive_cp(&alpha, &factors);
        let sol = ls_coefficients(&x, &factors).unwrap();
        prop_assume!(sol.gram_condition < 1e8);
        prop_assert!(rel_err(&sol.coefficients, &alpha) <= 1e-8);
        prop_assert!(sol.residual <= 1e-8 * vnorm(x.data()));
        let identity = SketchPlan::identity(&shape, false).unwrap();
        let comp = compressed_ls_coefficients(&x, &factors, &identity).unwrap();
        prop_assert!(rel_err(&comp.coefficients, &sol.coefficients) <= 1e-12);
    }

    #[test]
    fn ls_matches_dense_normal_equations(
        shape in prop::collection::vec(2usize..=5, 2..=3),
        r in 1usize..=3,
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let factors = unit_factors(&shape, r, &mut rng);
        let x = random_tensor(&shape, &mut rng);
        let columns: Vec<Vec<C64>> = (0..r)
            .map(|k| naive_outer(&factors.iter().map(|f| f.column(k)).collect::<Vec<_>>()).into_data())
            .collect();
        let design = Matrix::from_columns(&columns).unwrap();
        let sol = ls_coefficients(&x, &factors).unwrap();
        prop_assume!(sol.gram_condition < 1e6);
        let expected = naive_ls(&design, x.data());
        prop_assert!(rel_err(&sol.coefficients, &expected) <= 1e-8);
        let fitted = naive_matvec(&design, &sol.coefficients);
        let resid: Vec<C64> = x.data().iter().zip(&fitted).map(|(a, b)| a - b).collect();
        prop_assert!((vnorm(&resid) - sol.residual).abs() <= 1e-8 * vnorm(x.data()));
    }

    #[test]
    fn sketched_design_matches_sketched_basis(
        shape in prop::collection::vec(3usize..=6, 2..=3),
        kind in prop_oneof![Just(MapKind::Gaussian), Just(MapKind::Fjlt)],
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let r = 2;
        let factors = unit_factors(&shape, r, &mut rng);
        let targets: Vec<usize> = shape.iter().map(|&n| n - 1).collect();
        let plan = SketchPlan::new(&shape, &targets, kind, None, seed).unwrap();
        let x = random_tensor(&shape, &mut rng);
        let comp = compressed_ls_coefficients(&x, &factors, &plan).unwrap();
        // Oracle: sketch dense basis tensors and the data, then solve densely.
        let columns: Vec<Vec<C64>> = (0..r)
            .map(|k| {
                let b = naive_outer(&factors.iter().map(|f| f.column(k)).collect::<Vec<_>>());
                vectorize(&plan.sketch_modewise(&b).unwrap())
            })
            .collect();
        let design = Matrix::from_columns(&columns).unwrap();
        let target = vectorize(&plan.sketch_modewise(&x).unwrap());
        prop_assume!(comp.gram_condition < 1e6);
        prop_assert!(rel_err(&comp.coefficients, &naive_ls(&design, &target)) <= 1e-8);
    }

    #[test]
    fn decoupled_sweep_equals_joint_solve(
        shape in prop::collection::vec(2usize..=5, 3),
        r in 1usize..=3,
        mode in 0usize..3,
        seed: u64,
    ) {
        let mut rng = SeededRng::new(seed);
        let factors = unit_factors(&shape, r, &mut rng);
        let x = random_tensor(&shape, &mut rng);
        let joint = match solve_mode(&x, &factors, mode, None) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let reduced: Vec<Matrix> = factors
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != mode)
            .map(|(_, f)| f.clone())
            .collect();
        match ls_coefficients(&mode_slice(&x, mode, 0).unwrap(), &reduced) {
            Ok(s) if s.gram_condition < 1e6 => {}
            _ => return Ok(()),
        }
        let decoupled = decoupled_mode_solve(&x, &factors, mode, None).unwrap();
        prop_assert_eq!((decoupled.rows(), decoupled.cols()), (shape[mode], r));
        prop_assert!(rel_err(decoupled.data(), joint.data()) <= 1e-8);
    }
}

#[test]
fn orthonormal_factors_preserve_coefficient_norm() {
    let mut rng = SeededRng::new(31);
    for _ in 0..20 {
        let r = 4;
        let factors: Vec<Matrix> = [6, 5, 7]
            .iter()
            .map(|&n| orthonormal_columns(n, r, &mut rng))
            .collect();
        let alpha = random_weights(r, &mut rng);
        let model = model_from(alpha.clone(), factors.clone());
        assert!(coherence(&model).basis_coherence <= 1e-12);
        let y = naive_cp(&alpha, &factors);
        let alpha_sq: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        assert!((vnorm(y.data()).powi(2) - alpha_sq).abs() <= 1e-10 * alpha_sq);
        assert!((model.norm_sqr() - alpha_sq).abs() <= 1e-10 * alpha_sq);
    }
}

#[test]
fn single_mode_orthogonality_zeroes_basis_coherence() {
    let mut rng = SeededRng::new(2);
    let mut factors = unit_factors(&[5, 5, 5], 3, &mut rng);
    factors[1] = orthonormal_columns(5, 3, &mut rng);
    let rep = coherence(&model_from(vec![c(1.0); 3], factors.clone()));
    assert!(rep.basis_coherence <= 1e-12);
    assert!(dense_basis_coherence(&factors) <= 1e-12);
    assert!(rep.mode_coherence[0] > 0.0);
}

#[test]
fn rank_one_has_zero_coherence() {
    let model = random_model(&SynthSpec {
        shape: vec![4, 4],
        rank: 1,
        kind: SynthKind::Gaussian,
        seed: 1,
    })
    .unwrap();
    let rep = coherence(&model);
    assert_eq!(rep.max_coherence, 0.0);
    assert_eq!(rep.basis_coherence, 0.0);
    assert!(rep.admissible);
}

#[test]
fn square_models_have_bounded_coherence() {
    for seed in 0..20 {
        let m = random_model(&SynthSpec {
            shape: vec![4, 4, 4],
            rank: 4,
            kind: SynthKind::Coherent { sigma: 0.3 },
            seed,
        })
        .unwrap();
        assert!(coherence(&m).max_coherence <= 1.0 + 1e-12);
    }
}

#[test]
fn gaussian_models_are_incoherent() {
    let stats = subgaussian_coherence_check(100, 10, 3, 50, 0).unwrap();
    assert_eq!(stats.per_trial.len(), 50);
    assert!(stats.max < 0.5, "max coherence {}", stats.max);
}

#[test]
fn non_unit_factors_rejected_and_normalized() {
    let f = Matrix::from_real(2, 1, &[3.0, 4.0]).unwrap();
    assert!(matches!(
        CpModel::new(vec![c(1.0)], vec![f.clone()]),
        Err(Error::NonUnitFactor { .. })
    ));
    let m = CpModel::normalized(vec![c(2.0)], vec![f]).unwrap();
    assert!((m.weights()[0] - c(10.0)).norm() < 1e-12);
    assert!((m.factors()[0][(0, 0)] - c(0.6)).norm() < 1e-12);
}

#[test]
fn degenerate_basis_is_reported() {
    let f = Matrix::from_real(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let x = DenseTensor::from_real(vec![3, 3], &[1.0; 9]).unwrap();
    assert!(matches!(
        ls_coefficients(&x, &[f.clone(), f]),
        Err(Error::DegenerateBasis {
            rank: 1,
            expected: 2
        })
    ));
}

#[test]
fn decoupled_slice_recovers_scaled_factor_entries() {
    let (model, x) = synthesize(&SynthSpec {
        shape: vec![6, 5, 4],
        rank: 2,
        kind: SynthKind::Gaussian,
        seed: 3,
    })
    .unwrap();
    let f = model.factors();
    for h in 0..5 {
        let a = decoupled_ls_slice(&x, f, 1, h, None).unwrap();
        for k in 0..2 {
            assert!((a[k] - f[1][(h, k)]).norm() <= 1e-8);
        }
    }
    // Identity sketch of the other modes changes nothing.
    let id = SketchPlan::identity(&[6, 5, 4], false).unwrap();
    let a = decoupled_ls_slice(&x, f, 2, 1, Some(&id)).unwrap();
    assert!(rel_err(&a, &[f[2][(1, 0)], f[2][(1, 1)]]) <= 1e-8);

    let alpha_prime = decoupled_mode_solve(&x, f, 0, None).unwrap();
    let updated = factor_update(&alpha_prime, model.weights()).unwrap();
    assert!(rel_err(updated.data(), f[0].data()) <= 1e-8);
    assert!(matches!(
        factor_update(&alpha_prime, &[c(1.0), c(0.0)]),
        Err(Error::ZeroWeight { index: 1, .. })
    ));
}

#[test]
fn metrics_on_trivial_inputs() {
    let x = random_tensor(&[3, 3], &mut SeededRng::new(0));
    assert!((relative_tensor_norm(x.data(), x.data()).unwrap() - 1.0).abs() < 1e-15);
    let zero = DenseTensor::zeros(vec![3, 3]).unwrap();
    assert!((reconstruction_error(&x, &zero).unwrap() - 1.0).abs() < 1e-15);
    let a = vec![c(1.0), c(-2.0)];
    let twice: Vec<C64> = a.iter().map(|v| v * 2.0).collect();
    assert!((relative_coefficient_norm(&a, &twice).unwrap() - 2.0).abs() < 1e-15);
    assert!((relative_coefficient_error(&a, &twice).unwrap() - 1.0).abs() < 1e-15);
    assert!(relative_tensor_norm(zero.data(), x.data()).is_err());
}

#[test]
fn als_is_monotone_and_fits_rank_one() {
    let (_, x) = synthesize(&SynthSpec {
        shape: vec![8, 7, 6],
        rank: 4,
        kind: SynthKind::Gaussian,
        seed: 11,
    })
    .unwrap();
    let fit = cp_als(
        &x,
        2,
        &AlsOptions {
            max_iters: 30,
            tol: 0.0,
            seed: 5,
            sketch: None,
        },
    )
    .unwrap();
    for w in fit.history.windows(2) {
        assert!(w[1].e_cpd <= w[0].e_cpd * (1.0 + 1e-10), "{:?}", w);
    }

    let (_, r1) = synthesize(&SynthSpec {
        shape: vec![9, 8, 7],
        rank: 1,
        kind: SynthKind::Gaussian,
        seed: 2,
    })
    .unwrap();
    let fit = cp_als(&r1, 1, &AlsOptions::default()).unwrap();
    assert!(fit.final_error() <= 1e-6);
}

#[test]
fn compressed_als_runs_and_is_reproducible() {
    let (_, x) = synthesize(&SynthSpec {
        shape: vec![12, 12, 12],
        rank: 2,
        kind: SynthKind::Gaussian,
        seed: 4,
    })
    .unwrap();
    let opts = AlsOptions {
        max_iters: 15,
        tol: 1e-9,
        seed: 8,
        sketch: Some(AlsSketch {
            kind: MapKind::Fjlt,
            ratio: 0.5,
        }),
    };
    let a = cp_als(&x, 2, &opts).unwrap();
    let b = cp_als(&x, 2, &opts).unwrap();
    assert_eq!(a.model, b.model);
    assert!(a.final_error() < 0.5, "e_cpd {}", a.final_error());
}

#[test]
fn als_rejects_bad_options() {
    let x = random_tensor(&[3, 3], &mut SeededRng::new(0));
    let zero_iters = AlsOptions {
        max_iters: 0,
        ..AlsOptions::default()
    };
    assert!(cp_als(&x, 1, &zero_iters).is_err());
    assert!(cp_als(&x, 0, &AlsOptions::default()).is_err());
    let zero = DenseTensor::zeros(vec![3, 3]).unwrap();
    assert!(cp_als(&zero, 1, &AlsOptions::default()).is_err());
}
