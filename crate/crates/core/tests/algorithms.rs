mod common;

use blockive::algorithms::{
    apply_extraction, auxiva_weighted_covariances, gradient_delta, nu, solve_w, AlgoConfig, Init, Method,
};
use blockive::eval::spectral_isinr;
use blockive::model::{block_covariances, Diagnostics, ExtractionState, MixingVectors};
use blockive::simulate::{synthetic_csv_mixture, SyntheticSpec};
use blockive::stft::{self, SpectralTensor, Waveform};
use blockive::{Error, SeparatingVectors};
use common::oracles::*;
use common::*;
use num_complex::Complex64;
use rand::Rng;

fn explicit(w: &SeparatingVectors, max_iter: usize, blocks: usize) -> AlgoConfig {
    AlgoConfig {
        blocks,
        max_iter,
        init: Init::Explicit(w.clone()),
        ..AlgoConfig::default()
    }
}

#[test]
fn one_block_auxiliary_update_is_overiva() {
    let mut r = rng(11);
    for _ in 0..5 {
        let x = random_tensor(&mut r, 4, 200, 3);
        let w0 = random_w1(&mut r, 4, 3);
        let got = Method::BlockAuxive.run(&x, &explicit(&w0, 1, 1), None).unwrap();
        let want = overiva_step(&w0, &x);
        assert!(
            max_diff(&got.state.w, &want) < 1e-12,
            "{}",
            max_diff(&got.state.w, &want)
        );
        // two iterations follow the same map
        let got2 = Method::Overiva.run(&x, &explicit(&w0, 2, 7), None).unwrap();
        let mut w1 = want.clone();
        w1 = overiva_step(&w1, &x);
        assert!(max_diff(&got2.state.w, &w1) < 1e-11);
    }
}

#[test]
fn one_block_gradient_update_is_ogive() {
    let mut r = rng(12);
    for _ in 0..5 {
        let x = random_tensor(&mut r, 4, 200, 3);
        let w0 = random_w1(&mut r, 4, 3);
        let got = Method::BogiveW.run(&x, &explicit(&w0, 1, 1), None).unwrap();
        let want = ogive_step(&w0, &x, 0.2);
        assert!(
            max_diff(&got.state.w, &want) < 1e-12,
            "{}",
            max_diff(&got.state.w, &want)
        );
    }
}

#[test]
fn nu_of_gaussian_is_half_normal_mean() {
    let mut r = rng(13);
    let n = 100_000;
    let u = cn_vec(&mut r, n);
    let v = nu(&u, 1, n)[0];
    let mean = std::f64::consts::PI.sqrt() / 2.0;
    let se = (1.0 - std::f64::consts::PI / 4.0).sqrt() / (n as f64).sqrt();
    assert!((v.re - mean).abs() < 3.0 * se, "{} vs {mean}", v.re);
    assert!(v.im.abs() < 1e-12);
}

#[test]
fn nu_of_constant_estimate_is_one() {
    let u = vec![Complex64::new(1.0, 0.0); 16];
    assert!((nu(&u, 1, 16)[0] - 1.0).norm() < 1e-15);
}

#[test]
fn gradient_vanishes_at_truth_with_more_data() {
    let mut norms = Vec::new();
    for block_len in [1000, 4000] {
        let mut acc = 0.0;
        for seed in 0..5 {
            let m = synthetic_csv_mixture(&SyntheticSpec::new(8, 3, 3, block_len), seed).unwrap();
            let blocks = block_covariances(&m.x, 3).unwrap();
            let st = ExtractionState::new(m.w.normalized_to(0), &blocks).unwrap();
            let delta = gradient_delta(&st, &m.x, &blocks).unwrap();
            acc += delta.chunks(3).map(norm).fold(0.0, f64::max);
        }
        norms.push(acc / 5.0);
    }
    assert!(norms[1] < norms[0], "{norms:?}");
    assert!(norms[1] <= 0.1, "{norms:?}");
}

#[test]
fn gradient_is_invariant_to_per_bin_phase() {
    let mut r = rng(14);
    let (bins, n, d) = (3, 300, 3);
    let x = random_tensor(&mut r, bins, n, d);
    let phases: Vec<Complex64> = (0..bins).map(|k| Complex64::from_polar(1.0, 0.7 + k as f64)).collect();
    let mut rotated = x.coeffs().to_vec();
    for k in 0..bins {
        for v in &mut rotated[k * n * d..(k + 1) * n * d] {
            *v *= phases[k];
        }
    }
    let xr = x.with_coeffs(rotated, d).unwrap();
    let w = random_w1(&mut r, bins, d);
    let b = block_covariances(&x, 2).unwrap();
    let br = block_covariances(&xr, 2).unwrap();
    let d1 = gradient_delta(&ExtractionState::new(w.clone(), &b).unwrap(), &x, &b).unwrap();
    let d2 = gradient_delta(&ExtractionState::new(w, &br).unwrap(), &xr, &br).unwrap();
    for (a, b) in d1.iter().zip(&d2) {
        assert!((a - b).norm() < 1e-12);
    }
}

fn synthetic_isinr(method: Method, seed: u64, max_iter: usize) -> (f64, f64) {
    let m = synthetic_csv_mixture(&SyntheticSpec::new(4, 2, 2, 500), seed).unwrap();
    let cfg = AlgoConfig {
        blocks: 2,
        max_iter,
        step: 0.2,
        ..AlgoConfig::default()
    };
    let res = method.run(&m.x, &cfg, None).unwrap();
    let db = spectral_isinr(&res.state, 0, &m.soi_image, &m.background_image).unwrap();
    (db.block_mean.value, res.elapsed.as_secs_f64())
}

#[test]
fn gradient_and_auxiliary_extract_synthetic_source() {
    let mut grad = Vec::new();
    let mut aux = Vec::new();
    let (mut t_grad, mut t_aux) = (0.0, 0.0);
    for seed in 0..20 {
        let (g, tg) = synthetic_isinr(Method::BogiveW, seed, 1000);
        let (a, ta) = synthetic_isinr(Method::BlockAuxive, seed, 100);
        grad.push(g);
        aux.push(a);
        t_grad += tg;
        t_aux += ta;
    }
    let (mg, ma) = (median(&mut grad), median(&mut aux));
    assert!(mg > 5.0, "gradient median {mg}");
    assert!(ma >= mg, "auxiliary {ma} < gradient {mg}");
    assert!(5.0 * t_aux <= t_grad, "time {t_aux} vs {t_grad}");
}

#[test]
fn silent_input_is_degenerate() {
    let x = SpectralTensor::zeros(3, 50, 2, config_for(3), 16000);
    for m in [Method::BogiveW, Method::BlockAuxive] {
        let err = m.run(&x, &AlgoConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::DegenerateCovariance { .. }), "{err:?}");
    }
}

#[test]
fn huge_tolerance_stops_after_one_iteration() {
    let mut r = rng(15);
    let x = random_tensor(&mut r, 3, 100, 2);
    let cfg = AlgoConfig {
        tol: 1e12,
        ..AlgoConfig::default()
    };
    let res = Method::BogiveW.run(&x, &cfg, None).unwrap();
    assert_eq!(res.iterations(), 1);
    assert!(res.converged);
}

#[test]
fn piloted_run_needs_a_pilot() {
    let mut r = rng(16);
    let x = random_tensor(&mut r, 3, 100, 2);
    assert!(matches!(
        Method::PilotedBlockAuxive.run(&x, &AlgoConfig::default(), None),
        Err(Error::Config(_))
    ));
}

#[test]
fn unit_frame_norms_give_plain_covariance() {
    let mut r = rng(17);
    let n = 64;
    let mut coeffs = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let phase: f64 = r.random_range(0.0..std::f64::consts::TAU);
        coeffs.push(Complex64::from_polar(1.0, phase));
        coeffs.push(cn(&mut r));
    }
    let x = SpectralTensor::from_raw(coeffs, 1, n, 2, config_for(1), 16000).unwrap();
    let blocks = block_covariances(&x, 2).unwrap();
    let v = auxiva_weighted_covariances(&SeparatingVectors::unit(1, 2, 0), &x, &blocks, None).unwrap();
    for t in 0..2 {
        for (a, b) in v.get(0, t).iter().zip(blocks.get(0, t)) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}

#[test]
fn single_frame_blocks_weight_by_inverse_norm() {
    let mut r = rng(18);
    let x = random_tensor(&mut r, 2, 3, 2);
    let w = random_w1(&mut r, 2, 2);
    let blocks = block_covariances(&x, 3).unwrap();
    let v = auxiva_weighted_covariances(&w, &x, &blocks, None).unwrap();
    for l in 0..3 {
        let rl = (0..2)
            .map(|k| dot_h(w.get(k), x.frame(k, l)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        for k in 0..2 {
            let f = x.frame(k, l);
            let got = v.get(k, l);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((got[i * 2 + j] - f[i] * f[j].conj() / rl).norm() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn solve_identity_system() {
    // two frames with C = I and unit frame norms under w = e_1
    let one = Complex64::new(1.0, 0.0);
    let x = SpectralTensor::from_raw(vec![one, one, one, -one], 1, 2, 2, config_for(1), 16000).unwrap();
    let blocks = block_covariances(&x, 1).unwrap();
    let st = ExtractionState::new(SeparatingVectors::unit(1, 2, 0), &blocks).unwrap();
    let v = auxiva_weighted_covariances(&st.w, &x, &blocks, None).unwrap();
    let (w, ridges) = solve_w(&v, &st).unwrap();
    assert_eq!(ridges, 0);
    let w = w.get(0);
    assert!(w[1].norm() < 1e-15);
    let quad = dot_h(w, &mat_vec(v.get(0, 0), 2, w)).re;
    assert!((quad - 1.0).abs() < 1e-14);
}

#[test]
fn solve_normalizes_over_blocks() {
    let mut r = rng(19);
    let x = random_tensor(&mut r, 4, 300, 3);
    let blocks = block_covariances(&x, 3).unwrap();
    let st = ExtractionState::new(random_w1(&mut r, 4, 3), &blocks).unwrap();
    let v = auxiva_weighted_covariances(&st.w, &x, &blocks, None).unwrap();
    let (w, _) = solve_w(&v, &st).unwrap();
    for k in 0..4 {
        let s: f64 = (0..3)
            .map(|t| dot_h(w.get(k), &mat_vec(v.get(k, t), 3, w.get(k))).re)
            .sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn orthogonal_constraint_holds_after_every_iteration() {
    let mut r = rng(20);
    let x = random_tensor(&mut r, 3, 200, 3);
    for m in [Method::BogiveW, Method::BlockAuxive] {
        for iters in 1..5 {
            let res = m
                .run(
                    &x,
                    &AlgoConfig {
                        blocks: 2,
                        max_iter: iters,
                        ..AlgoConfig::default()
                    },
                    None,
                )
                .unwrap();
            for k in 0..3 {
                for t in 0..2 {
                    assert!((dot_h(res.state.w.get(k), res.state.a.get(k, t)) - 1.0).norm() < 1e-10);
                }
            }
        }
    }
}

fn manual_state(w: SeparatingVectors, a: MixingVectors) -> ExtractionState {
    let n = w.bins() * a.blocks();
    ExtractionState {
        w,
        a,
        sigma: vec![1.0; n],
        iteration: 0,
        trace: Vec::new(),
        diagnostics: Diagnostics::default(),
    }
}

#[test]
fn true_vectors_recover_reference_image() {
    let m = synthetic_csv_mixture(&SyntheticSpec::new(8, 3, 4, 2000), 21).unwrap();
    let blocks = block_covariances(&m.x, 4).unwrap();
    let st = ExtractionState::new(m.w.clone(), &blocks).unwrap();
    let out = apply_extraction(&st, 0, &m.x).unwrap();
    let (mut err, mut pow) = (0.0, 0.0);
    for k in 0..8 {
        for l in 0..m.x.frames() {
            let want = m.soi_image.get(k, l, 0);
            err += (out.get(k, l, 0) - want).norm_sqr();
            pow += want.norm_sqr();
        }
    }
    assert!(10.0 * (err / pow).log10() <= -20.0);
}

#[test]
fn output_is_invariant_to_scaling_w() {
    let mut r = rng(22);
    let x = random_tensor(&mut r, 3, 200, 3);
    let blocks = block_covariances(&x, 2).unwrap();
    let w = random_w1(&mut r, 3, 3);
    let a = apply_extraction(&ExtractionState::new(w.clone(), &blocks).unwrap(), 1, &x).unwrap();
    let b = apply_extraction(&ExtractionState::new(w.scaled(c(-0.3, 2.0)), &blocks).unwrap(), 1, &x).unwrap();
    for (p, q) in a.coeffs().iter().zip(b.coeffs()) {
        assert!((p - q).norm() < 1e-10 * p.norm().max(1.0));
    }
}

#[test]
fn unit_mixing_vector_passes_estimate_through() {
    let mut r = rng(23);
    let x = random_tensor(&mut r, 2, 20, 3);
    let w = random_w1(&mut r, 2, 3);
    let mut a = MixingVectors::zeros(2, 1, 3);
    for k in 0..2 {
        a.get_mut(k, 0)[1] = Complex64::new(1.0, 0.0);
    }
    let out = apply_extraction(&manual_state(w.clone(), a), 1, &x).unwrap();
    for k in 0..2 {
        for l in 0..20 {
            assert_eq!(out.get(k, l, 0), dot_h(w.get(k), x.frame(k, l)));
        }
    }
    let zero = SeparatingVectors::new(2, 3, vec![Complex64::new(0.0, 0.0); 6]).unwrap();
    let out = apply_extraction(&manual_state(zero, MixingVectors::zeros(2, 1, 3)), 0, &x).unwrap();
    assert!(out.coeffs().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn isolated_source_round_trips_through_extraction() {
    let mut r = rng(24);
    let len = 8000;
    let ch0: Vec<f64> = (0..len).map(|_| cn(&mut r).re).collect();
    let ch1: Vec<f64> = (0..len).map(|_| cn(&mut r).re).collect();
    let wave = Waveform::new(vec![ch0.clone(), ch1], 16000).unwrap();
    let cfg = stft::StftConfig::default();
    let x = stft::analyze(&wave, &cfg).unwrap();
    let blocks = block_covariances(&x, 1).unwrap();
    let st = ExtractionState::new(SeparatingVectors::unit(x.bins(), 2, 0), &blocks).unwrap();
    let y = stft::synthesize(&apply_extraction(&st, 0, &x).unwrap()).unwrap();
    for n in cfg.interior(len) {
        assert!((y.channel(0)[n] - ch0[n]).abs() < 1e-10);
    }
}
