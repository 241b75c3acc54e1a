mod common;

use blockive::algorithms::auxiva_weighted_covariances;
use blockive::model::{
    auxiliary_value, block_covariances, blocking_matrix, build_demixing_matrix, build_mixing_matrix, contact_auxiliary,
    contrast, ogc_mixing_vector, BlockLayout, ExtractionState,
};
use blockive::sourcemodel::PilotSignal;
use blockive::stft::SpectralTensor;
use blockive::{Error, SeparatingVectors};
use common::*;
use num_complex::Complex64;
use proptest::prelude::*;

/// Contrast evaluated directly from samples: per (k, t) the variance,
/// OGC mixing vector, blocking matrix, background covariance and its
/// inverse are formed explicitly.
fn brute_contrast(w: &SeparatingVectors, x: &SpectralTensor, blocks: usize) -> f64 {
    let (bins, n, d) = (x.bins(), x.frames(), x.channels());
    let layout = BlockLayout::new(n, blocks).unwrap();
    let mut total = 0.0;
    for t in 0..blocks {
        let range = layout.range(t);
        let nb = range.len() as f64;
        let mut sig = vec![0.0; bins];
        let mut per_block = 0.0;
        for k in 0..bins {
            let wk = w.get(k);
            let mut cov = vec![Complex64::new(0.0, 0.0); d * d];
            for l in range.clone() {
                let xf = x.frame(k, l);
                for i in 0..d {
                    for j in 0..d {
                        cov[i * d + j] += xf[i] * xf[j].conj() / nb;
                    }
                }
            }
            let cw = mat_vec(&cov, d, wk);
            let var = dot_h(wk, &cw).re;
            sig[k] = var.sqrt();
            let a: Vec<Complex64> = cw.iter().map(|v| v / var).collect();
            // B = [g, -gamma I]
            let m = d - 1;
            let mut b = vec![Complex64::new(0.0, 0.0); m * d];
            for r in 0..m {
                b[r * d] = a[r + 1];
                b[r * d + r + 1] = -a[0];
            }
            let z: Vec<Vec<Complex64>> = range.clone().map(|l| mat_vec(&b, d, x.frame(k, l))).collect();
            let mut cz = vec![Complex64::new(0.0, 0.0); m * m];
            for zl in &z {
                for i in 0..m {
                    for j in 0..m {
                        cz[i * m + j] += zl[i] * zl[j].conj() / nb;
                    }
                }
            }
            let czi = inverse(&cz, m);
            let quad: f64 = z.iter().map(|zl| dot_h(zl, &mat_vec(&czi, m, zl)).re).sum::<f64>() / nb;
            per_block += -var.ln() - quad + (d as f64 - 2.0) * a[0].norm_sqr().ln();
        }
        let first: f64 = range
            .map(|l| {
                (0..bins)
                    .map(|k| (dot_h(w.get(k), x.frame(k, l)) / sig[k]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / nb;
        total += -first + per_block;
    }
    total / blocks as f64
}

fn random_w(r: &mut impl rand::Rng, bins: usize, d: usize) -> SeparatingVectors {
    SeparatingVectors::new(bins, d, cn_vec(r, bins * d)).unwrap()
}

#[test]
fn contrast_matches_brute_force_single_bin() {
    let mut r = rng(1);
    let x = random_tensor(&mut r, 1, 500, 2);
    let w = SeparatingVectors::unit(1, 2, 0);
    let blocks = block_covariances(&x, 1).unwrap();
    let st = ExtractionState::new(w.clone(), &blocks).unwrap();
    let got = contrast(&st, &x, &blocks).unwrap().value;
    let want = brute_contrast(&w, &x, 1);
    assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn contrast_matches_brute_force_general() {
    let mut r = rng(2);
    for (bins, d, t) in [(3, 3, 2), (4, 4, 3), (2, 5, 1)] {
        let x = random_tensor(&mut r, bins, 300, d);
        let w = random_w(&mut r, bins, d);
        let blocks = block_covariances(&x, t).unwrap();
        let st = ExtractionState::new(w.clone(), &blocks).unwrap();
        let got = contrast(&st, &x, &blocks).unwrap().value;
        let want = brute_contrast(&w, &x, t);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn scaling_data_shifts_contrast_by_constant() {
    let mut r = rng(3);
    let (bins, d) = (3, 3);
    let x = random_tensor(&mut r, bins, 400, d);
    let x2 = x.with_coeffs(x.coeffs().iter().map(|v| v * 2.0).collect(), d).unwrap();
    let b1 = block_covariances(&x, 2).unwrap();
    let b2 = block_covariances(&x2, 2).unwrap();
    // -sum_k log sigma^2 drops by K log 4; every other term is scale free
    let expected = -(bins as f64) * 4f64.ln();
    for _ in 0..5 {
        let w = random_w(&mut r, bins, d);
        let c1 = contrast(&ExtractionState::new(w.clone(), &b1).unwrap(), &x, &b1)
            .unwrap()
            .value;
        let c2 = contrast(&ExtractionState::new(w, &b2).unwrap(), &x2, &b2)
            .unwrap()
            .value;
        assert!((c2 - c1 - expected).abs() < 1e-10, "{}", c2 - c1);
    }
}

#[test]
fn contact_point_touches_and_mismatch_lies_below() {
    let mut r = rng(4);
    let x = random_tensor(&mut r, 4, 400, 3);
    let blocks = block_covariances(&x, 2).unwrap();
    for _ in 0..5 {
        let st = ExtractionState::new(random_w(&mut r, 4, 3), &blocks).unwrap();
        let c = contrast(&st, &x, &blocks).unwrap().value;
        let v = contact_auxiliary(&st, &x, &blocks);
        let q = auxiliary_value(&st, &v, &x, &blocks).unwrap().value;
        assert!((q - c).abs() < 1e-10 * c.abs().max(1.0));
        // auxiliary matrices built at another point
        let other = ExtractionState::new(random_w(&mut r, 4, 3), &blocks).unwrap();
        let v_other = contact_auxiliary(&other, &x, &blocks);
        let q_other = auxiliary_value(&st, &v_other, &x, &blocks).unwrap().value;
        assert!(q_other <= c + 1e-10, "{q_other} > {c}");
    }
}

#[test]
fn ogc_gives_zero_sample_correlation_with_background() {
    let mut r = rng(5);
    let d = 4;
    let x = random_tensor(&mut r, 1, 1000, d);
    let blocks = block_covariances(&x, 1).unwrap();
    let w = cn_vec(&mut r, d);
    let a = ogc_mixing_vector(&w, blocks.get(0, 0)).unwrap();
    let b = blocking_matrix(&a);
    let mut corr = vec![Complex64::new(0.0, 0.0); d - 1];
    let mut var = 0.0;
    for l in 0..x.frames() {
        let s = dot_h(&w, x.frame(0, l));
        let z = mat_vec(&b, d, x.frame(0, l));
        var += s.norm_sqr() / x.frames() as f64;
        for (ci, zi) in corr.iter_mut().zip(&z) {
            *ci += s * zi.conj() / x.frames() as f64;
        }
    }
    assert!(norm(&corr) <= 1e-10 * var, "{}", norm(&corr));
}

#[test]
fn mixing_matrix_inverse_first_row_is_separating_vector() {
    let mut r = rng(6);
    for d in 2..=5 {
        let a = cn_vec(&mut r, d);
        let h = cn_vec(&mut r, d - 1);
        // beta from w^H a = 1
        let hg: Complex64 = dot_h(&h, &a[1..]);
        let beta = ((Complex64::new(1.0, 0.0) - hg) / a[0]).conj();
        let mixing = build_mixing_matrix(&a, &h).unwrap();
        let inv = inverse(&mixing, d);
        let mut w = vec![beta];
        w.extend(&h);
        for j in 0..d {
            assert!((inv[j] - w[j].conj()).norm() < 1e-10);
        }
        let demix = build_demixing_matrix(&w, &a);
        let prod = mat_mul(&demix, &mixing, d, d, d);
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * d + j] - e).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn mixing_matrix_needs_nonzero_gamma() {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    assert!(matches!(
        build_mixing_matrix(&[zero, one], &[one]),
        Err(Error::SingularParameterization)
    ));
}

#[test]
fn block_covariance_of_white_noise_is_identity() {
    let mut r = rng(7);
    let (n, d) = (10_000, 3);
    let coeffs: Vec<Complex64> = cn_vec(&mut r, n * d);
    let x = SpectralTensor::from_raw(coeffs, 1, n, d, config_for(1), 16000).unwrap();
    let b = block_covariances(&x, 1).unwrap();
    let c = b.get(0, 0);
    for i in 0..d {
        for j in 0..d {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((c[i * d + j] - e).norm() < 0.05, "{i},{j}: {}", c[i * d + j]);
        }
    }
}

#[test]
fn one_frame_blocks_are_rank_one() {
    let mut r = rng(8);
    let x = random_tensor(&mut r, 2, 4, 2);
    let b = block_covariances(&x, 4).unwrap();
    for k in 0..2 {
        for t in 0..4 {
            let f = x.frame(k, t);
            let c = b.get(k, t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((c[i * 2 + j] - f[i] * f[j].conj()).norm() < 1e-14);
                }
            }
        }
    }
    assert!(matches!(block_covariances(&x, 5), Err(Error::TooManyBlocks { .. })));
}

#[test]
fn weighted_covariances_match_double_loop() {
    let mut r = rng(9);
    let (bins, n, d, nt) = (3, 60, 3, 2);
    let x = random_tensor(&mut r, bins, n, d);
    let w = random_w(&mut r, bins, d);
    let blocks = block_covariances(&x, nt).unwrap();
    let o: Vec<f64> = (0..n).map(|l| 0.5 + (l % 7) as f64 / 7.0).collect();
    for pilot in [None, Some(PilotSignal::new(o, 0.7).unwrap())] {
        let v = auxiva_weighted_covariances(&w, &x, &blocks, pilot.as_ref()).unwrap();
        let layout = blocks.layout();
        for k in 0..bins {
            for t in 0..nt {
                let range = layout.range(t);
                let nb = range.len() as f64;
                let mut want = vec![Complex64::new(0.0, 0.0); d * d];
                for l in range {
                    let mut r2 = 0.0;
                    for kk in 0..bins {
                        r2 += dot_h(w.get(kk), x.frame(kk, l)).norm_sqr();
                    }
                    if let Some(p) = &pilot {
                        r2 += (p.delta * p.o[l]).powi(2);
                    }
                    let phi = 1.0 / r2.sqrt();
                    let f = x.frame(k, l);
                    for i in 0..d {
                        for j in 0..d {
                            want[i * d + j] += phi * f[i] * f[j].conj() / nb;
                        }
                    }
                }
                let got = v.get(k, t);
                for i in 0..d {
                    assert!(got[i * d + i].im.abs() < 1e-14);
                    for j in 0..d {
                        assert!((got[i * d + j] - want[i * d + j]).norm() < 1e-12);
                        assert!((got[i * d + j] - got[j * d + i].conj()).norm() < 1e-14);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ogc_pair_is_distortionless_and_blocked(seed in any::<u64>(), d in 2usize..6) {
        let mut r = rng(seed);
        let c = random_hpd(&mut r, d);
        let w = cn_vec(&mut r, d);
        let a = ogc_mixing_vector(&w, &c).unwrap();
        prop_assert!((dot_h(&w, &a) - 1.0).norm() <= 1e-10);
        let b = blocking_matrix(&a);
        let ba = mat_vec(&b, d, &a);
        prop_assert!(norm(&ba) <= 1e-12 * norm(&a).powi(2));
    }

    #[test]
    fn demixing_determinant_identity(seed in any::<u64>(), d in 2usize..6) {
        let mut r = rng(seed);
        let w = cn_vec(&mut r, d);
        let raw = cn_vec(&mut r, d);
        let scale = dot_h(&w, &raw);
        prop_assume!(scale.norm() > 1e-3);
        // w^H a = 1
        let a: Vec<Complex64> = raw.iter().map(|v| v / scale).collect();
        let demix = build_demixing_matrix(&w, &a);
        let lhs = det(&demix, d).norm_sqr();
        let rhs = a[0].norm_sqr().powi(d as i32 - 2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn contrast_is_finite_for_random_states(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, 2, 40, 3);
        let blocks = block_covariances(&x, 2).unwrap();
        let st = ExtractionState::new(random_w(&mut r, 2, 3), &blocks).unwrap();
        prop_assert!(contrast(&st, &x, &blocks).unwrap().value.is_finite());
        for k in 0..2 {
            for t in 0..2 {
                let s = st.sigma(k, t);
                let c = blocks.get(k, t);
                let var = dot_h(st.w.get(k), &mat_vec(c, 3, st.w.get(k))).re;
                prop_assert!((s * s - var).abs() <= 1e-12 * var);
            }
        }
    }
}
