//! Randomized checks of the structural invariants.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use rydtomo::baseline::{build_fd, classical_fidelity, fidelity_bound, renyi2_distribution};
use rydtomo::estimators::{
    exact_expectation, local_estimator_on_samples, renyi2_exact, renyi2_exact_pair, rbm_state, LocalOperator,
    Observable, Source,
};
use rydtomo::noise::{
    apply_channel, channel_prob, clamped_visible_conditional, corrupted_distribution_exact, NoiseModel,
};
use rydtomo::pipeline::commands::state_observable;
use rydtomo::pipeline::files::{read_dataset, write_dataset};
use rydtomo::pipeline::Provenance;
use rydtomo::quantum::{
    build_hamiltonian, fidelity, partial_trace, positive_pure_partner, renyi_entropy, rydberg_ground_state,
    sample_distribution, HamiltonianParams, QuantumState,
};
use rydtomo::rbm::RbmParams;
use rydtomo::training::{cd_gradient, grad_exact_weighted, nll_exact_weighted};
use rydtomo::{BitString, Dataset, DatasetMeta};

fn params_from(n: usize, nh: usize, v: &[f64]) -> RbmParams {
    let mut p = RbmParams::zeros(n, nh);
    p.set_flat(&v[..p.n_params()]);
    p
}

/// Random RBM with `n, nh <= 4` and entries in `[-scale, scale]`.
fn rbm(scale: f64) -> impl Strategy<Value = RbmParams> {
    (1usize..=4, 1usize..=4)
        .prop_flat_map(move |(n, nh)| (Just(n), Just(nh), prop::collection::vec(-scale..scale, n * nh + n + nh)))
        .prop_map(|(n, nh, v)| params_from(n, nh, &v))
}

fn noise() -> impl Strategy<Value = NoiseModel> {
    (0.001f64..0.3, 0.001f64..0.3).prop_map(|(a, b)| NoiseModel::new(a, b).unwrap())
}

fn weighted_data(n: usize) -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::vec((0..1u64 << n, 0.1f64..1.0), 1..6).prop_map(|v| {
        let z: f64 = v.iter().map(|x| x.1).sum();
        v.into_iter().map(|(x, w)| (x, w / z)).collect()
    })
}

fn random_pure(n: usize, v: &[(f64, f64)]) -> QuantumState {
    let amps = DVector::from_iterator(1 << n, v[..1 << n].iter().map(|&(a, b)| Complex64::new(a, b)));
    QuantumState::pure_normalized(n, amps).unwrap()
}

fn random_mixed(n: usize, v: &[(f64, f64)]) -> QuantumState {
    let d = 1 << n;
    let a = DMatrix::from_iterator(d, d, v.iter().map(|&(x, y)| Complex64::new(x, y)));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    QuantumState::mixed(n, rho / tr).unwrap()
}

fn splice(x: u64, y: u64, n: usize, a: &std::ops::Range<usize>) -> u64 {
    let mask: u64 = a.clone().map(|i| 1u64 << (n - 1 - i)).sum();
    (x & mask) | (y & !mask)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_symmetric(n in 2usize..=7, v in 0.0f64..60.0, om in -5.0f64..5.0, de in -20.0f64..20.0) {
        let h = build_hamiltonian(&HamiltonianParams::new(n, v, om, de)).unwrap();
        prop_assert!((&h - h.transpose()).amax() < 1e-12);
    }

    #[test]
    fn ground_states_are_positive(n in 2usize..=7, v in 0.0f64..40.0, om in 0.1f64..5.0, de in -10.0f64..10.0) {
        let gs = rydberg_ground_state(&HamiltonianParams::new(n, v, om, de)).unwrap();
        let psi = gs.state.amplitudes().unwrap();
        prop_assert!(psi.iter().all(|a| a.re >= -1e-12 && a.im.abs() < 1e-12));
    }

    #[test]
    fn schmidt_symmetry(n in 2usize..=5, cut in 1usize..5, v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32)) {
        prop_assume!(cut < n);
        let psi = random_pure(n, &v);
        let a: Vec<usize> = (0..cut).collect();
        let b: Vec<usize> = (cut..n).collect();
        for order in [2, 3] {
            let sa = renyi_entropy(&partial_trace(&psi, &a).unwrap(), order).unwrap();
            let sb = renyi_entropy(&partial_trace(&psi, &b).unwrap(), order).unwrap();
            prop_assert!((sa - sb).abs() < 1e-9);
        }
    }

    #[test]
    fn partner_lowers_entropy(n in 2usize..=4, v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256), mask in 1u32..15) {
        let rho = random_mixed(n, &v[..1 << (2 * n)]);
        let partner = positive_pure_partner(&rho).unwrap();
        let keep: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!keep.is_empty() && keep.len() < n);
        for order in [2, 3] {
            let sp = renyi_entropy(&partial_trace(&partner, &keep).unwrap(), order).unwrap();
            let sr = renyi_entropy(&partial_trace(&rho, &keep).unwrap(), order).unwrap();
            prop_assert!(sp <= sr + 1e-9, "{sp} > {sr}");
        }
    }

    #[test]
    fn fidelity_is_symmetric(n in 1usize..=3, v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64), w in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64)) {
        let d = 1 << n;
        let a = random_mixed(n, &v[..d * d]);
        let b = random_mixed(n, &w[..d * d]);
        let p = random_pure(n, &w[..d]);
        prop_assert!((fidelity(&a, &b).unwrap() - fidelity(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((fidelity(&a, &p).unwrap() - fidelity(&p, &a).unwrap()).abs() < 1e-9);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!((fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hidden_permutation_is_a_gauge(p in rbm(2.0), seed in any::<u64>()) {
        let nh = p.n_hidden;
        let mut perm: Vec<usize> = (0..nh).collect();
        let mut s = seed;
        for i in (1..nh).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut q = p.clone();
        for (j, &pj) in perm.iter().enumerate() {
            q.hidden_bias[j] = p.hidden_bias[pj];
            for i in 0..p.n_visible {
                q.weights[j * p.n_visible + i] = p.weight(pj, i);
            }
        }
        let (a, b) = (p.probabilities_exact().unwrap(), q.probabilities_exact().unwrap());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        let norm: f64 = p.amplitudes_exact().unwrap().iter().map(|x| x * x).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_is_stochastic_and_a_tensor_product(n in 1usize..=6, nm in noise(), seed in any::<u64>()) {
        for s in 0..1u64 << n {
            let sb = BitString::from_index(s, n);
            let total: f64 = (0..1u64 << n).map(|t| channel_prob(&BitString::from_index(t, n), &sb, &nm).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        // Kronecker power of the single-site matrix against the exact RBM table.
        let p = RbmParams::init_random(n, 3, seed);
        let mut m = DMatrix::from_element(1, 1, 1.0);
        let site = DMatrix::from_fn(2, 2, |t, s| nm.site_prob(t == 1, s == 1));
        for _ in 0..n {
            m = m.kronecker(&site);
        }
        let q = &m * DVector::from_vec(p.probabilities_exact().unwrap());
        let got = corrupted_distribution_exact(&p, &nm).unwrap();
        prop_assert!(got.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let mut direct = p.probabilities_exact().unwrap();
        apply_channel(&mut direct, n, &nm);
        prop_assert!(direct.iter().zip(q.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn clamped_conditional_is_bayes_posterior(p in rbm(1.5), nm in noise(), t in any::<u64>(), h in any::<u64>()) {
        let (n, nh) = (p.n_visible, p.n_hidden);
        let tb = BitString::from_index(t % (1 << n), n);
        let hb = BitString::from_index(h % (1 << nh), nh);
        // Joint p(s, h, t) ~ exp(b.s + c.h + h W s) p(t | s), marginalized for each site.
        let mut joint = vec![0.0; 1 << n];
        for s in 0..1u64 << n {
            let sb = BitString::from_index(s, n);
            let mut e = 0.0;
            for i in 0..n {
                let si = f64::from(sb.get(i) as u8);
                e += p.visible_bias[i] * si;
                for j in 0..nh {
                    e += p.weight(j, i) * si * f64::from(hb.get(j) as u8);
                }
            }
            joint[s as usize] = e.exp() * channel_prob(&tb, &sb, &nm).unwrap();
        }
        let z: f64 = joint.iter().sum();
        let got = clamped_visible_conditional(&p, &nm, &tb, &hb).unwrap();
        for i in 0..n {
            let m: f64 = joint.iter().enumerate().filter(|(s, _)| s >> (n - 1 - i) & 1 == 1).map(|(_, q)| q).sum::<f64>() / z;
            prop_assert!((got[i] - m).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_gradients_match_finite_differences(p in rbm(1.0), nm in noise(), raw in weighted_data(4)) {
        let data: Vec<(u64, f64)> = raw.iter().map(|&(x, w)| (x % (1 << p.n_visible), w)).collect();
        for noise in [None, Some(&nm)] {
            let g = grad_exact_weighted(&p, &data, noise).unwrap();
            let x0 = p.flat();
            let h = 1e-5;
            for k in 0..x0.len() {
                let mut q = p.clone();
                let mut x = x0.clone();
                x[k] += h;
                q.set_flat(&x);
                let up = nll_exact_weighted(&q, &data, noise).unwrap();
                x[k] -= 2.0 * h;
                q.set_flat(&x);
                let down = nll_exact_weighted(&q, &data, noise).unwrap();
                prop_assert!((g[k] - (up - down) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_rates_are_the_two_layer_model(p in rbm(1.0), seed in any::<u64>()) {
        let n = p.n_visible;
        let zero = NoiseModel::noiseless();
        let data: Vec<(u64, f64)> = vec![(0, 0.5), ((1 << n) - 1, 0.5)];
        prop_assert_eq!(nll_exact_weighted(&p, &data, None).unwrap(), nll_exact_weighted(&p, &data, Some(&zero)).unwrap());
        prop_assert_eq!(grad_exact_weighted(&p, &data, None).unwrap(), grad_exact_weighted(&p, &data, Some(&zero)).unwrap());
        let batch: Vec<BitString> = data.iter().map(|&(x, _)| BitString::from_index(x, n)).collect();
        prop_assert_eq!(cd_gradient(&p, &batch, 3, None, seed).unwrap(), cd_gradient(&p, &batch, 3, Some(&zero), seed).unwrap());
        prop_assert_eq!(corrupted_distribution_exact(&p, &zero).unwrap(), p.probabilities_exact().unwrap());
        let h = BitString::zeros(p.n_hidden);
        prop_assert_eq!(clamped_visible_conditional(&p, &zero, &batch[0], &h).unwrap(), p.conditional_visible(&h));
    }

    #[test]
    fn diagonal_local_estimator_is_the_sample_frequency(p in rbm(1.5), seed in any::<u64>(), site in 0usize..4) {
        let n = p.n_visible;
        let site = site % n;
        let q = p.probabilities_exact().unwrap();
        let samples = sample_distribution(&q, n, 500, seed).unwrap();
        let local = local_estimator_on_samples(&p, &LocalOperator::number(site), &samples).unwrap();
        let freq = Observable::Occupation { site }.diagonal(Source::Samples(&samples)).unwrap();
        prop_assert_eq!(local.value, freq.value);
    }

    #[test]
    fn swap_expectation_is_the_purity(p in rbm(1.5), start in 0usize..4, len in 1usize..4) {
        let n = p.n_visible;
        prop_assume!(start + len <= n);
        let a = start..start + len;
        let psi = p.amplitudes_exact().unwrap();
        let mut total = 0.0;
        for x in 0..1u64 << n {
            for y in 0..1u64 << n {
                let (px, py) = (psi[x as usize], psi[y as usize]);
                total += px * py * psi[splice(x, y, n, &a) as usize] * psi[splice(y, x, n, &a) as usize];
            }
        }
        let s2 = renyi2_exact(&p, a.clone()).unwrap().value;
        prop_assert!((total - (-s2).exp()).abs() < 1e-10);
        let (sa, sb) = renyi2_exact_pair(&p, a).unwrap();
        prop_assert!((sa - sb).abs() < 1e-9);
    }

    #[test]
    fn state_and_rbm_observables_agree(p in rbm(1.5), site in 0usize..4) {
        let n = p.n_visible;
        let site = site % n;
        let st = rbm_state(&p).unwrap();
        let x = exact_expectation(&p, &LocalOperator::sigma_x(site)).unwrap().value;
        let ox = Observable::X { site };
        prop_assert!((state_observable(&st, &ox).unwrap() - x).abs() < 1e-12);
        let occ = Observable::Occupation { site };
        prop_assert!((state_observable(&st, &occ).unwrap() - occ.diagonal(Source::Exact(&p)).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn fd_bound_holds(n in 1usize..=8, ns in 1usize..2000, v in prop::collection::vec(0.0f64..1.0, 256), seed in any::<u64>()) {
        let mut p: Vec<f64> = v[..1 << n].iter().map(|x| x * x * x).collect();
        let z: f64 = p.iter().sum();
        prop_assume!(z > 0.0);
        p.iter_mut().for_each(|x| *x /= z);
        let d = Dataset::new(n, sample_distribution(&p, n, ns, seed).unwrap(), DatasetMeta::default()).unwrap();
        let fd = build_fd(&d).unwrap();
        let f = classical_fidelity(&fd.probabilities_dense().unwrap(), &p).unwrap();
        prop_assert!(f <= fidelity_bound(ns as u64, renyi2_distribution(&p)) + 1e-12);
        let g = classical_fidelity(&p, &fd.probabilities_dense().unwrap()).unwrap();
        prop_assert!((f - g).abs() < 1e-15 && (0.0..=1.0).contains(&f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dataset_files_round_trip(n in 1usize..=20, xs in prop::collection::vec(any::<u64>(), 0..50), gz in any::<bool>()) {
        let samples: Vec<BitString> = xs.iter().map(|&x| BitString::from_index(x & ((1u64 << n) - 1), n)).collect();
        let meta = DatasetMeta { seed: 9, source: "prop".into(), delta_mhz: Some(1.5), ..DatasetMeta::default() };
        let d = Dataset::new(n, samples, meta).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let body = dir.path().join(if gz { "d.txt.gz" } else { "d.txt" });
        let prov = Provenance { config_hash: "abc".into(), master_seed: 3 };
        let header = write_dataset(&body, &d, &prov, Some(2)).unwrap();
        let (back, h) = read_dataset(&header).unwrap();
        prop_assert_eq!(&back.samples, &d.samples);
        prop_assert_eq!(h.provenance, prov);
        prop_assert_eq!(back.meta.delta_mhz, Some(1.5));
        if !gz {
            let text = std::fs::read_to_string(&body).unwrap();
            prop_assert_eq!(text.lines().count(), d.len());
            prop_assert!(text.lines().all(|l| l.len() == n));
        }
    }
}
