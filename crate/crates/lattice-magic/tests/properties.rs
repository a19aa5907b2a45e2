use proptest::prelude::*;

use lattice_magic::analysis_fit::{fit_exponential, fit_gaussian_peak, fit_linear_origin, FitOptions};
use lattice_magic::atomic_data::{reference, LatticeConfig, SpeciesData};
use lattice_magic::ground_manifold::{AtomInLattice, Coherence};
use lattice_magic::polarizability::{assemble_stark, decompose_stark, stark_operator_per_intensity};
use lattice_magic::storage_sim::{atom_rng, draw_ensemble, CurveMeta, DecayCurve, Dephasing, ScanCurve};
use rand::Rng;

fn lattice(nm: f64, a: f64) -> LatticeConfig {
    LatticeConfig { wavelength_vac_nm: nm, circ_degree_a: a, ..reference::lattice() }
}

fn coherence() -> impl Strategy<Value = Coherence> {
    prop_oneof![Just(Coherence::Clock), Just(Coherence::Plus), Just(Coherence::Minus)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn helicity_flip_mirrors_shifts(a in 0.05f64..1.0, b in 0.2f64..9.0, frac in 0.0f64..1.0, coh in coherence()) {
        let s = reference::species();
        let fwd = AtomInLattice::new(&s, &lattice(1063.8, a)).unwrap();
        let rev = AtomInLattice::new(&s, &lattice(1063.8, -a)).unwrap();
        let i = frac * fwd.intensity();
        let d1 = fwd.differential_shift(b, i, coh).unwrap();
        let d2 = rev.differential_shift(-b, i, coh.mirrored()).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-9 * d1.abs().max(1.0), "{} vs {}", d1, d2);
    }

    #[test]
    fn stark_linear_in_line_strength(c in 0.1f64..10.0, nm in 800.0f64..1600.0, a in -1.0f64..1.0) {
        let s = reference::species();
        let mut scaled = s.clone();
        for l in &mut scaled.lines {
            l.reduced_dipole_sq *= c;
        }
        let u1 = stark_operator_per_intensity(&s, &lattice(nm, a)).unwrap().matrix;
        let u2 = stark_operator_per_intensity(&scaled, &lattice(nm, a)).unwrap().matrix;
        let scale = u1.amax();
        prop_assert!((u2 - u1 * c).amax() <= 1e-12 * c * scale);
    }

    #[test]
    fn scalar_differential_vanishes_without_hyperfine_detunings(nm in 800.0f64..1600.0, a in -1.0f64..1.0) {
        let mut s: SpeciesData = reference::species();
        s.sum_over_states.ground_hyperfine_in_detuning = false;
        s.sum_over_states.excited_hyperfine = false;
        let op = stark_operator_per_intensity(&s, &lattice(nm, a)).unwrap();
        let p = decompose_stark(&op).unwrap();
        prop_assert!(p.differential_scalar().abs() <= 1e-12 * p.lower.scalar.abs());
    }

    #[test]
    fn decompose_assemble_round_trip(nm in 800.0f64..1600.0, a in -1.0f64..1.0, i in 1.0f64..1e5) {
        let s = reference::species();
        let op = stark_operator_per_intensity(&s, &lattice(nm, a)).unwrap();
        let p = decompose_stark(&op).unwrap();
        let back = assemble_stark(&p, i, a).unwrap();
        let want = op.scaled(i).matrix;
        prop_assert!((back.matrix - &want).amax() <= 1e-10 * want.amax());
    }

    #[test]
    fn hamiltonians_hermitian_and_block_structured(a in -1.0f64..1.0, b in -10.0f64..10.0, frac in 0.0f64..1.5) {
        let s = reference::species();
        let atom = AtomInLattice::new(&s, &lattice(1063.8, a)).unwrap();
        let h = atom.hamiltonian(b, frac * atom.intensity()).unwrap();
        prop_assert!(atom.basis().check_structure(&h.total()).is_ok());
        prop_assert!(atom.basis().check_structure(&h.h_stark).is_ok());
        prop_assert!(atom.basis().check_structure(&h.h_zeeman).is_ok());
    }
}

fn shuffled<T: Clone>(v: &[T], seed: u64) -> Vec<T> {
    let mut rng = atom_rng(seed, 0);
    let mut out = v.to_vec();
    for i in (1..out.len()).rev() {
        let j = rng.gen_range(0..=i);
        out.swap(i, j);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fits_ignore_point_order(seed in 0u64..1000, noise in 0.0f64..0.05) {
        let mut rng = atom_rng(seed, 1);
        let b: Vec<f64> = (0..31).map(|i| 3.5 + 0.05 * i as f64).collect();
        let e: Vec<f64> = b.iter().map(|&x| 0.03 * (-3.0 * (x - 4.2f64).powi(2)).exp() * (1.0 + noise * (rng.gen::<f64>() - 0.5))).collect();
        let idx = shuffled(&(0..b.len()).collect::<Vec<_>>(), seed);
        let scan = ScanCurve { fields_g: b.clone(), efficiency: e.clone(), stderr: None, meta: CurveMeta::default() };
        let perm = ScanCurve {
            fields_g: idx.iter().map(|&i| b[i]).collect(),
            efficiency: idx.iter().map(|&i| e[i]).collect(),
            stderr: None,
            meta: CurveMeta::default(),
        };
        let r1 = fit_gaussian_peak(&scan, &FitOptions::default()).unwrap();
        let r2 = fit_gaussian_peak(&perm, &FitOptions::default()).unwrap();
        prop_assert_eq!(r1, r2);

        let t: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&x| 0.034 * (-x / 0.3f64).exp() * (1.0 + noise * (rng.gen::<f64>() - 0.5))).collect();
        let idx = shuffled(&(0..t.len()).collect::<Vec<_>>(), seed + 1);
        let d1 = DecayCurve { times_s: t.clone(), efficiency: y.clone(), stderr: None, meta: CurveMeta::default() };
        let d2 = DecayCurve {
            times_s: idx.iter().map(|&i| t[i]).collect(),
            efficiency: idx.iter().map(|&i| y[i]).collect(),
            stderr: None,
            meta: CurveMeta::default(),
        };
        prop_assert_eq!(fit_exponential(&d1, &FitOptions::default()).unwrap(), fit_exponential(&d2, &FitOptions::default()).unwrap());

        let x = [900.0, 4000.0, 7000.0, 2500.0];
        let yl: Vec<f64> = x.iter().map(|v| 3e-4 * v * (1.0 + noise * (rng.gen::<f64>() - 0.5))).collect();
        let idx = shuffled(&[0usize, 1, 2, 3], seed + 2);
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| yl[i]).collect();
        prop_assert_eq!(fit_linear_origin(&x, &yl, None).unwrap(), fit_linear_origin(&xp, &yp, None).unwrap());
    }

    #[test]
    fn noiseless_recovery_from_perturbed_start(f in proptest::collection::vec(0.7f64..1.3, 4)) {
        let (b0, gamma, a) = (4.24, 2.0, 0.03);
        let b: Vec<f64> = (0..41).map(|i| b0 - 1.0 + 0.05 * i as f64).collect();
        let scan = ScanCurve {
            efficiency: b.iter().map(|&x| a * (-gamma * (x - b0) * (x - b0)).exp()).collect(),
            fields_g: b,
            stderr: None,
            meta: CurveMeta::default(),
        };
        // Scale parameters start within ±30% of their value, the center within
        // ±30% of the scan half-span (1 G).
        let opts = FitOptions { initial: Some(vec![a * f[0], b0 + (f[1] - 1.0), gamma * f[2]]), ..FitOptions::default() };
        let r = fit_gaussian_peak(&scan, &opts).unwrap();
        prop_assert!((r.value("B0") / b0 - 1.0).abs() < 1e-6);
        prop_assert!((r.value("gamma") / gamma - 1.0).abs() < 1e-6);
        prop_assert!((r.value("amplitude") / a - 1.0).abs() < 1e-6);
        // gamma = 1/w^2 for the 1/e half-width
        let w = r.half_width().unwrap();
        prop_assert!((1.0 / (w * w) - r.value("gamma")).abs() < 1e-12 * gamma);

        let t: Vec<f64> = (0..30).map(|i| 0.05 * i as f64).collect();
        let d = DecayCurve { efficiency: t.iter().map(|&x| 0.034 * (-x / 0.32f64).exp()).collect(), times_s: t, stderr: None, meta: CurveMeta::default() };
        let opts = FitOptions { initial: Some(vec![0.034 * f[2], 0.32 * f[3]]), ..FitOptions::default() };
        let r = fit_exponential(&d, &opts).unwrap();
        prop_assert!((r.value("tau") / 0.32 - 1.0).abs() < 1e-6);
        prop_assert!((r.value("eta0") / 0.034 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn efficiency_bounded_and_phase_invariant(seed in 0u64..10_000, spread in 0.0f64..50.0, shift in -1e3f64..1e3, t in 0.0f64..2.0) {
        let mut rng = atom_rng(seed, 7);
        let n = 200;
        let detunings_hz: Vec<f64> = (0..n).map(|_| spread * (rng.gen::<f64>() - 0.5)).collect();
        let base = Dephasing { detunings_hz, weights: vec![1.0 / n as f64; n], eta0: 0.034, loss_time_s: 1.0, moment_hz_per_g: 0.0 };
        let moved = Dephasing { detunings_hz: base.detunings_hz.iter().map(|d| d + shift).collect(), ..base.clone() };
        let e = base.efficiency(t);
        prop_assert!((0.0..=0.034 * (1.0 + 1e-12)).contains(&e));
        prop_assert!((e - moved.efficiency(t)).abs() <= 1e-9 * 0.034);
    }

    #[test]
    fn draws_match_serial_streams(seed in any::<u64>(), n in 1usize..300) {
        let sample = reference::sample();
        let lat = reference::lattice();
        let d = draw_ensemble(&sample, &lat, n, seed).unwrap();
        let again = draw_ensemble(&sample, &lat, n, seed).unwrap();
        prop_assert_eq!(&d, &again);
        prop_assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // A shorter draw is a prefix of a longer one: atom j depends only on (seed, j).
        let longer = draw_ensemble(&sample, &lat, n + 5, seed).unwrap();
        prop_assert_eq!(&longer.fractions[..n], &d.fractions[..]);
        prop_assert_eq!(&longer.positions_cm[..n], &d.positions_cm[..]);
    }
}
