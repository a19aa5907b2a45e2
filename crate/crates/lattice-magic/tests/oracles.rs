//! Independent cross-checks of the Hamiltonian pieces.

use lattice_magic::atomic_data::{reference, LatticeConfig, SpeciesData};
use lattice_magic::constants::{frequency_from_wavelength_nm, stark_prefactor};
use lattice_magic::ground_manifold::{AtomInLattice, Coherence, Level};
use lattice_magic::magic_field::{magic_field_closed_form, magic_field_numeric, DEFAULT_BRACKET};
use lattice_magic::polarizability::stark_operator_per_intensity;
use nalgebra::SymmetricEigen;

/// Breit-Rabi energies for J = 1/2, E/h in Hz, zero at the hyperfine centroid.
fn breit_rabi(s: &SpeciesData, b: f64) -> Vec<(Level, f64)> {
    let i = s.nuclear_spin;
    let dhf = s.hyperfine_splitting_hz;
    let mub = s.bohr_magneton_hz_per_gauss;
    let x = (s.g_j - s.g_i) * mub * b / dhf;
    let f_up = (i + 0.5) as i32;
    let mut out = Vec::new();
    for f in [f_up - 1, f_up] {
        for m in -f..=f {
            let mf = m as f64;
            let e = if m.abs() == f_up {
                // stretched states are linear in B
                i / (2.0 * i + 1.0) * dhf + mf.signum() * (0.5 * s.g_j + i * s.g_i) * mub * b
            } else {
                let root = (1.0 + 4.0 * mf * x / (2.0 * i + 1.0) + x * x).sqrt();
                let sign = if f == f_up { 1.0 } else { -1.0 };
                -dhf / (2.0 * (2.0 * i + 1.0)) + s.g_i * mub * mf * b + sign * 0.5 * dhf * root
            };
            out.push((Level { f, m }, e));
        }
    }
    out
}

#[test]
fn breit_rabi_eigenvalues() {
    let s = reference::species();
    let atom = AtomInLattice::new(&s, &reference::lattice()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let b = 10.0 * k as f64 / 49.0;
        let h = atom.hamiltonian(b, 0.0).unwrap().total();
        let mut numeric: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        numeric.sort_by(f64::total_cmp);
        let oracle = breit_rabi(&s, b);
        let mut exact: Vec<f64> = oracle.iter().map(|p| p.1).collect();
        exact.sort_by(f64::total_cmp);
        for (n, e) in numeric.iter().zip(&exact) {
            worst = worst.max((n - e).abs() / e.abs());
        }
        // Labelled energies from the block solver match level by level.
        let dressed = atom.dressed_levels_at(b, 0.0).unwrap();
        for (label, e) in &oracle {
            let got = dressed.get(*label).unwrap().energy;
            assert!((got - e).abs() <= 1e-9 * e.abs(), "{label} at {b} G: {got} vs {e}");
        }
    }
    assert!(worst <= 1e-9, "worst relative error {worst}");
}

fn fact(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// 3j symbol with doubled arguments, Racah's single sum.
fn three_j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if m1 + m2 + m3 != 0 || j3 > j1 + j2 || j3 < (j1 - j2).abs() || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    let h = |v: i32| v / 2;
    let tri = fact(h(j1 + j2 - j3)) * fact(h(j1 - j2 + j3)) * fact(h(-j1 + j2 + j3)) / fact(h(j1 + j2 + j3) + 1);
    let pre =
        (tri * fact(h(j1 + m1)) * fact(h(j1 - m1)) * fact(h(j2 + m2)) * fact(h(j2 - m2)) * fact(h(j3 + m3)) * fact(h(j3 - m3)))
            .sqrt();
    let mut sum = 0.0;
    for k in 0..=h(j1 + j2 + j3) {
        let args = [h(j1 + j2 - j3) - k, h(j1 - m1) - k, h(j2 + m2) - k, h(j3 - j2 + m1) + k, h(j3 - j1 - m2) + k];
        if args.iter().any(|&a| a < 0) {
            continue;
        }
        let denom = fact(k) * args.iter().map(|&a| fact(a)).product::<f64>();
        sum += if k % 2 == 0 { 1.0 } else { -1.0 } / denom;
    }
    let phase = if h(j1 - j2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * pre * sum
}

fn delta(a: i32, b: i32, c: i32) -> f64 {
    let h = |v: i32| v / 2;
    (fact(h(a + b - c)) * fact(h(a - b + c)) * fact(h(-a + b + c)) / fact(h(a + b + c) + 1)).sqrt()
}

/// 6j symbol with doubled arguments.
fn six_j(j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
    let triads = [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)];
    for &(a, b, c) in &triads {
        if c > a + b || c < (a - b).abs() || (a + b + c) % 2 != 0 {
            return 0.0;
        }
    }
    let pre: f64 = triads.iter().map(|&(a, b, c)| delta(a, b, c)).product();
    let h = |v: i32| v / 2;
    let a = [h(j1 + j2 + j3), h(j1 + j5 + j6), h(j4 + j2 + j6), h(j4 + j5 + j3)];
    let b = [h(j1 + j2 + j4 + j5), h(j2 + j3 + j5 + j6), h(j3 + j1 + j6 + j4)];
    let lo = *a.iter().max().unwrap();
    let hi = *b.iter().min().unwrap();
    let mut sum = 0.0;
    for t in lo..=hi {
        let den: f64 = a.iter().map(|&x| fact(t - x)).product::<f64>() * b.iter().map(|&x| fact(x - t)).product::<f64>();
        sum += if t % 2 == 0 { 1.0 } else { -1.0 } * fact(t + 1) / den;
    }
    pre * sum
}

/// <F' m'| d_q |F m> for ground J = 1/2, in units of <J'||d||J>.
fn dipole(tjp: i32, tfp: i32, tmp: i32, tf: i32, tm: i32, q: i32, two_i: i32) -> f64 {
    let tj = 1;
    let reduced_f = {
        let phase_arg = (tjp + two_i + tf + 2) / 2;
        let phase = if phase_arg % 2 == 0 { 1.0 } else { -1.0 };
        phase * (((tf + 1) * (tfp + 1)) as f64).sqrt() * six_j(tjp, tfp, two_i, tf, tj, 2)
    };
    let phase = if ((tfp - tmp) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * three_j(tfp, 2, tf, -tmp, 2 * q, tm) * reduced_f
}

/// U per unit intensity from F-resolved matrix elements.
fn stark_oracle(s: &SpeciesData, lat: &LatticeConfig, a: Level, b: Level) -> f64 {
    let nu = frequency_from_wavelength_nm(lat.wavelength_vac_nm);
    let k = stark_prefactor();
    let two_i = s.two_i();
    let ground_e = |f: i32| if f == (two_i + 1) / 2 { s.upper_hyperfine_energy() } else { s.lower_hyperfine_energy() };
    let mut u = 0.0;
    for line in &s.lines {
        let tjp = line.two_j();
        for &(fp, offset) in line.excited_hyperfine.as_ref().unwrap() {
            let ee = line.frequency_hz + offset;
            for mp in -fp..=fp {
                for (q, w) in [(1, 0.5 * (1.0 + lat.circ_degree_a)), (-1, 0.5 * (1.0 - lat.circ_degree_a))] {
                    for (qq, sign) in [(q, 1.0), (-q, -1.0)] {
                        let da = dipole(tjp, 2 * fp, 2 * mp, 2 * a.f, 2 * a.m, qq, two_i);
                        let db = dipole(tjp, 2 * fp, 2 * mp, 2 * b.f, 2 * b.m, qq, two_i);
                        let den = 0.5 * (1.0 / (ee - ground_e(a.f) - sign * nu) + 1.0 / (ee - ground_e(b.f) - sign * nu));
                        u -= k * w * line.reduced_dipole_sq * da * db * den;
                    }
                }
            }
        }
    }
    u
}

#[test]
fn stark_operator_matches_recoupling_oracle() {
    let s = reference::species();
    for a_circ in [1.0, 0.991, 0.3, -0.7] {
        for nm in [1063.8, 850.0, 1560.0] {
            let lat = LatticeConfig { wavelength_vac_nm: nm, circ_degree_a: a_circ, ..reference::lattice() };
            let op = stark_operator_per_intensity(&s, &lat).unwrap();
            let scale = op.matrix.amax();
            for &a in op.basis.levels() {
                for &b in op.basis.levels() {
                    if a.m != b.m {
                        continue;
                    }
                    let got = op.element(a, b);
                    let want = stark_oracle(&s, &lat, a, b);
                    assert!((got - want).abs() <= 1e-10 * scale, "{a} {b} at {nm} nm, A = {a_circ}: {got} vs {want}");
                }
            }
        }
    }
}

/// Regression fixtures for the reference data at A = 1.
#[test]
fn frozen_magic_fields() {
    let s = reference::species();
    let atom = AtomInLattice::new(&s, &reference::lattice().with_circ_degree(1.0)).unwrap();
    let fixtures = [(Coherence::Clock, 3.414_908), (Coherence::Plus, 4.299_718), (Coherence::Minus, 4.891_676)];
    for (coh, b0) in fixtures {
        let n = magic_field_numeric(&atom, coh, DEFAULT_BRACKET).unwrap();
        assert!((n.b0 - b0).abs() < 2e-6, "{coh}: {}", n.b0);
        let c = magic_field_closed_form(atom.polarizabilities(), &s, coh).unwrap();
        assert!((c.b0 - n.b0).abs() / n.b0 < 1e-4);
    }
    let p = atom.polarizabilities();
    assert!((p.lower.scalar - -31.736_53).abs() < 1e-4);
    assert!((p.upper.scalar - -31.738_44).abs() < 1e-4);
    assert!((p.alpha12_vector - -0.869_06).abs() < 1e-4);
}
