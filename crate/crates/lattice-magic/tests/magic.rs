use lattice_magic::atomic_data::{reference, LatticeConfig};
use lattice_magic::error::Error;
use lattice_magic::ground_manifold::{AtomInLattice, Coherence};
use lattice_magic::magic_field::{
    ellipticity_correct, ellipticity_uncorrect, intensity_slope, magic_field_closed_form, magic_field_numeric,
    vector_tensor_diagnostics, DEFAULT_BRACKET,
};

fn atom(a: f64) -> AtomInLattice {
    AtomInLattice::new(&reference::species(), &reference::lattice().with_circ_degree(a)).unwrap()
}

#[test]
fn linear_polarization_has_no_magic_field() {
    let atom = atom(0.0);
    for coh in Coherence::ALL {
        assert!(matches!(magic_field_numeric(&atom, coh, DEFAULT_BRACKET), Err(Error::NoSignChange { .. })), "{coh}");
    }
}

#[test]
fn closed_form_tracks_numeric_root() {
    let s = reference::species();
    for a in [1.0, 0.991, 0.5] {
        let atom = atom(a);
        for coh in Coherence::ALL {
            let n = magic_field_numeric(&atom, coh, DEFAULT_BRACKET).unwrap();
            let c = magic_field_closed_form(atom.polarizabilities(), &s, coh).unwrap();
            assert!((c.b0 / n.b0 - 1.0).abs() < 0.01, "A = {a}, {coh}: {} vs {}", c.b0, n.b0);
            let (r, far) = (n.slope_residual.unwrap().abs(), intensity_slope(&atom, n.b0 + 0.5, coh).unwrap().abs());
            assert!(r < 1e-4 * far, "{coh}: residual {r} vs {far}");
        }
    }
}

#[test]
fn helicity_flip_swaps_magic_fields() {
    let (fwd, rev) = (atom(0.991), atom(-0.991));
    for coh in Coherence::ALL {
        let a = magic_field_numeric(&fwd, coh, DEFAULT_BRACKET).unwrap().b0;
        let b = magic_field_numeric(&rev, coh.mirrored(), DEFAULT_BRACKET).unwrap().b0;
        assert!((a + b).abs() < 1e-8, "{coh}: {a} vs {b}");
    }
}

#[test]
fn magic_field_scales_inversely_with_circular_degree() {
    let ideal = magic_field_numeric(&atom(1.0), Coherence::Clock, DEFAULT_BRACKET).unwrap().b0;
    let real = magic_field_numeric(&atom(0.991), Coherence::Clock, DEFAULT_BRACKET).unwrap().b0;
    let corrected = ellipticity_correct(real, 0.991).unwrap();
    assert!((corrected / ideal - 1.0).abs() < 1e-3, "{corrected} vs {ideal}");
    assert!((ellipticity_uncorrect(corrected, 0.991).unwrap() - real).abs() < 1e-12);
}

#[test]
fn ellipticity_correction_examples() {
    for (measured, want) in [(4.24, 4.20), (5.42, 5.37), (5.99, 5.93)] {
        let got = ellipticity_correct(measured, 0.991).unwrap();
        assert!((got - want).abs() <= 0.01, "{measured}: {got}");
    }
    assert!(ellipticity_correct(4.24, 0.0).is_err());
    assert!(ellipticity_correct(4.24, 1.2).is_err());
}

#[test]
fn diagnostics_definition() {
    let d = vector_tensor_diagnostics(4.0, 5.0, 3.3).unwrap();
    assert!((d.vector_ratio - 2.0 / 9.0).abs() < 1e-15);
    assert!((d.tensor_ratio - (3.375 - 3.3) / 3.3).abs() < 1e-15);
    assert!(vector_tensor_diagnostics(-4.0, 5.0, 3.3).is_err());
}

#[test]
fn magic_field_independent_of_depth() {
    // The root of the I -> 0 slope does not see the lattice depth.
    let s = reference::species();
    let b = |depth: f64| {
        let lat = LatticeConfig { trap_depth_uk: depth, ..reference::lattice() };
        magic_field_numeric(&AtomInLattice::new(&s, &lat).unwrap(), Coherence::Clock, DEFAULT_BRACKET).unwrap().b0
    };
    assert!((b(16.0) - b(64.0)).abs() < 1e-6);
}

#[test]
fn bad_bracket_rejected() {
    assert!(magic_field_numeric(&atom(1.0), Coherence::Clock, (3.0, 1.0)).is_err());
    assert!(matches!(magic_field_numeric(&atom(1.0), Coherence::Clock, (0.5, 1.0)), Err(Error::NoSignChange { .. })));
}
