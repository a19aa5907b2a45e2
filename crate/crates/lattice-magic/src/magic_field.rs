//! Magic bias fields: where the intensity-linear part of δ vanishes.
//!
//! The numeric path finds the root of s(B) = ∂δ/∂I at I -> 0. The closed forms
//! come from linearizing the perturbative δ in intensity and solving for B:
//!
//! ```text
//! clock: B0 = Delta/(4 mu a12) [ sqrt(5/3)(a0_2 - a0_1) - sqrt(5/21)(a2_2 - sqrt(7/5) a2_1) ]
//! m=+-1: B0 = (4/3) Delta/(4 mu a12) [ sqrt(5/3)(a0_2 - a0_1) - m (sqrt5/2)(a1_1 + a1_2/sqrt3)
//!                                      - (1/2) sqrt(5/21)(a2_2 + sqrt(7/5) a2_1) ]
//! ```
//!
//! with a12 the off-diagonal vector polarizability and
//! mu = <2,0|H^Z|1,0>/B = (mu_B/h)(g_J - g_I)/2. With the effective vector
//! components of [`crate::polarizability`], m = +1 pairs with the minus sign of
//! the vector term. Flipping the helicity maps B -> -B together with m -> -m,
//! so roots are searched in the given bracket and in its mirror image, and b0
//! is reported signed.

use serde::Serialize;

use crate::atomic_data::SpeciesData;
use crate::error::{Error, Result};
use crate::ground_manifold::{zeeman_hamiltonian, AtomInLattice, Basis, Coherence};
use crate::polarizability::PolarizabilitySet;

pub const DEFAULT_BRACKET: (f64, f64) = (0.5, 12.0);

/// Root tolerance in G.
pub const FIELD_TOLERANCE: f64 = 1e-9;

/// Intensity step (W/cm^2) of the finite-difference slope s(B).
pub const SLOPE_STEP: f64 = 1.0;

const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Numeric,
    ClosedForm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Numeric => "numeric",
            Method::ClosedForm => "closed_form",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MagicFieldResult {
    pub coherence: Coherence,
    /// Signed field, G.
    pub b0: f64,
    pub method: Method,
    /// s(b0), Hz per W/cm^2.
    pub slope_residual: Option<f64>,
    /// Interval that contained the root, G.
    pub bracket: Option<(f64, f64)>,
    pub iterations: usize,
    /// Size of the last update, G.
    pub tolerance: f64,
}

/// s(B) = ∂δ/∂I at I -> 0 from δ at I = 0, h, 2h.
pub fn intensity_slope(atom: &AtomInLattice, b_gauss: f64, coh: Coherence) -> Result<f64> {
    let h = SLOPE_STEP;
    let d0 = atom.differential_shift(b_gauss, 0.0, coh)?;
    let d1 = atom.differential_shift(b_gauss, h, coh)? - d0;
    let d2 = atom.differential_shift(b_gauss, 2.0 * h, coh)? - d0;
    Ok((4.0 * d1 - d2) / (2.0 * h))
}

/// Root of s(B) in `bracket` = (lo, hi) with 0 <= lo < hi, or in (-hi, -lo).
pub fn magic_field_numeric(atom: &AtomInLattice, coh: Coherence, bracket: (f64, f64)) -> Result<MagicFieldResult> {
    let (lo, hi) = bracket;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!("bracket ({lo}, {hi}) must satisfy 0 <= lo < hi")));
    }
    let s = |b: f64| intensity_slope(atom, b, coh);
    let mut found = None;
    for (a, b) in [(lo, hi), (-hi, -lo)] {
        let (sa, sb) = (s(a)?, s(b)?);
        if sa == 0.0 {
            found = Some((a, a, sa, sa));
            break;
        }
        if sb == 0.0 {
            found = Some((b, b, sb, sb));
            break;
        }
        if sa.signum() != sb.signum() {
            found = Some((a, b, sa, sb));
            break;
        }
    }
    let (mut a, mut b, mut sa, mut sb) = found.ok_or(Error::NoSignChange { lo, hi })?;
    let searched = (a.min(b), a.max(b));

    // Bisection down to a milligauss, then Illinois-style false position.
    let mut iterations = 0;
    while (b - a).abs() > 1e-3 {
        iterations += 1;
        let m = 0.5 * (a + b);
        let sm = s(m)?;
        if sm.signum() == sa.signum() {
            a = m;
            sa = sm;
        } else {
            b = m;
            sb = sm;
        }
    }
    let mut x = 0.5 * (a + b);
    let mut step = (b - a).abs();
    let mut side = 0;
    while step > FIELD_TOLERANCE && sa != sb {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::NonConvergence { what: format!("{coh} magic-field search"), iterations });
        }
        let next = (a * sb - b * sa) / (sb - sa);
        step = (next - x).abs();
        x = next;
        let sx = s(x)?;
        if sx == 0.0 {
            break;
        }
        if sx.signum() == sb.signum() {
            b = x;
            sb = sx;
            if side == 1 {
                sa *= 0.5;
            }
            side = 1;
        } else {
            a = x;
            sa = sx;
            if side == -1 {
                sb *= 0.5;
            }
            side = -1;
        }
    }
    Ok(MagicFieldResult {
        coherence: coh,
        b0: x,
        method: Method::Numeric,
        slope_residual: Some(s(x)?),
        bracket: Some(searched),
        iterations,
        tolerance: step,
    })
}

/// mu = <F_upper,0|H^Z|F_lower,0>/B in Hz/G.
pub fn hyperfine_zeeman_coupling(species: &SpeciesData) -> Result<f64> {
    let basis = Basis::for_species(species);
    let z = zeeman_hamiltonian(species, 1.0)?;
    Ok(z[(basis.index(basis.f_upper(), 0).unwrap(), basis.index(basis.f_lower(), 0).unwrap())])
}

/// The bracketed closed forms; needs I = 3/2.
pub fn magic_field_closed_form(pset: &PolarizabilitySet, species: &SpeciesData, coh: Coherence) -> Result<MagicFieldResult> {
    if pset.lower.f != 1 || pset.upper.f != 2 {
        return Err(Error::Unsupported("closed forms are derived for F = 1, 2 (I = 3/2)".into()));
    }
    if pset.alpha12_vector == 0.0 || !pset.alpha12_vector.is_finite() {
        return Err(Error::InvalidInput("off-diagonal vector polarizability is zero".into()));
    }
    let mu = hyperfine_zeeman_coupling(species)?;
    let pre = species.hyperfine_splitting_hz / (4.0 * mu * pset.alpha12_vector);
    let scalar = (5.0f64 / 3.0).sqrt() * (pset.upper.scalar - pset.lower.scalar);
    let r75 = (7.0f64 / 5.0).sqrt();
    let r521 = (5.0f64 / 21.0).sqrt();
    let b0 = match coh {
        Coherence::Clock => pre * (scalar - r521 * (pset.upper.tensor - r75 * pset.lower.tensor)),
        Coherence::Plus | Coherence::Minus => {
            let m = coh.m() as f64;
            let vector = 5f64.sqrt() / 2.0 * (pset.lower.vector + pset.upper.vector / 3f64.sqrt());
            let tensor = 0.5 * r521 * (pset.upper.tensor + r75 * pset.lower.tensor);
            4.0 / 3.0 * pre * (scalar - m * vector - tensor)
        }
    };
    Ok(MagicFieldResult {
        coherence: coh,
        b0,
        method: Method::ClosedForm,
        slope_residual: None,
        bracket: None,
        iterations: 0,
        tolerance: 0.0,
    })
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::invariant("circ_degree_A", "ellipticity correction needs 0 < A <= 1"));
    }
    Ok(())
}

/// Field for ideal circular polarization from one measured at degree A.
pub fn ellipticity_correct(b_measured: f64, a: f64) -> Result<f64> {
    check_a(a)?;
    Ok(a * b_measured)
}

/// Inverse of [`ellipticity_correct`].
pub fn ellipticity_uncorrect(b_ideal: f64, a: f64) -> Result<f64> {
    check_a(a)?;
    Ok(b_ideal / a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub vector_ratio: f64,
    pub tensor_ratio: f64,
}

/// 2(B- - B+)/(B- + B+) and ((3/8)(B- + B+) - B0)/B0.
pub fn vector_tensor_diagnostics(b_plus: f64, b_minus: f64, b_clock: f64) -> Result<Diagnostics> {
    if !(b_plus > 0.0 && b_minus > 0.0 && b_clock > 0.0) {
        return Err(Error::InvalidInput("diagnostics need positive fields".into()));
    }
    let sum = b_minus + b_plus;
    Ok(Diagnostics { vector_ratio: 2.0 * (b_minus - b_plus) / sum, tensor_ratio: (3.0 / 8.0 * sum - b_clock) / b_clock })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipticity_examples() {
        assert!((ellipticity_correct(4.24, 0.991).unwrap() - 4.20184).abs() < 1e-12);
        assert_eq!(ellipticity_correct(3.3, 1.0).unwrap(), 3.3);
        assert!(ellipticity_correct(4.0, 0.0).is_err());
        assert!(ellipticity_correct(4.0, 1.1).is_err());
        let x = ellipticity_uncorrect(ellipticity_correct(5.42, 0.991).unwrap(), 0.991).unwrap();
        assert!((x - 5.42).abs() < 1e-14);
    }

    #[test]
    fn diagnostics_examples() {
        let d = vector_tensor_diagnostics(5.37, 5.93, 4.20).unwrap();
        assert!((d.vector_ratio - 0.099_115).abs() < 1e-6);
        assert!((d.tensor_ratio - 0.008_929).abs() < 1e-6);
        assert_eq!(vector_tensor_diagnostics(5.0, 5.0, 4.0).unwrap().vector_ratio, 0.0);
        assert!(vector_tensor_diagnostics(-1.0, 5.0, 4.0).is_err());
    }
}
