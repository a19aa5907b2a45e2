//! Dynamic polarizabilities of the ground hyperfine levels.
//!
//! The Stark operator is summed over all excited Zeeman sublevels of each line,
//! with the lattice described as an incoherent mixture of sigma+ (weight
//! (1+A)/2) and sigma- (weight (1-A)/2) light propagating along B. Dropping the
//! sigma+/sigma- cross term removes the Delta m = 2 tensor coupling, so U keeps
//! the m-block structure of H^Z.
//!
//! Convention for the reduced components. With beta^K the rank-K reduced matrix
//! elements of the effective polarizability operator,
//!
//! ```text
//! <F m|U|F' m>/I = -sum_K p_K (-1)^(F-m) (F K F'; -m 0 m) beta^K_FF'
//! p_0 = -1/sqrt3, p_1 = 1/sqrt2, p_2 = -1/sqrt6
//! alpha^[K]_F  = beta^K_FF  / (sqrt3 sqrt(2F+1))
//! alpha^[K]_12 = beta^K_21  / (sqrt3 sqrt(2F_lower+1))
//! ```
//!
//! so alpha^[0]_F is the scalar shift per unit intensity. The vector components
//! are effective ones: they already contain the signed degree of circular
//! polarization A they were computed at.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angular::{clebsch_gordan, parity, wigner_3j};
use crate::atomic_data::{trap_depth_to_intensity, LatticeConfig, SpeciesData};
use crate::constants::stark_prefactor;
use crate::error::{Error, Result};
use crate::ground_manifold::{Basis, Level};

pub const CONVENTION_ID: &str = "reduced-rank/sqrt3sqrt(2F+1)/effective-A";

/// Relative reassembly residual tolerated by [`decompose_stark`].
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;

/// The Stark operator U on the ground manifold, Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct StarkOperator {
    pub basis: Basis,
    pub matrix: DMatrix<f64>,
    /// W/cm^2.
    pub intensity: f64,
    pub wavelength_nm: f64,
    pub circ_degree: f64,
}

impl StarkOperator {
    /// Mean diagonal of the lower hyperfine block, Hz.
    pub fn lower_scalar_shift(&self) -> f64 {
        let f = self.basis.f_lower();
        let idx: Vec<usize> = (-f..=f).map(|m| self.basis.index(f, m).unwrap()).collect();
        idx.iter().map(|&i| self.matrix[(i, i)]).sum::<f64>() / idx.len() as f64
    }

    pub fn scaled(&self, intensity: f64) -> StarkOperator {
        let factor = if self.intensity == 0.0 { 0.0 } else { intensity / self.intensity };
        StarkOperator { matrix: &self.matrix * factor, intensity, ..self.clone() }
    }

    pub fn element(&self, a: Level, b: Level) -> f64 {
        let i = self.basis.index(a.f, a.m).expect("level in basis");
        let j = self.basis.index(b.f, b.m).expect("level in basis");
        self.matrix[(i, j)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPolarizability {
    pub f: i32,
    pub scalar: f64,
    pub vector: f64,
    pub tensor: f64,
}

impl LevelPolarizability {
    fn rank(&self, k: i32) -> f64 {
        match k {
            0 => self.scalar,
            1 => self.vector,
            _ => self.tensor,
        }
    }
}

/// Reduced polarizability components, Hz per W/cm^2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizabilitySet {
    pub lower: LevelPolarizability,
    pub upper: LevelPolarizability,
    pub alpha12_vector: f64,
    /// Rank-2 part of the hyperfine-off-diagonal coupling.
    pub alpha12_tensor: f64,
    pub wavelength_nm: f64,
    /// Signed A the vector components belong to.
    pub circ_degree: f64,
    pub convention_id: String,
}

fn p_k(k: i32) -> f64 {
    match k {
        0 => -1.0 / 3f64.sqrt(),
        1 => 1.0 / 2f64.sqrt(),
        2 => -1.0 / 6f64.sqrt(),
        _ => unreachable!("rank {k}"),
    }
}

fn rank_allowed(f1: i32, k: i32, f2: i32) -> bool {
    k <= f1 + f2 && k >= (f1 - f2).abs()
}

/// <F m|U|F m> produced by a unit alpha^[K]_F.
pub fn diagonal_coefficient(f: i32, k: i32, m: i32) -> f64 {
    -p_k(k) * parity(2 * (f - m)) * wigner_3j(2 * f, 2 * k, 2 * f, -2 * m, 0, 2 * m) * 3f64.sqrt() * ((2 * f + 1) as f64).sqrt()
}

/// <F_upper m|U|F_lower m> produced by a unit alpha^[K]_12.
pub fn coupling_coefficient(f_upper: i32, f_lower: i32, k: i32, m: i32) -> f64 {
    -p_k(k)
        * parity(2 * (f_upper - m))
        * wigner_3j(2 * f_upper, 2 * k, 2 * f_lower, -2 * m, 0, 2 * m)
        * 3f64.sqrt()
        * ((2 * f_lower + 1) as f64).sqrt()
}

impl PolarizabilitySet {
    pub fn level(&self, f: i32) -> &LevelPolarizability {
        if f == self.upper.f {
            &self.upper
        } else {
            &self.lower
        }
    }

    /// alpha^[0]_upper - alpha^[0]_lower.
    pub fn differential_scalar(&self) -> f64 {
        self.upper.scalar - self.lower.scalar
    }

    /// Rank-1 part of <F_upper m|U|F_lower m> at `intensity`, Hz.
    pub fn coupling_vector_element(&self, m: i32, intensity: f64) -> f64 {
        if m.abs() > self.lower.f {
            return 0.0;
        }
        intensity * self.alpha12_vector * coupling_coefficient(self.upper.f, self.lower.f, 1, m)
    }

    /// Scalar, vector and tensor parts flipped as under a helicity reversal.
    pub fn with_flipped_helicity(&self) -> PolarizabilitySet {
        let mut out = self.clone();
        out.lower.vector = -out.lower.vector;
        out.upper.vector = -out.upper.vector;
        out.alpha12_vector = -out.alpha12_vector;
        out.circ_degree = -out.circ_degree;
        out
    }
}

/// U per unit intensity (Hz per W/cm^2) at the lattice wavelength and A.
pub fn stark_operator_per_intensity(species: &SpeciesData, lattice: &LatticeConfig) -> Result<StarkOperator> {
    lattice.validate()?;
    lattice.check_detuning(species)?;
    let basis = Basis::for_species(species);
    let matrix = sum_over_states(species, &basis, lattice.frequency_hz(), lattice.circ_degree_a);
    basis.check_structure(&matrix)?;
    Ok(StarkOperator {
        basis,
        matrix,
        intensity: 1.0,
        wavelength_nm: lattice.wavelength_vac_nm,
        circ_degree: lattice.circ_degree_a,
    })
}

/// U at the intensity that produces the configured trap depth.
pub fn stark_operator_direct(species: &SpeciesData, lattice: &LatticeConfig) -> Result<StarkOperator> {
    let unit = stark_operator_per_intensity(species, lattice)?;
    let intensity = trap_depth_to_intensity(species, lattice)?;
    Ok(unit.scaled(intensity))
}

/// One excited manifold: energies and amplitudes on the uncoupled |m_J', m_I> states.
struct ExcitedStates {
    uncoupled: Vec<(i32, i32)>,
    energies: Vec<f64>,
    amplitudes: DMatrix<f64>,
}

fn excited_states(species: &SpeciesData, two_i: i32, line: &crate::atomic_data::TransitionLine) -> ExcitedStates {
    let tjp = line.two_j();
    let mut uncoupled = Vec::new();
    for tmj in (-tjp..=tjp).step_by(2) {
        for tmi in (-two_i..=two_i).step_by(2) {
            uncoupled.push((tmj, tmi));
        }
    }
    match (&line.excited_hyperfine, species.sum_over_states.excited_hyperfine) {
        (Some(hfs), true) => {
            let mut energies = Vec::new();
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for &(fp, offset) in hfs {
                for mp in -fp..=fp {
                    energies.push(line.frequency_hz + offset);
                    rows.push(
                        uncoupled
                            .iter()
                            .map(
                                |&(tmj, tmi)| {
                                    if tmj + tmi == 2 * mp {
                                        clebsch_gordan(tjp, tmj, two_i, tmi, 2 * fp, 2 * mp)
                                    } else {
                                        0.0
                                    }
                                },
                            )
                            .collect(),
                    );
                }
            }
            let n = uncoupled.len();
            let amplitudes = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
            ExcitedStates { uncoupled, energies, amplitudes }
        }
        _ => {
            let n = uncoupled.len();
            ExcitedStates { uncoupled, energies: vec![line.frequency_hz; n], amplitudes: DMatrix::identity(n, n) }
        }
    }
}

fn sum_over_states(species: &SpeciesData, basis: &Basis, nu: f64, a: f64) -> DMatrix<f64> {
    let opts = species.sum_over_states;
    let k = stark_prefactor();
    let n = basis.len();
    let ground_c = basis.coupling_matrix();
    let ground_unc = basis.uncoupled();
    let ground_e: Vec<f64> = basis
        .levels()
        .iter()
        .map(|l| match (opts.ground_hyperfine_in_detuning, l.f == basis.f_upper()) {
            (false, _) => 0.0,
            (true, true) => species.upper_hyperfine_energy(),
            (true, false) => species.lower_hyperfine_energy(),
        })
        .collect();

    let mut u = DMatrix::<f64>::zeros(n, n);
    for line in &species.lines {
        let exc = excited_states(species, basis.two_i(), line);
        let tjp = line.two_j();
        let d_red = line.reduced_dipole_sq.sqrt();
        for (q, weight) in [(1, 0.5 * (1.0 + a)), (-1, 0.5 * (1.0 - a))] {
            if weight == 0.0 {
                continue;
            }
            // Rotating term absorbs a q photon; the counter-rotating one emits it.
            for (qq, sign) in [(q, 1.0), (-q, -1.0)] {
                if sign < 0.0 && !opts.counter_rotating {
                    continue;
                }
                let d_unc = DMatrix::from_fn(exc.uncoupled.len(), ground_unc.len(), |i, b| {
                    let (tmjp, tmie) = exc.uncoupled[i];
                    let (tmj, tmi) = ground_unc[b];
                    if tmie != tmi || tmjp != tmj + 2 * qq {
                        return 0.0;
                    }
                    parity(tjp - tmjp) * wigner_3j(tjp, 2, 1, -tmjp, 2 * qq, tmj) * d_red
                });
                let d = &exc.amplitudes * d_unc * ground_c.transpose();
                for i in 0..n {
                    for j in i..n {
                        let mut s = 0.0;
                        for (e, &ee) in exc.energies.iter().enumerate() {
                            let prod = d[(e, i)] * d[(e, j)];
                            if prod == 0.0 {
                                continue;
                            }
                            s += prod * 0.5 * (1.0 / (ee - ground_e[i] - sign * nu) + 1.0 / (ee - ground_e[j] - sign * nu));
                        }
                        u[(i, j)] -= k * weight * s;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            u[(i, j)] = u[(j, i)];
        }
    }
    u
}

/// Projects U onto rank-0, 1, 2 components per hyperfine block plus the
/// hyperfine-off-diagonal rank-1 and rank-2 parts; intensity is divided out.
pub fn decompose_stark(op: &StarkOperator) -> Result<PolarizabilitySet> {
    op.basis.check_structure(&op.matrix)?;
    if !(op.intensity > 0.0) {
        return Err(Error::InvalidInput("decomposition needs a positive intensity".into()));
    }
    let basis = &op.basis;
    let (fl, fu) = (basis.f_lower(), basis.f_upper());
    let idx = |f: i32, m: i32| basis.index(f, m).unwrap();

    let level = |f: i32| -> LevelPolarizability {
        let ranks: Vec<i32> = (0..=2).filter(|&k| rank_allowed(f, k, f)).collect();
        let ms: Vec<i32> = (-f..=f).collect();
        let a = DMatrix::from_fn(ms.len(), ranks.len(), |r, c| diagonal_coefficient(f, ranks[c], ms[r]));
        let y = DVector::from_iterator(ms.len(), ms.iter().map(|&m| op.matrix[(idx(f, m), idx(f, m))] / op.intensity));
        let sol = least_squares(&a, &y);
        let get = |k: i32| ranks.iter().position(|&r| r == k).map_or(0.0, |p| sol[p]);
        LevelPolarizability { f, scalar: get(0), vector: get(1), tensor: get(2) }
    };
    let lower = level(fl);
    let upper = level(fu);

    let ranks: Vec<i32> = [1, 2].into_iter().filter(|&k| rank_allowed(fu, k, fl)).collect();
    let ms: Vec<i32> = (-fl..=fl).collect();
    let a = DMatrix::from_fn(ms.len(), ranks.len(), |r, c| coupling_coefficient(fu, fl, ranks[c], ms[r]));
    let y = DVector::from_iterator(ms.len(), ms.iter().map(|&m| op.matrix[(idx(fu, m), idx(fl, m))] / op.intensity));
    let sol = least_squares(&a, &y);
    let get = |k: i32| ranks.iter().position(|&r| r == k).map_or(0.0, |p| sol[p]);

    let pset = PolarizabilitySet {
        lower,
        upper,
        alpha12_vector: get(1),
        alpha12_tensor: get(2),
        wavelength_nm: op.wavelength_nm,
        circ_degree: op.circ_degree,
        convention_id: CONVENTION_ID.to_string(),
    };
    let back = assemble_stark(&pset, op.intensity, op.circ_degree)?;
    let scale = op.matrix.amax();
    if scale > 0.0 {
        let resid = (&back.matrix - &op.matrix).amax() / scale;
        if resid > DECOMPOSITION_TOLERANCE {
            return Err(Error::Decomposition(resid));
        }
    }
    Ok(pset)
}

fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    a.clone().svd(true, true).solve(y, 1e-14).expect("SVD with both factors")
}

/// Rebuilds U at `intensity` and signed `circ_degree`. The vector components
/// are rescaled by circ_degree / pset.circ_degree.
pub fn assemble_stark(pset: &PolarizabilitySet, intensity: f64, circ_degree: f64) -> Result<StarkOperator> {
    if !intensity.is_finite() || intensity < 0.0 {
        return Err(Error::InvalidInput(format!("intensity {intensity} W/cm^2")));
    }
    if !(circ_degree.abs() <= 1.0) {
        return Err(Error::invariant("circ_degree_A", "must lie in [-1, 1]"));
    }
    let vector_scale = if circ_degree == pset.circ_degree {
        1.0
    } else if pset.circ_degree != 0.0 {
        circ_degree / pset.circ_degree
    } else if circ_degree == 0.0 {
        0.0
    } else {
        return Err(Error::InvalidInput("polarizabilities computed for linear polarization carry no vector information".into()));
    };
    if pset.upper.f != pset.lower.f + 1 {
        return Err(Error::InvalidInput("hyperfine levels must differ by one".into()));
    }
    let basis = Basis::new(2 * pset.lower.f + 1);
    let n = basis.len();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for (i, l) in basis.levels().iter().enumerate() {
        let lp = pset.level(l.f);
        let mut v = 0.0;
        for k in 0..=2 {
            if rank_allowed(l.f, k, l.f) {
                let scale = if k == 1 { vector_scale } else { 1.0 };
                v += scale * lp.rank(k) * diagonal_coefficient(l.f, k, l.m);
            }
        }
        u[(i, i)] = intensity * v;
    }
    let (fl, fu) = (basis.f_lower(), basis.f_upper());
    for m in -fl..=fl {
        let (i, j) = (basis.index(fu, m).unwrap(), basis.index(fl, m).unwrap());
        let mut v = 0.0;
        if rank_allowed(fu, 1, fl) {
            v += vector_scale * pset.alpha12_vector * coupling_coefficient(fu, fl, 1, m);
        }
        if rank_allowed(fu, 2, fl) {
            v += pset.alpha12_tensor * coupling_coefficient(fu, fl, 2, m);
        }
        u[(i, j)] = intensity * v;
        u[(j, i)] = intensity * v;
    }
    Ok(StarkOperator { basis, matrix: u, intensity, wavelength_nm: pset.wavelength_nm, circ_degree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic_data::reference;

    #[test]
    fn scalar_coefficient_is_one() {
        for f in 1..=2 {
            for m in -f..=f {
                assert!((diagonal_coefficient(f, 0, m) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vector_coefficient_odd_in_m() {
        for m in 1..=2 {
            let a = diagonal_coefficient(2, 1, m);
            assert!(a != 0.0);
            assert!((a + diagonal_coefficient(2, 1, -m)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_intensity_operator() {
        let s = reference::species();
        let l = reference::lattice().with_depth(0.0);
        assert_eq!(stark_operator_direct(&s, &l).unwrap().matrix.amax(), 0.0);
    }

    #[test]
    fn zero_set_assembles_to_zero() {
        let zero = LevelPolarizability { f: 1, scalar: 0.0, vector: 0.0, tensor: 0.0 };
        let pset = PolarizabilitySet {
            lower: zero,
            upper: LevelPolarizability { f: 2, ..zero },
            alpha12_vector: 0.0,
            alpha12_tensor: 0.0,
            wavelength_nm: 1063.8,
            circ_degree: 1.0,
            convention_id: CONVENTION_ID.into(),
        };
        assert_eq!(assemble_stark(&pset, 1e4, 1.0).unwrap().matrix.amax(), 0.0);
    }

    #[test]
    fn trapping_scalar_polarizability() {
        let s = reference::species();
        let u = stark_operator_per_intensity(&s, &reference::lattice()).unwrap();
        let p = decompose_stark(&u).unwrap();
        assert!(p.lower.scalar < 0.0 && p.upper.scalar < 0.0);
        // close to 680 atomic units at 1064 nm
        let au = p.lower.scalar / -0.046_871_25;
        assert!(au > 600.0 && au < 750.0, "{au}");
    }
}
