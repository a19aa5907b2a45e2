//! The ground S1/2 manifold: basis, Hamiltonian pieces, dressed levels and
//! differential shifts of the three long-lived coherences.
//!
//! Energies are carried relative to the zero-field hyperfine centroid. Each m
//! block holds at most one state of each hyperfine level, so blocks are 1x1 or
//! 2x2 and are diagonalized in closed form. The shift of a level is computed
//! directly (never as a difference of GHz-sized energies), which keeps
//! differential shifts accurate to well below a microhertz.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::angular::clebsch_gordan;
use crate::atomic_data::{trap_depth_to_intensity, LatticeConfig, SpeciesData};
use crate::error::{Error, Result};
use crate::polarizability::{decompose_stark, stark_operator_per_intensity, PolarizabilitySet, StarkOperator};

/// Sanity bound on the bias field.
pub const MAX_FIELD_G: f64 = 1e4;

/// Adiabatic labels with a smaller overlap than this are flagged.
pub const MIN_OVERLAP: f64 = 0.7;

/// Smallness parameter above which the perturbative path logs a warning.
pub const PERTURBATIVE_WARNING: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Level {
    pub f: i32,
    pub m: i32,
}

impl fmt::Display for Level {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "|{},{}>", self.f, self.m)
    }
}

/// Ordered |F, m> basis of a J = 1/2 ground state: lower level first, m ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    two_i: i32,
    levels: Vec<Level>,
}

impl Basis {
    /// `two_i` must be odd, so that F = I +- 1/2 are integers.
    pub fn new(two_i: i32) -> Self {
        assert!(two_i > 0 && two_i % 2 == 1, "nuclear spin must be half-integer");
        let f_lower = (two_i - 1) / 2;
        let mut levels = Vec::new();
        for f in [f_lower, f_lower + 1] {
            for m in -f..=f {
                levels.push(Level { f, m });
            }
        }
        Basis { two_i, levels }
    }

    pub fn for_species(species: &SpeciesData) -> Self {
        Basis::new(species.two_i())
    }

    pub fn two_i(&self) -> i32 {
        self.two_i
    }

    pub fn f_lower(&self) -> i32 {
        (self.two_i - 1) / 2
    }

    pub fn f_upper(&self) -> i32 {
        (self.two_i + 1) / 2
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn index(&self, f: i32, m: i32) -> Option<usize> {
        self.levels.iter().position(|l| l.f == f && l.m == m)
    }

    /// Uncoupled states as (2 m_J, 2 m_I), m_J outer.
    pub fn uncoupled(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::with_capacity(self.len());
        for tmj in [-1, 1] {
            for tmi in (-self.two_i..=self.two_i).step_by(2) {
                out.push((tmj, tmi));
            }
        }
        out
    }

    /// <J m_J; I m_I | F m>, rows in coupled order, columns in [`Basis::uncoupled`] order.
    pub fn coupling_matrix(&self) -> DMatrix<f64> {
        let unc = self.uncoupled();
        DMatrix::from_fn(self.len(), unc.len(), |a, b| {
            let Level { f, m } = self.levels[a];
            let (tmj, tmi) = unc[b];
            if tmj + tmi != 2 * m {
                0.0
            } else {
                clebsch_gordan(1, tmj, self.two_i, tmi, 2 * f, 2 * m)
            }
        })
    }

    /// Checks that `op` is symmetric and couples only equal m.
    pub fn check_structure(&self, op: &DMatrix<f64>) -> Result<()> {
        let n = self.len();
        if op.nrows() != n || op.ncols() != n {
            return Err(Error::InvalidInput(format!("operator is {}x{}, basis has {n} states", op.nrows(), op.ncols())));
        }
        let scale = op.amax().max(f64::MIN_POSITIVE);
        let mut asym: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                asym = asym.max((op[(a, b)] - op[(b, a)]).abs());
                if self.levels[a].m != self.levels[b].m && op[(a, b)].abs() > 1e-14 * scale {
                    return Err(Error::BlockStructure {
                        row: self.levels[a].to_string(),
                        col: self.levels[b].to_string(),
                        value: op[(a, b)],
                    });
                }
            }
        }
        if asym > 1e-13 * scale {
            return Err(Error::NonHermitian(asym));
        }
        Ok(())
    }
}

/// Which long-lived coherence is addressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coherence {
    Clock,
    Plus,
    Minus,
}

impl Coherence {
    pub const ALL: [Coherence; 3] = [Coherence::Clock, Coherence::Plus, Coherence::Minus];

    /// m of the upper state; the lower state has -m.
    pub fn m(self) -> i32 {
        match self {
            Coherence::Clock => 0,
            Coherence::Plus => 1,
            Coherence::Minus => -1,
        }
    }

    pub fn upper(self, basis: &Basis) -> Level {
        Level { f: basis.f_upper(), m: self.m() }
    }

    pub fn lower(self, basis: &Basis) -> Level {
        Level { f: basis.f_lower(), m: -self.m() }
    }

    /// The coherence obtained by m -> -m.
    pub fn mirrored(self) -> Coherence {
        match self {
            Coherence::Clock => Coherence::Clock,
            Coherence::Plus => Coherence::Minus,
            Coherence::Minus => Coherence::Plus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coherence::Clock => "clock",
            Coherence::Plus => "plus",
            Coherence::Minus => "minus",
        }
    }
}

impl fmt::Display for Coherence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for Coherence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clock" | "0" => Ok(Coherence::Clock),
            "plus" | "+" | "+1" => Ok(Coherence::Plus),
            "minus" | "-" | "-1" => Ok(Coherence::Minus),
            _ => Err(Error::InvalidInput(format!("unknown coherence '{s}'"))),
        }
    }
}

/// Diagonal hyperfine energies, +I/(2I+1) Delta for the upper level and
/// -(I+1)/(2I+1) Delta for the lower one.
pub fn hyperfine_energies(species: &SpeciesData, basis: &Basis) -> DVector<f64> {
    DVector::from_iterator(
        basis.len(),
        basis.levels().iter().map(|l| {
            if l.f == basis.f_upper() {
                species.upper_hyperfine_energy()
            } else {
                species.lower_hyperfine_energy()
            }
        }),
    )
}

fn zeeman_per_gauss(species: &SpeciesData, basis: &Basis) -> DMatrix<f64> {
    let c = basis.coupling_matrix();
    let diag = DVector::from_iterator(
        basis.len(),
        basis.uncoupled().into_iter().map(|(tmj, tmi)| {
            0.5 * (species.electron_zeeman_hz_per_gauss * tmj as f64 + species.nuclear_zeeman_hz_per_gauss * tmi as f64)
        }),
    );
    &c * DMatrix::from_diagonal(&diag) * c.transpose()
}

/// (mu_B/h) B (g_J J_z + g_I I_z) in the coupled basis, Hz.
pub fn zeeman_hamiltonian(species: &SpeciesData, b_gauss: f64) -> Result<DMatrix<f64>> {
    check_field(b_gauss)?;
    let basis = Basis::for_species(species);
    let h = zeeman_per_gauss(species, &basis) * b_gauss;
    basis.check_structure(&h)?;
    Ok(h)
}

fn check_field(b_gauss: f64) -> Result<()> {
    if !b_gauss.is_finite() || b_gauss.abs() > MAX_FIELD_G {
        return Err(Error::InvalidInput(format!("field {b_gauss} G outside +-{MAX_FIELD_G} G")));
    }
    Ok(())
}

/// The pieces of H = H_hf + H^Z + U at one (B, intensity).
#[derive(Clone, Debug)]
pub struct ManifoldHamiltonian {
    pub basis: Basis,
    pub h_hf: DVector<f64>,
    pub h_zeeman: DMatrix<f64>,
    pub h_stark: DMatrix<f64>,
    pub b_gauss: f64,
    pub intensity: f64,
}

impl ManifoldHamiltonian {
    pub fn total(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.h_hf) + &self.h_zeeman + &self.h_stark
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DressedLevel {
    pub label: Level,
    /// Energy relative to the zero-field centroid, Hz.
    pub energy: f64,
    /// Energy minus the bare hyperfine energy of `label`, Hz.
    pub shift: f64,
    /// |<label|eigenvector>|.
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DressedLevels {
    /// One entry per basis state, in basis order.
    pub levels: Vec<DressedLevel>,
    /// Set when some label has overlap below [`MIN_OVERLAP`].
    pub degenerate: bool,
}

impl DressedLevels {
    pub fn get(&self, label: Level) -> Option<&DressedLevel> {
        self.levels.iter().find(|l| l.label == label)
    }

    pub fn energies_sorted(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.levels.iter().map(|l| l.energy).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_overlap(&self) -> f64 {
        self.levels.iter().map(|l| l.overlap).fold(1.0, f64::min)
    }
}

/// Perturbative differential shift with its validity estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbativeShift {
    pub delta: f64,
    /// (||H^Z|| + ||U||) / Delta with spectral norms.
    pub smallness: f64,
    pub warning: bool,
}

impl PerturbativeShift {
    /// 10 * smallness^3 * Delta.
    pub fn error_bound(&self, hyperfine_splitting_hz: f64) -> f64 {
        10.0 * self.smallness.powi(3) * hyperfine_splitting_hz
    }
}

/// dδ/dB with its extrapolation error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    /// Hz/G.
    pub value: f64,
    /// Absolute error estimate, Hz/G.
    pub error: f64,
    /// Smallest step used, G.
    pub step: f64,
}

impl MomentEstimate {
    pub fn relative_error(&self) -> f64 {
        self.error / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// Shifts and overlap of a 2x2 block [[E+ + sa, b], [b, E- + sd]].
///
/// Returns (shift of the mostly-upper state, shift of the mostly-lower state,
/// overlap with the own bare state).
fn block_shifts(sa: f64, sd: f64, b: f64, gap: f64) -> (f64, f64, f64) {
    let diff = gap + sa - sd;
    let r = diff.hypot(2.0 * b);
    if r == 0.0 {
        return (sa, sd, 1.0);
    }
    let eps = 2.0 * b * b / (r + diff.abs());
    let sgn = if diff < 0.0 { -1.0 } else { 1.0 };
    let overlap = (0.5 * (1.0 + diff.abs() / r)).sqrt();
    (sa + sgn * eps, sd - sgn * eps, overlap)
}

/// A species in a given lattice: caches the per-intensity Stark operator, its
/// decomposition and the per-gauss Zeeman operator.
#[derive(Clone, Debug)]
pub struct AtomInLattice {
    species: SpeciesData,
    lattice: LatticeConfig,
    basis: Basis,
    zeeman_unit: DMatrix<f64>,
    stark_unit: StarkOperator,
    pset: PolarizabilitySet,
    intensity: f64,
}

impl AtomInLattice {
    pub fn new(species: &SpeciesData, lattice: &LatticeConfig) -> Result<Self> {
        species.validate()?;
        lattice.validate()?;
        let basis = Basis::for_species(species);
        let stark_unit = stark_operator_per_intensity(species, lattice)?;
        let pset = decompose_stark(&stark_unit)?;
        let intensity = trap_depth_to_intensity(species, lattice)?;
        let zeeman_unit = zeeman_per_gauss(species, &basis);
        basis.check_structure(&zeeman_unit)?;
        Ok(AtomInLattice { species: species.clone(), lattice: lattice.clone(), basis, zeeman_unit, stark_unit, pset, intensity })
    }

    pub fn species(&self) -> &SpeciesData {
        &self.species
    }

    pub fn lattice(&self) -> &LatticeConfig {
        &self.lattice
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Lattice intensity for the configured depth, W/cm^2.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Polarizabilities at the configured wavelength and A.
    pub fn polarizabilities(&self) -> &PolarizabilitySet {
        &self.pset
    }

    /// Stark operator per unit intensity, Hz per W/cm^2.
    pub fn stark_per_intensity(&self) -> &StarkOperator {
        &self.stark_unit
    }

    pub fn hamiltonian(&self, b_gauss: f64, intensity: f64) -> Result<ManifoldHamiltonian> {
        check_field(b_gauss)?;
        let h_zeeman = &self.zeeman_unit * b_gauss;
        let h_stark = &self.stark_unit.matrix * intensity;
        self.basis.check_structure(&h_zeeman)?;
        self.basis.check_structure(&h_stark)?;
        Ok(ManifoldHamiltonian {
            basis: self.basis.clone(),
            h_hf: hyperfine_energies(&self.species, &self.basis),
            h_zeeman,
            h_stark,
            b_gauss,
            intensity,
        })
    }

    /// Shift of `level`'s adiabatic state and its overlap; no structure checks.
    fn level_shift(&self, b_gauss: f64, intensity: f64, level: Level) -> (f64, f64) {
        let elem = |a: usize, c: usize| self.zeeman_unit[(a, c)] * b_gauss + self.stark_unit.matrix[(a, c)] * intensity;
        let f_up = self.basis.f_upper();
        let f_lo = self.basis.f_lower();
        let up = self.basis.index(f_up, level.m);
        let lo = self.basis.index(f_lo, level.m);
        match (up, lo) {
            (Some(u), Some(l)) => {
                let (su, sl, ov) = block_shifts(elem(u, u), elem(l, l), elem(u, l), self.species.hyperfine_splitting_hz);
                if level.f == f_up {
                    (su, ov)
                } else {
                    (sl, ov)
                }
            }
            (Some(u), None) => (elem(u, u), 1.0),
            (None, Some(l)) => (elem(l, l), 1.0),
            (None, None) => unreachable!("level {level} not in basis"),
        }
    }

    /// Dressed levels at the lattice intensity.
    pub fn dressed_levels(&self, b_gauss: f64) -> Result<DressedLevels> {
        self.dressed_levels_at(b_gauss, self.intensity)
    }

    pub fn dressed_levels_at(&self, b_gauss: f64, intensity: f64) -> Result<DressedLevels> {
        let h = self.hamiltonian(b_gauss, intensity)?;
        let levels: Vec<DressedLevel> = self
            .basis
            .levels()
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let (shift, overlap) = self.level_shift(b_gauss, intensity, label);
                DressedLevel { label, energy: h.h_hf[i] + shift, shift, overlap }
            })
            .collect();
        let degenerate = levels.iter().any(|l| l.overlap < MIN_OVERLAP);
        Ok(DressedLevels { levels, degenerate })
    }

    /// δ = E(upper) - E(lower) - Delta at (B, intensity).
    pub fn differential_shift(&self, b_gauss: f64, intensity: f64, coh: Coherence) -> Result<f64> {
        check_field(b_gauss)?;
        let (su, ou) = self.level_shift(b_gauss, intensity, coh.upper(&self.basis));
        let (sl, ol) = self.level_shift(b_gauss, intensity, coh.lower(&self.basis));
        for (label, ov) in [(coh.upper(&self.basis), ou), (coh.lower(&self.basis), ol)] {
            if ov < MIN_OVERLAP {
                return Err(Error::Degenerate { label: label.to_string(), overlap: ov });
            }
        }
        Ok(su - sl)
    }

    /// δ at the lattice intensity.
    pub fn differential_shift_exact(&self, b_gauss: f64, coh: Coherence) -> Result<f64> {
        self.differential_shift(b_gauss, self.intensity, coh)
    }

    /// δ(intensity) - δ(0) at fixed B.
    pub fn light_part(&self, b_gauss: f64, intensity: f64, coh: Coherence) -> Result<f64> {
        Ok(self.differential_shift(b_gauss, intensity, coh)? - self.differential_shift(b_gauss, 0.0, coh)?)
    }

    /// First-order diagonal difference of H^Z + U plus the second-order
    /// (H^Z + U^[1]) couplings across the hyperfine gap.
    pub fn differential_shift_perturbative(&self, b_gauss: f64, intensity: f64, coh: Coherence) -> Result<PerturbativeShift> {
        let h = self.hamiltonian(b_gauss, intensity)?;
        let f_up = self.basis.f_upper();
        let f_lo = self.basis.f_lower();
        let upper = coh.upper(&self.basis);
        let lower = coh.lower(&self.basis);
        let idx = |l: Level| self.basis.index(l.f, l.m).expect("coherence level in basis");
        let diag = |l: Level| h.h_zeeman[(idx(l), idx(l))] + h.h_stark[(idx(l), idx(l))];
        let coupling = |m: i32| -> f64 {
            match (self.basis.index(f_up, m), self.basis.index(f_lo, m)) {
                (Some(u), Some(l)) => h.h_zeeman[(u, l)] + self.pset.coupling_vector_element(m, intensity),
                _ => 0.0,
            }
        };
        let gap = self.species.hyperfine_splitting_hz;
        let second = (coupling(upper.m).powi(2) + coupling(lower.m).powi(2)) / gap;
        let delta = diag(upper) - diag(lower) + second;
        let smallness = (spectral_norm(&h.h_zeeman) + spectral_norm(&h.h_stark)) / gap;
        let warning = smallness > PERTURBATIVE_WARNING;
        if warning {
            log::warn!("perturbative shift outside its regime: smallness {smallness:.3}");
        }
        Ok(PerturbativeShift { delta, smallness, warning })
    }

    /// μ' = dδ/dB at the lattice intensity.
    pub fn effective_moment(&self, b_gauss: f64, coh: Coherence) -> Result<MomentEstimate> {
        self.effective_moment_at(b_gauss, self.intensity, coh)
    }

    /// Richardson-extrapolated central differences of the exact δ.
    pub fn effective_moment_at(&self, b_gauss: f64, intensity: f64, coh: Coherence) -> Result<MomentEstimate> {
        const LEVELS: usize = 8;
        let mut h = 0.2;
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
        let mut best: Option<MomentEstimate> = None;
        for i in 0..LEVELS {
            let d = (self.differential_shift(b_gauss + h, intensity, coh)?
                - self.differential_shift(b_gauss - h, intensity, coh)?)
                / (2.0 * h);
            let mut row = vec![d];
            for j in 1..=i {
                let f = 4f64.powi(j as i32);
                let v = row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (f - 1.0);
                row.push(v);
            }
            if i > 0 {
                let value = row[i];
                let error = (row[i] - table[i - 1][i - 1]).abs();
                if best.is_none_or(|b| error < b.error) {
                    best = Some(MomentEstimate { value, error, step: h });
                }
                if error <= 1e-12 * value.abs() + 1e-9 {
                    break;
                }
            }
            table.push(row);
            h *= 0.5;
        }
        let best = best.expect("at least two levels");
        if best.error > 1e-6 * best.value.abs().max(1.0) {
            return Err(Error::NonConvergence {
                what: format!("Richardson extrapolation of dδ/dB at {b_gauss} G"),
                iterations: LEVELS,
            });
        }
        Ok(best)
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}
