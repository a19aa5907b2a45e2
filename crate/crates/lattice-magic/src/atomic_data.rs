//! Species constants and lattice/sample configuration.
//!
//! The three config files (`species.cfg`, `lattice.cfg`, `sample.cfg`) use TOML
//! syntax: flat `key = value` pairs plus a few named sections. See
//! `docs/config-format.md` for the schema. Reference files for 87Rb ship in
//! `configs/` and are compiled in as [`reference`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{frequency_from_wavelength_nm, microkelvin_in_hz};
use crate::error::{Error, Result};

/// Closest approach of the lattice to any line before it is refused.
pub const MIN_DETUNING_HZ: f64 = 1e12;

/// Tolerance on the (2F'+1)-weighted centroid of excited hyperfine offsets.
const CENTROID_TOLERANCE_HZ: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub label: String,
    pub excited_j: f64,
    pub frequency_hz: f64,
    /// |<J'||d||J>|^2 in (e a0)^2, reduced with the 3j (Edmonds) convention.
    pub reduced_dipole_sq: f64,
    /// (F', offset from `frequency_hz` in Hz), ordered by F'.
    pub excited_hyperfine: Option<Vec<(i32, f64)>>,
}

impl TransitionLine {
    pub fn two_j(&self) -> i32 {
        (2.0 * self.excited_j).round() as i32
    }
}

/// Switches for the sum over excited states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SumOverStates {
    pub counter_rotating: bool,
    pub ground_hyperfine_in_detuning: bool,
    pub excited_hyperfine: bool,
}

impl Default for SumOverStates {
    fn default() -> Self {
        SumOverStates { counter_rotating: true, ground_hyperfine_in_detuning: true, excited_hyperfine: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeciesData {
    pub name: String,
    pub nuclear_spin: f64,
    pub g_j: f64,
    pub g_i: f64,
    pub hyperfine_splitting_hz: f64,
    pub bohr_magneton_hz_per_gauss: f64,
    pub lines: Vec<TransitionLine>,
    pub sum_over_states: SumOverStates,
    /// mu_B/h * g_J and mu_B/h * g_I in Hz/G.
    pub electron_zeeman_hz_per_gauss: f64,
    pub nuclear_zeeman_hz_per_gauss: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesFile {
    name: String,
    nuclear_spin: f64,
    g_j: f64,
    g_i: f64,
    hyperfine_splitting_hz: f64,
    bohr_magneton_hz_per_gauss: f64,
    #[serde(default)]
    sum_over_states: SumOverStates,
    #[serde(default)]
    line: BTreeMap<String, LineFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineFile {
    excited_j: f64,
    frequency_hz: f64,
    reduced_dipole_sq: f64,
    excited_f: Option<Vec<i32>>,
    excited_offsets_hz: Option<Vec<f64>>,
}

impl SpeciesData {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: SpeciesFile =
            toml::from_str(text).map_err(|e| Error::Parse { what: "species config".into(), message: e.to_string() })?;
        let mut lines = Vec::with_capacity(raw.line.len());
        for (label, l) in raw.line {
            let excited_hyperfine = match (l.excited_f, l.excited_offsets_hz) {
                (None, None) => None,
                (Some(f), Some(o)) => {
                    if f.len() != o.len() {
                        return Err(Error::invariant(
                            &format!("line.{label}.excited_offsets_hz"),
                            "must have one entry per excited_f",
                        ));
                    }
                    Some(f.into_iter().zip(o).collect())
                }
                _ => {
                    return Err(Error::invariant(
                        &format!("line.{label}"),
                        "excited_f and excited_offsets_hz must be given together",
                    ))
                }
            };
            lines.push(TransitionLine {
                label,
                excited_j: l.excited_j,
                frequency_hz: l.frequency_hz,
                reduced_dipole_sq: l.reduced_dipole_sq,
                excited_hyperfine,
            });
        }
        let species = SpeciesData {
            name: raw.name,
            nuclear_spin: raw.nuclear_spin,
            g_j: raw.g_j,
            g_i: raw.g_i,
            hyperfine_splitting_hz: raw.hyperfine_splitting_hz,
            bohr_magneton_hz_per_gauss: raw.bohr_magneton_hz_per_gauss,
            electron_zeeman_hz_per_gauss: raw.bohr_magneton_hz_per_gauss * raw.g_j,
            nuclear_zeeman_hz_per_gauss: raw.bohr_magneton_hz_per_gauss * raw.g_i,
            lines,
            sum_over_states: raw.sum_over_states,
        };
        species.validate()?;
        Ok(species)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read(path.as_ref())?)
    }

    /// Twice the nuclear spin.
    pub fn two_i(&self) -> i32 {
        (2.0 * self.nuclear_spin).round() as i32
    }

    pub fn validate(&self) -> Result<()> {
        let two_i = 2.0 * self.nuclear_spin;
        if !(self.nuclear_spin > 0.0) || (two_i - two_i.round()).abs() > 1e-12 || two_i.round() as i32 % 2 == 0 {
            return Err(Error::invariant("nuclear_spin", "must be a positive half-integer"));
        }
        if !(self.hyperfine_splitting_hz > 0.0) || !self.hyperfine_splitting_hz.is_finite() {
            return Err(Error::invariant("hyperfine_splitting_hz", "must be positive"));
        }
        if !(self.bohr_magneton_hz_per_gauss > 0.0) {
            return Err(Error::invariant("bohr_magneton_hz_per_gauss", "must be positive"));
        }
        for (field, v) in [("g_j", self.g_j), ("g_i", self.g_i)] {
            if !v.is_finite() {
                return Err(Error::invariant(field, "must be finite"));
            }
        }
        if self.lines.is_empty() {
            return Err(Error::invariant("line", "at least one transition line is required"));
        }
        for line in &self.lines {
            let f = |name: &str| format!("line.{}.{}", line.label, name);
            let tj = 2.0 * line.excited_j;
            if !(line.excited_j > 0.0) || (tj - tj.round()).abs() > 1e-12 || tj.round() as i32 % 2 == 0 {
                return Err(Error::invariant(&f("excited_j"), "must be a positive half-integer"));
            }
            // Dipole coupling from J = 1/2 reaches J' = 1/2 or 3/2 only.
            if line.two_j() > 3 {
                return Err(Error::invariant(&f("excited_j"), "must be 1/2 or 3/2"));
            }
            if !(line.frequency_hz > 0.0) || !line.frequency_hz.is_finite() {
                return Err(Error::invariant(&f("frequency_hz"), "must be positive"));
            }
            if !(line.reduced_dipole_sq > 0.0) || !line.reduced_dipole_sq.is_finite() {
                return Err(Error::invariant(&f("reduced_dipole_sq"), "must be positive"));
            }
            if let Some(hfs) = &line.excited_hyperfine {
                let tj = line.two_j();
                let ti = self.two_i();
                let allowed: Vec<i32> = ((tj - ti).abs()..=tj + ti).step_by(2).map(|x| x / 2).collect();
                let given: Vec<i32> = hfs.iter().map(|&(fp, _)| fp).collect();
                if given != allowed {
                    return Err(Error::invariant(
                        &f("excited_f"),
                        format!("expected F' = {allowed:?} in ascending order, got {given:?}"),
                    ));
                }
                if hfs.windows(2).any(|w| w[1].1 <= w[0].1) {
                    return Err(Error::invariant(&f("excited_offsets_hz"), "offsets must increase with F'"));
                }
                let (mut num, mut den) = (0.0, 0.0);
                for &(fp, off) in hfs {
                    let g = (2 * fp + 1) as f64;
                    num += g * off;
                    den += g;
                }
                if (num / den).abs() > CENTROID_TOLERANCE_HZ {
                    return Err(Error::invariant(
                        &f("excited_offsets_hz"),
                        format!("weighted centroid {:.3e} Hz is not within 1 MHz of the line frequency", num / den),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Energy of the F = I + 1/2 level relative to the zero-field centroid.
    pub fn upper_hyperfine_energy(&self) -> f64 {
        let i = self.nuclear_spin;
        i / (2.0 * i + 1.0) * self.hyperfine_splitting_hz
    }

    /// Energy of the F = I - 1/2 level relative to the zero-field centroid.
    pub fn lower_hyperfine_energy(&self) -> f64 {
        let i = self.nuclear_spin;
        -(i + 1.0) / (2.0 * i + 1.0) * self.hyperfine_splitting_hz
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub wavelength_vac_nm: f64,
    pub trap_depth_uk: f64,
    /// Signed degree of circular polarization; the sign is the helicity.
    #[serde(rename = "circ_degree_A")]
    pub circ_degree_a: f64,
}

impl LatticeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let lattice: LatticeConfig =
            toml::from_str(text).map_err(|e| Error::Parse { what: "lattice config".into(), message: e.to_string() })?;
        lattice.validate()?;
        Ok(lattice)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read(path.as_ref())?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.circ_degree_a.abs() <= 1.0) {
            return Err(Error::invariant("circ_degree_A", "must lie in [-1, 1]"));
        }
        if !(self.trap_depth_uk >= 0.0) || !self.trap_depth_uk.is_finite() {
            return Err(Error::invariant("trap_depth_uk", "must be non-negative"));
        }
        if !(self.wavelength_vac_nm > 0.0) || !self.wavelength_vac_nm.is_finite() {
            return Err(Error::invariant("wavelength_vac_nm", "must be positive"));
        }
        Ok(())
    }

    pub fn frequency_hz(&self) -> f64 {
        frequency_from_wavelength_nm(self.wavelength_vac_nm)
    }

    /// +1 or -1; linear polarization counts as +1.
    pub fn helicity(&self) -> f64 {
        if self.circ_degree_a < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn with_circ_degree(&self, a: f64) -> Self {
        LatticeConfig { circ_degree_a: a, ..self.clone() }
    }

    pub fn with_depth(&self, depth_uk: f64) -> Self {
        LatticeConfig { trap_depth_uk: depth_uk, ..self.clone() }
    }

    /// Refuses a lattice closer than [`MIN_DETUNING_HZ`] to any line of `species`.
    pub fn check_detuning(&self, species: &SpeciesData) -> Result<()> {
        let nu = self.frequency_hz();
        for line in &species.lines {
            let detuning = line.frequency_hz - nu;
            if detuning.abs() < MIN_DETUNING_HZ {
                return Err(Error::Resonance {
                    line: line.label.clone(),
                    wavelength_nm: self.wavelength_vac_nm,
                    detuning_hz: detuning,
                });
            }
        }
        Ok(())
    }
}

fn default_eta0() -> f64 {
    0.034
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub temperature_uk: f64,
    /// Sample extent along B.
    pub length_l_cm: f64,
    pub gradient_bprime_g_per_cm: f64,
    /// Atom-loss lifetime.
    #[serde(rename = "loss_time_T_s")]
    pub loss_time_s: f64,
    /// Size of the simulated ensemble.
    pub atom_count: usize,
    /// Retrieval efficiency at zero storage time.
    #[serde(default = "default_eta0")]
    pub eta0: f64,
}

impl SampleConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sample: SampleConfig =
            toml::from_str(text).map_err(|e| Error::Parse { what: "sample config".into(), message: e.to_string() })?;
        sample.validate()?;
        Ok(sample)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read(path.as_ref())?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_uk > 0.0) || !self.temperature_uk.is_finite() {
            return Err(Error::invariant("temperature_uk", "must be positive"));
        }
        if !(self.length_l_cm >= 0.0) || !self.length_l_cm.is_finite() {
            return Err(Error::invariant("length_l_cm", "must be non-negative"));
        }
        if !(self.gradient_bprime_g_per_cm >= 0.0) || !self.gradient_bprime_g_per_cm.is_finite() {
            return Err(Error::invariant("gradient_bprime_g_per_cm", "must be non-negative"));
        }
        if !(self.loss_time_s > 0.0) {
            return Err(Error::invariant("loss_time_T_s", "must be positive"));
        }
        if self.atom_count == 0 {
            return Err(Error::invariant("atom_count", "must be at least 1"));
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(Error::invariant("eta0", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Checks that the ensemble is trapped by `lattice`.
    pub fn check_trapped(&self, lattice: &LatticeConfig) -> Result<()> {
        if self.temperature_uk >= lattice.trap_depth_uk {
            return Err(Error::Untrapped { temperature_uk: self.temperature_uk, depth_uk: lattice.trap_depth_uk });
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Lattice intensity (W/cm^2) at which the scalar shift of the lower hyperfine
/// level equals -k_B * trap_depth.
pub fn trap_depth_to_intensity(species: &SpeciesData, lattice: &LatticeConfig) -> Result<f64> {
    let alpha = lower_scalar_polarizability(species, lattice)?;
    Ok(lattice.trap_depth_uk * microkelvin_in_hz() / -alpha)
}

/// Inverse of [`trap_depth_to_intensity`]: depth in uK for `intensity` in W/cm^2.
pub fn intensity_to_trap_depth(species: &SpeciesData, lattice: &LatticeConfig, intensity: f64) -> Result<f64> {
    let alpha = lower_scalar_polarizability(species, lattice)?;
    Ok(intensity * -alpha / microkelvin_in_hz())
}

fn lower_scalar_polarizability(species: &SpeciesData, lattice: &LatticeConfig) -> Result<f64> {
    let unit = crate::polarizability::stark_operator_per_intensity(species, lattice)?;
    let alpha = unit.lower_scalar_shift();
    if !(alpha < 0.0) {
        return Err(Error::NotTrapping(alpha));
    }
    Ok(alpha)
}

/// The 87Rb reference configs from `configs/`.
pub mod reference {
    use super::*;

    pub const SPECIES_CFG: &str = include_str!("../configs/species.cfg");
    pub const LATTICE_CFG: &str = include_str!("../configs/lattice.cfg");
    pub const SAMPLE_CFG: &str = include_str!("../configs/sample.cfg");

    pub fn species() -> SpeciesData {
        SpeciesData::from_toml_str(SPECIES_CFG).expect("reference species.cfg is valid")
    }

    pub fn lattice() -> LatticeConfig {
        LatticeConfig::from_toml_str(LATTICE_CFG).expect("reference lattice.cfg is valid")
    }

    pub fn sample() -> SampleConfig {
        SampleConfig::from_toml_str(SAMPLE_CFG).expect("reference sample.cfg is valid")
    }
}
