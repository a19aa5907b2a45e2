//! End-to-end pipeline: configs in, comparison table and figure tables out.
//!
//! Configs are resolved per file: an explicit path wins, then
//! `$LATTICE_MAGIC_CONFIG_DIR/<name>.cfg`, then the embedded reference copy.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis_fit::{fit_exponential, fit_gaussian_peak, fit_linear_origin, FitOptions, FitResult};
use crate::atomic_data::{reference, LatticeConfig, SampleConfig, SpeciesData};
use crate::error::{Error, Result};
use crate::ground_manifold::{AtomInLattice, Coherence};
use crate::magic_field::{
    ellipticity_correct, magic_field_closed_form, magic_field_numeric, vector_tensor_diagnostics, Diagnostics, DEFAULT_BRACKET,
};
use crate::polarizability::{PolarizabilitySet, CONVENTION_ID};
use crate::storage_sim::{
    calibrate_gradient, depth_sweep, field_scan, loss_deconvolve, predicted_lifetime, retrieval_curve, simulated_lifetime,
    DepthPoint,
};

pub const CONFIG_DIR_ENV: &str = "LATTICE_MAGIC_CONFIG_DIR";
pub const DEFAULT_SEED: u64 = 42;

/// Reference values the report compares against.
pub mod targets {
    pub const CLOCK_B0_PREDICTED_G: f64 = 4.38;
    pub const CLOCK_B0_BAND: f64 = 0.10;
    pub const CLOCK_B0_MEASURED_G: f64 = 4.20;
    pub const VECTOR_RATIO: (f64, f64) = (0.11, 0.01);
    pub const TENSOR_RATIO: (f64, f64) = (0.009, 0.002);
    pub const CLOSED_FORM_AGREEMENT: f64 = 0.01;
    pub const MEASURED_CIRC_DEGREE: f64 = 0.991;
    /// (raw measured field, corrected value) for clock, plus, minus.
    pub const ELLIPTICITY: [(f64, f64); 3] = [(4.24, 4.20), (5.42, 5.37), (5.99, 5.93)];
    pub const ELLIPTICITY_TOLERANCE_G: f64 = 0.01;
    /// Storage lifetimes, s, for clock, plus, minus.
    pub const LIFETIMES_S: [f64; 3] = [0.32, 0.43, 0.10];
    pub const LOSS_TIME_S: f64 = 1.0;
    pub const MOMENT_FIT_R2: f64 = 0.9;
    pub const MOMENT_CONSISTENCY: f64 = 0.35;
    pub const CLOCK_TAU_S: f64 = 0.32;
    pub const CLOCK_TAU_TOLERANCE_S: f64 = 0.02;
    pub const DECAY_R2: f64 = 0.98;
    pub const SCAN_CENTER_TOLERANCE_G: f64 = 0.02;
    pub const DEPTHS_UK: [f64; 3] = [16.0, 48.0, 64.0];
    pub const DEPTH_VARIATION: f64 = 0.15;
    /// Storage time of each field scan, s, for clock, plus, minus.
    pub const SCAN_TIMES_S: [f64; 3] = [0.5, 0.3, 0.2];
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigRecord {
    pub name: String,
    /// File path, or "embedded".
    pub source: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSet {
    pub species: SpeciesData,
    pub lattice: LatticeConfig,
    pub sample: SampleConfig,
    pub records: Vec<ConfigRecord>,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_config(
    name: &str,
    explicit: Option<&Path>,
    dir: Option<&Path>,
    embedded: &'static str,
) -> Result<(String, ConfigRecord)> {
    let path = match explicit {
        Some(p) => Some(p.to_path_buf()),
        None => dir.map(|d| d.join(format!("{name}.cfg"))).filter(|p| p.is_file()),
    };
    let (text, source) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|source| Error::Io { path: p.display().to_string(), source })?;
            (text, p.display().to_string())
        }
        None => (embedded.to_string(), "embedded".to_string()),
    };
    let record = ConfigRecord { name: name.to_string(), source, sha256: sha256_hex(&text) };
    Ok((text, record))
}

impl ConfigSet {
    /// `dir` stands in for the environment variable; see [`ConfigSet::from_env`].
    pub fn resolve(dir: Option<&Path>, species: Option<&Path>, lattice: Option<&Path>, sample: Option<&Path>) -> Result<Self> {
        let (s_text, s_rec) = read_config("species", species, dir, reference::SPECIES_CFG)?;
        let (l_text, l_rec) = read_config("lattice", lattice, dir, reference::LATTICE_CFG)?;
        let (m_text, m_rec) = read_config("sample", sample, dir, reference::SAMPLE_CFG)?;
        let species = SpeciesData::from_toml_str(&s_text).map_err(|e| e.in_stage(&format!("species config {}", s_rec.source)))?;
        let lattice =
            LatticeConfig::from_toml_str(&l_text).map_err(|e| e.in_stage(&format!("lattice config {}", l_rec.source)))?;
        let sample = SampleConfig::from_toml_str(&m_text).map_err(|e| e.in_stage(&format!("sample config {}", m_rec.source)))?;
        Ok(ConfigSet { species, lattice, sample, records: vec![s_rec, l_rec, m_rec] })
    }

    pub fn from_env(species: Option<&Path>, lattice: Option<&Path>, sample: Option<&Path>) -> Result<Self> {
        let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from);
        Self::resolve(dir.as_deref(), species, lattice, sample)
    }

    /// The embedded reference configs, ignoring the environment.
    pub fn reference() -> Self {
        let records =
            [("species", reference::SPECIES_CFG), ("lattice", reference::LATTICE_CFG), ("sample", reference::SAMPLE_CFG)]
                .iter()
                .map(|(name, text)| ConfigRecord { name: name.to_string(), source: "embedded".into(), sha256: sha256_hex(text) })
                .collect();
        ConfigSet { species: reference::species(), lattice: reference::lattice(), sample: reference::sample(), records }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
    pub method: String,
}

impl Quantity {
    fn new(value: f64, unit: &str, method: &str) -> Self {
        Quantity { value, unit: unit.into(), method: method.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MagicFieldEntry {
    pub coherence: Coherence,
    /// Ideal circular polarization.
    pub numeric: Quantity,
    pub closed_form: Quantity,
    pub relative_difference: f64,
    /// At the configured degree of circular polarization.
    pub configured: Quantity,
    /// μ' at the configured magic field and lattice intensity.
    pub moment: Quantity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticityEntry {
    pub measured_g: f64,
    pub circ_degree: f64,
    pub corrected_g: f64,
    pub expected_g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LifetimeEntry {
    pub coherence: Coherence,
    pub mu_prime: Quantity,
    pub measured_tau_s: f64,
    pub measured_tau_m_s: f64,
    pub predicted_tau: Quantity,
    pub simulated_tau: Quantity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanFit {
    pub coherence: Coherence,
    pub storage_time_s: f64,
    pub engine_b0_g: f64,
    pub fit: FitResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub value: f64,
    pub unit: String,
    /// The reference number or relation.
    pub expected: String,
    /// Closed acceptance interval; None for information rows.
    pub band: Option<(f64, f64)>,
    pub method: String,
    pub status: Status,
}

impl ComparisonRow {
    fn banded(name: &str, value: f64, unit: &str, expected: String, band: (f64, f64), method: &str) -> Self {
        let ok = value >= band.0 && value <= band.1;
        ComparisonRow {
            name: name.into(),
            value,
            unit: unit.into(),
            expected,
            band: Some(band),
            method: method.into(),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    fn info(name: &str, value: f64, unit: &str, expected: String, method: &str) -> Self {
        ComparisonRow {
            name: name.into(),
            value,
            unit: unit.into(),
            expected,
            band: None,
            method: method.into(),
            status: Status::Info,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4, FigureId::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown figure '{s}' (fig1..fig5)")))
    }
}

/// A CSV-ready table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure {
    pub id: FigureId,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Figure {
    fn new(id: FigureId, headers: &[&str]) -> Self {
        Figure { id, headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(err)?;
        for row in &self.rows {
            w.write_record(row).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub convention: String,
    pub configs: Vec<ConfigRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub polarizabilities: PolarizabilitySet,
    pub magic_fields: Vec<MagicFieldEntry>,
    pub diagnostics: Diagnostics,
    pub ellipticity: Vec<EllipticityEntry>,
    pub gradient_configured: Quantity,
    pub gradient_calibrated: Quantity,
    pub lifetimes: Vec<LifetimeEntry>,
    pub decay_fit: FitResult,
    pub scan_fits: Vec<ScanFit>,
    pub moment_fit: FitResult,
    pub depth_sweep: Vec<DepthPoint>,
    pub comparisons: Vec<ComparisonRow>,
    pub figures: Vec<Figure>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|r| r.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&ComparisonRow> {
        self.comparisons.iter().filter(|r| r.status == Status::Fail).collect()
    }

    pub fn figure(&self, id: FigureId) -> Option<&Figure> {
        self.figures.iter().find(|f| f.id == id)
    }

    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.comparisons.iter().find(|r| r.name == name)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<34} {:>13} {:<6} {:<22} {:<24} method",
            "status", "quantity", "value", "unit", "expected", "band"
        );
        for r in &self.comparisons {
            let band = r.band.map_or("-".to_string(), |(lo, hi)| format!("[{}, {}]", short(lo), short(hi)));
            let _ = writeln!(
                out,
                "{:<6} {:<34} {:>13.6} {:<6} {:<22} {:<24} {}",
                r.status.label(),
                r.name,
                r.value,
                r.unit,
                r.expected,
                band,
                r.method
            );
        }
        let p = &self.provenance;
        let _ = writeln!(out, "\nversion {}  seed {}  convention {}", p.version, p.seed, p.convention);
        for c in &p.configs {
            let _ = writeln!(out, "{:<8} {} sha256:{}", c.name, c.source, c.sha256);
        }
        out
    }
}

fn short(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

fn grid(center: f64, half: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| center - half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
}

fn cell(v: f64) -> String {
    format!("{v}")
}

/// Runs the full pipeline. Errors are tagged with the stage that failed.
pub fn run_report(configs: &ConfigSet, seed: u64) -> Result<ReportBundle> {
    use targets::*;
    let ConfigSet { species, lattice, sample, .. } = configs;
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);

    // Magic fields: ideal circular polarization for the comparisons, configured A for the simulation.
    let ideal_lattice = lattice.with_circ_degree(lattice.helicity());
    let ideal = AtomInLattice::new(species, &ideal_lattice).map_err(stage("polarizability"))?;
    let atom = AtomInLattice::new(species, lattice).map_err(stage("polarizability"))?;
    let mut magic_fields = Vec::new();
    for coh in Coherence::ALL {
        let num = magic_field_numeric(&ideal, coh, DEFAULT_BRACKET).map_err(stage("magic field"))?;
        let cf = magic_field_closed_form(ideal.polarizabilities(), species, coh).map_err(stage("magic field"))?;
        let conf = magic_field_numeric(&atom, coh, DEFAULT_BRACKET).map_err(stage("magic field"))?;
        let mu = atom.effective_moment(conf.b0, coh).map_err(stage("effective moment"))?;
        magic_fields.push(MagicFieldEntry {
            coherence: coh,
            numeric: Quantity::new(num.b0, "G", "numeric root of dδ/dI, A = ±1"),
            closed_form: Quantity::new(cf.b0, "G", "closed form, A = ±1"),
            relative_difference: (cf.b0 - num.b0) / num.b0,
            configured: Quantity::new(conf.b0, "G", &format!("numeric root, A = {}", lattice.circ_degree_a)),
            moment: Quantity::new(mu.value.abs(), "Hz/G", "Richardson derivative of δ at lattice intensity"),
        });
    }
    let b = |coh: Coherence| magic_fields.iter().find(|m| m.coherence == coh).unwrap();
    let diagnostics = vector_tensor_diagnostics(
        b(Coherence::Plus).numeric.value.abs(),
        b(Coherence::Minus).numeric.value.abs(),
        b(Coherence::Clock).numeric.value.abs(),
    )
    .map_err(stage("diagnostics"))?;

    let ellipticity = ELLIPTICITY
        .iter()
        .map(|&(measured, expected)| {
            Ok(EllipticityEntry {
                measured_g: measured,
                circ_degree: MEASURED_CIRC_DEGREE,
                corrected_g: ellipticity_correct(measured, MEASURED_CIRC_DEGREE)?,
                expected_g: expected,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(stage("ellipticity"))?;

    // Gradient calibrated on the clock decay.
    let clock_b0 = b(Coherence::Clock).configured.value;
    let gradient = calibrate_gradient(&atom, clock_b0, Coherence::Clock, sample, CLOCK_TAU_S, seed)
        .map_err(stage("gradient calibration"))?;
    let sample_cal = SampleConfig { gradient_bprime_g_per_cm: gradient, ..sample.clone() };

    // fig2
    let times = grid(0.5, 0.5, 41);
    let decay =
        retrieval_curve(&atom, clock_b0, Coherence::Clock, &sample_cal, &times, seed).map_err(stage("decay simulation"))?;
    let decay_fit = fit_exponential(&decay, &FitOptions::default()).map_err(stage("decay fit"))?;
    let mut fig2 = Figure::new(FigureId::Fig2, &["t_s", "efficiency"]);
    for (t, e) in decay.times_s.iter().zip(&decay.efficiency) {
        fig2.rows.push(vec![cell(*t), cell(*e)]);
    }

    // fig5 and lifetimes
    let mus: Vec<f64> = magic_fields.iter().map(|m| m.moment.value).collect();
    let tau_m = LIFETIMES_S
        .iter()
        .map(|&t| loss_deconvolve(t, LOSS_TIME_S))
        .collect::<Result<Vec<_>>>()
        .map_err(stage("loss deconvolution"))?;
    let inv: Vec<f64> = tau_m.iter().map(|t| 1.0 / t).collect();
    let moment_fit = fit_linear_origin(&mus, &inv, None).map_err(stage("moment fit"))?;
    let slope = moment_fit.value("slope");
    let mut fig5 = Figure::new(FigureId::Fig5, &["mu_prime_Hz_per_G", "inv_tau_m_per_s", "fit_line"]);
    for (m, y) in mus.iter().zip(&inv) {
        fig5.rows.push(vec![cell(*m), cell(*y), cell(slope * m)]);
    }
    let l = sample.length_l_cm;
    let mut lifetimes = Vec::new();
    for (i, m) in magic_fields.iter().enumerate() {
        let predicted =
            predicted_lifetime(mus[i], slope / (std::f64::consts::TAU * l), l, LOSS_TIME_S).map_err(stage("lifetime model"))?;
        let simulated = simulated_lifetime(&atom, m.configured.value, m.coherence, &sample_cal, seed)
            .map_err(stage("lifetime simulation"))?;
        lifetimes.push(LifetimeEntry {
            coherence: m.coherence,
            mu_prime: m.moment.clone(),
            measured_tau_s: LIFETIMES_S[i],
            measured_tau_m_s: tau_m[i],
            predicted_tau: Quantity::new(predicted, "s", "1/(2π μ' B'l + 1/T) with fitted B'l"),
            simulated_tau: Quantity::new(simulated, "s", "1/e time of simulated retrieval"),
        });
    }

    // fig1
    let mut fig1 = Figure::new(FigureId::Fig1, &["coherence", "storage_time_s", "B_G", "efficiency", "stderr", "fitted_B0_G"]);
    let mut scan_fits = Vec::new();
    for (i, m) in magic_fields.iter().enumerate() {
        let t = SCAN_TIMES_S[i];
        let fields = grid(m.configured.value, 0.6, 61);
        let scan = field_scan(&atom, m.coherence, &sample_cal, t, &fields, seed).map_err(stage("field scan"))?;
        let fit = fit_gaussian_peak(&scan, &FitOptions::default()).map_err(stage("scan fit"))?;
        let center = fit.value("B0");
        let se = scan.stderr.clone().unwrap_or_default();
        for (k, (bf, e)) in scan.fields_g.iter().zip(&scan.efficiency).enumerate() {
            fig1.rows.push(vec![m.coherence.to_string(), cell(t), cell(*bf), cell(*e), cell(se[k]), cell(center)]);
        }
        scan_fits.push(ScanFit { coherence: m.coherence, storage_time_s: t, engine_b0_g: m.configured.value, fit });
    }

    // fig3
    let mut fig3 = Figure::new(FigureId::Fig3, &["coherence", "B_G", "tau_s"]);
    for m in &magic_fields {
        for bf in grid(m.configured.value, 0.5, 21) {
            let tau = simulated_lifetime(&atom, bf, m.coherence, &sample_cal, seed).map_err(stage("lifetime scan"))?;
            fig3.rows.push(vec![m.coherence.to_string(), cell(bf), cell(tau)]);
        }
    }

    // fig4
    let sweep = depth_sweep(species, lattice, Coherence::Clock, &sample_cal, &DEPTHS_UK, seed).map_err(stage("depth sweep"))?;
    let mut fig4 = Figure::new(FigureId::Fig4, &["depth_uK", "B0_G", "tau_s"]);
    for p in &sweep {
        fig4.rows.push(vec![cell(p.depth_uk), cell(p.b0), cell(p.tau_s)]);
    }

    // Comparison table.
    let mut rows = Vec::new();
    let clock = b(Coherence::Clock);
    rows.push(ComparisonRow::banded(
        "clock B0 (ideal circular)",
        clock.numeric.value,
        "G",
        format!("{CLOCK_B0_PREDICTED_G} G predicted"),
        (CLOCK_B0_PREDICTED_G * (1.0 - CLOCK_B0_BAND), CLOCK_B0_PREDICTED_G * (1.0 + CLOCK_B0_BAND)),
        &clock.numeric.method,
    ));
    rows.push(ComparisonRow::info(
        "clock B0 vs measurement",
        clock.numeric.value,
        "G",
        format!("{CLOCK_B0_MEASURED_G:.2}(1) G measured"),
        "not asserted",
    ));
    for m in &magic_fields {
        rows.push(ComparisonRow::banded(
            &format!("{} closed form vs numeric", m.coherence),
            m.relative_difference,
            "rel",
            "agreement".into(),
            (-CLOSED_FORM_AGREEMENT, CLOSED_FORM_AGREEMENT),
            "closed form vs root finder, A = ±1",
        ));
    }
    rows.push(ComparisonRow::banded(
        "vector ratio",
        diagnostics.vector_ratio,
        "",
        format!("{}", VECTOR_RATIO.0),
        (VECTOR_RATIO.0 - VECTOR_RATIO.1, VECTOR_RATIO.0 + VECTOR_RATIO.1),
        "2(B- - B+)/(B- + B+), numeric, A = ±1",
    ));
    rows.push(ComparisonRow::banded(
        "tensor ratio",
        diagnostics.tensor_ratio,
        "",
        format!("{}", TENSOR_RATIO.0),
        (TENSOR_RATIO.0 - TENSOR_RATIO.1, TENSOR_RATIO.0 + TENSOR_RATIO.1),
        "((3/8)(B- + B+) - B0)/B0, numeric, A = ±1",
    ));
    for (e, coh) in ellipticity.iter().zip(Coherence::ALL) {
        rows.push(ComparisonRow::banded(
            &format!("{coh} ellipticity correction"),
            e.corrected_g,
            "G",
            format!("{} G", e.expected_g),
            (e.expected_g - ELLIPTICITY_TOLERANCE_G, e.expected_g + ELLIPTICITY_TOLERANCE_G),
            &format!("A x {} G", e.measured_g),
        ));
    }
    let pt = |c: Coherence| lifetimes.iter().find(|x| x.coherence == c).unwrap().predicted_tau.value;
    let gap = (pt(Coherence::Plus) - pt(Coherence::Clock)).min(pt(Coherence::Clock) - pt(Coherence::Minus));
    rows.push(ComparisonRow::banded(
        "lifetime ordering margin",
        gap,
        "s",
        "0.43 > 0.32 > 0.10 s".into(),
        (f64::MIN_POSITIVE, f64::INFINITY),
        "min gap of predicted τ+ > τ0 > τ-",
    ));
    rows.push(ComparisonRow::banded(
        "moment fit R^2",
        moment_fit.r_squared,
        "",
        "linear in μ'".into(),
        (MOMENT_FIT_R2, 1.0),
        "uncentered R^2, fit through origin",
    ));
    let max_rel = moment_fit.relative_residuals(&sorted(&mus)).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    rows.push(ComparisonRow::banded(
        "moment fit B'l consistency",
        max_rel,
        "rel",
        "single B'l".into(),
        (0.0, MOMENT_CONSISTENCY),
        "max |y/x - slope|/slope",
    ));
    rows.push(ComparisonRow::banded(
        "simulated clock lifetime",
        decay_fit.value("tau"),
        "s",
        format!("{CLOCK_TAU_S}(1) s"),
        (CLOCK_TAU_S - CLOCK_TAU_TOLERANCE_S, CLOCK_TAU_S + CLOCK_TAU_TOLERANCE_S),
        "exponential fit of simulated decay",
    ));
    rows.push(ComparisonRow::banded(
        "simulated decay R^2",
        decay_fit.r_squared,
        "",
        "single exponential".into(),
        (DECAY_R2, 1.0),
        "exponential fit of simulated decay",
    ));
    let clock_scan = &scan_fits[0];
    rows.push(ComparisonRow::banded(
        "clock scan center - B0",
        clock_scan.fit.value("B0") - clock_scan.engine_b0_g,
        "G",
        "0".into(),
        (-SCAN_CENTER_TOLERANCE_G, SCAN_CENTER_TOLERANCE_G),
        "Gaussian fit of 0.5 s field scan",
    ));
    let taus: Vec<f64> = sweep.iter().map(|p| p.tau_s).collect();
    let (tmin, tmax) = taus.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    rows.push(ComparisonRow::banded(
        "lifetime variation over depth",
        (tmax - tmin) / mean,
        "rel",
        "no significant change".into(),
        (0.0, DEPTH_VARIATION),
        "(max - min)/mean over 16, 48, 64 uK",
    ));

    Ok(ReportBundle {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            convention: CONVENTION_ID.into(),
            configs: configs.records.clone(),
        },
        polarizabilities: ideal.polarizabilities().clone(),
        magic_fields,
        diagnostics,
        ellipticity,
        gradient_configured: Quantity::new(sample.gradient_bprime_g_per_cm, "G/cm", "sample config"),
        gradient_calibrated: Quantity::new(gradient, "G/cm", "calibrated to a 0.32 s clock lifetime"),
        lifetimes,
        decay_fit,
        scan_fits,
        moment_fit,
        depth_sweep: sweep,
        comparisons: rows,
        figures: vec![fig1, fig2, fig3, fig4, fig5],
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Writes `<out_dir>/<figN>.csv`.
pub fn emit_figure_data(bundle: &ReportBundle, which: FigureId, out_dir: &Path) -> Result<PathBuf> {
    let fig = bundle.figure(which).ok_or_else(|| Error::InvalidInput(format!("bundle has no {} data", which.name())))?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.display().to_string(), source })?;
    let path = out_dir.join(format!("{}.csv", which.name()));
    std::fs::write(&path, fig.to_csv()?).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

/// Writes report.json and every figure CSV.
pub fn write_bundle(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = FigureId::ALL.iter().map(|&f| emit_figure_data(bundle, f, out_dir)).collect::<Result<_>>()?;
    let json = serde_json::to_string_pretty(bundle).map_err(|e| Error::InvalidInput(format!("json: {e}")))?;
    let path = out_dir.join("report.json");
    std::fs::write(&path, json).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    paths.push(path);
    Ok(paths)
}
