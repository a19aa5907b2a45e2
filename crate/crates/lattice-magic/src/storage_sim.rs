//! Retrieval efficiency of a stored spin wave in a thermal lattice ensemble.
//!
//! Thermal model. An atom sits at an axial antinode (tight axial confinement)
//! and samples the radially Gaussian intensity f = exp(-2 rho^2 / w^2). In a
//! potential -U0 f, the Boltzmann distribution of a bound atom with two radial
//! kinetic degrees of freedom, written in terms of f, is
//!
//! ```text
//! p(f) ∝ (exp(eta f) - 1) / f,   0 < f <= 1,   eta = depth / temperature
//! ```
//!
//! The waist drops out. Expanding the exponential gives a mixture of
//! Beta(k, 1) densities with weights eta^k / (k k!), which is sampled exactly.
//! Each atom gets its own ChaCha8 stream (stream = atom index), so draws do
//! not depend on evaluation order. Dephasing is static: each atom keeps its
//! detuning δ_j for the whole storage time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::atomic_data::{LatticeConfig, SampleConfig, SpeciesData};
use crate::error::{Error, Result};
use crate::ground_manifold::{AtomInLattice, Coherence};
use crate::magic_field::{magic_field_numeric, DEFAULT_BRACKET};

/// Above this eta the Beta mixture is replaced by a rejection sampler.
const MIXTURE_ETA_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleDraw {
    /// Intensity fraction of each atom, in (0, 1].
    pub fractions: Vec<f64>,
    /// Axial position, cm, uniform in [-l/2, l/2].
    pub positions_cm: Vec<f64>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl EnsembleDraw {
    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

/// Per-atom generator: the seed picks the key, the atom index the stream.
pub fn atom_rng(seed: u64, atom: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(atom);
    rng
}

/// Cumulative weights of the Beta(k, 1) mixture, k = 1, 2, ...
fn mixture_cdf(eta: f64) -> Vec<f64> {
    // log w_k = k ln eta - ln k - ln k!
    let mut logs = Vec::new();
    let mut log_w = eta.ln();
    let mut k = 1usize;
    let mut max = f64::NEG_INFINITY;
    loop {
        logs.push(log_w);
        max = max.max(log_w);
        if k as f64 > eta && log_w < max - 40.0 {
            break;
        }
        let kf = k as f64;
        log_w += eta.ln() + kf.ln() - 2.0 * (kf + 1.0).ln();
        k += 1;
    }
    let mut cdf: Vec<f64> = Vec::with_capacity(logs.len());
    let mut acc = 0.0;
    for l in logs {
        acc += (l - max).exp();
        cdf.push(acc);
    }
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    cdf
}

fn sample_fraction(rng: &mut ChaCha8Rng, eta: f64, cdf: &[f64]) -> f64 {
    if eta <= MIXTURE_ETA_LIMIT {
        let u: f64 = rng.gen();
        let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) + 1;
        let v: f64 = rng.gen();
        (1.0 - v).powf(1.0 / k as f64)
    } else {
        // Proposal f = 1 - E/eta restricted to f >= 1/2, accepted with
        // (1 - exp(-eta f)) / (2 f). The neglected mass below 1/2 is < exp(-eta/2).
        loop {
            let e = -(1.0 - rng.gen::<f64>()).ln();
            let f = 1.0 - e / eta;
            if f < 0.5 {
                continue;
            }
            if rng.gen::<f64>() < (1.0 - (-eta * f).exp()) / (2.0 * f) {
                return f;
            }
        }
    }
}

/// Draws `n` atoms of the thermal ensemble described by `sample` in `lattice`.
pub fn draw_ensemble(sample: &SampleConfig, lattice: &LatticeConfig, n: usize, seed: u64) -> Result<EnsembleDraw> {
    sample.validate()?;
    sample.check_trapped(lattice)?;
    if n == 0 {
        return Err(Error::InvalidInput("ensemble needs at least one atom".into()));
    }
    let eta = lattice.trap_depth_uk / sample.temperature_uk;
    let cdf = if eta <= MIXTURE_ETA_LIMIT { mixture_cdf(eta) } else { Vec::new() };
    let l = sample.length_l_cm;
    let (fractions, positions_cm): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = atom_rng(seed, j as u64);
            let f = sample_fraction(&mut rng, eta, &cdf);
            let z = l * (rng.gen::<f64>() - 0.5);
            (f, z)
        })
        .unzip();
    Ok(EnsembleDraw { fractions, positions_cm, weights: vec![1.0 / n as f64; n], seed })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CurveMeta {
    pub coherence: Option<Coherence>,
    /// Bias field of a decay curve, G.
    pub field_g: Option<f64>,
    /// Storage time of a field scan, s.
    pub storage_time_s: Option<f64>,
    pub seed: Option<u64>,
    pub source: String,
}

/// Efficiency versus storage time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCurve {
    pub times_s: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub meta: CurveMeta,
}

/// Efficiency versus bias field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanCurve {
    pub fields_g: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub meta: CurveMeta,
}

impl DecayCurve {
    /// Efficiencies within [0, eta0] and a non-increasing envelope after a
    /// running maximum over `window` points.
    pub fn check_envelope(&self, eta0: f64, window: usize) -> bool {
        if self.efficiency.iter().any(|&e| !(0.0..=eta0 * (1.0 + 1e-12)).contains(&e)) {
            return false;
        }
        let w = window.max(1);
        let env: Vec<f64> = (0..self.efficiency.len())
            .map(|i| self.efficiency[i..(i + w).min(self.efficiency.len())].iter().copied().fold(0.0, f64::max))
            .collect();
        env.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12))
    }
}

/// Per-atom detunings of one coherence at one bias field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dephasing {
    pub detunings_hz: Vec<f64>,
    pub weights: Vec<f64>,
    pub eta0: f64,
    pub loss_time_s: f64,
    /// μ' used for the gradient term, Hz/G.
    pub moment_hz_per_g: f64,
}

impl Dephasing {
    /// δ_j = light_part(f_j I) + μ' B' z_j.
    pub fn new(atom: &AtomInLattice, b_gauss: f64, coh: Coherence, sample: &SampleConfig, draw: &EnsembleDraw) -> Result<Self> {
        let intensity = atom.intensity();
        let moment = atom.effective_moment(b_gauss, coh)?.value;
        let d0 = atom.differential_shift(b_gauss, 0.0, coh)?;
        let gradient = sample.gradient_bprime_g_per_cm;
        let detunings_hz = draw
            .fractions
            .par_iter()
            .zip(draw.positions_cm.par_iter())
            .map(|(&f, &z)| Ok(atom.differential_shift(b_gauss, f * intensity, coh)? - d0 + moment * gradient * z))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Dephasing {
            detunings_hz,
            weights: draw.weights.clone(),
            eta0: sample.eta0,
            loss_time_s: sample.loss_time_s,
            moment_hz_per_g: moment,
        })
    }

    /// Σ w_j exp(-i 2π δ_j t).
    fn coherence(&self, t: f64) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (&d, &w) in self.detunings_hz.iter().zip(&self.weights) {
            let (s, c) = (std::f64::consts::TAU * d * t).sin_cos();
            re += w * c;
            im -= w * s;
        }
        (re, im)
    }

    /// η(t) = η0 |Σ w_j exp(-i 2π δ_j t)|^2 exp(-t/T).
    pub fn efficiency(&self, t: f64) -> f64 {
        let (re, im) = self.coherence(t);
        self.eta0 * (re * re + im * im) * (-t / self.loss_time_s).exp()
    }

    /// Finite-ensemble standard error of η(t) (delta method on |c|^2).
    pub fn stderr(&self, t: f64) -> f64 {
        let (re, im) = self.coherence(t);
        let c2 = re * re + im * im;
        let n = self.detunings_hz.len() as f64;
        self.eta0 * (-t / self.loss_time_s).exp() * 2.0 * c2.sqrt() * ((1.0 - c2).max(0.0) / (2.0 * n)).sqrt()
    }

    /// First time at which η falls to η0/e.
    pub fn lifetime(&self) -> f64 {
        let target = self.eta0 / std::f64::consts::E;
        // η <= η0 exp(-t/T), so the crossing lies in (0, T]. Log-spaced points
        // ahead of the linear grid catch lifetimes far below T.
        let t_max = self.loss_time_s;
        let steps = 400;
        let first = t_max / steps as f64;
        let early = (0..200).map(|k| first * 1e-6f64.powf(1.0 - k as f64 / 200.0));
        let grid = early.chain((1..=steps).map(|k| t_max * k as f64 / steps as f64));
        let mut prev = 0.0;
        for t in grid {
            if self.efficiency(t) <= target {
                let (mut a, mut b) = (prev, t);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if self.efficiency(m) > target {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return 0.5 * (a + b);
            }
            prev = t;
        }
        t_max
    }
}

/// η(t) for the ensemble drawn with `seed` at bias `b_gauss`.
pub fn retrieval_curve(
    atom: &AtomInLattice,
    b_gauss: f64,
    coh: Coherence,
    sample: &SampleConfig,
    times: &[f64],
    seed: u64,
) -> Result<DecayCurve> {
    let draw = draw_ensemble(sample, atom.lattice(), sample.atom_count, seed)?;
    let deph = Dephasing::new(atom, b_gauss, coh, sample, &draw)?;
    let efficiency: Vec<f64> = times.par_iter().map(|&t| deph.efficiency(t)).collect();
    let stderr: Vec<f64> = times.par_iter().map(|&t| deph.stderr(t)).collect();
    Ok(DecayCurve {
        times_s: times.to_vec(),
        efficiency,
        stderr: Some(stderr),
        meta: CurveMeta {
            coherence: Some(coh),
            field_g: Some(b_gauss),
            storage_time_s: None,
            seed: Some(seed),
            source: "simulation".into(),
        },
    })
}

/// η(B) at fixed storage time, same ensemble at every field.
pub fn field_scan(
    atom: &AtomInLattice,
    coh: Coherence,
    sample: &SampleConfig,
    fixed_t: f64,
    fields: &[f64],
    seed: u64,
) -> Result<ScanCurve> {
    let draw = draw_ensemble(sample, atom.lattice(), sample.atom_count, seed)?;
    let mut efficiency = Vec::with_capacity(fields.len());
    let mut stderr = Vec::with_capacity(fields.len());
    for &b in fields {
        let deph = Dephasing::new(atom, b, coh, sample, &draw)?;
        efficiency.push(deph.efficiency(fixed_t));
        stderr.push(deph.stderr(fixed_t));
    }
    Ok(ScanCurve {
        fields_g: fields.to_vec(),
        efficiency,
        stderr: Some(stderr),
        meta: CurveMeta {
            coherence: Some(coh),
            field_g: None,
            storage_time_s: Some(fixed_t),
            seed: Some(seed),
            source: "simulation".into(),
        },
    })
}

/// 1/e lifetime at bias `b_gauss`.
pub fn simulated_lifetime(atom: &AtomInLattice, b_gauss: f64, coh: Coherence, sample: &SampleConfig, seed: u64) -> Result<f64> {
    let draw = draw_ensemble(sample, atom.lattice(), sample.atom_count, seed)?;
    Ok(Dephasing::new(atom, b_gauss, coh, sample, &draw)?.lifetime())
}

/// 1/τ = 2π μ' B' l + 1/T.
pub fn predicted_lifetime(mu_prime: f64, b_prime: f64, l: f64, loss_time: f64) -> Result<f64> {
    if !(mu_prime >= 0.0 && b_prime >= 0.0 && l >= 0.0 && loss_time > 0.0) {
        return Err(Error::InvalidInput("lifetime inputs must be non-negative and T positive".into()));
    }
    Ok(1.0 / (std::f64::consts::TAU * mu_prime * b_prime * l + 1.0 / loss_time))
}

/// τ^m = T τ / (T - τ): the lifetime with atom loss removed.
pub fn loss_deconvolve(tau: f64, loss_time: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("lifetime {tau} s must be positive")));
    }
    if tau >= loss_time {
        return Err(Error::InvalidInput(format!("lifetime {tau} s is not shorter than the loss time {loss_time} s")));
    }
    Ok(loss_time * tau / (loss_time - tau))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthPoint {
    pub depth_uk: f64,
    /// Magic field at this depth, G.
    pub b0: f64,
    /// 1/e lifetime, s.
    pub tau_s: f64,
}

/// Lifetime at each depth, each at its own recomputed magic field.
pub fn depth_sweep(
    species: &SpeciesData,
    lattice: &LatticeConfig,
    coh: Coherence,
    sample: &SampleConfig,
    depths: &[f64],
    seed: u64,
) -> Result<Vec<DepthPoint>> {
    depths
        .iter()
        .map(|&depth| {
            let atom = AtomInLattice::new(species, &lattice.with_depth(depth))?;
            let b0 = magic_field_numeric(&atom, coh, DEFAULT_BRACKET)?.b0;
            let tau_s = simulated_lifetime(&atom, b0, coh, sample, seed)?;
            Ok(DepthPoint { depth_uk: depth, b0, tau_s })
        })
        .collect()
}

/// Gradient B' (G/cm) for which the simulated lifetime at `b_gauss` equals `target_tau`.
pub fn calibrate_gradient(
    atom: &AtomInLattice,
    b_gauss: f64,
    coh: Coherence,
    sample: &SampleConfig,
    target_tau: f64,
    seed: u64,
) -> Result<f64> {
    let draw = draw_ensemble(sample, atom.lattice(), sample.atom_count, seed)?;
    let tau_at = |g: f64| -> Result<f64> {
        let s = SampleConfig { gradient_bprime_g_per_cm: g, ..sample.clone() };
        Ok(Dephasing::new(atom, b_gauss, coh, &s, &draw)?.lifetime())
    };
    if tau_at(0.0)? <= target_tau {
        return Err(Error::InvalidInput(format!("lifetime without gradient is already below {target_tau} s")));
    }
    let moment = atom.effective_moment(b_gauss, coh)?.value.abs().max(1e-6);
    let l = sample.length_l_cm.max(1e-9);
    let mut hi = 1.0 / (std::f64::consts::TAU * moment * l * target_tau);
    let mut n = 0;
    while tau_at(hi)? > target_tau {
        hi *= 2.0;
        n += 1;
        if n > 60 {
            return Err(Error::NonConvergence { what: "gradient calibration bracket".into(), iterations: n });
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tau_at(mid)? > target_tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
