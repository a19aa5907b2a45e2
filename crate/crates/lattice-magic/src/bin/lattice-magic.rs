use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use lattice_magic::analysis_fit::{fit_exponential, fit_gaussian_peak, fit_linear_origin, ingest_csv, Curve, FitOptions, Model};
use lattice_magic::atomic_data::{trap_depth_to_intensity, SampleConfig};
use lattice_magic::ground_manifold::{AtomInLattice, Coherence};
use lattice_magic::magic_field::{
    magic_field_closed_form, magic_field_numeric, vector_tensor_diagnostics, MagicFieldResult, DEFAULT_BRACKET,
};
use lattice_magic::report::{run_report, write_bundle, ConfigSet, CONFIG_DIR_ENV, DEFAULT_SEED};
use lattice_magic::storage_sim::{depth_sweep, field_scan, retrieval_curve};

#[derive(Parser)]
#[command(
    name = "lattice-magic",
    version,
    about = "Magic magnetic fields and storage lifetimes of 87Rb ground coherences in a circularly polarized lattice"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Species data file
    #[arg(long, global = true)]
    species: Option<PathBuf>,
    /// Lattice config file
    #[arg(long, global = true)]
    lattice: Option<PathBuf>,
    /// Sample config file
    #[arg(long, global = true)]
    sample: Option<PathBuf>,
    /// Directory searched for species.cfg, lattice.cfg, sample.cfg
    #[arg(long, global = true, env = CONFIG_DIR_ENV)]
    config_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Print JSON instead of tables
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar, vector and tensor polarizabilities of both hyperfine levels
    Polarizability {
        /// Override the degree of circular polarization
        #[arg(long, allow_hyphen_values = true)]
        circ_degree: Option<f64>,
    },
    /// Magic fields of the three coherences
    MagicField {
        #[arg(long, default_value = "all")]
        coherence: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        /// Search interval lo:hi in G (its mirror is searched too)
        #[arg(long, default_value = "0.5:12")]
        bracket: String,
        #[arg(long, allow_hyphen_values = true)]
        circ_degree: Option<f64>,
    },
    /// Dressed ground-level energies versus field
    Spectrum {
        /// Field grid b0:b1:n in G
        #[arg(long = "B", default_value = "0:10:11", allow_hyphen_values = true)]
        fields: String,
        /// Trap depth in uK (0 for no light); defaults to the lattice config
        #[arg(long)]
        depth: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated retrieval efficiency
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Decay)]
        mode: Mode,
        #[arg(long, default_value = "clock")]
        coherence: String,
        /// Bias field in G (decay mode); defaults to the magic field
        #[arg(long = "B", allow_hyphen_values = true)]
        field: Option<f64>,
        /// Storage times t0:t1:n in s (decay mode)
        #[arg(long, default_value = "0:1:41")]
        times: String,
        /// Fixed storage time in s (scan mode)
        #[arg(long, default_value_t = 0.5)]
        storage_time: f64,
        /// Field grid b0:b1:n in G (scan mode); defaults to the magic field +- 0.6 G
        #[arg(long, allow_hyphen_values = true)]
        fields: Option<String>,
        /// Comma-separated depths in uK (depth-sweep mode)
        #[arg(long, default_value = "16,48,64")]
        depths: String,
        /// Override the sample's field gradient, G/cm
        #[arg(long)]
        gradient: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to a CSV curve
    Fit {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Add a constant baseline to the Gaussian model
        #[arg(long)]
        baseline: bool,
        /// Weight points by the stderr column
        #[arg(long)]
        use_stderr: bool,
    },
    /// Full pipeline with comparison table and figure data
    Report {
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Numeric,
    ClosedForm,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Decay,
    Scan,
    DepthSweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gaussian,
    Exp,
    LinearOrigin,
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else { bail!("grid '{s}' must be start:stop:count") };
    let (a, b): (f64, f64) = (a.parse()?, b.parse()?);
    let n: usize = n.parse()?;
    Ok(match n {
        0 => bail!("grid '{s}' has no points"),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn parse_coherences(s: &str) -> Result<Vec<Coherence>> {
    if s == "all" {
        return Ok(Coherence::ALL.to_vec());
    }
    s.split(',').map(|c| c.trim().parse::<Coherence>().map_err(Into::into)).collect()
}

fn write_csv(out: Option<&Path>, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    let configs = ConfigSet::resolve(g.config_dir.as_deref(), g.species.as_deref(), g.lattice.as_deref(), g.sample.as_deref())
        .context("loading configs")?;
    match cli.command {
        Command::Polarizability { circ_degree } => {
            let lattice = circ_degree.map_or(configs.lattice.clone(), |a| configs.lattice.with_circ_degree(a));
            let atom = AtomInLattice::new(&configs.species, &lattice)?;
            let p = atom.polarizabilities();
            if g.json {
                print_json(&json!({ "intensity_w_per_cm2": atom.intensity(), "polarizabilities": p }))?;
            } else {
                println!(
                    "wavelength {} nm, A = {}, depth {} uK -> I = {:.3} W/cm^2",
                    lattice.wavelength_vac_nm,
                    lattice.circ_degree_a,
                    lattice.trap_depth_uk,
                    atom.intensity()
                );
                println!("values in Hz/(W/cm^2); vector parts include A");
                println!("{:<6} {:>14} {:>14} {:>14}", "level", "scalar", "vector", "tensor");
                for l in [&p.lower, &p.upper] {
                    println!("F={:<4} {:>14.8} {:>14.8} {:>14.6e}", l.f, l.scalar, l.vector, l.tensor);
                }
                println!("{:<6} {:>14} {:>14.8} {:>14.6e}", "12", "", p.alpha12_vector, p.alpha12_tensor);
            }
        }
        Command::MagicField { coherence, method, bracket, circ_degree } => {
            let lattice = circ_degree.map_or(configs.lattice.clone(), |a| configs.lattice.with_circ_degree(a));
            let atom = AtomInLattice::new(&configs.species, &lattice)?;
            let (lo, hi) = bracket.split_once(':').with_context(|| format!("bracket '{bracket}' must be lo:hi"))?;
            let br: (f64, f64) = (lo.parse()?, hi.parse()?);
            let mut results: Vec<(MagicFieldResult, Option<f64>)> = Vec::new();
            for coh in parse_coherences(&coherence)? {
                if matches!(method, MethodArg::Numeric | MethodArg::Both) {
                    let r = magic_field_numeric(&atom, coh, br).with_context(|| format!("{coh} magic field"))?;
                    let mu = atom.effective_moment(r.b0, coh)?.value;
                    results.push((r, Some(mu)));
                }
                if matches!(method, MethodArg::ClosedForm | MethodArg::Both) {
                    results.push((magic_field_closed_form(atom.polarizabilities(), &configs.species, coh)?, None));
                }
            }
            let numeric = |c: Coherence| {
                results.iter().find(|(r, _)| r.coherence == c && r.slope_residual.is_some()).map(|(r, _)| r.b0.abs())
            };
            let diagnostics = match (numeric(Coherence::Plus), numeric(Coherence::Minus), numeric(Coherence::Clock)) {
                (Some(p), Some(m), Some(c)) => Some(vector_tensor_diagnostics(p, m, c)?),
                _ => None,
            };
            if g.json {
                let rows: Vec<_> = results.iter().map(|(r, mu)| json!({ "result": r, "mu_prime_hz_per_g": mu })).collect();
                print_json(&json!({ "circ_degree": lattice.circ_degree_a, "results": rows, "diagnostics": diagnostics }))?;
            } else {
                println!("A = {}; plus/minus label the sign of m of the upper state", lattice.circ_degree_a);
                println!("{:<7} {:<12} {:>12} {:>14} {:>12}", "coh", "method", "B0 (G)", "s(B0)", "mu' (Hz/G)");
                for (r, mu) in &results {
                    let s = r.slope_residual.map_or("-".into(), |v| format!("{v:.3e}"));
                    let m = mu.map_or("-".into(), |v| format!("{v:.2}"));
                    println!("{:<7} {:<12} {:>12.6} {:>14} {:>12}", r.coherence, r.method.name(), r.b0, s, m);
                }
                if let Some(d) = diagnostics {
                    println!("vector ratio {:.5}  tensor ratio {:.5}", d.vector_ratio, d.tensor_ratio);
                }
            }
        }
        Command::Spectrum { fields, depth, out } => {
            let lattice = depth.filter(|&d| d > 0.0).map_or(configs.lattice.clone(), |d| configs.lattice.with_depth(d));
            let atom = AtomInLattice::new(&configs.species, &lattice)?;
            let intensity = if depth == Some(0.0) { 0.0 } else { trap_depth_to_intensity(&configs.species, &lattice)? };
            let grid = parse_grid(&fields)?;
            let labels: Vec<String> = atom.basis().levels().iter().map(|l| format!("E_F{}_m{}_Hz", l.f, l.m)).collect();
            let mut rows = Vec::new();
            for &b in &grid {
                let levels = atom.dressed_levels_at(b, intensity)?;
                let mut row = vec![b];
                row.extend(atom.basis().levels().iter().map(|&l| levels.get(l).map_or(f64::NAN, |d| d.energy)));
                rows.push(row);
            }
            if g.json {
                print_json(&json!({ "intensity_w_per_cm2": intensity, "columns": labels, "fields_g": grid, "rows": rows }))?;
            } else {
                let mut headers = vec!["B_G"];
                headers.extend(labels.iter().map(String::as_str));
                write_csv(out.as_deref(), &headers, &rows)?;
            }
        }
        Command::Simulate { mode, coherence, field, times, storage_time, fields, depths, gradient, out } => {
            let coh: Coherence = coherence.parse()?;
            let sample = SampleConfig {
                gradient_bprime_g_per_cm: gradient.unwrap_or(configs.sample.gradient_bprime_g_per_cm),
                ..configs.sample.clone()
            };
            let atom = AtomInLattice::new(&configs.species, &configs.lattice)?;
            let magic = || -> Result<f64> { Ok(magic_field_numeric(&atom, coh, DEFAULT_BRACKET)?.b0) };
            match mode {
                Mode::Decay => {
                    let b = match field {
                        Some(b) => b,
                        None => magic()?,
                    };
                    let c = retrieval_curve(&atom, b, coh, &sample, &parse_grid(&times)?, g.seed)?;
                    if g.json {
                        print_json(&c)?;
                    } else {
                        let se = c.stderr.clone().unwrap_or_default();
                        let rows: Vec<Vec<f64>> =
                            (0..c.times_s.len()).map(|i| vec![c.times_s[i], c.efficiency[i], se[i]]).collect();
                        write_csv(out.as_deref(), &["t_s", "efficiency", "stderr"], &rows)?;
                    }
                }
                Mode::Scan => {
                    let grid = match fields {
                        Some(f) => parse_grid(&f)?,
                        None => {
                            let b0 = magic()?;
                            parse_grid(&format!("{}:{}:61", b0 - 0.6, b0 + 0.6))?
                        }
                    };
                    let c = field_scan(&atom, coh, &sample, storage_time, &grid, g.seed)?;
                    if g.json {
                        print_json(&c)?;
                    } else {
                        let se = c.stderr.clone().unwrap_or_default();
                        let rows: Vec<Vec<f64>> =
                            (0..c.fields_g.len()).map(|i| vec![c.fields_g[i], c.efficiency[i], se[i]]).collect();
                        write_csv(out.as_deref(), &["B_G", "efficiency", "stderr"], &rows)?;
                    }
                }
                Mode::DepthSweep => {
                    let ds: Vec<f64> =
                        depths.split(',').map(|d| d.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
                    let sweep = depth_sweep(&configs.species, &configs.lattice, coh, &sample, &ds, g.seed)?;
                    if g.json {
                        print_json(&sweep)?;
                    } else {
                        let rows: Vec<Vec<f64>> = sweep.iter().map(|p| vec![p.depth_uk, p.b0, p.tau_s]).collect();
                        write_csv(out.as_deref(), &["depth_uK", "B0_G", "tau_s"], &rows)?;
                    }
                }
            }
        }
        Command::Fit { model, input, baseline, use_stderr } => {
            let data = ingest_csv(&input)?;
            let options = FitOptions { baseline, use_stderr, initial: None };
            let model = match model {
                ModelArg::Gaussian => Model::Gaussian,
                ModelArg::Exp => Model::Exponential,
                ModelArg::LinearOrigin => Model::LinearOrigin,
            };
            let result = match (model, &data.curve) {
                (Model::Gaussian, Curve::Scan(c)) => fit_gaussian_peak(c, &options)?,
                (Model::Exponential, Curve::Decay(c)) => fit_exponential(c, &options)?,
                (Model::LinearOrigin, Curve::Moment(m)) => {
                    let sigma = if use_stderr { m.stderr.as_deref() } else { None };
                    fit_linear_origin(&m.mu_prime_hz_per_g, &m.inv_tau_m_per_s, sigma)?
                }
                (m, _) => bail!("{} model does not apply to the curve in {}", m.name(), input.display()),
            };
            print_json(&json!({ "input": input, "ingest_warnings": data.warnings, "fit": result }))?;
        }
        Command::Report { out_dir } => {
            let bundle = run_report(&configs, g.seed)?;
            let paths = write_bundle(&bundle, &out_dir)?;
            if g.json {
                print_json(&bundle)?;
            } else {
                print!("{}", bundle.render_table());
                println!("wrote {} files to {}", paths.len(), out_dir.display());
            }
            let failed = bundle.failures();
            if !failed.is_empty() {
                let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
                eprintln!("failed bands: {}", names.join(", "));
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
