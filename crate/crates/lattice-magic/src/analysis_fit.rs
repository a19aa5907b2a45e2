//! Least-squares fits of the three model forms, plus CSV ingestion.
//!
//! Models:
//!
//! ```text
//! gaussian       y = a exp(-gamma (B - B0)^2)  [+ c]
//! exponential    y = eta0 exp(-t / tau)
//! linear-origin  y = slope x
//! ```
//!
//! The nonlinear fits use Levenberg-Marquardt with Marquardt's diagonal
//! scaling and hand-written Jacobians. At the solution the analytic Jacobian is
//! compared with central differences; on disagreement the fit is redone with
//! the numeric one and a warning is attached.
//!
//! Uncertainties come from (J^T W J)^-1. Without per-point errors the matrix is
//! scaled by the residual variance SSR/(n - p). With per-point errors
//! (`FitOptions::use_stderr`) they are taken as absolute.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::storage_sim::{CurveMeta, DecayCurve, ScanCurve};

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-13;
const LAMBDA_CEILING: f64 = 1e12;
/// Max relative disagreement between analytic and numeric Jacobians.
pub const JACOBIAN_CHECK_TOLERANCE: f64 = 1e-4;
/// Exponential fits with R^2 below this are flagged.
pub const POOR_FIT_R2: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Gaussian,
    Exponential,
    LinearOrigin,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Gaussian => "gaussian",
            Model::Exponential => "exp",
            Model::LinearOrigin => "linear-origin",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Model::Gaussian),
            "exp" | "exponential" => Ok(Model::Exponential),
            "linear-origin" => Ok(Model::LinearOrigin),
            _ => Err(Error::InvalidInput(format!("unknown model '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// 1σ.
    pub sigma: f64,
    pub unit: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSource {
    Analytic,
    FiniteDifference,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub model: Model,
    pub parameters: Vec<FitParameter>,
    /// sqrt(SSR), unweighted.
    pub residual_norm: f64,
    /// Centered, except for linear-origin which is uncentered.
    pub r_squared: f64,
    /// y - model, in abscissa order.
    pub residuals: Vec<f64>,
    pub n_points: usize,
    pub iterations: usize,
    /// Largest relative parameter change of the last accepted step.
    pub final_step: f64,
    pub jacobian: JacobianSource,
    pub baseline: bool,
    pub weighted: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.sigma)
    }

    /// 1/e half-width of a Gaussian fit, 1/sqrt(gamma).
    pub fn half_width(&self) -> Option<f64> {
        (self.model == Model::Gaussian).then(|| 1.0 / self.value("gamma").sqrt())
    }

    /// (y_i/x_i - slope)/slope for each point of a linear-origin fit.
    pub fn relative_residuals(&self, x: &[f64]) -> Vec<f64> {
        let s = self.value("slope");
        x.iter().zip(&self.residuals).map(|(&xi, &r)| r / (s * xi)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitOptions {
    /// Additive constant in the Gaussian model.
    pub baseline: bool,
    /// Weight by the curve's stderr column when every entry is positive.
    pub use_stderr: bool,
    /// Starting point instead of the data-driven guess.
    pub initial: Option<Vec<f64>>,
}

type ModelFn = fn(&[f64], f64) -> f64;
type GradFn = fn(&[f64], f64, &mut [f64]);

fn gaussian(p: &[f64], x: f64) -> f64 {
    let c = if p.len() > 3 { p[3] } else { 0.0 };
    p[0] * (-p[2] * (x - p[1]).powi(2)).exp() + c
}

fn gaussian_grad(p: &[f64], x: f64, g: &mut [f64]) {
    let d = x - p[1];
    let e = (-p[2] * d * d).exp();
    g[0] = e;
    g[1] = 2.0 * p[0] * p[2] * d * e;
    g[2] = -p[0] * d * d * e;
    if g.len() > 3 {
        g[3] = 1.0;
    }
}

fn exponential(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp()
}

fn exponential_grad(p: &[f64], t: f64, g: &mut [f64]) {
    let e = (-t / p[1]).exp();
    g[0] = e;
    g[1] = p[0] * t / (p[1] * p[1]) * e;
}

struct Data {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

impl Data {
    /// Sorted by abscissa so results do not depend on input order.
    fn new(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<Self> {
        if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
            return Err(Error::InvalidInput("column lengths differ".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("data contain non-finite values".into()));
        }
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
        Ok(Data {
            x: idx.iter().map(|&i| x[i]).collect(),
            y: idx.iter().map(|&i| y[i]).collect(),
            sigma: sigma.map(|s| idx.iter().map(|&i| s[i]).collect()),
        })
    }

    fn weight(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| 1.0 / s[i])
    }
}

fn weights_usable(s: &Option<Vec<f64>>, options: &FitOptions) -> Option<Vec<f64>> {
    if !options.use_stderr {
        return None;
    }
    s.as_ref().filter(|v| v.iter().all(|&e| e > 0.0 && e.is_finite())).cloned()
}

struct Solution {
    p: Vec<f64>,
    cov: DMatrix<f64>,
    iterations: usize,
    final_step: f64,
}

fn jacobian(data: &Data, p: &[f64], f: ModelFn, grad: Option<GradFn>) -> DMatrix<f64> {
    let n = data.x.len();
    let k = p.len();
    let mut j = DMatrix::zeros(n, k);
    let mut g = vec![0.0; k];
    for i in 0..n {
        match grad {
            Some(grad) => grad(p, data.x[i], &mut g),
            None => numeric_gradient(f, p, data.x[i], &mut g),
        }
        let w = data.weight(i);
        for c in 0..k {
            j[(i, c)] = w * g[c];
        }
    }
    j
}

fn numeric_gradient(f: ModelFn, p: &[f64], x: f64, g: &mut [f64]) {
    let mut q = p.to_vec();
    for c in 0..p.len() {
        let h = 1e-6 * p[c].abs().max(1e-8);
        q[c] = p[c] + h;
        let up = f(&q, x);
        q[c] = p[c] - h;
        let down = f(&q, x);
        q[c] = p[c];
        g[c] = (up - down) / (2.0 * h);
    }
}

fn weighted_ssr(data: &Data, p: &[f64], f: ModelFn) -> f64 {
    (0..data.x.len()).map(|i| (data.weight(i) * (data.y[i] - f(p, data.x[i]))).powi(2)).sum()
}

fn levenberg_marquardt(data: &Data, p0: &[f64], f: ModelFn, grad: Option<GradFn>) -> Result<Solution> {
    let n = data.x.len();
    let k = p0.len();
    let mut p = p0.to_vec();
    let mut ssr = weighted_ssr(data, &p, f);
    if !ssr.is_finite() {
        return Err(Error::Fit("objective is not finite at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut final_step = f64::INFINITY;
    let mut iterations = 0;
    'outer: loop {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::NonConvergence { what: "Levenberg-Marquardt".into(), iterations: MAX_ITERATIONS });
        }
        let j = jacobian(data, &p, f, grad);
        let r = DVector::from_iterator(n, (0..n).map(|i| data.weight(i) * (data.y[i] - f(&p, data.x[i]))));
        let a = j.transpose() * &j;
        let g = j.transpose() * r;
        loop {
            let mut m = a.clone();
            for c in 0..k {
                m[(c, c)] += lambda * a[(c, c)].max(1e-300);
            }
            let step = m.cholesky().map(|ch| ch.solve(&g));
            if let Some(step) = step {
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let trial_ssr = weighted_ssr(data, &trial, f);
                if trial_ssr.is_finite() && trial_ssr <= ssr {
                    final_step = p.iter().zip(step.iter()).map(|(v, d)| d.abs() / v.abs().max(1e-300)).fold(0.0, f64::max);
                    p = trial;
                    let improved = trial_ssr < ssr;
                    ssr = trial_ssr;
                    lambda = (lambda / 10.0).max(1e-12);
                    if final_step < STEP_TOLERANCE || !improved {
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > LAMBDA_CEILING {
                break 'outer;
            }
        }
    }
    let j = jacobian(data, &p, f, grad);
    let cov = (j.transpose() * &j).try_inverse().ok_or_else(|| Error::Fit("normal matrix is singular at the solution".into()))?;
    Ok(Solution { p, cov, iterations, final_step })
}

/// Max |J_analytic - J_numeric| / max|J_numeric| over each column.
fn jacobian_disagreement(data: &Data, p: &[f64], f: ModelFn, grad: GradFn) -> f64 {
    let ja = jacobian(data, p, f, Some(grad));
    let jn = jacobian(data, p, f, None);
    (0..p.len())
        .map(|c| {
            let scale = jn.column(c).amax().max(1e-300);
            (ja.column(c) - jn.column(c)).amax() / scale
        })
        .fold(0.0, f64::max)
}

struct ModelDef<'a> {
    model: Model,
    names: &'a [(&'a str, &'a str)],
    f: ModelFn,
    grad: GradFn,
}

fn run(spec: ModelDef, data: &Data, p0: Vec<f64>, baseline: bool, mut warnings: Vec<String>) -> Result<FitResult> {
    let n = data.x.len();
    let k = p0.len();
    let mut jac_source = JacobianSource::Analytic;
    let mut sol = levenberg_marquardt(data, &p0, spec.f, Some(spec.grad))?;
    let disagreement = jacobian_disagreement(data, &sol.p, spec.f, spec.grad);
    if !(disagreement <= JACOBIAN_CHECK_TOLERANCE) {
        warnings.push(format!("analytic Jacobian disagrees with finite differences by {disagreement:.2e}; refit numerically"));
        sol = levenberg_marquardt(data, &p0, spec.f, None)?;
        jac_source = JacobianSource::FiniteDifference;
    }
    let residuals: Vec<f64> = (0..n).map(|i| data.y[i] - (spec.f)(&sol.p, data.x[i])).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = data.y.iter().sum::<f64>() / n as f64;
    let sst: f64 = data.y.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - ssr / sst
    } else if ssr == 0.0 {
        1.0
    } else {
        0.0
    };
    let scale = if data.sigma.is_some() {
        1.0
    } else if n > k {
        weighted_ssr(data, &sol.p, spec.f) / (n - k) as f64
    } else {
        warnings.push("no residual degrees of freedom; uncertainties set to zero".into());
        0.0
    };
    let parameters = spec
        .names
        .iter()
        .zip(&sol.p)
        .enumerate()
        .map(|(c, ((name, unit), &value))| FitParameter {
            name: name.to_string(),
            value,
            sigma: (scale * sol.cov[(c, c)]).max(0.0).sqrt(),
            unit: unit.to_string(),
        })
        .collect();
    for w in &warnings {
        log::warn!("{} fit: {w}", spec.model.name());
    }
    Ok(FitResult {
        model: spec.model,
        parameters,
        residual_norm: ssr.sqrt(),
        r_squared,
        residuals,
        n_points: n,
        iterations: sol.iterations,
        final_step: sol.final_step,
        jacobian: jac_source,
        baseline,
        weighted: data.sigma.is_some(),
        warnings,
    })
}

fn check_initial(initial: &Option<Vec<f64>>, k: usize) -> Result<Option<Vec<f64>>> {
    match initial {
        Some(v) if v.len() != k => Err(Error::InvalidInput(format!("initial guess needs {k} values, got {}", v.len()))),
        Some(v) => Ok(Some(v.clone())),
        None => Ok(None),
    }
}

/// Fits a exp(-gamma (B - B0)^2) (+ c) to a field scan.
pub fn fit_gaussian_peak(data: &ScanCurve, options: &FitOptions) -> Result<FitResult> {
    let d = Data::new(&data.fields_g, &data.efficiency, weights_usable(&data.stderr, options).as_deref())?;
    let n = d.x.len();
    if n < 5 {
        return Err(Error::Fit(format!("gaussian fit needs at least 5 points, got {n}")));
    }
    let imax = (0..n).fold(0, |best, i| if d.y[i] > d.y[best] { i } else { best });
    if imax == 0 || imax == n - 1 {
        return Err(Error::Fit(format!("peak at the scan boundary (B = {} G)", d.x[imax])));
    }
    let k = if options.baseline { 4 } else { 3 };
    let p0 = match check_initial(&options.initial, k)? {
        Some(p) => p,
        None => {
            let floor = if options.baseline { d.y.iter().copied().fold(f64::INFINITY, f64::min) } else { 0.0 };
            let (b, a) = (d.x[imax], d.y[imax] - floor);
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                let w = (d.y[i] - floor).max(0.0);
                num += w * (d.x[i] - b).powi(2);
                den += w;
            }
            let m2 = if num > 0.0 { num / den } else { (d.x[n - 1] - d.x[0]).powi(2) / 12.0 };
            let mut p = vec![a, b, 1.0 / (2.0 * m2)];
            if options.baseline {
                p.push(floor);
            }
            p
        }
    };
    let names: &[(&str, &str)] = &[("amplitude", ""), ("B0", "G"), ("gamma", "G^-2"), ("baseline", "")];
    let spec = ModelDef { model: Model::Gaussian, names: &names[..k], f: gaussian, grad: gaussian_grad };
    let mut warnings = Vec::new();
    if options.baseline {
        warnings.push("additive baseline included".into());
    }
    let r = run(spec, &d, p0, options.baseline, warnings)?;
    let b0 = r.value("B0");
    if !(b0 > d.x[0] && b0 < d.x[n - 1]) {
        return Err(Error::Fit(format!("fitted center {b0} G lies outside the scan")));
    }
    if !(r.value("gamma") > 0.0) {
        return Err(Error::Fit("fitted gamma is not positive".into()));
    }
    Ok(r)
}

/// Fits eta0 exp(-t/tau) to a decay curve.
pub fn fit_exponential(data: &DecayCurve, options: &FitOptions) -> Result<FitResult> {
    let d = Data::new(&data.times_s, &data.efficiency, weights_usable(&data.stderr, options).as_deref())?;
    let n = d.x.len();
    let positive: Vec<usize> = (0..n).filter(|&i| d.y[i] > 0.0).collect();
    if 2 * positive.len() <= n {
        return Err(Error::Fit("most data are non-positive".into()));
    }
    let mut warnings = Vec::new();
    if n < 4 {
        warnings.push(format!("only {n} points"));
    }
    let ys: Vec<f64> = positive.iter().map(|&i| d.y[i]).collect();
    let (ymax, ymin) = (ys.iter().copied().fold(0.0, f64::max), ys.iter().copied().fold(f64::INFINITY, f64::min));
    if ymax / ymin < 10.0 {
        warnings.push("data span less than one decade of decay".into());
    }
    let p0 = match check_initial(&options.initial, 2)? {
        Some(p) => p,
        None => {
            // ln y = ln eta0 - t/tau
            let m = positive.len() as f64;
            let tx: f64 = positive.iter().map(|&i| d.x[i]).sum::<f64>() / m;
            let ly: f64 = positive.iter().map(|&i| d.y[i].ln()).sum::<f64>() / m;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for &i in &positive {
                sxy += (d.x[i] - tx) * (d.y[i].ln() - ly);
                sxx += (d.x[i] - tx).powi(2);
            }
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let tau = if slope < 0.0 { -1.0 / slope } else { (d.x[n - 1] - d.x[0]).max(1e-12) };
            vec![(ly - slope * tx).exp(), tau]
        }
    };
    let names: &[(&str, &str)] = &[("eta0", ""), ("tau", "s")];
    let mut r =
        run(ModelDef { model: Model::Exponential, names, f: exponential, grad: exponential_grad }, &d, p0, false, warnings)?;
    if r.r_squared < POOR_FIT_R2 {
        let msg = format!("R^2 = {:.4} below {POOR_FIT_R2}: decay is not single-exponential", r.r_squared);
        log::warn!("exp fit: {msg}");
        r.warnings.push(msg);
    }
    Ok(r)
}

/// Least-squares slope of y = s x through the origin.
pub fn fit_linear_origin(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    let d = Data::new(x, y, sigma)?;
    let n = d.x.len();
    if n == 0 {
        return Err(Error::Fit("no points".into()));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        let w = d.weight(i).powi(2);
        sxy += w * d.x[i] * d.y[i];
        sxx += w * d.x[i] * d.x[i];
    }
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are zero".into()));
    }
    let slope = sxy / sxx;
    let residuals: Vec<f64> = (0..n).map(|i| d.y[i] - slope * d.x[i]).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let syy: f64 = d.y.iter().map(|y| y * y).sum();
    let mut warnings = Vec::new();
    let variance = if d.sigma.is_some() {
        1.0 / sxx
    } else if n > 1 {
        let wssr: f64 = (0..n).map(|i| (d.weight(i) * residuals[i]).powi(2)).sum();
        wssr / (n - 1) as f64 / sxx
    } else {
        warnings.push("single point; slope uncertainty set to zero".into());
        0.0
    };
    Ok(FitResult {
        model: Model::LinearOrigin,
        parameters: vec![FitParameter { name: "slope".into(), value: slope, sigma: variance.sqrt(), unit: String::new() }],
        residual_norm: ssr.sqrt(),
        r_squared: if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 },
        residuals,
        n_points: n,
        iterations: 0,
        final_step: 0.0,
        jacobian: JacobianSource::ClosedForm,
        baseline: false,
        weighted: d.sigma.is_some(),
        warnings,
    })
}

/// (μ', 1/τ^m) pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentData {
    pub mu_prime_hz_per_g: Vec<f64>,
    pub inv_tau_m_per_s: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Curve {
    Decay(DecayCurve),
    Scan(ScanCurve),
    Moment(MomentData),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ingested {
    pub curve: Curve,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Decay,
    Scan,
    Moment,
}

impl Kind {
    fn ordinate(self) -> &'static str {
        match self {
            Kind::Decay | Kind::Scan => "efficiency",
            Kind::Moment => "inv_tau_m_per_s",
        }
    }
}

/// Abscissa quantity and unit of a header name, if it names one.
fn abscissa(name: &str) -> Option<(&'static str, &str)> {
    let (q, unit) = name.split_once('_')?;
    let q = match q {
        "t" => "time",
        "B" => "field",
        "mu" => return name.strip_prefix("mu_prime_").map(|u| ("moment", u)),
        _ => return None,
    };
    Some((q, unit))
}

fn schema(column: &str, reason: impl Into<String>) -> Error {
    Error::Schema { column: column.to_string(), reason: reason.into() }
}

/// Reads a curve. The first column names the abscissa and its unit.
///
/// | first column         | second column     | curve   |
/// |----------------------|-------------------|---------|
/// | `t_s`                | `efficiency`      | decay   |
/// | `B_G`                | `efficiency`      | scan    |
/// | `mu_prime_Hz_per_G`  | `inv_tau_m_per_s` | moment  |
///
/// An optional `stderr` column follows; a `fit_line` column is ignored.
pub fn ingest_csv(path: &Path) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    ingest_csv_str(&text, &path.display().to_string())
}

pub fn ingest_csv_str(text: &str, source: &str) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { what: source.to_string(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let first = headers.first().ok_or_else(|| schema("", "empty header"))?;
    let kind = match abscissa(first) {
        Some(("time", "s")) => Kind::Decay,
        Some(("field", "G")) => Kind::Scan,
        Some(("moment", "Hz_per_G")) => Kind::Moment,
        Some((q, unit)) => return Err(schema(first, format!("unsupported {q} unit '{unit}'"))),
        None => return Err(schema(first, "first column must be t_s, B_G or mu_prime_Hz_per_G")),
    };
    let mut stderr_col = None;
    let mut ordinate_col = None;
    for (c, h) in headers.iter().enumerate().skip(1) {
        if abscissa(h).is_some() {
            return Err(schema(h, format!("second abscissa column alongside '{first}'")));
        }
        match h.as_str() {
            "stderr" => stderr_col = Some(c),
            "fit_line" => {}
            o if o == kind.ordinate() => ordinate_col = Some(c),
            "efficiency" | "inv_tau_m_per_s" => {
                return Err(schema(h, format!("does not match abscissa '{first}' (expected {})", kind.ordinate())))
            }
            _ => return Err(schema(h, "unknown column")),
        }
    }
    let ordinate_col = ordinate_col.ok_or_else(|| schema(kind.ordinate(), "missing column"))?;
    let (mut x, mut y, mut e) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|err| Error::Parse { what: source.to_string(), message: err.to_string() })?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Cell {
                row: row + 1,
                column: headers[c].clone(),
                reason: format!("'{raw}' is not a finite number"),
            })
        };
        x.push(cell(0)?);
        y.push(cell(ordinate_col)?);
        if let Some(c) = stderr_col {
            e.push(cell(c)?);
        }
    }
    if x.is_empty() {
        return Err(Error::Parse { what: source.to_string(), message: "no data rows".into() });
    }
    let mut warnings = Vec::new();
    if x.windows(2).any(|w| w[1] < w[0]) {
        let msg = format!("{source}: abscissa '{first}' not sorted; rows reordered");
        log::warn!("{msg}");
        warnings.push(msg);
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        x = idx.iter().map(|&i| x[i]).collect();
        y = idx.iter().map(|&i| y[i]).collect();
        if !e.is_empty() {
            e = idx.iter().map(|&i| e[i]).collect();
        }
    }
    let stderr = stderr_col.map(|_| e);
    let meta = CurveMeta { source: source.to_string(), ..CurveMeta::default() };
    let curve = match kind {
        Kind::Decay => Curve::Decay(DecayCurve { times_s: x, efficiency: y, stderr, meta }),
        Kind::Scan => Curve::Scan(ScanCurve { fields_g: x, efficiency: y, stderr, meta }),
        Kind::Moment => Curve::Moment(MomentData { mu_prime_hz_per_g: x, inv_tau_m_per_s: y, stderr }),
    };
    Ok(Ingested { curve, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(b0: f64, gamma: f64) -> ScanCurve {
        let fields_g: Vec<f64> = (0..41).map(|i| b0 - 1.0 + 0.05 * i as f64).collect();
        let efficiency = fields_g.iter().map(|&b| 0.03 * (-gamma * (b - b0) * (b - b0)).exp()).collect();
        ScanCurve { fields_g, efficiency, stderr: None, meta: CurveMeta::default() }
    }

    #[test]
    fn exact_gaussian() {
        let r = fit_gaussian_peak(&scan(4.24, 2.0), &FitOptions::default()).unwrap();
        assert!((r.value("B0") - 4.24).abs() < 1e-8 * 4.24);
        assert!((r.value("gamma") - 2.0).abs() < 1e-8 * 2.0);
        assert!((r.half_width().unwrap() - 0.5f64.sqrt()).abs() < 1e-8);
        assert_eq!(r.jacobian, JacobianSource::Analytic);
    }

    #[test]
    fn gaussian_boundary_peak() {
        let mut s = scan(4.24, 2.0);
        s.efficiency = s.fields_g.clone();
        assert!(fit_gaussian_peak(&s, &FitOptions::default()).is_err());
    }

    #[test]
    fn exact_exponential() {
        let times_s: Vec<f64> = (0..30).map(|i| i as f64 * 0.05).collect();
        let efficiency = times_s.iter().map(|t| 0.034 * (-t / 0.32f64).exp()).collect();
        let c = DecayCurve { times_s, efficiency, stderr: None, meta: CurveMeta::default() };
        let r = fit_exponential(&c, &FitOptions::default()).unwrap();
        assert!((r.value("tau") - 0.32).abs() < 1e-8 * 0.32);
        assert!((r.value("eta0") - 0.034).abs() < 1e-8 * 0.034);
    }

    #[test]
    fn linear_examples() {
        let r = fit_linear_origin(&[1.0, 2.0, 3.0], &[2.5, 5.0, 7.5], None).unwrap();
        assert!((r.value("slope") - 2.5).abs() < 1e-15);
        assert!(r.residual_norm < 1e-14);
        let one = fit_linear_origin(&[4.0], &[3.0], None).unwrap();
        assert_eq!(one.value("slope"), 0.75);
        assert!(fit_linear_origin(&[0.0, 0.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn csv_kinds() {
        let d = ingest_csv_str("t_s,efficiency\n0,0.034\n0.1,0.02\n", "mem").unwrap();
        assert!(matches!(d.curve, Curve::Decay(ref c) if c.times_s.len() == 2));
        let s = ingest_csv_str("B_G,efficiency\n4,0.1\n", "mem").unwrap();
        assert!(matches!(s.curve, Curve::Scan(_)));
        match ingest_csv_str("t_ms,efficiency\n1,2\n", "mem") {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "t_ms"),
            other => panic!("{other:?}"),
        }
        match ingest_csv_str("B_G,inv_tau_m_per_s\n1,2\n", "mem") {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "inv_tau_m_per_s"),
            other => panic!("{other:?}"),
        }
        let u = ingest_csv_str("t_s,efficiency\n0.2,1\n0.1,2\n", "mem").unwrap();
        assert_eq!(u.warnings.len(), 1);
        assert!(matches!(ingest_csv_str("t_s,efficiency\n0.2,x\n", "mem"), Err(Error::Cell { row: 1, .. })));
    }
}
