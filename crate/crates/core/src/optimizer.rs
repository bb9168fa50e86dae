//! Training of the filtered nonlinear step: coefficient sets for ESSFM and
//! coupled-channel ESSFM, and the nonlinear scale of OSSFM.
//!
//! The objective is the mean square error between transmitted symbols and
//! the received symbols after backpropagation, matched filtering, power
//! normalization and mean-phase removal, averaged over channels. Its
//! gradient is obtained in closed form through the normalization, the
//! phase removal and the matched filter, then handed to the backpropagator's
//! reverse pass.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::Link;
use crate::dbp::{Backpropagator, CoefficientSet, DbpConfig, Method};
use crate::error::{Error, Result};
use crate::signal::DualPolSignal;
use crate::txrx::{PolSymbols, SymbolSampler, TxConfig};

/// Mean of `|rx - tx|^2` over symbols and polarizations.
pub fn mse(rx: &PolSymbols, tx: &PolSymbols) -> Result<f64> {
    if rx.x.len() != tx.x.len() || rx.y.len() != tx.y.len() {
        return Err(Error::LengthMismatch {
            expected: tx.len(),
            actual: rx.len(),
        });
    }
    if rx.is_empty() && rx.y.is_empty() {
        return Err(Error::config("MSE of an empty sequence"));
    }
    let n = rx.x.len() + rx.y.len();
    Ok(rx.iter().zip(tx.iter()).map(|(r, t)| (r - t).norm_sqr()).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Reverse-mode gradient through the backpropagator.
    Analytic,
    /// Central finite differences (slow; for processing modes without an
    /// adjoint).
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_train_symbols: usize,
    /// Launch power of the training run; `None` picks the middle of the
    /// evaluation power grid.
    pub train_power_dbm: Option<f64>,
    pub max_iterations: usize,
    /// Length of the first trial step in parameter space.
    pub initial_step: f64,
    /// Stop an `h`-iteration once the relative MSE decrease of an iteration
    /// falls below this.
    pub tolerance: f64,
    pub rng_seed: u64,
    /// Train without amplifier noise.
    pub noiseless: bool,
    pub gradient: GradientMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n_train_symbols: 1024,
            train_power_dbm: None,
            max_iterations: 60,
            initial_step: 0.05,
            tolerance: 1e-6,
            rng_seed: 2,
            noiseless: false,
            gradient: GradientMode::Analytic,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_symbols < 256 {
            return Err(Error::config("n_train_symbols must be at least 256"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("training tolerance must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("initial_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub initial_mse: f64,
    /// MSE after every accepted iteration, one list per `h`; each list
    /// starts with the MSE entering that `h`-iteration.
    pub trajectories: Vec<Vec<f64>>,
    pub final_mse: f64,
    pub coefficients: Option<CoefficientSet>,
    pub nl_scale: Option<f64>,
}

impl ObjectiveReport {
    /// MSE at the end of each `h`-iteration.
    pub fn h_final_mse(&self) -> Vec<f64> {
        self.trajectories.iter().filter_map(|t| t.last().copied()).collect()
    }
}

/// Received training fields with their reference symbols.
pub struct TrainingSet {
    inputs: Vec<DualPolSignal>,
    targets: Vec<PolSymbols>,
    samplers: Vec<(usize, SymbolSampler)>,
}

impl TrainingSet {
    /// `inputs` are the DBP inputs: one field per channel, or a single
    /// aggregate field for full-field methods. `targets[i]` holds the
    /// transmitted symbols of the channel at absolute frequency
    /// `channel_offsets[i]`.
    pub fn new(
        inputs: Vec<DualPolSignal>,
        targets: Vec<PolSymbols>,
        channel_offsets: &[f64],
        tx: &TxConfig,
    ) -> Result<Self> {
        if targets.is_empty() || targets.len() != channel_offsets.len() {
            return Err(Error::config("each training target needs a channel offset"));
        }
        let per_channel = inputs.len() == targets.len();
        if !per_channel && inputs.len() != 1 {
            return Err(Error::config("training inputs must be one field per channel or one aggregate field"));
        }
        let samplers = channel_offsets
            .iter()
            .enumerate()
            .map(|(i, &off)| {
                let f = if per_channel { i } else { 0 };
                Ok((f, SymbolSampler::new(&inputs[f], off, tx)?))
            })
            .collect::<Result<Vec<_>>>()?;
        for ((_, s), t) in samplers.iter().zip(&targets) {
            if t.x.len() != s.n_symbols() || t.y.len() != s.n_symbols() {
                return Err(Error::LengthMismatch {
                    expected: s.n_symbols(),
                    actual: t.len(),
                });
            }
        }
        let targets = targets.iter().map(|t| t.normalized()).collect();
        Ok(Self {
            inputs,
            targets,
            samplers,
        })
    }

    pub fn inputs(&self) -> &[DualPolSignal] {
        &self.inputs
    }

    /// Received symbols of every channel after normalization and phase
    /// removal.
    pub fn received(&self, outputs: &[DualPolSignal]) -> Result<Vec<PolSymbols>> {
        self.samplers
            .iter()
            .zip(&self.targets)
            .map(|((f, s), t)| {
                let raw = PolSymbols {
                    x: s.apply(outputs[*f].x()),
                    y: s.apply(outputs[*f].y()),
                };
                crate::txrx::remove_mpr(&raw.normalized(), t)
            })
            .collect()
    }

    /// Average MSE and, if requested, its gradient with respect to the
    /// backpropagated fields.
    #[allow(clippy::type_complexity)]
    fn loss(&self, outputs: &[DualPolSignal], want_grad: bool) -> (f64, Vec<(Vec<Complex64>, Vec<Complex64>)>) {
        let n_ch = self.targets.len() as f64;
        let mut grads: Vec<(Vec<Complex64>, Vec<Complex64>)> = if want_grad {
            outputs
                .iter()
                .map(|o| (vec![Complex64::new(0.0, 0.0); o.len()], vec![Complex64::new(0.0, 0.0); o.len()]))
                .collect()
        } else {
            Vec::new()
        };
        let mut total = 0.0;
        for ((f, s), t) in self.samplers.iter().zip(&self.targets) {
            let rx = s.apply(outputs[*f].x());
            let ry = s.apply(outputs[*f].y());
            let k = (rx.len() + ry.len()) as f64;
            let er: f64 = rx.iter().chain(&ry).map(|v| v.norm_sqr()).sum();
            let et: f64 = t.iter().map(|v| v.norm_sqr()).sum();
            let c: Complex64 = rx.iter().chain(&ry).zip(t.iter()).map(|(r, t)| r * t.conj()).sum();
            if er == 0.0 {
                total += et / k;
                continue;
            }
            let sc = (er / k).sqrt();
            let cabs = c.norm();
            total += (k + et - 2.0 * cabs / sc) / k;
            if want_grad {
                let phase = if cabs > 0.0 { c / cabs } else { Complex64::new(1.0, 0.0) };
                let a = -2.0 / (k * n_ch);
                let g = |r: &Complex64, t: &Complex64| (t * phase / sc - r * (cabs / (k * sc * sc * sc))) * a;
                let gx: Vec<Complex64> = rx.iter().zip(&t.x).map(|(r, t)| g(r, t)).collect();
                let gy: Vec<Complex64> = ry.iter().zip(&t.y).map(|(r, t)| g(r, t)).collect();
                for (acc, v) in grads[*f].0.iter_mut().zip(s.adjoint(&gx)) {
                    *acc += v;
                }
                for (acc, v) in grads[*f].1.iter_mut().zip(s.adjoint(&gy)) {
                    *acc += v;
                }
            }
        }
        (total / n_ch, grads)
    }
}

/// The training objective for a fixed link and DBP configuration.
pub struct Objective<'a> {
    link: &'a Link,
    dbp: DbpConfig,
    set: &'a TrainingSet,
}

impl<'a> Objective<'a> {
    pub fn new(link: &'a Link, dbp: &DbpConfig, set: &'a TrainingSet) -> Self {
        Self {
            link,
            dbp: dbp.clone(),
            set,
        }
    }

    fn propagator(&self, coeffs: Option<&CoefficientSet>, xi: f64) -> Result<Backpropagator> {
        let cfg = DbpConfig {
            nl_scale: xi,
            ..self.dbp.clone()
        };
        Backpropagator::new(self.link, &cfg, coeffs, self.set.inputs.len())
    }

    /// MSE for the given coefficients and nonlinear scale.
    pub fn value(&self, coeffs: Option<&CoefficientSet>, xi: f64) -> Result<f64> {
        let out = self.propagator(coeffs, xi)?.run(&self.set.inputs)?;
        Ok(self.set.loss(&out, false).0)
    }

    /// MSE and its gradient with respect to the free parameters of `C_h`.
    pub fn value_and_gradient(&self, coeffs: &CoefficientSet, h: usize, mode: GradientMode) -> Result<(f64, Vec<f64>)> {
        let xi = self.dbp.nl_scale;
        match mode {
            GradientMode::Analytic => {
                let bp = self.propagator(Some(coeffs), xi)?;
                let (out, tape) = bp.run_recorded(&self.set.inputs)?;
                let (j, grads) = self.set.loss(&out, true);
                let tg = bp.coefficient_gradient(&self.set.inputs, &tape, &grads)?;
                Ok((j, coeffs.free_gradient(h, |hh, m| tg.get(hh, m))))
            }
            GradientMode::FiniteDifference => {
                let j = self.value(Some(coeffs), xi)?;
                let eps = 1e-6;
                let grad = (0..coeffs.n_params(h))
                    .map(|i| {
                        let mut p = coeffs.clone();
                        p.params_mut(h)[i] += eps;
                        let mut m = coeffs.clone();
                        m.params_mut(h)[i] -= eps;
                        Ok((self.value(Some(&p), xi)? - self.value(Some(&m), xi)?) / (2.0 * eps))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((j, grad))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(j: f64, initial: f64) -> Result<()> {
    if !j.is_finite() {
        return Err(Error::Numerical("training objective is not finite".into()));
    }
    if j > 10.0 * initial {
        return Err(Error::Numerical(format!(
            "training diverged: MSE {j} exceeds ten times the initial {initial}"
        )));
    }
    Ok(())
}

/// Trains the coefficient set of an ESSFM-type method, one `h` at a time.
///
/// Each `h`-iteration runs gradient descent on the free parameters of `C_h`
/// with Barzilai-Borwein step lengths and Armijo backtracking, so the MSE
/// never increases. `start` warm-starts from an existing set; otherwise
/// `C_0` starts as a unit impulse and the cross filters at zero.
pub fn optimize_coefficients(
    link: &Link,
    set: &TrainingSet,
    cfg: &TrainingConfig,
    dbp: &DbpConfig,
    start: Option<&CoefficientSet>,
) -> Result<ObjectiveReport> {
    cfg.validate()?;
    if !dbp.method.uses_coefficients() {
        return Err(Error::config(format!("{} has no coefficients to train", dbp.method)));
    }
    let n_ch = if dbp.method == Method::CcEssfm { set.inputs.len() } else { 1 };
    let mut coeffs = match start {
        Some(c) => c.clone(),
        None => CoefficientSet::impulse(n_ch, dbp.n_c0, dbp.n_c)?,
    };
    let objective = Objective::new(link, dbp, set);
    let initial = objective.value(Some(&coeffs), dbp.nl_scale)?;
    check_finite(initial, initial)?;
    let mut current = initial;
    let mut trajectories = Vec::new();
    for h in 0..coeffs.n_ch() {
        let mut traj = vec![current];
        let (j0, mut grad) = objective.value_and_gradient(&coeffs, h, cfg.gradient)?;
        current = j0;
        let gnorm = dot(&grad, &grad).sqrt();
        let mut step = if gnorm > 0.0 { cfg.initial_step / gnorm } else { 0.0 };
        for _ in 0..cfg.max_iterations {
            let g2 = dot(&grad, &grad);
            if g2 == 0.0 || step == 0.0 {
                break;
            }
            let base = coeffs.params(h).to_vec();
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = coeffs.clone();
                for (p, (b, g)) in trial.params_mut(h).iter_mut().zip(base.iter().zip(&grad)) {
                    *p = b - step * g;
                }
                let j = objective.value(Some(&trial), dbp.nl_scale)?;
                if j.is_finite() && j <= current - 1e-4 * step * g2 {
                    accepted = Some((trial, j));
                    break;
                }
                step *= 0.5;
            }
            let Some((trial, j)) = accepted else { break };
            check_finite(j, initial)?;
            let (j_new, g_new) = objective.value_and_gradient(&trial, h, cfg.gradient)?;
            let s: Vec<f64> = trial.params(h).iter().zip(&base).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            step = if sy > 0.0 { dot(&s, &s) / sy } else { step * 2.0 };
            let rel = (current - j_new) / current;
            coeffs = trial;
            grad = g_new;
            current = j_new;
            traj.push(current);
            if rel < cfg.tolerance {
                break;
            }
        }
        trajectories.push(traj);
    }
    Ok(ObjectiveReport {
        initial_mse: initial,
        trajectories,
        final_mse: current,
        coefficients: Some(coeffs),
        nl_scale: None,
    })
}

/// Golden-section search of the nonlinear scale on `[0, 1.5]` to a bracket
/// width of 1e-3.
pub fn optimize_nl_scale(link: &Link, set: &TrainingSet, dbp: &DbpConfig) -> Result<ObjectiveReport> {
    let cfg = DbpConfig {
        method: if dbp.method.is_full_field() { Method::FfSsfm } else { Method::Ssfm },
        ..dbp.clone()
    };
    let objective = Objective::new(link, &cfg, set);
    let f = |xi: f64| objective.value(None, xi);
    let initial = f(1.0)?;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.5f64);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut traj = vec![initial];
    while b - a > 1e-3 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
        traj.push(fc.min(fd));
    }
    let (xi, j) = if fc <= fd { (c, fc) } else { (d, fd) };
    // The interval interior may miss a better endpoint value at xi = 1.
    let (xi, j) = if initial < j { (1.0, initial) } else { (xi, j) };
    check_finite(j, initial)?;
    Ok(ObjectiveReport {
        initial_mse: initial,
        trajectories: vec![traj],
        final_mse: j,
        coefficients: None,
        nl_scale: Some(xi),
    })
}

/// Trained equalizer parameters with the metadata stored alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFile {
    pub method: Method,
    pub gamma_eff: f64,
    pub nl_scale: f64,
    /// Absent for methods that only train `nl_scale`.
    pub coefficients: Option<CoefficientSet>,
    /// Free-form `key value` training metadata.
    pub metadata: Vec<(String, String)>,
}

const COEFF_MAGIC: &str = "# wdm-dbp coefficients";
const COEFF_VERSION: u32 = 1;

impl CoefficientFile {
    /// Text form: a header of `key value` lines, then `h m value` rows of
    /// the free parameters. Values use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{COEFF_MAGIC}");
        let _ = writeln!(s, "version {COEFF_VERSION}");
        let _ = writeln!(s, "method {}", self.method);
        if let Some(c) = &self.coefficients {
            let _ = writeln!(s, "n_ch {}", c.n_ch());
            let _ = writeln!(s, "n_c0 {}", c.n_c0());
            let _ = writeln!(s, "n_c {}", c.n_c());
        }
        let _ = writeln!(s, "gamma_eff {}", self.gamma_eff);
        let _ = writeln!(s, "nl_scale {}", self.nl_scale);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "meta {k} {v}");
        }
        let _ = writeln!(s, "h m value");
        if let Some(c) = &self.coefficients {
            for h in 0..c.n_ch() {
                for (j, v) in c.params(h).iter().enumerate() {
                    let _ = writeln!(s, "{h} {} {v}", c.param_tap(h, j));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("coefficient file: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(COEFF_MAGIC) {
            return Err(bad("missing header"));
        }
        let mut method = None;
        let mut dims = [None, None, None];
        let mut gamma_eff = None;
        let mut nl_scale = None;
        let mut version = None;
        let mut rows_started = false;
        let mut metadata = Vec::new();
        for line in lines.by_ref() {
            if line == "h m value" {
                rows_started = true;
                break;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| bad("malformed header line"))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad("bad integer"));
            match key {
                "version" => version = Some(rest.parse::<u32>().map_err(|_| bad("bad version"))?),
                "method" => method = Some(rest.parse::<Method>().map_err(|_| bad("unknown method"))?),
                "n_ch" => dims[0] = Some(num(rest)?),
                "n_c0" => dims[1] = Some(num(rest)?),
                "n_c" => dims[2] = Some(num(rest)?),
                "gamma_eff" => gamma_eff = Some(rest.parse::<f64>().map_err(|_| bad("bad gamma_eff"))?),
                "nl_scale" => nl_scale = Some(rest.parse::<f64>().map_err(|_| bad("bad nl_scale"))?),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    metadata.push((k.to_string(), v.to_string()));
                }
                _ => return Err(bad(&format!("unknown key '{key}'"))),
            }
        }
        if version != Some(COEFF_VERSION) {
            return Err(bad("unsupported version"));
        }
        if !rows_started {
            return Err(bad("missing row header"));
        }
        let mut coefficients = match dims {
            [Some(n_ch), Some(n_c0), Some(n_c)] => Some(CoefficientSet::zeros(n_ch, n_c0, n_c)?),
            [None, None, None] => None,
            _ => return Err(bad("incomplete dimensions")),
        };
        let mut seen: Vec<Vec<bool>> = coefficients
            .as_ref()
            .map_or(Vec::new(), |c| (0..c.n_ch()).map(|h| vec![false; c.n_params(h)]).collect());
        for line in lines {
            let Some(coefficients) = coefficients.as_mut() else {
                return Err(bad("rows without dimensions"));
            };
            let (n_ch, n_c) = (coefficients.n_ch(), coefficients.n_c());
            let mut parts = line.split_whitespace();
            let (Some(h), Some(m), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad("malformed row"));
            };
            let h: usize = h.parse().map_err(|_| bad("bad h"))?;
            let m: i64 = m.parse().map_err(|_| bad("bad m"))?;
            let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
            if h >= n_ch {
                return Err(bad("h out of range"));
            }
            let j = if h == 0 { m } else { m + n_c as i64 };
            if j < 0 || j as usize >= coefficients.n_params(h) {
                return Err(bad("m out of range"));
            }
            coefficients.params_mut(h)[j as usize] = v;
            seen[h][j as usize] = true;
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(bad("missing rows"));
        }
        Ok(Self {
            method: method.ok_or_else(|| bad("missing method"))?,
            gamma_eff: gamma_eff.ok_or_else(|| bad("missing gamma_eff"))?,
            nl_scale: nl_scale.ok_or_else(|| bad("missing nl_scale"))?,
            coefficients,
            metadata,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
