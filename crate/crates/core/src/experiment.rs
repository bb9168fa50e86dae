//! End-to-end experiment pipelines: configuration, seeded simulation of
//! evaluation and training fields, training, evaluation, launch-power
//! sweeps and the on-disk formats (signal files, result tables).
//!
//! Seeding: every random stream is derived from the global `seed`. The
//! evaluation frame and its amplifier noise do not depend on the launch
//! power or the equalizer, so all methods and powers see the same data.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{propagate_link, FiberSpan, Link, StepPlan, MANAKOV_FACTOR};
use crate::dbp::{complexity, run_dbp, CoefficientSet, ComplexityQuery, DbpConfig, Method, Rational};
use crate::error::{Error, Result};
use crate::metrics::{gmi_4d, nmse_pol_db, peak_index, MetricsReport, PowerSweep};
use crate::optimizer::{
    optimize_coefficients, optimize_nl_scale, CoefficientFile, ObjectiveReport, TrainingConfig, TrainingSet,
};
use crate::rng;
use crate::signal::DualPolSignal;
use crate::txrx::{
    demux_channel, extract_band, generate_frame, matched_filter_and_sample, remove_mpr, shape_and_mux,
    ChannelLabels, PolSymbols, SymbolFrame, TxConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub n_spans: usize,
    pub span: FiberSpan,
    pub noise_figure_db: f64,
    /// Disables amplifier noise on every span.
    pub noiseless: bool,
    /// Forward-simulation step plan.
    pub step_plan: StepPlan,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            n_spans: 15,
            span: FiberSpan::default(),
            noise_figure_db: 5.0,
            noiseless: false,
            step_plan: StepPlan::default(),
        }
    }
}

impl LinkConfig {
    pub fn link(&self) -> Result<Link> {
        let nf = (!self.noiseless).then_some(self.noise_figure_db);
        Link::uniform(self.n_spans, self.span.clone(), nf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub powers_dbm: Vec<f64>,
    pub n_steps: Vec<usize>,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            powers_dbm: (-4..=6).map(f64::from).collect(),
            n_steps: vec![1, 3, 5, 15, 30, 60, 150, 600],
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Operating point of the complexity table. Rational fields are written as
/// `"p/q"` or integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexityConfig {
    pub fft_size: i64,
    pub eta: String,
    pub samples_per_symbol: String,
    pub full_field_samples_per_symbol: String,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            fft_size: 4096,
            eta: "4/3".into(),
            samples_per_symbol: "5/4".into(),
            full_field_samples_per_symbol: "8".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub field: String,
    pub train_field: String,
    pub coefficients: String,
    pub results: String,
    pub complexity: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            field: "field.bin".into(),
            train_field: "train_field.bin".into(),
            coefficients: "coefficients.txt".into(),
            results: "results.csv".into(),
            complexity: "complexity.csv".into(),
        }
    }
}

impl OutputConfig {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Everything one experiment needs. `tx.rng_seed` is ignored: frame seeds
/// are derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tx: TxConfig,
    pub link: LinkConfig,
    pub dbp: DbpConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub complexity: ComplexityConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tx: TxConfig::default(),
            link: LinkConfig::default(),
            dbp: DbpConfig::default(),
            training: TrainingConfig::default(),
            sweep: SweepConfig::default(),
            complexity: ComplexityConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.link.span.validate()?;
        self.link.step_plan.step_lengths(&self.link.span)?;
        self.dbp.validate()?;
        self.training.validate()?;
        if self.sweep.powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("sweep powers must be finite"));
        }
        if self.sweep.n_steps.contains(&0) {
            return Err(Error::config("sweep step counts must be at least 1"));
        }
        self.complexity_point()?;
        Ok(())
    }

    /// Launch power of the training field: the configured value, else the
    /// middle of the sweep grid, else the evaluation launch power.
    pub fn train_power_dbm(&self) -> f64 {
        if let Some(p) = self.training.train_power_dbm {
            return p;
        }
        let p = &self.sweep.powers_dbm;
        if p.is_empty() {
            return self.tx.launch_power_dbm;
        }
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }

    fn complexity_point(&self) -> Result<(Rational, Rational, Rational)> {
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<Rational>()
                .map_err(|_| Error::config(format!("complexity.{what} is not a rational number: '{s}'")))
        };
        Ok((
            parse(&self.complexity.eta, "eta")?,
            parse(&self.complexity.samples_per_symbol, "samples_per_symbol")?,
            parse(
                &self.complexity.full_field_samples_per_symbol,
                "full_field_samples_per_symbol",
            )?,
        ))
    }
}

/// Which data set a simulation produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Evaluation,
    Training,
}

/// A simulated received field with the transmitter settings and labels that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFile {
    pub tx: TxConfig,
    pub signals: Vec<DualPolSignal>,
    pub frame: SymbolFrame,
}

const SIGNAL_MAGIC: &[u8; 8] = b"CCDBPSIG";
const SIGNAL_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn fill(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("signal file is truncated".into()),
        _ => Error::Io(e),
    })
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    fill(r, &mut b)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn get_len(r: &mut impl Read, limit: u64) -> Result<usize> {
    let n = get_u64(r)?;
    if n > limit {
        return Err(Error::Format(format!("implausible length {n} in signal file")));
    }
    Ok(n as usize)
}

impl SignalFile {
    /// The aggregate received field.
    pub fn field(&self) -> &DualPolSignal {
        &self.signals[0]
    }

    /// Little-endian layout: magic, version, the transmitter settings as
    /// TOML text, the signals (sample rate, center offset, length, then
    /// `x, y` per sample as `f64` real/imaginary pairs) and the labels.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SIGNAL_MAGIC)?;
        put_u32(w, SIGNAL_VERSION)?;
        let meta = toml::to_string(&self.tx).expect("tx settings serialize");
        put_u64(w, meta.len() as u64)?;
        w.write_all(meta.as_bytes())?;
        put_u32(w, self.signals.len() as u32)?;
        for s in &self.signals {
            put_f64(w, s.sample_rate())?;
            put_f64(w, s.center_offset())?;
            put_u64(w, s.len() as u64)?;
            let mut buf = Vec::with_capacity(s.len() * 32);
            for (x, y) in s.x().iter().zip(s.y()) {
                for v in [x.re, x.im, y.re, y.im] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
        put_u32(w, self.frame.channels.len() as u32)?;
        put_u64(w, self.frame.n_symbols() as u64)?;
        for c in &self.frame.channels {
            w.write_all(&c.x)?;
            w.write_all(&c.y)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &get::<8>(r)? != SIGNAL_MAGIC {
            return Err(Error::Format("not a signal file".into()));
        }
        let version = get_u32(r)?;
        if version != SIGNAL_VERSION {
            return Err(Error::Format(format!("unsupported signal file version {version}")));
        }
        let meta_len = get_len(r, 1 << 20)?;
        let mut meta = vec![0u8; meta_len];
        fill(r, &mut meta)?;
        let meta = String::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let tx: TxConfig = toml::from_str(&meta).map_err(|e| Error::Format(format!("metadata: {e}")))?;
        let n_signals = get_u32(r)? as usize;
        let mut signals = Vec::with_capacity(n_signals);
        for _ in 0..n_signals {
            let fs = get_f64(r)?;
            let offset = get_f64(r)?;
            let n = get_len(r, 1 << 32)?;
            let mut raw = vec![0u8; n * 32];
            fill(r, &mut raw)?;
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for s in raw.chunks_exact(32) {
                let v = |i: usize| f64::from_le_bytes(s[8 * i..8 * i + 8].try_into().unwrap());
                x.push(Complex64::new(v(0), v(1)));
                y.push(Complex64::new(v(2), v(3)));
            }
            signals.push(DualPolSignal::new(x, y, fs, offset)?);
        }
        if signals.is_empty() {
            return Err(Error::Format("signal file holds no signal".into()));
        }
        let n_ch = get_u32(r)? as usize;
        let ns = get_len(r, 1 << 32)?;
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            let mut x = vec![0u8; ns];
            let mut y = vec![0u8; ns];
            fill(r, &mut x)?;
            fill(r, &mut y)?;
            channels.push(ChannelLabels { x, y });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after signal file contents".into()));
        }
        tx.validate().map_err(|e| Error::Format(format!("metadata: {e}")))?;
        let frame = SymbolFrame {
            constellation: tx.constellation(),
            channels,
        };
        if frame.channels.len() < tx.n_channels {
            return Err(Error::Format("signal file lacks labels of some channels".into()));
        }
        Ok(Self { tx, signals, frame })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Transmitter settings of a simulation run.
pub fn tx_for(cfg: &ExperimentConfig, role: Role, power_dbm: f64) -> TxConfig {
    let (n_symbols, seed) = match role {
        Role::Evaluation => (cfg.tx.n_symbols, rng::derive_seed(cfg.seed, "eval-frame", 0)),
        Role::Training => (
            cfg.training.n_train_symbols,
            rng::derive_seed(cfg.seed, "train-frame", cfg.training.rng_seed),
        ),
    };
    TxConfig {
        n_symbols,
        launch_power_dbm: power_dbm,
        rng_seed: seed,
        ..cfg.tx.clone()
    }
}

/// Generates the transmitted field and propagates it over the link.
/// With zero spans the transmitted field itself is returned.
pub fn simulate(cfg: &ExperimentConfig, role: Role, power_dbm: f64) -> Result<SignalFile> {
    let tx = tx_for(cfg, role, power_dbm);
    let frame = generate_frame(&tx)?;
    let mut field = shape_and_mux(&frame, &tx)?;
    if cfg.link.n_spans > 0 {
        let (link, noise) = match role {
            Role::Evaluation => (cfg.link.link()?, rng::stream(cfg.seed, "ase-eval", 0)),
            Role::Training => {
                let link = cfg.link.link()?;
                let link = if cfg.training.noiseless { link.noiseless() } else { link };
                (link, rng::stream(cfg.seed, "ase-train", cfg.training.rng_seed))
            }
        };
        let mut noise = noise;
        field = propagate_link(&field, &link, &cfg.link.step_plan, &mut noise)?;
    }
    Ok(SignalFile {
        tx,
        signals: vec![field],
        frame,
    })
}

/// Receiver front-end ahead of DBP: one demultiplexed field per channel of
/// interest, or the aggregate band of the superchannel for full-field
/// methods.
pub fn dbp_inputs(file: &SignalFile, dbp: &DbpConfig) -> Result<Vec<DualPolSignal>> {
    let tx = &file.tx;
    let field = file.field();
    let rate = dbp.dbp_samples_per_symbol() * tx.symbol_rate;
    if dbp.method.is_full_field() {
        let bandwidth = tx.n_channels as f64 * tx.grid_spacing;
        Ok(vec![extract_band(field, -field.center_offset(), bandwidth, rate)?])
    } else {
        (0..tx.n_channels).map(|i| demux_channel(field, i, tx, rate)).collect()
    }
}

/// Training set for `dbp.method` built from a training field.
pub fn training_set(file: &SignalFile, dbp: &DbpConfig) -> Result<TrainingSet> {
    let inputs = dbp_inputs(file, dbp)?;
    let targets = (0..file.tx.n_channels).map(|i| file.frame.symbols(i)).collect();
    TrainingSet::new(inputs, targets, &file.tx.scoi_offsets(), &file.tx)
}

/// Parameters of a trained (or parameter-free) equalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub nl_scale: f64,
    pub coefficients: Option<CoefficientSet>,
    pub report: Option<ObjectiveReport>,
}

impl TrainedModel {
    /// The untrained equalizer (`nl_scale` from the configuration).
    pub fn untrained(dbp: &DbpConfig) -> Self {
        Self {
            method: dbp.method,
            nl_scale: dbp.nl_scale,
            coefficients: None,
            report: None,
        }
    }

    pub fn to_file(&self, link: &Link) -> CoefficientFile {
        let mut metadata = Vec::new();
        if let Some(r) = &self.report {
            metadata.push(("initial_mse".to_string(), r.initial_mse.to_string()));
            metadata.push(("final_mse".to_string(), r.final_mse.to_string()));
        }
        CoefficientFile {
            method: self.method,
            gamma_eff: MANAKOV_FACTOR * link.spans()[0].0.gamma(),
            nl_scale: self.nl_scale,
            coefficients: self.coefficients.clone(),
            metadata,
        }
    }

    pub fn from_file(file: &CoefficientFile) -> Self {
        Self {
            method: file.method,
            nl_scale: file.nl_scale,
            coefficients: file.coefficients.clone(),
            report: None,
        }
    }
}

/// Whether `method` has anything to train.
pub fn is_trainable(method: Method) -> bool {
    method.uses_coefficients() || method.trains_nl_scale()
}

/// Trains the equalizer of `dbp.method` on a training field. Methods
/// without trainable parameters return `None`.
pub fn train(
    cfg: &ExperimentConfig,
    dbp: &DbpConfig,
    file: &SignalFile,
    start: Option<&TrainedModel>,
) -> Result<Option<TrainedModel>> {
    if !is_trainable(dbp.method) {
        return Ok(None);
    }
    let link = cfg.link.link()?;
    let set = training_set(file, dbp)?;
    let report = if dbp.method.uses_coefficients() {
        let start = match start {
            Some(m) if m.method != dbp.method => {
                return Err(Error::config(format!(
                    "cannot warm-start {} from {} parameters",
                    dbp.method, m.method
                )))
            }
            Some(m) => m.coefficients.as_ref(),
            None => None,
        };
        optimize_coefficients(&link, &set, &cfg.training, dbp, start)?
    } else {
        optimize_nl_scale(&link, &set, dbp)?
    };
    Ok(Some(TrainedModel {
        method: dbp.method,
        nl_scale: report.nl_scale.unwrap_or(dbp.nl_scale),
        coefficients: report.coefficients.clone(),
        report: Some(report),
    }))
}

/// Runs DBP, matched filtering, phase removal and the metrics on one field.
pub fn evaluate(
    cfg: &ExperimentConfig,
    dbp: &DbpConfig,
    file: &SignalFile,
    model: Option<&TrainedModel>,
) -> Result<MetricsReport> {
    let link = cfg.link.link()?;
    let tx = &file.tx;
    if let Some(m) = model {
        if m.method != dbp.method {
            return Err(Error::config(format!(
                "parameters were trained for {} but the equalizer is {}",
                m.method, dbp.method
            )));
        }
    }
    let coeffs = model.and_then(|m| m.coefficients.as_ref());
    if dbp.method.uses_coefficients() && coeffs.is_none() {
        return Err(Error::config(format!("{} needs trained coefficients", dbp.method)));
    }
    if dbp.method.trains_nl_scale() && model.is_none() {
        return Err(Error::config(format!("{} needs a trained nonlinear scale", dbp.method)));
    }
    let run_cfg = DbpConfig {
        nl_scale: model.map_or(dbp.nl_scale, |m| m.nl_scale),
        ..dbp.clone()
    };
    let inputs = dbp_inputs(file, dbp)?;
    let outputs = run_dbp(&inputs, &link, &run_cfg, coeffs)?;
    let rate = dbp.samples_per_symbol * tx.symbol_rate;
    let constellation = tx.constellation();
    let mut channel_gmi = Vec::with_capacity(tx.n_channels);
    let mut channel_nmse_db = Vec::with_capacity(tx.n_channels);
    for i in 0..tx.n_channels {
        let sig = if dbp.method.is_full_field() {
            demux_channel(&outputs[0], i, tx, rate)?
        } else {
            outputs[i].clone()
        };
        let sent = file.frame.symbols(i);
        // Unit-power received symbols, rescaled to the power actually sent
        // in this finite frame.
        let rx = remove_mpr(&matched_filter_and_sample(&sig, tx)?, &sent)?;
        let s = sent.mean_power().sqrt();
        let rx = PolSymbols {
            x: rx.x.iter().map(|v| v * s).collect(),
            y: rx.y.iter().map(|v| v * s).collect(),
        };
        channel_gmi.push(gmi_4d(&rx, &file.frame.channels[i], &constellation)?);
        channel_nmse_db.push(nmse_pol_db(&rx, &sent)?);
    }
    Ok(MetricsReport {
        method: dbp.method,
        n_steps: dbp.n_steps,
        power_dbm: tx.launch_power_dbm,
        seed: cfg.seed,
        channel_gmi,
        channel_nmse_db,
    })
}

/// Power sweep of one `(method, N_s)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub method: Method,
    pub n_steps: usize,
    pub model: TrainedModel,
    pub sweep: PowerSweep,
}

/// Full factorial sweep over methods, step counts and launch powers. All
/// cells share one training field and one evaluation field per power.
pub fn run_sweep(cfg: &ExperimentConfig, log: &(dyn Fn(&str) + Sync)) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let powers = &cfg.sweep.powers_dbm;
    if powers.len() < 3 {
        return Err(Error::config("a power sweep needs at least three grid points"));
    }
    let cells: Vec<(Method, usize)> = cfg
        .sweep
        .methods
        .iter()
        .flat_map(|&m| cfg.sweep.n_steps.iter().map(move |&n| (m, n)))
        .collect();
    let train_field = if cells.iter().any(|(m, _)| is_trainable(*m)) {
        log(&format!("simulating training field at {} dBm", cfg.train_power_dbm()));
        Some(simulate(cfg, Role::Training, cfg.train_power_dbm())?)
    } else {
        None
    };
    log(&format!("simulating {} evaluation fields", powers.len()));
    let fields = powers
        .par_iter()
        .map(|&p| simulate(cfg, Role::Evaluation, p))
        .collect::<Result<Vec<_>>>()?;
    sweep_cells(cfg, &cells, train_field.as_ref(), &fields, log)
}

/// Trains every `(method, N_s)` cell on `train_field` and evaluates it on
/// each of `fields` (one per launch power).
pub fn sweep_cells(
    cfg: &ExperimentConfig,
    cells: &[(Method, usize)],
    train_field: Option<&SignalFile>,
    fields: &[SignalFile],
    log: &(dyn Fn(&str) + Sync),
) -> Result<Vec<SweepCell>> {
    if fields.is_empty() {
        return Err(Error::config("a sweep needs at least one evaluation field"));
    }
    cells
        .par_iter()
        .map(|&(method, n_steps)| {
            let dbp = DbpConfig {
                method,
                n_steps,
                ..cfg.dbp.clone()
            };
            let model = match train_field {
                Some(f) => train(cfg, &dbp, f, None)?,
                None if is_trainable(method) => {
                    return Err(Error::config(format!("{method} needs a training field")))
                }
                None => None,
            }
            .unwrap_or_else(|| TrainedModel::untrained(&dbp));
            let reports = fields
                .par_iter()
                .map(|f| evaluate(cfg, &dbp, f, Some(&model)))
                .collect::<Result<Vec<_>>>()?;
            let peak = peak_index(&reports);
            log(&format!(
                "{method} N_s={n_steps}: peak {:.4} bits/4D at {} dBm",
                reports[peak].avg_gmi(),
                reports[peak].power_dbm
            ));
            Ok(SweepCell {
                method,
                n_steps,
                model,
                sweep: PowerSweep { reports, peak },
            })
        })
        .collect()
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    #[serde(rename = "N_s")]
    pub n_steps: usize,
    #[serde(rename = "power_dBm")]
    pub power_dbm: f64,
    /// Channel index, or `avg`.
    pub channel: String,
    #[serde(rename = "gmi_bits_per_4D")]
    pub gmi_bits_per_4d: f64,
    #[serde(rename = "nmse_dB")]
    pub nmse_db: f64,
    pub seed: u64,
    pub peak_flag: u8,
}

pub const RESULTS_HEADER: &str = "method,N_s,power_dBm,channel,gmi_bits_per_4D,nmse_dB,seed,peak_flag";

/// Per-channel rows of a report followed by its average row.
pub fn report_rows(r: &MetricsReport, peak: bool) -> Vec<ResultRow> {
    let row = |channel: String, gmi, nmse| ResultRow {
        method: r.method.to_string(),
        n_steps: r.n_steps,
        power_dbm: r.power_dbm,
        channel,
        gmi_bits_per_4d: gmi,
        nmse_db: nmse,
        seed: r.seed,
        peak_flag: u8::from(peak),
    };
    let mut rows: Vec<ResultRow> = r
        .channel_gmi
        .iter()
        .zip(&r.channel_nmse_db)
        .enumerate()
        .map(|(i, (&g, &n))| row(i.to_string(), g, n))
        .collect();
    rows.push(row("avg".into(), r.avg_gmi(), r.avg_nmse_db()));
    rows
}

/// Detail rows of every sweep point, then one peak row per cell.
pub fn sweep_rows(cells: &[SweepCell]) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = cells
        .iter()
        .flat_map(|c| c.sweep.reports.iter().flat_map(|r| report_rows(r, false)))
        .collect();
    for c in cells {
        let peak = report_rows(c.sweep.peak_report(), true);
        rows.push(peak.last().expect("average row").clone());
    }
    rows
}

/// Writes rows as CSV. In append mode the header is written only when the
/// file is new or empty.
pub fn write_results(path: &Path, rows: &[ResultRow], append: bool) -> Result<()> {
    let fresh = !append || std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(e.to_string())
    }
}

/// One line of the complexity table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub method: String,
    #[serde(rename = "N_s")]
    pub n_steps: i64,
    #[serde(rename = "N")]
    pub fft_size: i64,
    pub eta: String,
    pub n: String,
    #[serde(rename = "N_c")]
    pub n_c: i64,
    #[serde(rename = "N_ch")]
    pub n_ch: i64,
    /// Exact count as a reduced fraction.
    pub real_mults_exact: String,
    #[serde(rename = "real_mults_per_4D")]
    pub real_mults_per_4d: f64,
}

/// Real multiplications per 4D symbol for every configured method and step
/// count (GVD only once, as it has no steps).
pub fn complexity_table(cfg: &ExperimentConfig) -> Result<Vec<ComplexityRow>> {
    let (eta, n, n_ff) = cfg.complexity_point()?;
    let mut rows = Vec::new();
    for &method in &cfg.sweep.methods {
        let steps: Vec<usize> = if method == Method::GvdOnly {
            vec![1]
        } else {
            cfg.sweep.n_steps.clone()
        };
        for n_steps in steps {
            let q = ComplexityQuery {
                method,
                n_steps: n_steps as i64,
                fft_size: cfg.complexity.fft_size,
                eta,
                samples_per_symbol: if method.is_full_field() { n_ff } else { n },
                n_c: cfg.dbp.n_c0 as i64,
                n_ch: cfg.tx.n_channels as i64,
            };
            let c = complexity(&q)?;
            rows.push(ComplexityRow {
                method: method.to_string(),
                n_steps: q.n_steps,
                fft_size: q.fft_size,
                eta: eta.to_string(),
                n: q.samples_per_symbol.to_string(),
                n_c: q.n_c,
                n_ch: q.n_ch,
                real_mults_exact: c.to_string(),
                real_mults_per_4d: *c.numer() as f64 / *c.denom() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_complexity(path: &Path, rows: &[ComplexityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
