use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wdm_dbp::channel::{StepPlan, StepSpacing};
use wdm_dbp::dbp::Method;
use wdm_dbp::experiment::{read_results, ExperimentConfig, SignalFile, RESULTS_HEADER};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.tx.n_channels = 2;
    cfg.tx.n_symbols = 512;
    cfg.tx.samples_per_symbol = 4;
    cfg.link.n_spans = 2;
    cfg.link.step_plan = StepPlan {
        steps_per_span: 10,
        spacing: StepSpacing::Logarithmic,
    };
    cfg.training.n_train_symbols = 256;
    cfg.training.max_iterations = 5;
    cfg.dbp.n_steps = 2;
    cfg.dbp.n_c0 = 4;
    cfg.dbp.n_c = 4;
    cfg.sweep.powers_dbm = vec![-2.0, 0.0, 2.0];
    cfg.sweep.n_steps = vec![1, 2];
    cfg.sweep.methods = vec![Method::GvdOnly, Method::Ssfm, Method::Ossfm];
    cfg
}

struct Workspace {
    dir: TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new(cfg: &ExperimentConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("experiment.toml");
        fs::write(&config, cfg.to_toml_string()).unwrap();
        Self { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_wdm-dbp"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_is_deterministic_and_reports_the_frame() {
    let ws = Workspace::new(&small());
    let a = ws.out().join("a.bin");
    let b = ws.out().join("b.bin");
    let stdout = ws.ok(&["simulate", "--output", a.to_str().unwrap()]);
    assert!(stdout.contains("2 channels, 512 symbols each"), "{stdout}");
    ws.ok(&["simulate", "--output", b.to_str().unwrap()]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let f = SignalFile::read(&a).unwrap();
    assert_eq!(f.tx.n_channels, 2);
    assert_eq!(f.frame.n_symbols(), 512);

    ws.ok(&["simulate", "--seed", "99", "--output", b.to_str().unwrap()]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn training_frame_uses_the_training_length() {
    let ws = Workspace::new(&small());
    ws.ok(&["simulate", "--role", "train", "--power", "-1"]);
    let f = SignalFile::read(&ws.out().join("train_field.bin")).unwrap();
    assert_eq!(f.frame.n_symbols(), 256);
    assert_eq!(f.tx.launch_power_dbm, -1.0);
}

#[test]
fn training_a_method_without_parameters_is_a_warning() {
    let ws = Workspace::new(&small());
    let o = ws.run(&["train", "--method", "SSFM"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(!ws.out().join("coefficients.txt").exists());
}

#[test]
fn train_then_evaluate_appends_identical_rows() {
    let ws = Workspace::new(&small());
    ws.ok(&["simulate", "--role", "train"]);
    ws.ok(&["simulate"]);
    let stdout = ws.ok(&["train", "--method", "CC_ESSFM"]);
    assert!(stdout.contains("MSE"), "{stdout}");
    let text = fs::read_to_string(ws.out().join("coefficients.txt")).unwrap();
    assert!(text.contains("method CC_ESSFM"));

    ws.ok(&["evaluate", "--method", "CC_ESSFM"]);
    ws.ok(&["evaluate", "--method", "CC_ESSFM"]);
    let csv = ws.out().join("results.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
    assert_eq!(text.lines().filter(|l| *l == RESULTS_HEADER).count(), 1);
    let rows = read_results(&csv).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[..3], rows[3..]);
    assert_eq!(rows[2].channel, "avg");

    // GVD needs no coefficient file; the wrong method's file is rejected.
    ws.ok(&["evaluate", "--method", "GVD_ONLY"]);
    let o = ws.run(&["evaluate", "--method", "ESSFM"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn warm_start_reproduces_the_trained_mse() {
    let ws = Workspace::new(&small());
    ws.ok(&["simulate", "--role", "train"]);
    ws.ok(&["train", "--method", "ESSFM"]);
    let first = ws.out().join("coefficients.txt");
    let second = ws.out().join("warm.txt");
    ws.ok(&[
        "train",
        "--method",
        "ESSFM",
        "--init",
        first.to_str().unwrap(),
        "--output",
        second.to_str().unwrap(),
    ]);
    let final_mse = |p: &Path| -> f64 {
        let text = fs::read_to_string(p).unwrap();
        let line = text.lines().find(|l| l.starts_with("meta final_mse")).unwrap();
        line.rsplit(' ').next().unwrap().parse().unwrap()
    };
    let (a, b) = (final_mse(&first), final_mse(&second));
    assert!(b <= a + 1e-9, "{a} vs {b}");
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let ws = Workspace::new(&small());
    // Missing input file.
    assert_eq!(code(&ws.run(&["evaluate", "--method", "GVD_ONLY"])), 4);
    // Unknown method name.
    assert_eq!(code(&ws.run(&["evaluate", "--method", "NOPE"])), 2);

    fs::write(&ws.config, "seed = 1\n[tx]\nn_channels = 0\n").unwrap();
    assert_eq!(code(&ws.run(&["complexity"])), 2);
    fs::write(&ws.config, "not toml [").unwrap();
    assert_eq!(code(&ws.run(&["complexity"])), 2);
    fs::remove_file(&ws.config).unwrap();
    assert_eq!(code(&ws.run(&["complexity"])), 4);

    // Corrupted signal file.
    let ws = Workspace::new(&small());
    fs::create_dir_all(ws.out()).unwrap();
    fs::write(ws.out().join("field.bin"), b"garbage").unwrap();
    assert_eq!(code(&ws.run(&["evaluate", "--method", "GVD_ONLY"])), 4);
}

#[test]
fn complexity_table_is_exact() {
    let mut cfg = small();
    cfg.tx.n_channels = 4;
    cfg.dbp.n_c0 = 32;
    cfg.sweep.n_steps = vec![15];
    cfg.sweep.methods = vec![Method::GvdOnly, Method::Ssfm, Method::Essfm, Method::CcEssfm];
    let ws = Workspace::new(&cfg);
    ws.ok(&["complexity"]);
    let text = fs::read_to_string(ws.out().join("complexity.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,N_s,N,eta,n,N_c,N_ch,real_mults_exact,real_mults_per_4D"
    );
    let exact: Vec<&str> = lines.map(|l| l.split(',').nth(7).unwrap()).collect();
    assert_eq!(exact, ["520/3", "2925", "3725", "4500"]);
}

#[test]
fn sweep_is_independent_of_the_thread_count() {
    let ws = Workspace::new(&small());
    let csv = ws.out().join("results.csv");
    let stdout = ws.ok(&["sweep", "--threads", "1"]);
    assert_eq!(stdout.lines().count(), 1 + 6);
    let one = fs::read(&csv).unwrap();
    ws.ok(&["sweep", "--threads", "3"]);
    assert_eq!(one, fs::read(&csv).unwrap());

    // 3 methods x 2 step counts x 3 powers x (2 channels + avg) detail rows,
    // then one peak row per cell.
    let rows = read_results(&csv).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3 * 3 + 6);
    assert_eq!(rows.iter().filter(|r| r.peak_flag == 1).count(), 6);
}
