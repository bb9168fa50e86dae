use super::*;
use crate::channel::StepSpacing;
use crate::signal::DualPolSignal;

fn small(n_spans: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.tx.n_channels = 2;
    cfg.tx.n_symbols = 512;
    cfg.tx.samples_per_symbol = 4;
    cfg.link.n_spans = n_spans;
    cfg.link.step_plan = StepPlan {
        steps_per_span: 10,
        spacing: StepSpacing::Logarithmic,
    };
    cfg.training.n_train_symbols = 256;
    cfg.training.max_iterations = 5;
    cfg.dbp.n_steps = n_spans.max(1);
    cfg.dbp.n_c0 = 4;
    cfg.dbp.n_c = 4;
    cfg.sweep.powers_dbm = vec![-2.0, 0.0, 2.0];
    cfg.sweep.n_steps = vec![1, 2];
    cfg.sweep.methods = vec![Method::GvdOnly, Method::Ssfm];
    cfg
}

fn bytes(f: &SignalFile) -> Vec<u8> {
    let mut b = Vec::new();
    f.write_to(&mut b).unwrap();
    b
}

#[test]
fn defaults_carry_the_reference_setup() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.tx.n_channels, 4);
    assert_eq!(cfg.tx.n_symbols, 65536);
    assert_eq!(cfg.training.n_train_symbols, 1024);
    assert_eq!(cfg.link.n_spans, 15);
    assert_eq!(cfg.link.noise_figure_db, 5.0);
    assert_eq!(cfg.dbp.n_steps, 15);
    assert_eq!((cfg.dbp.n_c0, cfg.dbp.n_c), (32, 128));
    assert_eq!(cfg.train_power_dbm(), 1.0);
}

#[test]
fn config_toml_round_trip_and_errors() {
    let cfg = small(2);
    let text = cfg.to_toml_string();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    let partial = "seed = 9\n[tx]\nn_channels = 3\n[dbp]\nmethod = \"ESSFM\"\n";
    let p = ExperimentConfig::from_toml_str(partial).unwrap();
    assert_eq!((p.seed, p.tx.n_channels, p.dbp.method), (9, 3, Method::Essfm));
    assert_eq!(p.tx.symbol_rate, 41.67e9);
    for bad in [
        "bogus = 1",
        "[tx]\nrolloff = 2.0",
        "[dbp]\nmethod = \"NOPE\"",
        "[complexity]\neta = \"four thirds\"",
        "[sweep]\nn_steps = [0]",
    ] {
        assert!(
            matches!(ExperimentConfig::from_toml_str(bad), Err(Error::Config(_))),
            "{bad}"
        );
    }
}

#[test]
fn signal_file_round_trip_is_bit_exact() {
    let cfg = small(1);
    let f = simulate(&cfg, Role::Evaluation, 1.0).unwrap();
    let b = bytes(&f);
    let back = SignalFile::read_from(&mut b.as_slice()).unwrap();
    assert_eq!(back, f);
    assert_eq!(bytes(&back), b);
    assert_eq!(&b[..8], b"CCDBPSIG");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.bin");
    f.write(&p).unwrap();
    assert_eq!(SignalFile::read(&p).unwrap(), f);

    assert!(matches!(SignalFile::read_from(&mut &b[..b.len() - 3]), Err(Error::Format(_))));
    let mut bad = b.clone();
    bad[0] = b'X';
    assert!(matches!(SignalFile::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
    let mut long = b.clone();
    long.push(0);
    assert!(matches!(SignalFile::read_from(&mut long.as_slice()), Err(Error::Format(_))));
    assert!(matches!(SignalFile::read(&dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn simulation_is_seeded_and_paired() {
    let cfg = small(1);
    let a = simulate(&cfg, Role::Evaluation, 0.0).unwrap();
    let b = simulate(&cfg, Role::Evaluation, 0.0).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    // Same labels at every power; different ones for training.
    let c = simulate(&cfg, Role::Evaluation, 3.0).unwrap();
    assert_eq!(a.frame, c.frame);
    let t = simulate(&cfg, Role::Training, 0.0).unwrap();
    assert_eq!(t.frame.n_symbols(), 256);
    assert_ne!(t.frame.channels[0].x[..256], a.frame.channels[0].x[..256]);
    let other = simulate(&ExperimentConfig { seed: 2, ..cfg.clone() }, Role::Evaluation, 0.0).unwrap();
    assert_ne!(other.frame, a.frame);
}

#[test]
fn zero_spans_returns_the_transmitted_field() {
    let cfg = small(0);
    let f = simulate(&cfg, Role::Evaluation, 2.0).unwrap();
    let tx = tx_for(&cfg, Role::Evaluation, 2.0);
    let want = shape_and_mux(&generate_frame(&tx).unwrap(), &tx).unwrap();
    assert_eq!(f.field(), &want);
    assert_eq!(f.frame.channels.len(), 2);
    assert_eq!(f.frame.n_symbols(), 512);
}

#[test]
fn noiseless_linear_link_is_fully_equalized() {
    let mut cfg = small(2);
    cfg.link.noiseless = true;
    cfg.link.span.gamma_per_w_km = 0.0;
    let f = simulate(&cfg, Role::Evaluation, 0.0).unwrap();
    for method in [Method::GvdOnly, Method::FfSsfm, Method::Ssfm] {
        let dbp = DbpConfig {
            method,
            ..cfg.dbp.clone()
        };
        let r = evaluate(&cfg, &dbp, &f, None).unwrap();
        assert_eq!(r.channel_gmi.len(), 2);
        for (g, n) in r.channel_gmi.iter().zip(&r.channel_nmse_db) {
            assert!((g - 12.0).abs() < 1e-3, "{method}: {g}");
            assert!(*n < -140.0, "{method}: {n}");
        }
    }
}

#[test]
fn evaluation_is_deterministic_and_checks_models() {
    let cfg = small(1);
    let f = simulate(&cfg, Role::Evaluation, 4.0).unwrap();
    let dbp = DbpConfig {
        method: Method::Ssfm,
        ..cfg.dbp.clone()
    };
    let a = evaluate(&cfg, &dbp, &f, None).unwrap();
    assert_eq!(a, evaluate(&cfg, &dbp, &f, None).unwrap());
    assert!(a.channel_gmi.iter().all(|g| (0.0..=12.0).contains(g)));

    let essfm = DbpConfig {
        method: Method::Essfm,
        ..cfg.dbp.clone()
    };
    assert!(matches!(evaluate(&cfg, &essfm, &f, None), Err(Error::Config(_))));
    let wrong = TrainedModel::untrained(&dbp);
    assert!(matches!(evaluate(&cfg, &essfm, &f, Some(&wrong)), Err(Error::Config(_))));
    let ossfm = DbpConfig {
        method: Method::Ossfm,
        ..cfg.dbp.clone()
    };
    assert!(evaluate(&cfg, &ossfm, &f, None).is_err());
}

#[test]
fn training_round_trips_through_the_coefficient_file() {
    let cfg = small(1);
    let t = simulate(&cfg, Role::Training, 4.0).unwrap();
    let ssfm = DbpConfig {
        method: Method::Ssfm,
        ..cfg.dbp.clone()
    };
    assert!(train(&cfg, &ssfm, &t, None).unwrap().is_none());

    let dbp = DbpConfig {
        method: Method::CcEssfm,
        ..cfg.dbp.clone()
    };
    let m = train(&cfg, &dbp, &t, None).unwrap().unwrap();
    let c = m.coefficients.as_ref().unwrap();
    assert_eq!((c.n_ch(), c.n_params(0), c.n_params(1)), (2, 5, 9));
    let link = cfg.link.link().unwrap();
    let file = CoefficientFile::from_text(&m.to_file(&link).to_text()).unwrap();
    let loaded = TrainedModel::from_file(&file);
    assert_eq!(loaded.coefficients, m.coefficients);

    // Warm start from the file reproduces the final MSE.
    let again = train(&cfg, &dbp, &t, Some(&loaded)).unwrap().unwrap();
    let (r0, r1) = (m.report.clone().unwrap(), again.report.clone().unwrap());
    assert!((r1.initial_mse - r0.final_mse).abs() < 1e-9);

    let f = simulate(&cfg, Role::Evaluation, 4.0).unwrap();
    let from_file = evaluate(&cfg, &dbp, &f, Some(&loaded)).unwrap();
    let direct = evaluate(&cfg, &dbp, &f, Some(&TrainedModel { report: None, ..again.clone() }));
    assert!(direct.is_ok());
    assert!(from_file.avg_gmi() > 0.0);

    let ossfm = DbpConfig {
        method: Method::Ossfm,
        ..cfg.dbp.clone()
    };
    let o = train(&cfg, &ossfm, &t, None).unwrap().unwrap();
    assert!(o.coefficients.is_none());
    assert!((0.0..=1.5).contains(&o.nl_scale));
    let back = TrainedModel::from_file(&CoefficientFile::from_text(&o.to_file(&link).to_text()).unwrap());
    assert_eq!(back.nl_scale.to_bits(), o.nl_scale.to_bits());
}

#[test]
fn full_field_inputs_cover_the_superchannel() {
    let mut cfg = small(1);
    cfg.link.noiseless = true;
    cfg.link.span.gamma_per_w_km = 0.0;
    let f = simulate(&cfg, Role::Evaluation, 0.0).unwrap();
    let dbp = DbpConfig {
        method: Method::FfSsfm,
        full_field_samples_per_symbol: 4.0,
        ..cfg.dbp.clone()
    };
    let inputs = dbp_inputs(&f, &dbp).unwrap();
    assert_eq!(inputs.len(), 1);
    assert_eq!(inputs[0].len(), 512 * 4);
    assert!((inputs[0].power() / f.field().power() - 1.0).abs() < 1e-12);
    let per = dbp_inputs(&f, &cfg.dbp).unwrap();
    assert_eq!(per.len(), 2);
    assert_eq!(per[0].len(), 640);
    let _: &DualPolSignal = &per[1];
}

#[test]
fn sweep_table_shape() {
    let cfg = small(1);
    let cells = run_sweep(&cfg, &|_| {}).unwrap();
    assert_eq!(cells.len(), 4);
    let rows = sweep_rows(&cells);
    let detail = 4 * 3 * (2 + 1);
    assert_eq!(rows.len(), detail + 4);
    let peaks: Vec<&ResultRow> = rows.iter().filter(|r| r.peak_flag == 1).collect();
    assert_eq!(peaks.len(), 4);
    for (c, p) in cells.iter().zip(&peaks) {
        assert_eq!(p.channel, "avg");
        assert_eq!(p.gmi_bits_per_4d, c.sweep.peak_report().avg_gmi());
        assert!(c.sweep.reports.iter().all(|r| r.avg_gmi() <= p.gmi_bits_per_4d));
    }
    // Paired data: GVD does not depend on the step count.
    assert_eq!(cells[0].sweep.reports, {
        let mut r = cells[1].sweep.reports.clone();
        r.iter_mut().for_each(|x| x.n_steps = 1);
        r
    });

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    write_results(&p, &rows, false).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
    assert_eq!(read_results(&p).unwrap(), rows);
    write_results(&p, &rows[..3], true).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().filter(|l| *l == RESULTS_HEADER).count(), 1);
    assert_eq!(text.lines().count(), 1 + rows.len() + 3);
}

#[test]
fn complexity_table_reproduces_worked_values() {
    let mut cfg = ExperimentConfig::default();
    cfg.sweep.n_steps = vec![15];
    let rows = complexity_table(&cfg).unwrap();
    let get = |m: &str| rows.iter().find(|r| r.method == m).unwrap();
    assert_eq!(get("SSFM").real_mults_exact, "2925");
    assert_eq!(get("ESSFM").real_mults_exact, "3725");
    assert_eq!(get("CC_ESSFM").real_mults_exact, "4500");
    assert_eq!(get("GVD_ONLY").real_mults_exact, "520/3");
    assert_eq!(get("GVD_ONLY").n_steps, 1);
    assert_eq!(rows.len(), 8);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    write_complexity(&p, &rows).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("method,N_s,N,eta,n,N_c,N_ch,real_mults_exact,real_mults_per_4D\n"));
}
