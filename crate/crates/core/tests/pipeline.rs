//! End-to-end behaviour of the transmitter, channel, equalizers and metrics
//! on small links.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use wdm_dbp::channel::{propagate_link, FiberSpan, Link, StepPlan, StepSpacing};
use wdm_dbp::dbp::{run_dbp, DbpConfig, Method};
use wdm_dbp::experiment::{evaluate, simulate, ExperimentConfig, Role, TrainedModel};
use wdm_dbp::metrics::{gmi_4d, peak_index};
use wdm_dbp::rng;
use wdm_dbp::signal::DualPolSignal;
use wdm_dbp::txrx::{
    generate_frame, matched_filter_and_sample, remove_mpr, shape_and_mux, PolSymbols, TxConfig,
};

fn single_channel(n_symbols: usize, power_dbm: f64) -> TxConfig {
    TxConfig {
        n_channels: 1,
        n_symbols,
        samples_per_symbol: 4,
        launch_power_dbm: power_dbm,
        ..TxConfig::default()
    }
}

/// Forward propagation at `k` logarithmic steps per span followed by
/// full-field SSFM backpropagation with `k` uniform steps per span;
/// relative error of the recovered field.
fn round_trip_error(link: &Link, tx: &DualPolSignal, k: usize) -> f64 {
    let plan = StepPlan {
        steps_per_span: k,
        spacing: StepSpacing::Logarithmic,
    };
    let rx = propagate_link(tx, link, &plan, &mut rng::stream(0, "unused", 0)).unwrap();
    let cfg = DbpConfig {
        method: Method::FfSsfm,
        n_steps: k * link.n_spans(),
        ..DbpConfig::default()
    };
    let out = run_dbp(&[rx], link, &cfg, None).unwrap();
    out[0].relative_error(tx)
}

#[test]
fn round_trip_converges_with_step_count() {
    let cfg = single_channel(512, 8.0);
    let tx = shape_and_mux(&generate_frame(&cfg).unwrap(), &cfg).unwrap();
    let link = Link::uniform(3, FiberSpan::default(), None).unwrap();
    let errs: Vec<f64> = [25, 50, 100, 200, 400].iter().map(|&k| round_trip_error(&link, &tx, k)).collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    assert!(20.0 * errs[4].log10() < -30.0, "{errs:?}");
}

#[test]
fn uniform_forward_steps_are_inverted_exactly_by_matching_dbp() {
    let cfg = single_channel(256, 8.0);
    let tx = shape_and_mux(&generate_frame(&cfg).unwrap(), &cfg).unwrap();
    let link = Link::uniform(2, FiberSpan::default(), None).unwrap();
    let plan = StepPlan {
        steps_per_span: 7,
        spacing: StepSpacing::Uniform,
    };
    let rx = propagate_link(&tx, &link, &plan, &mut rng::stream(0, "unused", 0)).unwrap();
    let cfg = DbpConfig {
        method: Method::FfSsfm,
        n_steps: 14,
        ..DbpConfig::default()
    };
    let out = run_dbp(&[rx.clone()], &link, &cfg, None).unwrap();
    assert!(out[0].relative_error(&tx) < 1e-10);
    assert!(rx.relative_error(&tx) > 0.1);
}

#[test]
fn matched_filter_preserves_line_snr() {
    let cfg = single_channel(16384, 0.0);
    let frame = generate_frame(&cfg).unwrap();
    let mut field = shape_and_mux(&frame, &cfg).unwrap();
    let p_sig = field.power();
    // Noise at 20 dB SNR within the symbol-rate bandwidth: per-sample
    // variance scales with the oversampling.
    let snr = 100.0;
    let var = p_sig / snr * cfg.samples_per_symbol as f64;
    let s = (var / 4.0).sqrt();
    let mut r = rng::stream(3, "awgn", 0);
    let (x, y) = field.pols_mut();
    for v in x.iter_mut().chain(y.iter_mut()) {
        let (a, b): (f64, f64) = (r.sample(StandardNormal), r.sample(StandardNormal));
        *v += Complex64::new(a * s, b * s);
    }
    let sent = frame.symbols(0);
    let rx = remove_mpr(&matched_filter_and_sample(&field, &cfg).unwrap(), &sent).unwrap();
    // Project out the gain so that only additive noise counts.
    let c: Complex64 = rx.iter().zip(sent.iter()).map(|(a, b)| a * b.conj()).sum::<Complex64>()
        / sent.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let noise: f64 = rx.iter().zip(sent.iter()).map(|(a, b)| (a - b * c).norm_sqr()).sum();
    let sig: f64 = sent.iter().map(|b| (b * c).norm_sqr()).sum();
    let snr_db = 10.0 * (sig / noise).log10();
    assert!((snr_db - 20.0).abs() < 0.2, "{snr_db}");
}

#[test]
fn back_to_back_gmi_is_six_bits_per_polarization() {
    let cfg = TxConfig {
        n_channels: 3,
        n_symbols: 2048,
        samples_per_symbol: 8,
        ..TxConfig::default()
    };
    let frame = generate_frame(&cfg).unwrap();
    let field = shape_and_mux(&frame, &cfg).unwrap();
    for i in 0..3 {
        let ch = wdm_dbp::txrx::demux_channel(&field, i, &cfg, 1.25 * cfg.symbol_rate).unwrap();
        let rx = matched_filter_and_sample(&ch, &cfg).unwrap();
        let sent = frame.symbols(i);
        let s = sent.mean_power().sqrt();
        let rx = PolSymbols {
            x: rx.x.iter().map(|v| v * s).collect(),
            y: rx.y.iter().map(|v| v * s).collect(),
        };
        let g = gmi_4d(&rx, &frame.channels[i], &frame.constellation).unwrap();
        assert!((g - 12.0).abs() < 1e-3, "{g}");
    }
}

fn reduced(methods_n_steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.tx.n_channels = 2;
    cfg.tx.n_symbols = 1024;
    cfg.tx.samples_per_symbol = 8;
    cfg.link.step_plan.steps_per_span = 20;
    cfg.training.n_train_symbols = 512;
    cfg.training.max_iterations = 15;
    cfg.dbp.n_steps = methods_n_steps;
    cfg.dbp.n_c0 = 8;
    cfg.dbp.n_c = 16;
    cfg
}

#[test]
fn gvd_only_gmi_is_unimodal_in_power() {
    let cfg = reduced(15);
    let dbp = DbpConfig {
        method: Method::GvdOnly,
        ..cfg.dbp.clone()
    };
    let powers: Vec<f64> = (-4..=6).map(f64::from).collect();
    let reports: Vec<_> = powers
        .iter()
        .map(|&p| evaluate(&cfg, &dbp, &simulate(&cfg, Role::Evaluation, p).unwrap(), None).unwrap())
        .collect();
    let g: Vec<f64> = reports.iter().map(|r| r.avg_gmi()).collect();
    let peak = peak_index(&reports);
    assert!(peak > 0 && peak < g.len() - 1, "{g:?}");
    for i in 1..=peak {
        assert!(g[i] >= g[i - 1] - 0.02, "{g:?}");
    }
    for i in peak + 1..g.len() {
        assert!(g[i] <= g[i - 1] + 0.02, "{g:?}");
    }
}

#[test]
fn methods_agree_in_the_linear_regime() {
    let cfg = reduced(15);
    let train = simulate(&cfg, Role::Training, -10.0).unwrap();
    let eval = simulate(&cfg, Role::Evaluation, -10.0).unwrap();
    let mut gmis = Vec::new();
    for method in [Method::GvdOnly, Method::Ssfm, Method::Ossfm, Method::Essfm, Method::CcEssfm, Method::FfSsfm] {
        let dbp = DbpConfig {
            method,
            ..cfg.dbp.clone()
        };
        let model = wdm_dbp::experiment::train(&cfg, &dbp, &train, None)
            .unwrap()
            .unwrap_or_else(|| TrainedModel::untrained(&dbp));
        gmis.push(evaluate(&cfg, &dbp, &eval, Some(&model)).unwrap().avg_gmi());
    }
    let lo = gmis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = gmis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.05, "{gmis:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mpr_removal_ignores_a_global_phase(phase in -3.1f64..3.1, seed in 0u64..1000) {
        let mut r = rng::stream(seed, "prop", 0);
        let mut draw = |n: usize| -> Vec<Complex64> {
            (0..n).map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
        };
        let tx = PolSymbols { x: draw(64), y: draw(64) };
        let noise = PolSymbols { x: draw(64), y: draw(64) };
        let rx = PolSymbols {
            x: tx.x.iter().zip(&noise.x).map(|(a, b)| a + b * 0.1).collect(),
            y: tx.y.iter().zip(&noise.y).map(|(a, b)| a + b * 0.1).collect(),
        };
        let a = remove_mpr(&rx, &tx).unwrap();
        let b = remove_mpr(&rx.rotated(phase), &tx).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).norm() < 1e-12);
        }
        let twice = remove_mpr(&a, &tx).unwrap();
        for (u, v) in a.iter().zip(twice.iter()) {
            prop_assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_link_dbp_is_all_pass(seed in 0u64..1000, n_spans in 1usize..4) {
        let cfg = TxConfig { rng_seed: seed, ..single_channel(128, 0.0) };
        let tx = shape_and_mux(&generate_frame(&cfg).unwrap(), &cfg).unwrap();
        let span = FiberSpan { gamma_per_w_km: 0.0, ..FiberSpan::default() };
        let link = Link::uniform(n_spans, span, None).unwrap();
        let dbp = DbpConfig { method: Method::FfSsfm, n_steps: 2 * n_spans, ..DbpConfig::default() };
        let out = run_dbp(&[tx.clone()], &link, &dbp, None).unwrap();
        prop_assert!((out[0].energy() / tx.energy() - 1.0).abs() < 1e-12);
    }
}
