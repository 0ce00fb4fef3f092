//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use cvqkd::constellation::build_ps_qam;
use cvqkd::par::Execution;
use cvqkd::pipeline::{self, LinkConfig, Mode};
use cvqkd::reconciliation::{self, mdr, LdpcCode};
use cvqkd::rng::{stream_rng, Stream};
use cvqkd::security::{self, SecurityParams};
use cvqkd_cli::commands;
use rand::Rng;

const EXEC: Execution = Execution::Parallel;

/// Pinned key rate at the configured operating point, bit/s.
const PINNED_SKR: f64 = 2_625_924.022_755;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn operating_point() -> LinkConfig {
    let mut c = LinkConfig::default();
    c.resolve();
    c
}

fn headline() -> Outcome {
    let t0 = Instant::now();
    let cfg = operating_point();
    let c = cfg.constellation().unwrap();
    let r = security::skr(&cfg.configured_security(), &c).unwrap();
    let in_band = (0.95e6..=3.8e6).contains(&r.skr);
    let pinned = (r.skr / PINNED_SKR - 1.0).abs() < 1e-9;
    let run = pipeline::run_link(EXEC, &cfg).unwrap();
    let est_in_band = (0.95e6..=3.8e6).contains(&run.report.skr);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        in_band && pinned && est_in_band && secs < 60.0,
        format!(
            "SKR {:.6} Mbit/s (pinned {:.6}), from simulated estimates {:.4} Mbit/s (xi_b_hat {:.5}), band [0.95, 3.8], {secs:.1} s",
            r.skr / 1e6,
            PINNED_SKR / 1e6,
            run.report.skr / 1e6,
            run.pooled.xi_b_hat
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for t in [0.01, 0.1, 0.3, 0.7, 1.0] {
        for xi_a in [0.0, 0.01, 0.03, 0.06, 0.1] {
            for va in [0.5, 2.0, 5.3, 10.0, 20.0] {
                let p = SecurityParams { t, xi_a, va, ..Default::default() };
                let g = security::holevo_generic(&p, security::gaussian_z_star(va)).unwrap();
                let c = security::holevo_closed_form(&p).unwrap();
                worst = worst.max((g - c).abs());
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && secs < 10.0,
        format!("max |generic - closed form| = {worst:.2e} bits over 125 points, {secs:.2} s"),
    )
}

fn z_star_limit() -> Outcome {
    let va: f64 = 5.3;
    let n = va / 2.0;
    let bound = 2.0 * (n * (n + 1.0)).sqrt();
    let dense = build_ps_qam(1024, 0.01, va).unwrap();
    let cut = security::default_cutoff(n);
    // Outer points of the dense grid carry far more photons than the mean.
    let z_dense = security::z_star(&dense, 200).unwrap();
    let ps64 = build_ps_qam(64, 0.08, va).unwrap();
    let z64 = security::z_star(&ps64, cut).unwrap();
    let z64_hi = security::z_star(&ps64, cut + 30).unwrap();
    let rel = (z_dense / bound - 1.0).abs();
    let drift = (z64 - z64_hi).abs();
    outcome(
        rel < 0.01 && z64 <= bound && drift < 1e-6,
        format!(
            "dense-1024 Z* {z_dense:.5} vs {bound:.5} ({:.3}%), PS-64 Z* {z64:.5}, cutoff {cut} vs {} differ by {drift:.1e}",
            100.0 * rel,
            cut + 30
        ),
    )
}

fn estimator_config(seed: u64, frames: usize) -> LinkConfig {
    let mut c = operating_point();
    c.seed = seed;
    c.frames = frames;
    c.tx.frame_length = 1 << 20;
    c.calibration.capture_samples = 1 << 20;
    c
}

fn estimator_fidelity() -> Outcome {
    let t0 = Instant::now();
    // 20 frames of 2^20 give just over 10^7 complex estimation symbols.
    let long = pipeline::run_link(EXEC, &estimator_config(1, 20)).unwrap();
    let symbols = long.pooled.n_est / 2;
    let xi = long.pooled.xi_b_hat;
    let single_ok = symbols >= 10_000_000 && (xi - 0.005).abs() <= 0.001;

    let seeds = 100;
    let mean = (0..seeds)
        .map(|s| pipeline::run_link(EXEC, &estimator_config(1000 + s, 2)).unwrap().pooled.xi_b_hat)
        .sum::<f64>()
        / seeds as f64;
    let bias = (mean - 0.005).abs() / 0.005;
    outcome(
        single_ok && bias < 0.05,
        format!(
            "xi_b_hat {xi:.5} from {symbols} symbols; mean over {seeds} seeds {mean:.5} (bias {:.2}%), {:.1} s",
            100.0 * bias,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn dsp_budget() -> Outcome {
    let t0 = Instant::now();
    let mut b2b = operating_point();
    b2b.mode = Mode::Waveform;
    b2b.frames = 2;
    b2b.channel.distance_km = 0.0;
    b2b.channel.xi_b = Some(0.0);
    let excess = pipeline::run_link(EXEC, &b2b).unwrap().dsp_excess.unwrap();

    let mut wave = operating_point();
    wave.mode = Mode::Waveform;
    wave.frames = 4;
    let mut sym = wave.clone();
    sym.mode = Mode::Symbol;
    let w = pipeline::run_link(EXEC, &wave).unwrap();
    let s = pipeline::run_link(EXEC, &sym).unwrap();
    let d_snr = (w.pooled_snr_db - s.pooled_snr_db).abs();
    outcome(
        excess <= 1e-3 && d_snr <= 0.5,
        format!(
            "back-to-back DSP excess {excess:.2e} SNU; SNR waveform {:.3} dB vs symbol {:.3} dB (I_AB {:.4} vs {:.4}), {:.1} s",
            w.pooled_snr_db,
            s.pooled_snr_db,
            w.report.i_ab,
            s.report.i_ab,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn finite_size_ordering() -> Outcome {
    let ctx = cvqkd_cli::Context { config: operating_point(), out_dir: PathBuf::new(), exec: EXEC };
    let rows = commands::sweep_table(&ctx).unwrap();
    let curve = |n: Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| r.n == n).map(|r| (r.distance_km, r.skr_bps)).collect()
    };
    let (a, b, inf) = (curve(Some(2e6)), curve(Some(2e7)), curve(None));
    let ordered = a.iter().zip(&b).zip(&inf).all(|((x, y), z)| x.1 <= y.1 && y.1 <= z.1);
    let nonincreasing = [&a, &b, &inf].iter().all(|c| c.windows(2).all(|w| w[1].1 <= w[0].1));
    let reach = |c: &[(f64, f64)]| c.iter().filter(|p| p.1 > 0.0).map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (ra, rb, rinf) = (reach(&a), reach(&b), reach(&inf));
    let farther = rinf > ra && rinf > rb;
    let consistent = {
        let at = b.iter().find(|p| p.0 == 25.2).unwrap().1;
        let direct =
            security::skr(&ctx.config.configured_security(), &ctx.config.constellation().unwrap()).unwrap().skr;
        (at / direct - 1.0).abs() < 1e-12
    };
    outcome(
        ordered && nonincreasing && farther && consistent,
        format!(
            "{} distances; last positive km: N=2e6 {ra}, N=2e7 {rb}, asymptotic {rinf}; ordered {ordered}, nonincreasing {nonincreasing}",
            a.len()
        ),
    )
}

fn reconciliation_properties() -> Outcome {
    let t0 = Instant::now();
    // Orthogonality of the d = 8 rotations.
    let mut rng = stream_rng(7, Stream::Reconciliation, u64::MAX);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let bits: Vec<u8> = (0..8).map(|_| rng.random_range(0..2)).collect();
        let m = mdr::rotation_matrix(&mdr::md_map(&y, &bits).unwrap());
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..8).map(|k| m[k][i] * m[k][j]).sum();
                worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let ortho = worst < 1e-10;

    let code = commands::load_code(&root().join("codes/ira_n10000_r0.2.alist")).unwrap();
    let clean = reconciliation::simulate_fer(EXEC, &code, f64::INFINITY, 100, 3, 50).unwrap();
    let roundtrip = clean.fer == 0.0;

    let cfg = operating_point();
    let frames = cfg.recon.frames;
    let fers: Vec<f64> = cfg
        .recon
        .snr_db
        .iter()
        .map(|&db| {
            let snr = 10f64.powf(db / 10.0);
            reconciliation::simulate_fer(EXEC, &code, snr, frames, cfg.seed, cfg.recon.max_iter).unwrap().fer
        })
        .collect();
    // A rise counts only when it is significant at 95% for a two-sample test.
    let monotone = fers.windows(2).all(|w| {
        let p = 0.5 * (w[0] + w[1]);
        w[1] - w[0] <= 1.96 * (2.0 * p * (1.0 - p) / frames as f64).sqrt()
    });

    let mother = commands::load_code(&root().join("codes/ira_n100000_r0.2.alist")).unwrap();
    let adapted: LdpcCode = mother.rate_adapt(0.25, 1).unwrap();
    let puncture = mother.k() == 20_000 && adapted.punctured().len() == 20_000 && adapted.effective_rate() == 0.25;

    outcome(
        ortho && roundtrip && monotone && puncture,
        format!(
            "orthogonality err {worst:.1e}; noiseless {}/100 decoded; FER {fers:?} over {:?} dB; punctured {} of n={} k={}, {:.1} s",
            100 - (clean.fer * 100.0).round() as usize,
            cfg.recon.snr_db,
            adapted.punctured().len(),
            mother.n(),
            mother.k(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_cvqkd");
    let runs: [&[&str]; 6] = [
        &["calibrate"],
        &["run", "--set", "frames=3", "--set", "tx.frame_length=32768"],
        &["run", "--set", "mode=waveform", "--set", "frames=1", "--set", "tx.frame_length=32768"],
        &["sweep"],
        &["noise-timeseries", "--frames", "3", "--set", "tx.frame_length=32768"],
        &["recon-fer", "--set", "recon.frames=3", "--set", "recon.snr_db=[-2.5, -1.5]"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for args in runs {
        let mut outputs = Vec::new();
        for d in &dirs {
            let sub = d.path().join(args[0]).join(args.len().to_string());
            let o = Command::new(bin).args(args).arg("--out-dir").arg(&sub).current_dir(root()).output().unwrap();
            if !o.status.success() {
                return outcome(false, format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&sub)
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
                })
                .collect();
            files.sort();
            outputs.push(files);
        }
        compared += outputs[0].len();
        if outputs[0] != outputs[1] {
            mismatched.push(args[0]);
        }
    }
    // Serial and parallel execution give the same link outcome.
    let small = LinkConfig { frames: 3, ..operating_point() };
    let same_exec = pipeline::run_link(Execution::Serial, &small).unwrap()
        == pipeline::run_link(Execution::Parallel, &small).unwrap();
    if !same_exec {
        mismatched.push("serial vs parallel");
    }
    outcome(mismatched.is_empty(), format!("{compared} files compared across reruns; mismatches {mismatched:?}"))
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("headline key rate", headline),
        ("oracle equivalence", oracle_equivalence),
        ("Z* Gaussian limit", z_star_limit),
        ("estimator fidelity", estimator_fidelity),
        ("DSP noise budget", dsp_budget),
        ("finite-size ordering", finite_size_ordering),
        ("reconciliation properties", reconciliation_properties),
        ("determinism", determinism),
    ];
    // Keep a filter argument usable (`cargo test --test acceptance -- 5`).
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = check();
        println!("criterion {id} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
