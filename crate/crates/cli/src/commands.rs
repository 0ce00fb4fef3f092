//! One function per subcommand. Each returns the files it wrote.

use std::path::{Path, PathBuf};

use cvqkd::calibration::NoiseCalibration;
use cvqkd::pipeline::{self, FrameEstimate, LinkConfig, TimeseriesRow};
use cvqkd::reconciliation::{self, construct_ira, LdpcCode, ReconciliationResult};
use cvqkd::security::{self, SkrReport, SweepRow};
use serde::Serialize;

use crate::config::config_hash;
use crate::output::{csv_bytes, num, opt, write_atomic, write_json};
use crate::{CliError, Context};

pub const FRAMES_HEADER: [&str; 11] = [
    "frame",
    "time_s",
    "t_hat",
    "xi_b_hat",
    "t_min",
    "xi_b_max",
    "v_el_hat",
    "n_est",
    "snr_db",
    "sync_metric",
    "dsp_excess",
];
pub const SWEEP_HEADER: [&str; 8] = ["distance_km", "T", "N", "i_ab", "chi_be", "delta", "skr_bps", "z_star"];
pub const TIMESERIES_HEADER: [&str; 6] = ["frame", "time_s", "t_hat", "xi_b_hat", "running_mean", "v_el_hat"];
pub const RECON_HEADER: [&str; 4] = ["snr", "fer", "beta", "frames"];

/// Envelope shared by every command record.
#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    command: &'static str,
    config_hash: String,
    config: &'a LinkConfig,
    /// File names relative to the output directory.
    artifacts: Vec<String>,
    #[serde(flatten)]
    result: T,
}

fn record<T: Serialize>(
    ctx: &Context,
    command: &'static str,
    name: &str,
    artifacts: &[&str],
    result: T,
) -> Result<PathBuf, CliError> {
    let mut files: Vec<String> = artifacts.iter().map(|s| s.to_string()).collect();
    files.push(name.to_string());
    let rec = Record { command, config_hash: config_hash(&ctx.config), config: &ctx.config, artifacts: files, result };
    write_json(&ctx.out_dir, name, &rec)
}

#[derive(Serialize)]
struct CalibrationResult {
    calibration: NoiseCalibration,
}

pub fn calibrate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let calibration = pipeline::calibrate_detector(&ctx.config)?;
    Ok(vec![record(ctx, "calibrate", "calibration.json", &[], CalibrationResult { calibration })?])
}

#[derive(Serialize)]
struct Timestamps {
    /// Simulated link time; wall-clock time would break reproducibility.
    start_s: f64,
    end_s: f64,
}

#[derive(Serialize)]
struct RunResult<'a> {
    timestamps: Timestamps,
    pooled: &'a cvqkd::calibration::EstimatedParams,
    pooled_snr_db: f64,
    dsp_excess: Option<f64>,
    skr: &'a SkrReport,
    frames: &'a [FrameEstimate],
}

pub fn frame_rows(frames: &[FrameEstimate]) -> Vec<Vec<String>> {
    frames
        .iter()
        .map(|f| {
            vec![
                f.frame.to_string(),
                num(f.time_s),
                num(f.t_hat),
                num(f.xi_b_hat),
                num(f.t_min),
                num(f.xi_b_max),
                num(f.v_el_hat),
                f.n_est.to_string(),
                num(f.snr_db),
                opt(f.sync_metric),
                opt(f.dsp_excess),
            ]
        })
        .collect()
}

pub fn run(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let r = pipeline::run_link(ctx.exec, &ctx.config)?;
    let frames_csv = write_atomic(&ctx.out_dir, "run_frames.csv", &csv_bytes(&FRAMES_HEADER, &frame_rows(&r.frames)))?;
    let skr_json = write_json(&ctx.out_dir, "skr.json", &r.report)?;
    let result = RunResult {
        timestamps: Timestamps { start_s: 0.0, end_s: r.frames.last().map_or(0.0, |f| f.time_s) },
        pooled: &r.pooled,
        pooled_snr_db: r.pooled_snr_db,
        dsp_excess: r.dsp_excess,
        skr: &r.report,
        frames: &r.frames,
    };
    let rec = record(ctx, "run", "run.json", &["run_frames.csv", "skr.json"], result)?;
    Ok(vec![frames_csv, skr_json, rec])
}

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                num(r.distance_km),
                num(r.t),
                num(r.n.unwrap_or(f64::INFINITY)),
                num(r.i_ab),
                num(r.chi_be),
                num(r.delta),
                num(r.skr_bps),
                num(r.z_star),
            ]
        })
        .collect()
}

/// Key-rate grid at the configured excess noise `ξ_A`.
pub fn sweep_table(ctx: &Context) -> Result<Vec<SweepRow>, CliError> {
    let cfg = &ctx.config;
    let c = cfg.constellation()?;
    let s = &cfg.sweep;
    Ok(security::sweep_distance(
        ctx.exec,
        &cfg.configured_security(),
        &c,
        cfg.channel.atten_db_per_km,
        &s.distances_km,
        &s.blocks(),
    )?)
}

#[derive(Serialize)]
struct Empty {}

pub fn sweep(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let rows = sweep_table(ctx)?;
    let csv = write_atomic(&ctx.out_dir, "sweep.csv", &csv_bytes(&SWEEP_HEADER, &sweep_rows(&rows)))?;
    Ok(vec![csv, record(ctx, "sweep", "sweep.json", &["sweep.csv"], Empty {})?])
}

#[derive(Serialize)]
struct TimeseriesResult {
    frames: usize,
    mean_xi_b: f64,
    std_xi_b: f64,
}

pub fn noise_timeseries(ctx: &Context, frames: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let n = frames.unwrap_or(ctx.config.frames);
    if n == 0 {
        return Err(CliError::Config("noise-timeseries needs at least one frame".into()));
    }
    let rows: Vec<TimeseriesRow> = pipeline::noise_timeseries(ctx.exec, &ctx.config, n)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.frame.to_string(),
                num(r.time_s),
                num(r.t_hat),
                num(r.xi_b_hat),
                num(r.running_mean),
                num(r.v_el_hat),
            ]
        })
        .collect();
    let csv = write_atomic(&ctx.out_dir, "noise_timeseries.csv", &csv_bytes(&TIMESERIES_HEADER, &table))?;
    let mean = rows.iter().map(|r| r.xi_b_hat).sum::<f64>() / n as f64;
    let var = rows.iter().map(|r| (r.xi_b_hat - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let result = TimeseriesResult { frames: n, mean_xi_b: mean, std_xi_b: var.sqrt() };
    Ok(vec![csv, record(ctx, "noise-timeseries", "noise_timeseries.json", &["noise_timeseries.csv"], result)?])
}

pub fn load_code(path: &Path) -> Result<LdpcCode, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CliError::CodeFile { path: path.to_path_buf(), source })?;
    Ok(LdpcCode::from_alist(&text)?)
}

/// Frame-error sweep of the configured code over `recon.snr_db`.
pub fn recon_table(ctx: &Context) -> Result<Vec<ReconciliationResult>, CliError> {
    let r = &ctx.config.recon;
    let mut code = load_code(Path::new(&r.code))?;
    if let Some(rate) = r.target_rate {
        code = code.rate_adapt(rate, r.puncture_seed)?;
    }
    r.snr_db
        .iter()
        .map(|&db| {
            let snr = 10f64.powf(db / 10.0);
            Ok(reconciliation::simulate_fer(ctx.exec, &code, snr, r.frames, ctx.config.seed, r.max_iter)?)
        })
        .collect()
}

#[derive(Serialize)]
struct ReconResult {
    code: String,
    rate: f64,
    effective_rate: f64,
    points: Vec<ReconciliationResult>,
}

pub fn recon_fer(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let points = recon_table(ctx)?;
    let rows: Vec<Vec<String>> =
        points.iter().map(|p| vec![num(p.snr), num(p.fer), num(p.beta), p.frames.to_string()]).collect();
    let csv = write_atomic(&ctx.out_dir, "recon_fer.csv", &csv_bytes(&RECON_HEADER, &rows))?;
    let code = load_code(Path::new(&ctx.config.recon.code))?;
    let effective_rate = points.first().map_or(code.rate(), |p| p.effective_rate);
    let result = ReconResult { code: ctx.config.recon.code.clone(), rate: code.rate(), effective_rate, points };
    Ok(vec![csv, record(ctx, "recon-fer", "recon_fer.json", &["recon_fer.csv"], result)?])
}

/// Write a fresh staircase IRA code in alist format.
pub fn gen_code(n: usize, rate: f64, info_degree: usize, seed: u64, out: &Path) -> Result<PathBuf, CliError> {
    let code = construct_ira(n, rate, info_degree, seed)?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = out
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Config(format!("bad output path {}", out.display())))?;
    write_atomic(dir, name, code.to_alist().as_bytes())
}
