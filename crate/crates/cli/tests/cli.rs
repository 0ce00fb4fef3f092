use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cvqkd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvqkd"))
        .args(args)
        .env("CVQKD_OUT_DIR", out)
        .current_dir(repo_root())
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = cvqkd(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const SMALL: [&str; 4] = ["--set", "frames=3", "--set", "tx.frame_length=32768"];

#[test]
fn calibrate_recovers_electronic_noise() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["calibrate"]);
    let v = json(d.path().join("calibration.json"));
    let v_el = v["calibration"]["v_el_hat"].as_f64().unwrap();
    assert!((v_el - 0.34).abs() < 0.01, "{v_el}");
    assert_eq!(v["command"], "calibrate");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);

    let z = tempfile::tempdir().unwrap();
    ok(z.path(), &["calibrate", "--set", "detector.v_el=0"]);
    let v_el = json(z.path().join("calibration.json"))["calibration"]["v_el_hat"].as_f64().unwrap();
    assert!(v_el.abs() < 0.01, "{v_el}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &[&["run"][..], &SMALL].concat());
        ok(d, &["calibrate"]);
    }
    // Serial execution and a rerun from the embedded config agree too.
    let c = tempfile::tempdir().unwrap();
    let rec = a.path().join("run.json");
    ok(c.path(), &["run", "--serial", "--config", rec.to_str().unwrap()]);
    for f in ["run.json", "run_frames.csv", "skr.json", "calibration.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    for f in ["run.json", "run_frames.csv", "skr.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(c.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn run_record_is_complete() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &[&["run"][..], &SMALL].concat());
    let v = json(d.path().join("run.json"));
    assert_eq!(v["frames"].as_array().unwrap().len(), 3);
    assert_eq!(v["config"]["frames"], 3);
    assert_eq!(v["artifacts"], serde_json::json!(["run_frames.csv", "skr.json", "run.json"]));
    assert!(v["timestamps"]["end_s"].as_f64().unwrap() > 0.0);
    let skr = json(d.path().join("skr.json"));
    assert!(skr["skr"].as_f64().unwrap() > 0.0);
    // The key-rate report is one flat record.
    assert!(skr.as_object().unwrap().values().all(|x| !x.is_object() && !x.is_array()));
    let csv = std::fs::read_to_string(d.path().join("run_frames.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("frame,time_s,t_hat,xi_b_hat,t_min,xi_b_max,"));
}

#[test]
fn noiseless_short_link_beats_the_default() {
    let base = tempfile::tempdir().unwrap();
    let best = tempfile::tempdir().unwrap();
    ok(base.path(), &[&["run"][..], &SMALL].concat());
    let clean = ["--set", "channel.distance_km=0", "--set", "channel.xi_b=0", "--set", "channel.phase_drift_std=0"];
    ok(best.path(), &[&["run"][..], &SMALL, &clean].concat());
    let rate = |d: &Path| json(d.join("skr.json"))["skr"].as_f64().unwrap();
    let xi = json(best.path().join("run.json"))["pooled"]["xi_b_hat"].as_f64().unwrap();
    assert!(xi.abs() < 0.01, "{xi}");
    assert!(rate(best.path()) > 5.0 * rate(base.path()));
}

#[test]
fn sweep_csv_schema() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["sweep"]);
    let text = std::fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "distance_km,T,N,i_ab,chi_be,delta,skr_bps,z_star");
    assert_eq!(lines.count(), 62 * 3);
    assert!(text.contains("\n25.2,") && text.contains(",inf,"));
}

#[test]
fn noise_timeseries_frames_flag() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["noise-timeseries", "--frames", "2", "--set", "tx.frame_length=32768"]);
    let text = std::fs::read_to_string(d.path().join("noise_timeseries.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "frame,time_s,t_hat,xi_b_hat,running_mean,v_el_hat");
    assert_eq!(text.lines().count(), 3);
    assert_eq!(json(d.path().join("noise_timeseries.json"))["frames"], 2);
}

#[test]
fn recon_fer_csv() {
    let d = tempfile::tempdir().unwrap();
    ok(
        d.path(),
        &["recon-fer", "--set", "recon.frames=2", "--set", "recon.snr_db=[-1.0, 0.0]", "--set", "recon.max_iter=50"],
    );
    let text = std::fs::read_to_string(d.path().join("recon_fer.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "snr,fer,beta,frames");
    assert_eq!(rows.len(), 3);
    let fields: Vec<&str> = rows[2].split(',').collect();
    assert_eq!((fields[0], fields[1], fields[3]), ("1", "0", "2"));
}

#[test]
fn gen_code_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.alist");
    ok(d.path(), &["gen-code", "--n", "500", "--out", p.to_str().unwrap()]);
    let code = cvqkd_cli::commands::load_code(&p).unwrap();
    assert_eq!((code.n(), code.k()), (500, 100));
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let d = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 5] = [
        (&["run", "--set", "channel.distnce_km=1"], "config:"),
        (&["run", "--set", "calibration.capture_samples=10"], "calibration (frame 0):"),
        (&["run", "--set", "constellation.order=60"], "constellation:"),
        (&["sweep", "--set", "sweep.distances_km=[]"], "security:"),
        (&["recon-fer", "--set", "recon.code=missing.alist"], "reconciliation:"),
    ];
    for (args, stage) in cases {
        let o = cvqkd(d.path(), args);
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.starts_with(&format!("error: {stage}")), "{args:?}: {err}");
    }
}

#[test]
fn out_dir_flag_beats_env() {
    let env = tempfile::tempdir().unwrap();
    let flag = tempfile::tempdir().unwrap();
    ok(env.path(), &["sweep", "--out-dir", flag.path().to_str().unwrap(), "--set", "sweep.distances_km=[1]"]);
    assert!(flag.path().join("sweep.csv").exists());
    assert!(!env.path().join("sweep.csv").exists());
}

mod hash {
    use cvqkd_cli::config::{config_hash, load};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn hash_changes_iff_config_changes(
            key in prop::sample::select(vec![
                "channel.distance_km", "detector.v_el", "security.beta", "rx.equalizer.mu_lms", "constellation.va",
            ]),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let ca = load(None, &[format!("{key}={a:?}")]).unwrap();
            let cb = load(None, &[format!("{key}={b:?}")]).unwrap();
            prop_assert_eq!(ca == cb, config_hash(&ca) == config_hash(&cb));
            prop_assert_eq!(a == b, ca == cb);
        }
    }
}
