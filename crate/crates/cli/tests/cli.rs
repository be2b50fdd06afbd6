//! End-to-end tests of the `gsrp` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_gsrp");

fn gsrp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn planar_config(seed: u64) -> String {
    format!(
        "gsrp-config v1\n\
         array.mic.0 = -0.05, -0.05, 0.0\n\
         array.mic.1 = 0.05, -0.05, 0.0\n\
         array.mic.2 = -0.05, 0.05, 0.0\n\
         source.position = 0.3, 0.5, 0.0\n\
         scene.sample_rate = 8000\n\
         scene.source_s = 0.4\n\
         stft.frame = 256\n\
         stft.shift = 128\n\
         beamformer = nmf\n\
         weighting = frob\n\
         model.kind = near_field\n\
         band.lo_hz = 300\n\
         band.hi_hz = 3800\n\
         grid.kind = planar\n\
         grid.x0 = -1.0\n\
         grid.y0 = -1.0\n\
         grid.z = 0.0\n\
         grid.nx = 11\n\
         grid.ny = 11\n\
         grid.spacing = 0.2\n\
         seed = {seed}\n"
    )
}

#[test]
fn simulate_writes_a_multichannel_wav() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, planar_config(7)).unwrap();
    let wav = dir.path().join("scene.wav");

    let out = gsrp(&[
        "simulate",
        cfg.to_str().unwrap(),
        "-o",
        wav.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let bytes = fs::read(&wav).unwrap();
    assert_eq!(&bytes[..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
    let channels = u16::from_le_bytes([bytes[22], bytes[23]]);
    let rate = u32::from_le_bytes([bytes[24], bytes[25], bytes[26], bytes[27]]);
    assert_eq!(channels, 3);
    assert_eq!(rate, 8000);
}

#[test]
fn localize_report_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, planar_config(7)).unwrap();
    let report = |name: &str, seed: Option<&str>| {
        let path = dir.path().join(name);
        let mut args = vec![
            "localize".to_string(),
            cfg.to_str().unwrap().to_string(),
            "-o".to_string(),
            path.to_str().unwrap().to_string(),
        ];
        if let Some(seed) = seed {
            args.push("--seed".to_string());
            args.push(seed.to_string());
        }
        let out = Command::new(BIN).args(&args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(&path).unwrap()
    };

    let a = report("a.csv", None);
    let b = report("b.csv", None);
    assert_eq!(a, b, "same seed must give byte-identical reports");

    let c = report("c.csv", Some("8"));
    let header = |bytes: &[u8]| String::from_utf8_lossy(bytes).lines().next().unwrap().to_owned();
    assert_eq!(header(&a), header(&c));
    assert_eq!(header(&a), "frame,time_s,est_x_m,est_y_m,est_z_m,truth_x_m,truth_y_m,truth_z_m,error_m");
}

#[test]
fn localize_writes_average_heatmap_on_request() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, planar_config(7)).unwrap();
    let report = dir.path().join("report.csv");
    let map = dir.path().join("map.csv");

    let out = gsrp(&[
        "localize",
        cfg.to_str().unwrap(),
        "-o",
        report.to_str().unwrap(),
        "--heatmap",
        map.to_str().unwrap(),
        "--avg-heatmap",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&map).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x_m,y_m,value"));
    assert_eq!(lines.count(), 11 * 11);
    assert!(text.contains("1.00000000e0"), "normalized peak present");
}

#[test]
fn avg_heatmap_flag_requires_a_heatmap_path() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, planar_config(7)).unwrap();

    let out = gsrp(&[
        "localize",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("r.csv").to_str().unwrap(),
        "--avg-heatmap",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_summarizes_every_config_in_the_directory() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("b_run.cfg"), planar_config(7)).unwrap();
    fs::write(dir.path().join("a_run.cfg"), planar_config(8)).unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let summary = dir.path().join("summary.csv");

    let out = gsrp(&[
        "eval",
        dir.path().to_str().unwrap(),
        "-o",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&summary).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "config,frames,active_frames,mle,q25,q50,q75");
    assert!(lines[1].starts_with("a_run,"));
    assert!(lines[2].starts_with("b_run,"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, planar_config(7) + "mystery.knob = 1\n").unwrap();

    let out = gsrp(&[
        "localize",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mystery.knob"), "{stderr}");

    let missing = gsrp(&["simulate", "/no/such/file.cfg", "-o", "x.wav"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let dir = TempDir::new().unwrap();
    let wav = dir.path().join("silence.wav");
    write_silent_wav(&wav, 3, 8000, 4000);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "gsrp-config v1\n\
         array.mic.0 = -0.05, -0.05, 0.0\n\
         array.mic.1 = 0.05, -0.05, 0.0\n\
         array.mic.2 = -0.05, 0.05, 0.0\n\
         scene.input_wav = silence.wav\n\
         scene.sample_rate = 8000\n\
         stft.frame = 256\n\
         stft.shift = 128\n\
         beamformer = mpdr\n\
         model.kind = near_field\n\
         band.lo_hz = 300\n\
         band.hi_hz = 3800\n\
         grid.kind = azimuth\n\
         grid.center = 0, 0, 0\n\
         grid.radius = 1.0\n\
         grid.step_deg = 30\n\
         grid.count = 12\n\
         seed = 1\n",
    )
    .unwrap();

    let out = gsrp(&[
        "localize",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selftest_runs_named_scenarios() {
    let out = gsrp(&["selftest", "weighting_curves", "regularization_limit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("weighting_curves: PASS"), "{stdout}");
    assert!(stdout.contains("regularization_limit: PASS"), "{stdout}");

    let unknown = gsrp(&["selftest", "definitely_not_a_scenario"]);
    assert_eq!(unknown.status.code(), Some(2));
}

/// Minimal PCM16 WAV writer: all-zero samples.
fn write_silent_wav(path: &Path, channels: u16, rate: u32, frames: u32) {
    let data_len = frames * channels as u32 * 2;
    let mut bytes = Vec::with_capacity(44 + data_len as usize);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&channels.to_le_bytes());
    bytes.extend_from_slice(&rate.to_le_bytes());
    bytes.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
    bytes.extend_from_slice(&(channels * 2).to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    bytes.resize(44 + data_len as usize, 0);
    fs::write(path, bytes).unwrap();
}
