//! End-to-end localization runs: signals in, per-frame estimates and report
//! artifacts out.
//!
//! The protocol is fixed so different beamformer/weighting combinations stay
//! comparable run to run:
//!
//! 1. obtain microphone signals (simulated scene or multichannel WAV),
//! 2. STFT, then split frames into a leading noise-only block and a source
//!    block (frames straddling the boundary are dropped),
//! 3. freeze the NCM as the average over the noise-only frames (or identity),
//! 4. per source frame: recursively smooth the SCM, evaluate the SRP map,
//!    take the argmax, score the error against ground truth.
//!
//! The mean localization error is averaged over *active* frames only, judged
//! by an oracle on the clean source reference, so silence does not dilute the
//! score. All report files are plain CSV with a fixed 9-significant-digit
//! float format, making equal-seed runs byte-identical.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::config::{NcmSource, RunConfig, SceneSource};
use crate::covariance::{estimate_ncm, instantaneous_scm, smooth_scm, CovKind, CovarianceSpectrum};
use crate::model::Vec3;
use crate::sim::{simulate, SceneOutput};
use crate::srp::{GridShape, MapEngine, SrpMap};
use crate::stft::{analyze, MultichannelStft, StftParams};
use crate::wav::read_wav;
use crate::{Error, Real, Result};

/// One source-block frame: where the map peaked and how far off it was.
#[derive(Debug, Clone, Copy)]
pub struct FrameEstimate {
    /// Absolute STFT frame index.
    pub frame: usize,
    /// Frame start time in seconds.
    pub time_s: Real,
    /// Grid ordinal of the map argmax.
    pub point_index: usize,
    /// Whether the activity oracle saw source energy in this frame.
    pub active: bool,
    /// Localization error (meters or degrees by grid kind); NaN without truth.
    pub error: Real,
}

/// Outcome of a localization run over one recording.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub grid: Arc<crate::srp::CandidateGrid<Real>>,
    pub truth: Option<Vec3<Real>>,
    pub frames: Vec<FrameEstimate>,
    /// Mean localization error over active frames; NaN if none or no truth.
    pub mle: Real,
    /// Type-7 quartiles (25/50/75 %) of the active-frame errors.
    pub quartiles: [Real; 3],
    pub active_frames: usize,
}

/// A run's maps, kept only in reduced form to stay frame-count independent.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Per-point mean of the source-block maps.
    pub average_map: Option<SrpMap<Real>>,
    pub last_map: Option<SrpMap<Real>>,
}

/// Frame indices of the leading noise-only block and the source block.
/// Frames overlapping the boundary belong to neither.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSplit {
    pub noise: std::ops::Range<usize>,
    pub speech: std::ops::Range<usize>,
}

pub fn split_frames(
    params: &StftParams<Real>,
    total_frames: usize,
    noise_samples: usize,
) -> FrameSplit {
    let mut noise_end = 0;
    let mut speech_start = total_frames;
    for l in 0..total_frames {
        let start = params.frame_start(l);
        if start + params.frame_size <= noise_samples {
            noise_end = l + 1;
        }
        if start >= noise_samples && speech_start == total_frames {
            speech_start = l;
        }
    }
    FrameSplit {
        noise: 0..noise_end,
        speech: speech_start..total_frames,
    }
}

/// Localization error of a grid estimate against the true source position:
/// Euclidean distance in meters for planar grids, wrapped absolute azimuth
/// difference in degrees (0..=180) for azimuth grids.
pub fn compute_error(
    grid: &crate::srp::CandidateGrid<Real>,
    estimate: usize,
    truth: Vec3<Real>,
) -> Real {
    match grid.shape() {
        GridShape::Planar { .. } => grid.point(estimate).distance(truth),
        GridShape::Azimuth { center, .. } => {
            let est = grid.azimuth_deg(estimate).unwrap_or(Real::NAN);
            let truth_deg = (truth.y - center.y).atan2(truth.x - center.x).to_degrees();
            wrap_angle_deg(est - truth_deg)
        }
    }
}

/// Absolute angular difference folded into 0..=180 degrees.
pub fn wrap_angle_deg(delta: Real) -> Real {
    let d = delta.rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Type-7 quantile (linear interpolation between order statistics) of a
/// sorted, NaN-free sample.
fn quantile_sorted(sorted: &[Real], p: Real) -> Real {
    match sorted.len() {
        0 => Real::NAN,
        n => {
            let h = (n - 1) as Real * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as Real) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Per-frame energy of the clean reference, summed over channels.
fn frame_energy(clean: &[Vec<Real>], start: usize, len: usize) -> Real {
    clean
        .iter()
        .map(|ch| ch[start..(start + len).min(ch.len())]
            .iter()
            .map(|&s| s * s)
            .sum::<Real>())
        .sum()
}

/// Activity oracle: a frame is active when its clean energy is within
/// `threshold_db` of the loudest frame. Without a clean reference (or with an
/// all-silent one) every frame counts.
fn activity_flags(
    clean: Option<&[Vec<Real>]>,
    params: &StftParams<Real>,
    frames: std::ops::Range<usize>,
    threshold_db: Real,
) -> Vec<bool> {
    let Some(clean) = clean else {
        return vec![true; frames.len()];
    };
    let energies: Vec<Real> = frames
        .clone()
        .map(|l| frame_energy(clean, params.frame_start(l), params.frame_size))
        .collect();
    let peak = energies.iter().cloned().fold(0.0, Real::max);
    if peak <= 0.0 {
        return vec![true; frames.len()];
    }
    let floor = peak * (10.0 as Real).powf(-threshold_db / 10.0);
    energies.iter().map(|&e| e > floor).collect()
}

struct RunInput {
    stft: MultichannelStft<Real>,
    clean: Option<Vec<Vec<Real>>>,
    truth: Option<Vec3<Real>>,
    noise_samples: usize,
}

fn load_input(config: &RunConfig) -> Result<RunInput> {
    match &config.scene {
        SceneSource::Simulated(spec) => {
            let SceneOutput {
                samples,
                clean,
                truth,
                noise_samples,
                ..
            } = simulate(spec)?;
            Ok(RunInput {
                stft: analyze(&samples, &config.stft)?,
                clean: Some(clean),
                truth: Some(truth),
                noise_samples,
            })
        }
        SceneSource::Wav { path, truth } => {
            let (samples, rate) = read_wav(path)?;
            if samples.len() != config.geometry.mics() {
                return Err(Error::Config(format!(
                    "{} carries {} channels but the array has {} microphones",
                    path.display(),
                    samples.len(),
                    config.geometry.mics()
                )));
            }
            if (rate as Real - config.stft.sample_rate).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "{} is sampled at {} Hz, config says {} Hz",
                    path.display(),
                    rate,
                    config.stft.sample_rate
                )));
            }
            let noise_samples =
                (config.noise_only_duration * config.stft.sample_rate).round() as usize;
            Ok(RunInput {
                stft: analyze(&samples, &config.stft)?,
                clean: None,
                truth: *truth,
                noise_samples,
            })
        }
    }
}

/// Run the full localization protocol described in the module docs.
pub fn localize_run(config: &RunConfig) -> Result<RunOutcome> {
    let input = load_input(config)?;
    let stft = &input.stft;
    let split = split_frames(&config.stft, stft.frames(), input.noise_samples);

    let ncm = match config.ncm {
        NcmSource::Estimate => estimate_ncm(stft, split.noise.clone())?,
        NcmSource::Identity => CovarianceSpectrum::identity(
            CovKind::Ncm,
            config.stft.bins(),
            config.geometry.mics(),
        ),
    };

    let engine = MapEngine::new(
        config.geometry.clone(),
        &config.model,
        config.beamformer,
        config.weighting,
        config.band,
        Arc::clone(&config.grid),
        &config.stft.bin_frequencies(),
        config.eps_reg,
    )?;

    let active = activity_flags(
        input.clean.as_deref(),
        &config.stft,
        split.speech.clone(),
        config.activity_threshold_db,
    );

    let mut scm: Option<CovarianceSpectrum<Real>> = None;
    let mut frames = Vec::with_capacity(split.speech.len());
    let mut avg_values: Vec<Real> = vec![0.0; config.grid.len()];
    let mut last_map: Option<SrpMap<Real>> = None;

    for (offset, l) in split.speech.clone().enumerate() {
        let state = match scm.as_mut() {
            None => scm.insert(instantaneous_spectrum(stft, l)),
            Some(state) => {
                for k in 0..state.bins() {
                    *state.get_mut(k) =
                        smooth_scm(state.get(k), stft.vector(l, k), config.smoothing.alpha_sm);
                }
                state
            }
        };
        let map = engine.compute_map(state, Some(&ncm), l)?;
        let (point_index, _) = map.argmax()?;
        let error = match input.truth {
            Some(t) => compute_error(&config.grid, point_index, t),
            None => Real::NAN,
        };
        frames.push(FrameEstimate {
            frame: l,
            time_s: config.stft.frame_start(l) as Real / config.stft.sample_rate,
            point_index,
            active: active[offset],
            error,
        });
        for (acc, &v) in avg_values.iter_mut().zip(&map.values) {
            *acc += v;
        }
        last_map = Some(map);
    }

    let average_map = last_map.as_ref().map(|last| {
        let n = frames.len() as Real;
        SrpMap {
            grid: Arc::clone(&last.grid),
            values: avg_values.iter().map(|&v| v / n).collect(),
            frame: last.frame,
        }
    });

    let mut active_errors: Vec<Real> = frames
        .iter()
        .filter(|f| f.active && !f.error.is_nan())
        .map(|f| f.error)
        .collect();
    active_errors.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let mle = if active_errors.is_empty() {
        Real::NAN
    } else {
        active_errors.iter().sum::<Real>() / active_errors.len() as Real
    };
    let quartiles = [
        quantile_sorted(&active_errors, 0.25),
        quantile_sorted(&active_errors, 0.50),
        quantile_sorted(&active_errors, 0.75),
    ];

    let report = RunReport {
        grid: Arc::clone(&config.grid),
        truth: input.truth,
        active_frames: frames.iter().filter(|f| f.active).count(),
        frames,
        mle,
        quartiles,
    };
    Ok(RunOutcome {
        report,
        average_map,
        last_map,
    })
}

fn instantaneous_spectrum(stft: &MultichannelStft<Real>, frame: usize) -> CovarianceSpectrum<Real> {
    let matrices = (0..stft.bins())
        .map(|k| instantaneous_scm(stft.vector(frame, k)))
        .collect();
    CovarianceSpectrum::new(CovKind::Scm, matrices)
}

/// 9-significant-digit scientific notation; the one float format every CSV
/// in this crate uses, so equal runs produce byte-equal files.
pub fn fmt_real(v: Real) -> String {
    format!("{v:.8e}")
}

/// Per-frame report rows.
///
/// Planar grids: `frame,time_s,est_x_m,est_y_m,est_z_m,truth_x_m,truth_y_m,truth_z_m,error_m`.
/// Azimuth grids: `frame,time_s,est_theta_deg,truth_theta_deg,error_deg`.
/// Truth columns are NaN when no ground truth is known.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::new();
    let truth = report.truth;
    match report.grid.shape() {
        GridShape::Planar { .. } => {
            out.push_str(
                "frame,time_s,est_x_m,est_y_m,est_z_m,truth_x_m,truth_y_m,truth_z_m,error_m\n",
            );
            let t = truth.unwrap_or(Vec3::new(Real::NAN, Real::NAN, Real::NAN));
            for f in &report.frames {
                let p = report.grid.point(f.point_index);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    f.frame,
                    fmt_real(f.time_s),
                    fmt_real(p.x),
                    fmt_real(p.y),
                    fmt_real(p.z),
                    fmt_real(t.x),
                    fmt_real(t.y),
                    fmt_real(t.z),
                    fmt_real(f.error),
                ));
            }
        }
        GridShape::Azimuth { center, .. } => {
            out.push_str("frame,time_s,est_theta_deg,truth_theta_deg,error_deg\n");
            let truth_deg = truth.map_or(Real::NAN, |t| {
                (t.y - center.y).atan2(t.x - center.x).to_degrees()
            });
            for f in &report.frames {
                let est = report.grid.azimuth_deg(f.point_index).unwrap_or(Real::NAN);
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    f.frame,
                    fmt_real(f.time_s),
                    fmt_real(est),
                    fmt_real(truth_deg),
                    fmt_real(f.error),
                ));
            }
        }
    }
    out
}

/// Heatmap export: `x_m,y_m,value` rows for planar grids (grid order, x
/// fastest), `theta_deg,value` for azimuth grids. `normalize` rescales the
/// peak to one (NaN-safe: an all-NaN map is left as is).
pub fn heatmap_csv(map: &SrpMap<Real>, normalize: bool) -> String {
    let scale = if normalize {
        match map.argmax() {
            Ok((_, peak)) if peak != 0.0 => 1.0 / peak,
            _ => 1.0,
        }
    } else {
        1.0
    };
    let mut out = String::new();
    match map.grid.shape() {
        GridShape::Planar { .. } => {
            out.push_str("x_m,y_m,value\n");
            for (i, &v) in map.values.iter().enumerate() {
                let p = map.grid.point(i);
                out.push_str(&format!(
                    "{},{},{}\n",
                    fmt_real(p.x),
                    fmt_real(p.y),
                    fmt_real(v * scale)
                ));
            }
        }
        GridShape::Azimuth { .. } => {
            out.push_str("theta_deg,value\n");
            for (i, &v) in map.values.iter().enumerate() {
                let theta = map.grid.azimuth_deg(i).unwrap_or(Real::NAN);
                out.push_str(&format!("{},{}\n", fmt_real(theta), fmt_real(v * scale)));
            }
        }
    }
    out
}

/// One line of an evaluation summary across runs.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub config: String,
    pub frames: usize,
    pub active_frames: usize,
    pub mle: Real,
    pub quartiles: [Real; 3],
}

impl SummaryRow {
    pub fn new(config: impl Into<String>, report: &RunReport) -> Self {
        Self {
            config: config.into(),
            frames: report.frames.len(),
            active_frames: report.active_frames,
            mle: report.mle,
            quartiles: report.quartiles,
        }
    }
}

/// `config,frames,active_frames,mle,q25,q50,q75` rows, one per run.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("config,frames,active_frames,mle,q25,q50,q75\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.config,
            r.frames,
            r.active_frames,
            fmt_real(r.mle),
            fmt_real(r.quartiles[0]),
            fmt_real(r.quartiles[1]),
            fmt_real(r.quartiles[2]),
        ));
    }
    out
}

pub fn write_report_csv(report: &RunReport, path: &Path) -> Result<()> {
    fs::write(path, report_csv(report))?;
    Ok(())
}

pub fn write_heatmap_csv(map: &SrpMap<Real>, normalize: bool, path: &Path) -> Result<()> {
    fs::write(path, heatmap_csv(map, normalize))?;
    Ok(())
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    fs::write(path, summary_csv(rows))?;
    Ok(())
}
