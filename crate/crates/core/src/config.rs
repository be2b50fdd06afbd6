//! Run configuration files.
//!
//! The format is deliberately plain: a version header followed by flat
//! `key = value` lines with dotted section names. Unknown keys, duplicate
//! keys and missing required keys are all hard errors so a typo cannot
//! silently fall back to a default. Relative paths resolve against the
//! directory containing the config file.
//!
//! ```text
//! gsrp-config v1
//! # two-mic broadside rig
//! array.mic.0 = -0.05, 0.0, 0.0
//! array.mic.1 = 0.05, 0.0, 0.0
//! source.position = 0.0, 1.0, 0.0
//! scene.source_s = 2.0
//! beamformer = mvcnr
//! weighting = frob
//! grid.kind = planar
//! grid.x0 = -1.0
//! grid.y0 = -1.0
//! grid.z = 0.0
//! grid.nx = 21
//! grid.ny = 21
//! grid.spacing = 0.1
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::beamformer::BeamformerKind;
use crate::covariance::{diffuse_field_ncm, SmoothingParams};
use crate::model::{AcousticModel, ArrayGeometry, Vec3};
use crate::sim::{NoiseKind, NoiseSpec, SceneSpec, SourceSignal};
use crate::srp::CandidateGrid;
use crate::stft::{StftParams, Window};
use crate::weighting::{Band, WeightingKind};
use crate::{model, Error, Real, Result};

pub const CONFIG_HEADER: &str = "gsrp-config v1";

const DEFAULT_SAMPLE_RATE: Real = 16_000.0;
const DEFAULT_SPEED_OF_SOUND: Real = 343.0;
const DEFAULT_FRAME_SIZE: usize = 512;
const DEFAULT_ALPHA_SM: Real = 0.8;
const DEFAULT_EPS_REG: Real = 0.01;
const DEFAULT_ACTIVITY_THRESHOLD_DB: Real = 40.0;
const DEFAULT_DIFFUSE_DIRECTIONS: usize = 72;
const DEFAULT_DIFFUSE_RADIUS: Real = 10.0;
const DEFAULT_DIFFUSE_LOADING: Real = 1e-3;

/// Where the microphone signals come from.
#[derive(Debug, Clone)]
pub enum SceneSource {
    /// Simulated free-field scene; ground truth is the source position.
    Simulated(SceneSpec),
    /// Pre-recorded multichannel WAV. Without `truth.position` the report
    /// carries NaN error columns.
    Wav {
        path: PathBuf,
        truth: Option<Vec3<Real>>,
    },
}

/// How the noise covariance is obtained during localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcmSource {
    /// Averaged over the leading noise-only frames, then regularized.
    Estimate,
    /// Identity in every bin (unit white noise assumption).
    Identity,
}

impl FromStr for NcmSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimate" => Ok(Self::Estimate),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(format!(
                "unknown ncm.kind `{other}` (expected estimate|identity)"
            ))),
        }
    }
}

/// Everything a localization run needs, validated and cross-checked.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: ArrayGeometry<Real>,
    pub scene: SceneSource,
    pub model: AcousticModel<Real>,
    pub beamformer: BeamformerKind,
    pub weighting: WeightingKind,
    pub band: Band<Real>,
    pub stft: StftParams<Real>,
    pub grid: Arc<CandidateGrid<Real>>,
    pub smoothing: SmoothingParams<Real>,
    pub eps_reg: Real,
    pub activity_threshold_db: Real,
    pub ncm: NcmSource,
    /// Leading noise-only span used for NCM estimation and frame splitting.
    pub noise_only_duration: Real,
    pub seed: u64,
}

impl RunConfig {
    pub fn sample_rate(&self) -> Real {
        self.stft.sample_rate
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base)
}

/// Parse config text; `base_dir` anchors relative paths in the file.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let mut keys = KeyMap::parse(text)?;
    let config = build(&mut keys, base_dir)?;
    keys.finish()?;
    Ok(config)
}

/// Raw `key = value` pairs with consumption tracking, so every key the
/// builder never asked for is reported as unknown.
struct KeyMap {
    entries: BTreeMap<String, Entry>,
}

struct Entry {
    value: String,
    line: usize,
    consumed: bool,
}

impl KeyMap {
    fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .map(|(_, l)| l.trim());
        if header != Some(CONFIG_HEADER) {
            return Err(Error::Config(format!(
                "first line must be `{CONFIG_HEADER}`, found `{}`",
                header.unwrap_or("")
            )));
        }
        let mut entries = BTreeMap::new();
        for (idx, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            if let Some(prev) = entries.insert(
                key.clone(),
                Entry {
                    value,
                    line: idx + 1,
                    consumed: false,
                },
            ) {
                return Err(Error::Config(format!(
                    "duplicate key `{key}` (lines {} and {})",
                    prev.line,
                    idx + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.get_mut(key).map(|e| {
            e.consumed = true;
            e.value.clone()
        })
    }

    fn take_parse<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("key `{key}`: cannot parse `{raw}`: {e}"))
            }),
        }
    }

    fn take_parse_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.take_parse(key)?.unwrap_or(default))
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    /// Keys matching `prefix.<index>` for contiguous indices starting at 0.
    fn take_indexed(&mut self, prefix: &str) -> Result<Vec<String>> {
        let mut found = Vec::new();
        while let Some(v) = self.take(&format!("{prefix}.{}", found.len())) {
            found.push(v);
        }
        let stem = format!("{prefix}.");
        if let Some((key, _)) = self.entries.iter().find(|(k, e)| !e.consumed && k.starts_with(&stem)) {
            return Err(Error::Config(format!(
                "`{key}` skips an index: expected contiguous {stem}0, {stem}1, ..."
            )));
        }
        Ok(found)
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, e)| !e.consumed)
            .map(|(k, _)| k.as_str())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

fn parse_real(key: &str, raw: &str) -> Result<Real> {
    raw.parse::<Real>()
        .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{raw}`: {e}")))
}

fn parse_vec3(key: &str, raw: &str) -> Result<Vec3<Real>> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "key `{key}`: expected `x, y, z`, got `{raw}`"
        )));
    }
    Ok(Vec3::new(
        parse_real(key, parts[0])?,
        parse_real(key, parts[1])?,
        parse_real(key, parts[2])?,
    ))
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build(keys: &mut KeyMap, base_dir: &Path) -> Result<RunConfig> {
    let sample_rate = keys.take_parse_or("scene.sample_rate", DEFAULT_SAMPLE_RATE)?;
    let speed_of_sound = keys.take_parse_or("scene.speed_of_sound", DEFAULT_SPEED_OF_SOUND)?;
    let r_min = keys.take_parse_or("scene.r_min", AcousticModel::<Real>::DEFAULT_R_MIN)?;
    let noise_only_s: Real = keys.take_parse_or("scene.noise_only_s", 0.0)?;
    if noise_only_s < 0.0 {
        return Err(Error::Config("scene.noise_only_s must be >= 0".into()));
    }

    let stft = {
        let frame_size: usize = keys.take_parse_or("stft.frame", DEFAULT_FRAME_SIZE)?;
        let frame_shift: usize = keys.take_parse_or("stft.shift", frame_size / 2)?;
        let window = match keys.take("stft.window").as_deref() {
            None | Some("hann") => Window::Hann,
            Some("rect") => Window::Rectangular,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown stft.window `{other}` (expected hann|rect)"
                )))
            }
        };
        let params = StftParams {
            frame_size,
            frame_shift,
            window,
            sample_rate,
        };
        params.validate()?;
        params
    };

    // Model first: an ATF table brings its own geometry.
    let model_kind = keys.take("model.kind").unwrap_or_else(|| "far_field".into());
    let model_r_min = keys.take_parse_or("model.r_min", r_min)?;
    let (model, table_geometry) = match model_kind.as_str() {
        "far_field" => (AcousticModel::FarField, None),
        "near_field" => (AcousticModel::NearField { r_min: model_r_min }, None),
        "composed" => {
            let base = match keys.take("model.base").as_deref() {
                None | Some("far_field") => AcousticModel::FarField,
                Some("near_field") => AcousticModel::NearField { r_min: model_r_min },
                Some(other) => {
                    return Err(Error::Config(format!(
                        "unknown model.base `{other}` (expected far_field|near_field)"
                    )))
                }
            };
            (AcousticModel::Composed { base: Box::new(base) }, None)
        }
        "atf_table" => {
            let table_path = resolve(base_dir, &keys.require("model.table")?);
            let geom_path = resolve(base_dir, &keys.require("model.table_geometry")?);
            let (table, geometry) = model::load_atf_table::<Real>(&table_path, &geom_path)?;
            (AcousticModel::Table(table), Some(geometry))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model.kind `{other}` (expected far_field|near_field|composed|atf_table)"
            )))
        }
    };

    let geometry = match table_geometry {
        Some(mut g) => {
            if keys.take("array.mic.0").is_some() {
                return Err(Error::Config(
                    "array.mic.* conflicts with model.table_geometry".into(),
                ));
            }
            g.speed_of_sound = speed_of_sound;
            g.validate()?;
            g
        }
        None => parse_geometry(keys, speed_of_sound)?,
    };

    let grid = Arc::new(parse_grid(keys)?);

    let beamformer: BeamformerKind = keys.require("beamformer")?.parse()?;
    let weighting: WeightingKind = match keys.take("weighting") {
        None => WeightingKind::None,
        Some(raw) => raw.parse()?,
    };

    let band = Band {
        f_lo: keys.take_parse_or("band.lo_hz", 0.0)?,
        f_hi: keys.take_parse_or("band.hi_hz", sample_rate / 2.0)?,
    };
    band.validate(sample_rate / 2.0)?;

    let smoothing = parse_smoothing(keys, &stft)?;
    let eps_reg: Real = keys.take_parse_or("reg.eps", DEFAULT_EPS_REG)?;
    if eps_reg < 0.0 {
        return Err(Error::Config("reg.eps must be >= 0".into()));
    }
    let activity_threshold_db: Real =
        keys.take_parse_or("activity.threshold_db", DEFAULT_ACTIVITY_THRESHOLD_DB)?;
    if !(activity_threshold_db > 0.0) {
        return Err(Error::Config("activity.threshold_db must be > 0".into()));
    }
    // Default to estimation whenever a noise-only segment exists to feed it.
    let ncm: NcmSource = match keys.take("ncm.kind") {
        None if noise_only_s > 0.0 => NcmSource::Estimate,
        None => NcmSource::Identity,
        Some(raw) => raw.parse()?,
    };
    let seed: u64 = keys.take_parse_or("seed", 0)?;

    let scene = parse_scene(
        keys,
        base_dir,
        &geometry,
        &model,
        &stft,
        noise_only_s,
        r_min,
        seed,
    )?;

    if matches!(ncm, NcmSource::Estimate) && noise_only_s <= 0.0 {
        return Err(Error::Config(
            "ncm.kind = estimate requires scene.noise_only_s > 0".into(),
        ));
    }

    Ok(RunConfig {
        geometry,
        scene,
        model,
        beamformer,
        weighting,
        band,
        stft,
        grid,
        smoothing,
        eps_reg,
        activity_threshold_db,
        ncm,
        noise_only_duration: noise_only_s,
        seed,
    })
}

fn parse_geometry(keys: &mut KeyMap, speed_of_sound: Real) -> Result<ArrayGeometry<Real>> {
    let rows = keys.take_indexed("array.mic")?;
    if rows.is_empty() {
        return Err(Error::Config(
            "no microphones: expected array.mic.0, array.mic.1, ...".into(),
        ));
    }
    let mut positions = Vec::with_capacity(rows.len());
    let mut orientations = Vec::new();
    for (i, raw) in rows.iter().enumerate() {
        let key = format!("array.mic.{i}");
        let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
        match parts.len() {
            3 => positions.push(Vec3::new(
                parse_real(&key, parts[0])?,
                parse_real(&key, parts[1])?,
                parse_real(&key, parts[2])?,
            )),
            6 => {
                positions.push(Vec3::new(
                    parse_real(&key, parts[0])?,
                    parse_real(&key, parts[1])?,
                    parse_real(&key, parts[2])?,
                ));
                orientations.push(Vec3::new(
                    parse_real(&key, parts[3])?,
                    parse_real(&key, parts[4])?,
                    parse_real(&key, parts[5])?,
                ));
            }
            n => {
                return Err(Error::Config(format!(
                    "key `{key}`: expected 3 or 6 comma-separated numbers, got {n}"
                )))
            }
        }
    }
    if !orientations.is_empty() && orientations.len() != positions.len() {
        return Err(Error::Config(
            "either all microphones carry an orientation or none do".into(),
        ));
    }
    let mut geometry = ArrayGeometry::new(positions);
    geometry.speed_of_sound = speed_of_sound;
    if !orientations.is_empty() {
        geometry = geometry.with_orientations(orientations);
    }
    geometry.validate()?;
    Ok(geometry)
}

fn parse_grid(keys: &mut KeyMap) -> Result<CandidateGrid<Real>> {
    match keys.require("grid.kind")?.as_str() {
        "planar" => CandidateGrid::planar(
            parse_real("grid.x0", &keys.require("grid.x0")?)?,
            parse_real("grid.y0", &keys.require("grid.y0")?)?,
            parse_real("grid.z", &keys.require("grid.z")?)?,
            keys.take_parse("grid.nx")?
                .ok_or_else(|| Error::Config("missing required key `grid.nx`".into()))?,
            keys.take_parse("grid.ny")?
                .ok_or_else(|| Error::Config("missing required key `grid.ny`".into()))?,
            parse_real("grid.spacing", &keys.require("grid.spacing")?)?,
        ),
        "azimuth" => CandidateGrid::azimuth(
            parse_vec3("grid.center", &keys.require("grid.center")?)?,
            parse_real("grid.radius", &keys.require("grid.radius")?)?,
            keys.take_parse_or("grid.start_deg", 0.0)?,
            parse_real("grid.step_deg", &keys.require("grid.step_deg")?)?,
            keys.take_parse("grid.count")?
                .ok_or_else(|| Error::Config("missing required key `grid.count`".into()))?,
        ),
        other => Err(Error::Config(format!(
            "unknown grid.kind `{other}` (expected planar|azimuth)"
        ))),
    }
}

fn parse_smoothing(keys: &mut KeyMap, stft: &StftParams<Real>) -> Result<SmoothingParams<Real>> {
    let alpha = keys.take_parse::<Real>("smoothing.alpha")?;
    let tau = keys.take_parse::<Real>("smoothing.tau_s")?;
    let shift_s = stft.frame_shift as Real / stft.sample_rate;
    let params = match (alpha, tau) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give smoothing.alpha or smoothing.tau_s, not both".into(),
            ))
        }
        (Some(a), None) => SmoothingParams {
            alpha_sm: a,
            tau_sm: if a > 0.0 && a < 1.0 { -shift_s / a.ln() } else { 0.0 },
        },
        (None, Some(t)) => {
            if !(t > 0.0) {
                return Err(Error::Config("smoothing.tau_s must be > 0".into()));
            }
            SmoothingParams {
                alpha_sm: (-shift_s / t).exp(),
                tau_sm: t,
            }
        }
        (None, None) => SmoothingParams {
            alpha_sm: DEFAULT_ALPHA_SM,
            tau_sm: -shift_s / (DEFAULT_ALPHA_SM as Real).ln(),
        },
    };
    params.validate()?;
    Ok(params)
}

#[allow(clippy::too_many_arguments)]
fn parse_scene(
    keys: &mut KeyMap,
    base_dir: &Path,
    geometry: &ArrayGeometry<Real>,
    model: &AcousticModel<Real>,
    stft: &StftParams<Real>,
    noise_only_s: Real,
    r_min: Real,
    seed: u64,
) -> Result<SceneSource> {
    if let Some(raw) = keys.take("scene.input_wav") {
        for k in ["scene.source_s", "source.position", "source.kind", "noise.kind"] {
            if keys.take(k).is_some() {
                return Err(Error::Config(format!(
                    "`{k}` conflicts with scene.input_wav"
                )));
            }
        }
        let truth = keys
            .take("truth.position")
            .map(|v| parse_vec3("truth.position", &v))
            .transpose()?;
        return Ok(SceneSource::Wav {
            path: resolve(base_dir, &raw),
            truth,
        });
    }

    let source_s: Real = keys
        .take_parse("scene.source_s")?
        .ok_or_else(|| Error::Config("missing required key `scene.source_s`".into()))?;
    let source_position = parse_vec3("source.position", &keys.require("source.position")?)?;
    let source_signal = match keys.take("source.kind").as_deref() {
        None | Some("white") => SourceSignal::WhiteNoise,
        Some(raw) => {
            if let Some(freq) = raw.strip_prefix("tone:") {
                SourceSignal::Tone {
                    frequency: parse_real("source.kind", freq.trim())?,
                }
            } else if let Some(path) = raw.strip_prefix("file:") {
                SourceSignal::File {
                    path: resolve(base_dir, path.trim()),
                }
            } else {
                return Err(Error::Config(format!(
                    "unknown source.kind `{raw}` (expected white|tone:<hz>|file:<path>)"
                )));
            }
        }
    };
    let source_gains = match keys.take("source.cardioid_gains").as_deref() {
        None | Some("none") => None,
        Some("auto") => Some(model::cardioid_gains_towards(geometry, source_position)?),
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown source.cardioid_gains `{other}` (expected auto|none)"
            )))
        }
    };

    let noise = match keys.take("noise.kind").as_deref() {
        None | Some("none") => None,
        Some(kind @ ("white" | "diffuse")) => {
            let snr_db: Real = keys
                .take_parse("noise.snr_db")?
                .ok_or_else(|| Error::Config("noise.kind set but noise.snr_db missing".into()))?;
            let noise_kind = if kind == "white" {
                NoiseKind::SpatiallyWhite
            } else {
                let directions =
                    keys.take_parse_or("noise.diffuse.directions", DEFAULT_DIFFUSE_DIRECTIONS)?;
                let radius = keys.take_parse_or("noise.diffuse.radius", DEFAULT_DIFFUSE_RADIUS)?;
                let loading =
                    keys.take_parse_or("noise.diffuse.loading", DEFAULT_DIFFUSE_LOADING)?;
                let freqs = stft.bin_frequencies();
                NoiseKind::Shaped(Arc::new(diffuse_field_ncm(
                    geometry, model, &freqs, directions, radius, loading,
                )?))
            };
            Some(NoiseSpec {
                kind: noise_kind,
                snr_db,
            })
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown noise.kind `{other}` (expected none|white|diffuse)"
            )))
        }
    };

    let spec = SceneSpec {
        geometry: geometry.clone(),
        source_position,
        source_signal,
        source_gains,
        noise,
        sample_rate: stft.sample_rate,
        stft: *stft,
        noise_only_duration: noise_only_s,
        source_duration: source_s,
        seed,
        r_min,
    };
    spec.validate()?;
    Ok(SceneSource::Simulated(spec))
}
