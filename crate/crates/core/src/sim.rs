//! Free-field scene simulator: point sources with exact fractional delays and
//! spherical attenuation, spatially white or covariance-shaped noise, and
//! SNR-controlled mixing.
//!
//! Scenes follow the protocol of the localization pipeline: a leading
//! noise-only segment for NCM estimation, then the source plus noise. All
//! randomness comes from per-channel ChaCha streams derived from the scene
//! seed, so identical specs produce bit-identical output.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::covariance::CovarianceSpectrum;
use crate::model::{ArrayGeometry, Vec3};
use crate::stft::StftParams;
use crate::{Error, Real, Result};

/// RNG stream indices; noise channels occupy streams `0..M`.
const SOURCE_STREAM: u64 = 1 << 32;

/// What the source emits.
#[derive(Debug, Clone)]
pub enum SourceSignal {
    /// Unit-variance white Gaussian noise.
    WhiteNoise,
    /// Pure tone, amplitude 1.
    Tone { frequency: Real },
    /// Mono WAV file; must match the scene sample rate.
    File { path: PathBuf },
    /// Caller-provided samples at the scene sample rate.
    Samples(Vec<Real>),
}

/// The interference field of a scene.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// Independent white Gaussian noise per microphone.
    SpatiallyWhite,
    /// Noise colored per bin so its STFT covariance converges to the target
    /// spectrum (one matrix per one-sided bin of the scene STFT grid).
    Shaped(Arc<CovarianceSpectrum<Real>>),
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Microphone-averaged SNR of the source segment, in dB.
    pub snr_db: Real,
}

/// Declarative description of a simulated scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry<Real>,
    pub source_position: Vec3<Real>,
    pub source_signal: SourceSignal,
    /// Optional per-microphone source pickup gains (directional mics).
    pub source_gains: Option<Vec<Real>>,
    pub noise: Option<NoiseSpec>,
    pub sample_rate: Real,
    /// STFT grid the scene is meant for; shaped noise is colored on it.
    pub stft: StftParams<Real>,
    pub noise_only_duration: Real,
    pub source_duration: Real,
    pub seed: u64,
    /// Distance clamp shared with the near-field model.
    pub r_min: Real,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.stft.validate()?;
        if !(self.source_duration > 0.0) {
            return Err(Error::InvalidParameter(
                "source segment must be non-empty".into(),
            ));
        }
        if self.noise_only_duration < 0.0 {
            return Err(Error::InvalidParameter(
                "noise-only duration must be non-negative".into(),
            ));
        }
        if let Some(noise) = &self.noise {
            if !noise.snr_db.is_finite() {
                return Err(Error::InvalidParameter(
                    "scene SNR must be finite when noise is present".into(),
                ));
            }
        }
        if let Some(gains) = &self.source_gains {
            if gains.len() != self.geometry.mics() {
                return Err(Error::InvalidParameter(format!(
                    "{} source gains for {} microphones",
                    gains.len(),
                    self.geometry.mics()
                )));
            }
        }
        if !(self.r_min > 0.0) {
            return Err(Error::InvalidParameter("r_min must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_samples(&self) -> usize {
        (self.noise_only_duration * self.sample_rate).round() as usize
    }

    pub fn source_samples(&self) -> usize {
        (self.source_duration * self.sample_rate).round() as usize
    }
}

/// A rendered scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SceneOutput {
    /// Microphone signals, channel-major, noise segment first.
    pub samples: Vec<Vec<Real>>,
    /// Source-only reference aligned with `samples` (zeros while noise-only);
    /// drives oracle activity detection.
    pub clean: Vec<Vec<Real>>,
    pub sample_rate: Real,
    pub truth: Vec3<Real>,
    /// Scene sample index where the source segment starts.
    pub noise_samples: usize,
}

/// Renders the source signal at every microphone: exact fractional delay
/// `r_m / c` and gain `g_m / (4 pi r_m)` applied in the frequency domain.
pub fn render_source(
    geom: &ArrayGeometry<Real>,
    position: Vec3<Real>,
    signal: &[Real],
    sample_rate: Real,
    gains: Option<&[Real]>,
    r_min: Real,
) -> Result<Vec<Vec<Real>>> {
    if signal.is_empty() {
        return Err(Error::InvalidParameter("empty source signal".into()));
    }
    let mics = geom.mics();
    if let Some(gains) = gains {
        if gains.len() != mics {
            return Err(Error::DimensionMismatch(format!(
                "{} gains for {} microphones",
                gains.len(),
                mics
            )));
        }
    }
    let distances: Vec<Real> = geom
        .mic_positions
        .iter()
        .map(|&pm| position.distance(pm))
        .collect();
    if let Some((m, &r)) = distances
        .iter()
        .enumerate()
        .find(|(_, &r)| r < r_min)
    {
        return Err(Error::InvalidParameter(format!(
            "source at {r:.4} m from microphone {m}, inside the {r_min} m clamp"
        )));
    }

    let max_delay = distances
        .iter()
        .map(|&r| (r / geom.speed_of_sound * sample_rate).ceil() as usize)
        .max()
        .unwrap();
    let n_fft = (signal.len() + max_delay + 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n_fft);
    let inverse = planner.plan_fft_inverse(n_fft);

    let mut spectrum: Vec<Complex<Real>> = signal
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    forward.process(&mut spectrum);

    let four_pi = 4.0 * std::f64::consts::PI;
    let mut channels = Vec::with_capacity(mics);
    for m in 0..mics {
        let r = distances[m];
        let gain = gains.map_or(1.0, |g| g[m]) / (four_pi * r);
        let delay = r / geom.speed_of_sound;
        let mut shifted = vec![Complex::new(0.0, 0.0); n_fft];
        shifted[0] = spectrum[0] * gain;
        for k in 1..n_fft / 2 {
            let f = k as Real * sample_rate / n_fft as Real;
            let h = Complex::from_polar(gain, -2.0 * std::f64::consts::PI * f * delay);
            shifted[k] = spectrum[k] * h;
            shifted[n_fft - k] = shifted[k].conj();
        }
        // The Nyquist bin of a fractional delay has no real-valued
        // representation; it is dropped.
        inverse.process(&mut shifted);
        let scale = 1.0 / n_fft as Real;
        channels.push(shifted[..signal.len()].iter().map(|v| v.re * scale).collect());
    }
    Ok(channels)
}

/// Renders the interference field for `samples` samples.
pub fn render_noise(
    mics: usize,
    kind: &NoiseKind,
    samples: usize,
    stft: &StftParams<Real>,
    seed: u64,
) -> Result<Vec<Vec<Real>>> {
    if mics == 0 {
        return Err(Error::NoChannels);
    }
    if samples == 0 {
        return Ok(vec![Vec::new(); mics]);
    }
    let mut streams: Vec<ChaCha12Rng> = (0..mics)
        .map(|c| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            rng
        })
        .collect();

    match kind {
        NoiseKind::SpatiallyWhite => Ok(streams
            .iter_mut()
            .map(|rng| (0..samples).map(|_| rng.sample(StandardNormal)).collect())
            .collect()),
        NoiseKind::Shaped(target) => {
            if target.dim() != mics {
                return Err(Error::DimensionMismatch(format!(
                    "shaped noise target for {} mics, array has {}",
                    target.dim(),
                    mics
                )));
            }
            if target.bins() != stft.bins() {
                return Err(Error::DimensionMismatch(format!(
                    "shaped noise target has {} bins, STFT grid {}",
                    target.bins(),
                    stft.bins()
                )));
            }
            render_shaped_noise(mics, target, samples, stft, &mut streams)
        }
    }
}

/// Direct spectral synthesis: per synthesis bin, draw a circular complex
/// normal vector, color it with the Cholesky factor of the nearest target
/// bin, and scale so a windowed STFT of the result reproduces the target
/// covariance in expectation.
fn render_shaped_noise(
    mics: usize,
    target: &CovarianceSpectrum<Real>,
    samples: usize,
    stft: &StftParams<Real>,
    streams: &mut [ChaCha12Rng],
) -> Result<Vec<Vec<Real>>> {
    // Power of two >= frame size keeps the synthesis and analysis bin grids
    // aligned (n_fft is a multiple of the frame size).
    let n_fft = samples.max(stft.frame_size).next_power_of_two();
    let per_frame = n_fft / stft.frame_size;

    let factors: Vec<_> = (0..target.bins())
        .map(|k| {
            crate::numerics::cholesky(target.get(k)).map_err(|source| Error::AtBin {
                bin: k,
                source: Box::new(source),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let window_energy: Real = stft.window_samples().iter().map(|&w| w * w).sum();
    let gamma = (n_fft as Real / window_energy).sqrt();
    // Components of a circular complex normal with unit total variance.
    let component = std::f64::consts::FRAC_1_SQRT_2;

    let mut spectra = vec![vec![Complex::new(0.0, 0.0); n_fft]; mics];
    for q in 1..n_fft / 2 {
        let k = ((q + per_frame / 2) / per_frame).min(target.bins() - 1);
        let l = &factors[k];
        let w: Vec<Complex<Real>> = streams
            .iter_mut()
            .map(|rng| {
                let re: Real = rng.sample(StandardNormal);
                let im: Real = rng.sample(StandardNormal);
                Complex::new(re * component, im * component)
            })
            .collect();
        for (c, spectrum) in spectra.iter_mut().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (j, &wj) in w.iter().enumerate().take(c + 1) {
                acc += l.get(c, j) * wj;
            }
            let v = acc * gamma;
            spectrum[q] = v;
            spectrum[n_fft - q] = v.conj();
        }
    }

    let inverse = FftPlanner::new().plan_fft_inverse(n_fft);
    let scale = 1.0 / n_fft as Real;
    Ok(spectra
        .into_iter()
        .map(|mut spectrum| {
            inverse.process(&mut spectrum);
            spectrum[..samples].iter().map(|v| v.re * scale).collect()
        })
        .collect())
}

/// Scales the noise so the microphone-averaged power ratio matches `snr_db`
/// and returns the mix plus the applied noise gain.
pub fn mix_at_snr(
    clean: &[Vec<Real>],
    noise: &[Vec<Real>],
    snr_db: Real,
) -> Result<(Vec<Vec<Real>>, Real)> {
    if clean.len() != noise.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} clean channels against {} noise channels",
            clean.len(),
            noise.len()
        )));
    }
    let power = |chs: &[Vec<Real>]| -> Real {
        chs.iter()
            .flat_map(|c| c.iter())
            .map(|&v| v * v)
            .sum()
    };
    let p_clean = power(clean);
    let p_noise = power(noise);
    if !(p_clean > 0.0 && p_noise > 0.0) {
        return Err(Error::InvalidParameter(
            "SNR mixing needs nonzero clean and noise power".into(),
        ));
    }
    let gain = (p_clean / (p_noise * (10.0 as Real).powf(snr_db / 10.0))).sqrt();
    let mixed = clean
        .iter()
        .zip(noise)
        .map(|(c, n)| c.iter().zip(n).map(|(&x, &v)| x + gain * v).collect())
        .collect();
    Ok((mixed, gain))
}

/// Renders a full scene: noise-only lead-in, then source plus noise at the
/// requested SNR.
pub fn simulate(spec: &SceneSpec) -> Result<SceneOutput> {
    spec.validate()?;
    let mics = spec.geometry.mics();
    let n_noise = spec.noise_samples();
    let n_source = spec.source_samples();
    let total = n_noise + n_source;

    let signal = materialize_signal(spec, n_source)?;
    let rendered = render_source(
        &spec.geometry,
        spec.source_position,
        &signal,
        spec.sample_rate,
        spec.source_gains.as_deref(),
        spec.r_min,
    )?;
    let mut clean = vec![vec![0.0; total]; mics];
    for (channel, rendered) in clean.iter_mut().zip(&rendered) {
        channel[n_noise..].copy_from_slice(rendered);
    }

    let samples = match &spec.noise {
        None => clean.clone(),
        Some(noise) => {
            let field = render_noise(mics, &noise.kind, total, &spec.stft, spec.seed)?;
            let source_clean: Vec<Vec<Real>> =
                clean.iter().map(|c| c[n_noise..].to_vec()).collect();
            let source_field: Vec<Vec<Real>> =
                field.iter().map(|c| c[n_noise..].to_vec()).collect();
            let (_, gain) = mix_at_snr(&source_clean, &source_field, noise.snr_db)?;
            clean
                .iter()
                .zip(&field)
                .map(|(c, v)| c.iter().zip(v).map(|(&x, &n)| x + gain * n).collect())
                .collect()
        }
    };

    Ok(SceneOutput {
        samples,
        clean,
        sample_rate: spec.sample_rate,
        truth: spec.source_position,
        noise_samples: n_noise,
    })
}

fn materialize_signal(spec: &SceneSpec, n_source: usize) -> Result<Vec<Real>> {
    match &spec.source_signal {
        SourceSignal::WhiteNoise => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(SOURCE_STREAM);
            Ok((0..n_source).map(|_| rng.sample(StandardNormal)).collect())
        }
        SourceSignal::Tone { frequency } => {
            let step = 2.0 * std::f64::consts::PI * frequency / spec.sample_rate;
            Ok((0..n_source).map(|i| (step * i as Real).sin()).collect())
        }
        SourceSignal::File { path } => {
            let (channels, rate) = crate::wav::read_wav(path)?;
            if rate as Real != spec.sample_rate {
                return Err(Error::Config(format!(
                    "source file is {rate} Hz, scene expects {} Hz",
                    spec.sample_rate
                )));
            }
            let mut signal = channels.into_iter().next().ok_or(Error::NoChannels)?;
            signal.resize(n_source, 0.0);
            Ok(signal)
        }
        SourceSignal::Samples(samples) => {
            let mut signal = samples.clone();
            signal.resize(n_source, 0.0);
            Ok(signal)
        }
    }
}
