//! Multichannel short-time Fourier analysis.
//!
//! Produces the per-frame, per-bin signal vectors consumed by covariance
//! estimation. One-sided spectra only: localization never reconstructs
//! audio and the broadband SRP sum is real, so negative bins are redundant.

use num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use crate::{real, Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann, `0.5 (1 - cos(2 pi n / N))`.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams<T> {
    pub frame_size: usize,
    pub frame_shift: usize,
    pub window: Window,
    pub sample_rate: T,
}

impl<T: Scalar> StftParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "frame size {} is not a power of two",
                self.frame_size
            )));
        }
        if self.frame_shift == 0 || self.frame_shift > self.frame_size {
            return Err(Error::InvalidParameter(format!(
                "frame shift {} outside (0, {}]",
                self.frame_shift, self.frame_size
            )));
        }
        if !(self.sample_rate > T::zero()) {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of non-negative frequency bins, `frame_size / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Center frequency of bin `k` in Hz, `k fs / N`.
    pub fn bin_frequency(&self, k: usize) -> T {
        real::<T>(k as f64) * self.sample_rate / real::<T>(self.frame_size as f64)
    }

    pub fn bin_frequencies(&self) -> Vec<T> {
        (0..self.bins()).map(|k| self.bin_frequency(k)).collect()
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_size {
            0
        } else {
            (samples - self.frame_size) / self.frame_shift + 1
        }
    }

    /// First sample index of frame `l`.
    pub fn frame_start(&self, l: usize) -> usize {
        l * self.frame_shift
    }

    pub fn window_samples(&self) -> Vec<T> {
        let n = self.frame_size;
        match self.window {
            Window::Rectangular => vec![T::one(); n],
            Window::Hann => (0..n)
                .map(|i| {
                    let phase = real::<T>(2.0) * T::PI() * real::<T>(i as f64)
                        / real::<T>(n as f64);
                    real::<T>(0.5) * (T::one() - phase.cos())
                })
                .collect(),
        }
    }
}

/// STFT tiles of an M-channel signal, laid out `[frame][bin][channel]` so a
/// per-bin microphone vector is one contiguous slice.
#[derive(Debug, Clone)]
pub struct MultichannelStft<T> {
    channels: usize,
    frames: usize,
    bins: usize,
    params: StftParams<T>,
    tiles: Vec<Complex<T>>,
}

impl<T: Scalar> MultichannelStft<T> {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn params(&self) -> &StftParams<T> {
        &self.params
    }

    /// Microphone vector `y(k, l)`.
    pub fn vector(&self, frame: usize, bin: usize) -> &[Complex<T>] {
        let base = (frame * self.bins + bin) * self.channels;
        &self.tiles[base..base + self.channels]
    }
}

/// Windowed one-sided DFT of every frame of an M-channel signal.
///
/// Frame count is `floor((len - frame_size) / shift) + 1`; the tail that does
/// not fill a frame is dropped, no zero padding.
pub fn analyze<T: Scalar + FftNum>(
    signal: &[Vec<T>],
    params: &StftParams<T>,
) -> Result<MultichannelStft<T>> {
    params.validate()?;
    if signal.is_empty() {
        return Err(Error::NoChannels);
    }
    let len = signal[0].len();
    for ch in signal {
        if ch.len() != len {
            return Err(Error::DimensionMismatch(
                "channels differ in length".into(),
            ));
        }
    }
    if len < params.frame_size {
        return Err(Error::SignalTooShort {
            len,
            frame: params.frame_size,
        });
    }

    let channels = signal.len();
    let frames = params.frame_count(len);
    let bins = params.bins();
    let window = params.window_samples();
    let fft = FftPlanner::<T>::new().plan_fft_forward(params.frame_size);
    let mut buffer = vec![Complex::new(T::zero(), T::zero()); params.frame_size];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut tiles = vec![Complex::new(T::zero(), T::zero()); frames * bins * channels];

    for (ch, samples) in signal.iter().enumerate() {
        for l in 0..frames {
            let start = params.frame_start(l);
            for (i, b) in buffer.iter_mut().enumerate() {
                *b = Complex::new(samples[start + i] * window[i], T::zero());
            }
            fft.process_with_scratch(&mut buffer, &mut scratch);
            for k in 0..bins {
                tiles[(l * bins + k) * channels + ch] = buffer[k];
            }
        }
    }

    Ok(MultichannelStft {
        channels,
        frames,
        bins,
        params: *params,
        tiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    fn params(window: Window) -> StftParams<f64> {
        StftParams {
            frame_size: 512,
            frame_shift: 256,
            window,
            sample_rate: 16_000.0,
        }
    }

    #[test]
    fn bin_frequency_endpoints() {
        let p = params(Window::Hann);
        assert_eq!(p.bin_frequency(0), 0.0);
        assert_eq!(p.bin_frequency(p.bins() - 1), 8_000.0);
        assert_eq!(p.bin_frequency(16), 500.0);
    }

    #[test]
    fn cosine_at_bin_frequency_concentrates() {
        let p = params(Window::Rectangular);
        let k0 = 32;
        let f = p.bin_frequency(k0);
        let signal: Vec<f64> = (0..1024)
            .map(|n| (2.0 * PI * f * n as f64 / p.sample_rate).cos())
            .collect();
        let stft = analyze(&[signal], &p).unwrap();
        let peak = stft.vector(0, k0)[0].norm();
        assert!(peak > 1.0);
        for k in 0..p.bins() {
            if k != k0 {
                assert!(
                    stft.vector(0, k)[0].norm() < 1e-10 * peak,
                    "leakage at bin {k}"
                );
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_tiles() {
        let p = params(Window::Hann);
        let stft = analyze(&[vec![0.0; 2048], vec![0.0; 2048]], &p).unwrap();
        for l in 0..stft.frames() {
            for k in 0..stft.bins() {
                for v in stft.vector(l, k) {
                    assert_eq!(*v, Complex::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn frame_count_drops_tail() {
        let p = params(Window::Hann);
        assert_eq!(p.frame_count(512), 1);
        assert_eq!(p.frame_count(767), 1);
        assert_eq!(p.frame_count(768), 2);
        assert_eq!(analyze(&[vec![0.0; 800]], &p).unwrap().frames(), 2);
    }

    #[test]
    fn rejects_short_and_empty_input() {
        let p = params(Window::Hann);
        assert!(matches!(
            analyze(&[vec![0.0; 100]], &p),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(matches!(analyze::<f64>(&[], &p), Err(Error::NoChannels)));
    }

    /// One-sided Parseval: sum_k c_k |Y_k|^2 = N * sum_n (w_n x_n)^2 with
    /// c_k = 1 at DC and Nyquist, 2 elsewhere.
    fn parseval_check(window: Window) {
        let p = params(window);
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let signal: Vec<f64> = (0..1024).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let w = p.window_samples();
        let stft = analyze(std::slice::from_ref(&signal), &p).unwrap();
        for l in 0..stft.frames() {
            let start = p.frame_start(l);
            let time_energy: f64 = (0..p.frame_size)
                .map(|i| (signal[start + i] * w[i]).powi(2))
                .sum();
            let mut freq_energy = 0.0;
            for k in 0..p.bins() {
                let c = if k == 0 || k == p.bins() - 1 { 1.0 } else { 2.0 };
                freq_energy += c * stft.vector(l, k)[0].norm_sqr();
            }
            let expect = p.frame_size as f64 * time_energy;
            assert!(
                (freq_energy - expect).abs() < 1e-9 * expect,
                "parseval violated for {window:?} frame {l}"
            );
        }
    }

    #[test]
    fn parseval_hann() {
        parseval_check(Window::Hann);
    }

    #[test]
    fn parseval_rectangular() {
        parseval_check(Window::Rectangular);
    }

    #[test]
    fn analyze_is_linear() {
        let p = params(Window::Hann);
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let x: Vec<f64> = (0..1024).map(|_| rng.gen::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..1024).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (a, b) = (2.5, -0.75);
        let combined: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let sx = analyze(&[x], &p).unwrap();
        let sy = analyze(&[y], &p).unwrap();
        let sc = analyze(&[combined], &p).unwrap();
        for l in 0..sc.frames() {
            for k in 0..sc.bins() {
                let expect = sx.vector(l, k)[0] * a + sy.vector(l, k)[0] * b;
                let got = sc.vector(l, k)[0];
                assert!((got - expect).norm() < 1e-10 * (1.0 + expect.norm()));
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = params(Window::Hann);
        p.frame_size = 500;
        assert!(p.validate().is_err());
        let mut p = params(Window::Hann);
        p.frame_shift = 0;
        assert!(p.validate().is_err());
        let mut p = params(Window::Hann);
        p.frame_shift = 1024;
        assert!(p.validate().is_err());
    }
}
