//! Signal and noise covariance estimation from STFT tiles.
//!
//! The localization protocol freezes the NCM after a leading noise-only
//! segment and tracks the SCM with recursive smoothing during the source
//! segment. Regularization (diagonal loading scaled by the microphone
//! averaged signal power) lives here rather than in the solvers.

use std::ops::Range;

use num_complex::Complex;

use crate::model::{AcousticModel, ArrayGeometry, Vec3};
use crate::numerics::HermitianMatrix;
use crate::stft::MultichannelStft;
use crate::{real, Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    Scm,
    Ncm,
}

/// One Hermitian matrix per frequency bin.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum<T> {
    pub kind: CovKind,
    matrices: Vec<HermitianMatrix<T>>,
}

impl<T: Scalar> CovarianceSpectrum<T> {
    pub fn new(kind: CovKind, matrices: Vec<HermitianMatrix<T>>) -> Self {
        Self { kind, matrices }
    }

    pub fn zeros(kind: CovKind, bins: usize, dim: usize) -> Self {
        Self {
            kind,
            matrices: (0..bins).map(|_| HermitianMatrix::zeros(dim)).collect(),
        }
    }

    /// Identity matrix in every bin (the spatially white noise assumption).
    pub fn identity(kind: CovKind, bins: usize, dim: usize) -> Self {
        Self {
            kind,
            matrices: (0..bins).map(|_| HermitianMatrix::identity(dim)).collect(),
        }
    }

    pub fn bins(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, HermitianMatrix::dim)
    }

    pub fn get(&self, bin: usize) -> &HermitianMatrix<T> {
        &self.matrices[bin]
    }

    pub fn get_mut(&mut self, bin: usize) -> &mut HermitianMatrix<T> {
        &mut self.matrices[bin]
    }
}

/// Smoothing constant for the recursive SCM update; `tau_sm` is the
/// equivalent time constant and only informational.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams<T> {
    pub alpha_sm: T,
    pub tau_sm: T,
}

impl<T: Scalar> SmoothingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_sm <= T::zero() || self.alpha_sm > T::one() {
            return Err(Error::InvalidParameter(format!(
                "smoothing alpha {} outside (0, 1]",
                self.alpha_sm
            )));
        }
        Ok(())
    }
}

/// Instantaneous SCM estimate, the rank-one outer product `y y^H`.
pub fn instantaneous_scm<T: Scalar>(y: &[Complex<T>]) -> HermitianMatrix<T> {
    HermitianMatrix::from_outer(y)
}

/// NCM estimate: per bin, the mean instantaneous SCM over a frame range.
pub fn estimate_ncm<T: Scalar>(
    stft: &MultichannelStft<T>,
    frames: Range<usize>,
) -> Result<CovarianceSpectrum<T>> {
    if frames.is_empty() || frames.end > stft.frames() {
        return Err(Error::EmptyFrameRange);
    }
    let count = T::from_usize(frames.len()).expect("frame count fits scalar");
    let mut matrices = Vec::with_capacity(stft.bins());
    for k in 0..stft.bins() {
        let mut acc = HermitianMatrix::zeros(stft.channels());
        for l in frames.clone() {
            acc = acc.add(&instantaneous_scm(stft.vector(l, k)));
        }
        matrices.push(acc.scale(T::one() / count));
    }
    Ok(CovarianceSpectrum::new(CovKind::Ncm, matrices))
}

/// Recursive smoothing step `(1 - alpha) prev + alpha y y^H`.
///
/// The recursion is initialized with the first instantaneous SCM of the
/// source segment (see the pipeline), avoiding a zero-matrix transient.
pub fn smooth_scm<T: Scalar>(
    prev: &HermitianMatrix<T>,
    y: &[Complex<T>],
    alpha_sm: T,
) -> HermitianMatrix<T> {
    prev.blend(&instantaneous_scm(y), alpha_sm)
}

/// Microphone-averaged power of a covariance matrix, `tr(cov) / M`.
///
/// Serves as `sigma_y^2` in NCM regularization and as the scalar noise power
/// `sigma_v^2` for NMF and Frobenius weighting.
pub fn mean_mic_power<T: Scalar>(cov: &HermitianMatrix<T>) -> T {
    cov.trace() / real::<T>(cov.dim() as f64)
}

/// Diagonal loading `ncm + eps_reg sigma_y2 I`.
///
/// `sigma_y2` is the microphone averaged signal power `tr(SCM) / M` of the
/// current frame and bin, making the loading SNR dependent.
pub fn regularize_ncm<T: Scalar>(
    ncm: &HermitianMatrix<T>,
    sigma_y2: T,
    eps_reg: T,
) -> HermitianMatrix<T> {
    if eps_reg == T::zero() || sigma_y2 == T::zero() {
        return ncm.clone();
    }
    ncm.add_scaled_identity(eps_reg * sigma_y2)
}

/// Diffuse-field NCM built from the propagation model itself: per bin, the
/// average steering outer product over a ring of directions in the plane of
/// the array, scaled to unit mean microphone power and diagonally loaded so
/// every bin stays positive definite.
///
/// The ring is centered on the array centroid. Table models are rejected
/// because the construction needs steering at arbitrary points.
pub fn diffuse_field_ncm<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    model: &AcousticModel<T>,
    bin_freqs: &[T],
    directions: usize,
    radius: T,
    loading: T,
) -> Result<CovarianceSpectrum<T>> {
    if directions < 2 {
        return Err(Error::InvalidParameter(format!(
            "diffuse field needs at least 2 directions, got {directions}"
        )));
    }
    if !(radius > T::zero()) || !(loading > T::zero()) {
        return Err(Error::InvalidParameter(
            "diffuse field radius and loading must be positive".into(),
        ));
    }
    let mics = geometry.mics();
    let inv_m = T::one() / real::<T>(mics as f64);
    let mut center = Vec3::zero();
    for p in &geometry.mic_positions {
        center = center + *p;
    }
    center = center.scaled(inv_m);

    let step = T::TAU() / real::<T>(directions as f64);
    let ring: Vec<Vec3<T>> = (0..directions)
        .map(|i| {
            let theta = step * real::<T>(i as f64);
            center + Vec3::new(radius * theta.cos(), radius * theta.sin(), T::zero())
        })
        .collect();

    let inv_d = T::one() / real::<T>(directions as f64);
    let mut matrices = Vec::with_capacity(bin_freqs.len());
    for (bin, &freq) in bin_freqs.iter().enumerate() {
        let mut sum = HermitianMatrix::zeros(mics);
        for point in &ring {
            let d = model
                .steer_geometric(geometry, *point, freq)
                .map_err(|source| Error::AtBin {
                    bin,
                    source: Box::new(source),
                })?;
            sum = sum.add(&HermitianMatrix::from_outer(&d.values).scale(inv_d));
        }
        let mean_power = mean_mic_power(&sum);
        if mean_power > T::zero() {
            sum = sum.scale(T::one() / mean_power);
        }
        matrices.push(sum.add_scaled_identity(loading));
    }
    Ok(CovarianceSpectrum::new(CovKind::Ncm, matrices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{hermitian_inverse, inner, norm_sq};
    use crate::stft::{analyze, StftParams, Window};
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    type C = Complex<f64>;

    #[test]
    fn instantaneous_scm_example() {
        let scm = instantaneous_scm(&[C::new(1.0, 0.0), C::new(0.0, 1.0)]);
        assert_eq!(scm.get(0, 0), C::new(1.0, 0.0));
        assert_eq!(scm.get(0, 1), C::new(0.0, -1.0));
        assert_eq!(scm.get(1, 0), C::new(0.0, 1.0));
        assert_eq!(scm.get(1, 1), C::new(1.0, 0.0));
    }

    #[test]
    fn instantaneous_scm_of_zero_is_zero() {
        let scm = instantaneous_scm(&[C::new(0.0, 0.0); 3]);
        assert_eq!(scm.trace(), 0.0);
        assert_eq!(scm.frobenius_norm(), 0.0);
    }

    #[test]
    fn instantaneous_scm_trace_and_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let y: Vec<C> = (0..4)
            .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let scm = instantaneous_scm(&y);
        let t = norm_sq(&y);
        assert!((scm.trace() - t).abs() < 1e-14 * t);
        // Rank one: the image of any vector is collinear with y, so the
        // only nonzero eigenvalue is ||y||^2 with eigenvector y.
        let back = scm.matvec(&y);
        for (b, v) in back.iter().zip(&y) {
            assert!((b - v * t).norm() < 1e-12 * t);
        }
        let mut orth = vec![C::new(0.0, 0.0); 4];
        orth[0] = y[1].conj();
        orth[1] = -y[0].conj();
        assert!(inner(&y, &orth).norm() < 1e-14);
        assert!(norm_sq(&scm.matvec(&orth)).sqrt() < 1e-12);
    }

    fn white_stft(frames: usize, channels: usize, seed: u64) -> MultichannelStft<f64> {
        let p = StftParams {
            frame_size: 64,
            frame_shift: 64,
            window: Window::Rectangular,
            sample_rate: 8_000.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let len = frames * 64;
        let signal: Vec<Vec<f64>> = (0..channels)
            .map(|_| (0..len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        analyze(&signal, &p).unwrap()
    }

    #[test]
    fn ncm_single_frame_equals_instantaneous() {
        let stft = white_stft(4, 3, 37);
        let ncm = estimate_ncm(&stft, 1..2).unwrap();
        for k in 0..stft.bins() {
            let inst = instantaneous_scm(stft.vector(1, k));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((ncm.get(k).get(i, j) - inst.get(i, j)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn ncm_rejects_empty_range() {
        let stft = white_stft(4, 2, 41);
        assert!(matches!(
            estimate_ncm(&stft, 2..2),
            Err(Error::EmptyFrameRange)
        ));
        assert!(matches!(
            estimate_ncm(&stft, 2..9),
            Err(Error::EmptyFrameRange)
        ));
    }

    #[test]
    fn ncm_off_diagonals_shrink_with_frames() {
        // Spatially white noise: off-diagonal magnitudes fall like
        // 1/sqrt(L). Statistical check with a factor-3 tolerance.
        let short = estimate_ncm(&white_stft(16, 2, 43), 0..16).unwrap();
        let long = estimate_ncm(&white_stft(1024, 2, 43), 0..1024).unwrap();
        let ratio_at = |cov: &CovarianceSpectrum<f64>| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for k in 1..cov.bins() - 1 {
                let m = cov.get(k);
                acc += m.get(0, 1).norm() / (m.trace() / 2.0);
                n += 1.0;
            }
            acc / n
        };
        let expected = (16f64 / 1024.0).sqrt();
        let observed = ratio_at(&long) / ratio_at(&short);
        assert!(
            observed < expected * 3.0 && observed > expected / 3.0,
            "off-diagonal shrink {observed} vs expected {expected}"
        );
    }

    #[test]
    fn smoothing_alpha_one_is_instantaneous() {
        let prev = HermitianMatrix::identity(2);
        let y = [C::new(2.0, 0.0), C::new(0.0, -1.0)];
        let smoothed = smooth_scm(&prev, &y, 1.0);
        let inst = instantaneous_scm(&y);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(smoothed.get(i, j), inst.get(i, j));
            }
        }
    }

    #[test]
    fn smoothing_zero_vector_decays() {
        let prev = HermitianMatrix::from_diagonal(&[1.0, 2.0]);
        let smoothed = smooth_scm(&prev, &[C::new(0.0, 0.0); 2], 0.2);
        assert!((smoothed.get(0, 0).re - 0.8).abs() < 1e-15);
        assert!((smoothed.get(1, 1).re - 1.6).abs() < 1e-15);
    }

    #[test]
    fn smoothing_converges_for_stationary_input() {
        fn sample(rng: &mut ChaCha12Rng) -> f64 {
            // Box-Muller standard normal
            let u: f64 = rng.gen::<f64>().max(1e-12);
            let v: f64 = rng.gen();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        // Target covariance diag(4, 1) via scaled independent samples.
        let first = [C::new(2.0 * sample(&mut rng), 0.0), C::new(sample(&mut rng), 0.0)];
        let mut scm = instantaneous_scm(&first);
        let mut mean_diag = [0.0, 0.0];
        let alpha = 0.02;
        let iterations = 20_000;
        let burn_in = 500;
        for it in 0..iterations {
            let y = [C::new(2.0 * sample(&mut rng), 0.0), C::new(sample(&mut rng), 0.0)];
            scm = smooth_scm(&scm, &y, alpha);
            if it >= burn_in {
                mean_diag[0] += scm.get(0, 0).re;
                mean_diag[1] += scm.get(1, 1).re;
            }
        }
        let n = (iterations - burn_in) as f64;
        assert!((mean_diag[0] / n - 4.0).abs() < 0.4, "var(ch0) {}", mean_diag[0] / n);
        assert!((mean_diag[1] / n - 1.0).abs() < 0.1, "var(ch1) {}", mean_diag[1] / n);
    }

    #[test]
    fn regularize_trivial_cases() {
        let ncm = HermitianMatrix::from_diagonal(&[1.0, 2.0]);
        let same = regularize_ncm(&ncm, 5.0, 0.0);
        assert_eq!(same.get(0, 0), ncm.get(0, 0));

        let loaded = regularize_ncm(&HermitianMatrix::<f64>::zeros(3), 1.0, 0.01);
        for i in 0..3 {
            assert!((loaded.get(i, i).re - 0.01).abs() < 1e-18);
        }
    }

    #[test]
    fn regularized_inverse_approaches_scaled_identity() {
        // sigma_v2 << sigma_y2: inv(reg NCM) d keeps the direction of d.
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let sigma_y2 = 1.0;
        let ncm = {
            let g: Vec<C> = (0..4)
                .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            HermitianMatrix::from_outer(&g).scale(1e-6 / norm_sq(&g) * 4.0)
        };
        let reg = regularize_ncm(&ncm, sigma_y2, 0.01);
        let inv = hermitian_inverse(&reg).unwrap();
        let d: Vec<C> = (0..4)
            .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mapped = inv.matvec(&d);
        let cosine = inner(&d, &mapped).norm() / (norm_sq(&d).sqrt() * norm_sq(&mapped).sqrt());
        assert!(cosine > 0.999, "direction cosine {cosine}");
    }

    #[test]
    fn diffuse_field_ncm_is_positive_definite_with_unit_power() {
        use crate::model::{AcousticModel, ArrayGeometry, Vec3};
        use crate::numerics::cholesky;

        let geom = ArrayGeometry::new(vec![
            Vec3::new(-0.05, 0.0, 0.0),
            Vec3::new(0.05, 0.0, 0.0),
            Vec3::new(0.0, 0.08, 0.0),
        ]);
        let freqs: Vec<f64> = (0..9).map(|k| k as f64 * 1000.0).collect();
        let ncm =
            diffuse_field_ncm(&geom, &AcousticModel::FarField, &freqs, 36, 10.0, 1e-3).unwrap();
        assert_eq!(ncm.bins(), 9);
        for bin in 0..ncm.bins() {
            let m = ncm.get(bin);
            assert!(cholesky(m).is_ok(), "bin {bin} not positive definite");
            let mean = mean_mic_power(m);
            assert!((mean - (1.0 + 1e-3)).abs() < 1e-12, "mean power {mean}");
        }
        // Coherence is full at DC and decays once the 0.1 m spacing spans
        // several wavelengths (ring average behaves like J0(2 pi f dx / c)).
        let low = ncm.get(0).get(0, 1).norm();
        let high = ncm.get(8).get(0, 1).norm();
        assert!(low > 0.99, "zero-frequency coherence {low}");
        assert!(high < 0.5, "high-frequency coherence {high}");
    }

    #[test]
    fn diffuse_field_ncm_rejects_bad_parameters() {
        use crate::model::{AcousticModel, ArrayGeometry, Vec3};

        let geom = ArrayGeometry::new(vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0)]);
        assert!(diffuse_field_ncm(&geom, &AcousticModel::FarField, &[0.0], 1, 10.0, 1e-3).is_err());
        assert!(
            diffuse_field_ncm(&geom, &AcousticModel::FarField, &[0.0], 8, 0.0, 1e-3).is_err()
        );
        assert!(diffuse_field_ncm(&geom, &AcousticModel::FarField, &[0.0], 8, 10.0, 0.0).is_err());
    }
}
