//! Frequency weighting of narrowband PSDs: the PHAT SCM transform, the
//! scalar weights `zeta^2(omega)` (SNR, flat, Frobenius) and band limiting.

use crate::numerics::{trace_of_product, HermitianMatrix};
use crate::{real, Error, Result, Scalar};

/// Selects how narrowband PSDs are weighted before broadband integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingKind {
    /// Unweighted, `zeta^2 = 1` inside the band.
    None,
    /// Phase transform: SCM elements normalized to unit magnitude.
    Phat,
    /// `zeta^2 = 1/M`; the broadband map aggregates narrowband SNRs.
    Snr,
    /// Spectral flattening, `zeta^2 = 1/(tr(Phi_vv^-1 Phi_yy) - M + 1)`.
    Flat,
    /// Frobenius-normalized flattening, `zeta^2 = sigma_v^2 / |Phi_yy|_F`.
    Frob,
}

impl WeightingKind {
    pub const ALL: [WeightingKind; 5] = [
        WeightingKind::None,
        WeightingKind::Phat,
        WeightingKind::Snr,
        WeightingKind::Flat,
        WeightingKind::Frob,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightingKind::None => "none",
            WeightingKind::Phat => "phat",
            WeightingKind::Snr => "snr",
            WeightingKind::Flat => "flat",
            WeightingKind::Frob => "frob",
        }
    }

    /// Whether the weight needs an estimated noise covariance.
    pub fn requires_ncm(self) -> bool {
        matches!(self, WeightingKind::Flat)
    }
}

impl std::str::FromStr for WeightingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightingKind::None),
            "phat" => Ok(WeightingKind::Phat),
            "snr" => Ok(WeightingKind::Snr),
            "flat" => Ok(WeightingKind::Flat),
            "frob" => Ok(WeightingKind::Frob),
            other => Err(Error::Config(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Analysis band in Hz; `f_lo` inclusive, `f_hi` exclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band<T> {
    pub f_lo: T,
    pub f_hi: T,
}

impl<T: Scalar> Band<T> {
    pub fn new(f_lo: T, f_hi: T) -> Self {
        Self { f_lo, f_hi }
    }

    pub fn validate(&self, nyquist: T) -> Result<()> {
        if !(self.f_lo >= T::zero() && self.f_lo < self.f_hi && self.f_hi <= nyquist) {
            return Err(Error::Config(format!(
                "band [{}, {}] must satisfy 0 <= f_lo < f_hi <= Nyquist ({})",
                self.f_lo, self.f_hi, nyquist
            )));
        }
        Ok(())
    }

    pub fn contains(&self, f: T) -> bool {
        f >= self.f_lo && f < self.f_hi
    }
}

/// Per-bin selection mask for the band; the upper edge is exclusive so a
/// band reaching the Nyquist frequency drops the Nyquist bin.
pub fn band_mask<T: Scalar>(bin_frequencies: &[T], band: Band<T>) -> Vec<bool> {
    bin_frequencies.iter().map(|&f| band.contains(f)).collect()
}

/// Default PHAT floor: scale-free guard against zero elements.
pub fn phat_floor<T: Scalar>(scm: &HermitianMatrix<T>) -> T {
    let mut max_mag = T::zero();
    for i in 0..scm.dim() {
        for j in i..scm.dim() {
            max_mag = max_mag.max(scm.get(i, j).norm());
        }
    }
    real::<T>(1e-12) * max_mag
}

/// Phase transform: every SCM element scaled to unit magnitude,
/// `element / max(|element|, floor)`.
pub fn phat_transform<T: Scalar>(scm: &HermitianMatrix<T>, floor: T) -> HermitianMatrix<T> {
    assert!(floor > T::zero(), "PHAT floor must be positive");
    HermitianMatrix::from_fn(scm.dim(), |i, j| {
        let v = scm.get(i, j);
        v / v.norm().max(floor)
    })
}

/// SNR weight, `zeta^2 = 1/M`.
pub fn zeta2_snr<T: Scalar>(mics: usize) -> T {
    T::one() / real::<T>(mics as f64)
}

/// Spectral flattening weight, `zeta^2 = 1/(tr(Phi_vv^-1 Phi_yy) - M + 1)`.
///
/// The denominator is exact only for true statistics; with estimated matrices
/// it can drop below 1, so it is clamped there to keep the weight positive
/// and at most 1.
pub fn zeta2_flat<T: Scalar>(ncm_inv: &HermitianMatrix<T>, scm: &HermitianMatrix<T>) -> T {
    let mics = real::<T>(scm.dim() as f64);
    let denom = (trace_of_product(ncm_inv, scm) - mics + T::one()).max(T::one());
    T::one() / denom
}

/// Frobenius flattening weight, `zeta^2 = sigma_v^2 / |Phi_yy|_F`.
pub fn zeta2_frob<T: Scalar>(sigma_v2: T, scm: &HermitianMatrix<T>) -> T {
    let floor = T::from_f64(1e-300)
        .filter(|v| *v > T::zero())
        .unwrap_or_else(T::min_positive_value);
    sigma_v2 / scm.frobenius_norm().max(floor)
}
