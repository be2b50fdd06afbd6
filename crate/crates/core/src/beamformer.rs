//! The six steered beamformers: DS, MVDR and MPDR baselines plus the
//! constant-noise-response family MVCNR, NMF and MPCNR.
//!
//! Every op returns the narrowband output PSD `w^H Phi_yy w` for one steering
//! vector at one bin. The frequency weight `zeta` scales the noise response of
//! the CNR beamformers; the map engine passes `zeta = 1` and applies its
//! squared weight outside, so one covariance pass serves all weightings.

use num_complex::Complex;

use crate::model::SteeringVector;
use crate::numerics::{hermitian_form, inner, norm_sq, HermitianMatrix};
use crate::{real, Error, Result, Scalar};

/// Selects the steered beamformer of a localization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamformerKind {
    /// Delay-and-sum, `w = d`.
    Ds,
    /// Minimum variance distortionless response, noise-covariance whitened.
    Mvdr,
    /// Minimum power distortionless response, signal-covariance whitened.
    Mpdr,
    /// Minimum variance constant noise response.
    Mvcnr,
    /// Normalized matched filter (MVCNR under spatially white noise).
    Nmf,
    /// Minimum power constant noise response.
    Mpcnr,
}

impl BeamformerKind {
    pub const ALL: [BeamformerKind; 6] = [
        BeamformerKind::Ds,
        BeamformerKind::Mvdr,
        BeamformerKind::Mpdr,
        BeamformerKind::Mvcnr,
        BeamformerKind::Nmf,
        BeamformerKind::Mpcnr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BeamformerKind::Ds => "ds",
            BeamformerKind::Mvdr => "mvdr",
            BeamformerKind::Mpdr => "mpdr",
            BeamformerKind::Mvcnr => "mvcnr",
            BeamformerKind::Nmf => "nmf",
            BeamformerKind::Mpcnr => "mpcnr",
        }
    }

    /// Whether the beamformer needs a noise covariance matrix.
    pub fn requires_ncm(self) -> bool {
        matches!(
            self,
            BeamformerKind::Mvdr | BeamformerKind::Mvcnr | BeamformerKind::Mpcnr
        )
    }

    /// Whether the beamformer inverts the signal covariance matrix.
    pub fn requires_scm_inverse(self) -> bool {
        matches!(self, BeamformerKind::Mpdr | BeamformerKind::Mpcnr)
    }
}

impl std::str::FromStr for BeamformerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ds" => Ok(BeamformerKind::Ds),
            "mvdr" => Ok(BeamformerKind::Mvdr),
            "mpdr" => Ok(BeamformerKind::Mpdr),
            "mvcnr" => Ok(BeamformerKind::Mvcnr),
            "nmf" => Ok(BeamformerKind::Nmf),
            "mpcnr" => Ok(BeamformerKind::Mpcnr),
            other => Err(Error::Config(format!("unknown beamformer {other:?}"))),
        }
    }
}

/// Narrowband steered response of one beamformer at one (bin, point).
#[derive(Debug, Clone)]
pub struct BeamformerOutput<T> {
    pub psd: T,
    pub weights: Option<Vec<Complex<T>>>,
}

fn degeneracy_floor<T: Scalar>() -> T {
    T::from_f64(1e-300)
        .filter(|v| *v > T::zero())
        .unwrap_or_else(T::min_positive_value)
}

fn checked_denominator<T: Scalar>(value: T) -> Result<T> {
    if !value.is_finite() || value < degeneracy_floor::<T>() {
        Err(Error::DegenerateSteering)
    } else {
        Ok(value)
    }
}

/// Delay-and-sum output PSD, `d^H Phi_yy d`.
pub fn ds_psd<T: Scalar>(d: &SteeringVector<T>, scm: &HermitianMatrix<T>) -> Result<T> {
    check_dims(d, scm)?;
    Ok(hermitian_form(&d.values, scm))
}

/// MVDR output PSD with weights `w = Phi_vv^-1 d / (d^H Phi_vv^-1 d)`.
pub fn mvdr_psd<T: Scalar>(
    d: &SteeringVector<T>,
    scm: &HermitianMatrix<T>,
    ncm_inv: &HermitianMatrix<T>,
) -> Result<T> {
    check_dims(d, scm)?;
    check_dims(d, ncm_inv)?;
    let u = ncm_inv.matvec(&d.values);
    let denom = checked_denominator(inner(&d.values, &u).re)?;
    Ok(hermitian_form(&u, scm) / (denom * denom))
}

/// MPDR output PSD: the MVDR shape with `Phi_yy^-1` in place of `Phi_vv^-1`,
/// so `w = Phi_yy^-1 d / (d^H Phi_yy^-1 d)`.
pub fn mpdr_psd<T: Scalar>(
    d: &SteeringVector<T>,
    scm: &HermitianMatrix<T>,
    scm_inv: &HermitianMatrix<T>,
) -> Result<T> {
    check_dims(d, scm)?;
    check_dims(d, scm_inv)?;
    let u = scm_inv.matvec(&d.values);
    let denom = checked_denominator(inner(&d.values, &u).re)?;
    Ok(hermitian_form(&u, scm) / (denom * denom))
}

/// MVCNR weights `zeta * Phi_vv^-1 d / sqrt(d^H Phi_vv^-1 d)`.
pub fn mvcnr_weights<T: Scalar>(
    d: &SteeringVector<T>,
    ncm_inv: &HermitianMatrix<T>,
    zeta: T,
) -> Result<Vec<Complex<T>>> {
    check_dims(d, ncm_inv)?;
    let u = ncm_inv.matvec(&d.values);
    let denom = checked_denominator(inner(&d.values, &u).re)?;
    let scale = zeta / denom.sqrt();
    Ok(u.into_iter().map(|v| v * scale).collect())
}

/// MVCNR output PSD,
/// `zeta^2 (d^H Phi_vv^-1 Phi_yy Phi_vv^-1 d) / (d^H Phi_vv^-1 d)`.
pub fn mvcnr_psd<T: Scalar>(
    d: &SteeringVector<T>,
    scm: &HermitianMatrix<T>,
    ncm_inv: &HermitianMatrix<T>,
    zeta: T,
) -> Result<T> {
    check_dims(d, scm)?;
    check_dims(d, ncm_inv)?;
    let u = ncm_inv.matvec(&d.values);
    let denom = checked_denominator(inner(&d.values, &u).re)?;
    Ok(zeta * zeta * hermitian_form(&u, scm) / denom)
}

/// NMF output PSD, `(zeta^2 / sigma_v^2) (d^H Phi_yy d) / (d^H d)`.
///
/// This is the MVCNR under spatially white noise `Phi_vv = sigma_v^2 I`; it
/// needs only the scalar noise power, not a full NCM.
pub fn nmf_psd<T: Scalar>(
    d: &SteeringVector<T>,
    scm: &HermitianMatrix<T>,
    sigma_v2: T,
    zeta: T,
) -> Result<T> {
    check_dims(d, scm)?;
    if !(sigma_v2 > T::zero()) {
        return Err(Error::InvalidParameter(
            "NMF noise power must be positive".into(),
        ));
    }
    let denom = checked_denominator(norm_sq(&d.values))?;
    Ok(zeta * zeta / sigma_v2 * hermitian_form(&d.values, scm) / denom)
}

/// MPCNR weights
/// `zeta sqrt(d^H Phi_vv^-1 d) Phi_yy^-1 d / (d^H Phi_yy^-1 d)`.
pub fn mpcnr_weights<T: Scalar>(
    d: &SteeringVector<T>,
    scm_inv: &HermitianMatrix<T>,
    ncm_inv: &HermitianMatrix<T>,
    zeta: T,
) -> Result<Vec<Complex<T>>> {
    check_dims(d, scm_inv)?;
    check_dims(d, ncm_inv)?;
    let whitened = checked_denominator(hermitian_form(&d.values, ncm_inv))?;
    let u = scm_inv.matvec(&d.values);
    let denom = checked_denominator(inner(&d.values, &u).re)?;
    let scale = zeta * whitened.sqrt() / denom;
    Ok(u.into_iter().map(|v| v * scale).collect())
}

/// MPCNR output PSD, `zeta^2 (d^H Phi_vv^-1 d) / (d^H Phi_yy^-1 d)`.
///
/// The closed form is the algebraic reduction of `w^H Phi_yy w` with the
/// MPCNR weights; equality with the literal route is pinned by a unit test.
pub fn mpcnr_psd<T: Scalar>(
    d: &SteeringVector<T>,
    scm_inv: &HermitianMatrix<T>,
    ncm_inv: &HermitianMatrix<T>,
    zeta: T,
) -> Result<T> {
    check_dims(d, scm_inv)?;
    check_dims(d, ncm_inv)?;
    let whitened = checked_denominator(hermitian_form(&d.values, ncm_inv))?;
    let denom = checked_denominator(hermitian_form(&d.values, scm_inv))?;
    Ok(zeta * zeta * whitened / denom)
}

/// Verifies criterion 1 (the source position maximizes the steered response)
/// for the GSRP weight family `w(p) = alpha(p) A h(p)` with
/// `alpha(p) = zeta / sqrt(h(p)^H A h(p))`.
///
/// Returns true iff `|w(p_s)^H h_s| >= |w(p)^H h_s|` holds for every
/// candidate within 1e-12 relative slack. Candidates with a vanishing
/// quadratic form are invisible points and count as satisfying the bound.
pub fn criterion1_check<T: Scalar>(
    a: &HermitianMatrix<T>,
    h_s: &[Complex<T>],
    candidates: &[Vec<Complex<T>>],
    zeta: T,
) -> Result<bool> {
    if h_s.len() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "source vector {} against matrix {}",
            h_s.len(),
            a.dim()
        )));
    }
    let lhs = zeta * checked_denominator(hermitian_form(h_s, a))?.sqrt();
    let a_hs = a.matvec(h_s);
    let slack = real::<T>(1e-12);
    for h in candidates {
        if h.len() != a.dim() {
            return Err(Error::DimensionMismatch(format!(
                "candidate vector {} against matrix {}",
                h.len(),
                a.dim()
            )));
        }
        let qf = hermitian_form(h, a);
        if !(qf > T::zero()) {
            continue;
        }
        // w(p)^H h_s = alpha(p) h(p)^H A h_s for Hermitian A.
        let rhs = zeta * inner(h, &a_hs).norm() / qf.sqrt();
        if rhs - lhs > slack * lhs.max(rhs) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_dims<T: Scalar>(d: &SteeringVector<T>, m: &HermitianMatrix<T>) -> Result<()> {
    if d.values.len() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "steering vector {} against matrix {}",
            d.values.len(),
            m.dim()
        )));
    }
    Ok(())
}
