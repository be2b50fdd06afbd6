//! Candidate grids, broadband SRP map assembly and argmax location estimates.
//!
//! The map engine discretizes the broadband integral into a one-sided bin sum
//! `SRP(p) = sum_k mask(k) zeta^2(k) P(k, p)` with unit-zeta narrowband PSDs
//! from the beamformer module. Grid points are evaluated in parallel; each
//! point sums its bins in a fixed order, so maps are bit-reproducible
//! regardless of thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::beamformer::{
    ds_psd, mpcnr_psd, mpdr_psd, mvcnr_psd, mvdr_psd, nmf_psd, BeamformerKind,
};
use crate::covariance::{mean_mic_power, regularize_ncm, CovarianceSpectrum};
use crate::model::{AcousticModel, ArrayGeometry, SteeringVector, Vec3};
use crate::numerics::{hermitian_inverse, HermitianMatrix};
use crate::weighting::{phat_floor, phat_transform, zeta2_flat, zeta2_frob, zeta2_snr};
use crate::weighting::{Band, WeightingKind};
use crate::{real, Error, Result, Scalar};

/// Search grid of candidate source positions.
#[derive(Debug, Clone)]
pub enum GridShape<T> {
    /// Row-major plane at fixed height: index `iy * nx + ix`, x fastest.
    Planar {
        x0: T,
        y0: T,
        z: T,
        nx: usize,
        ny: usize,
        spacing: T,
    },
    /// Circle of candidate directions at fixed radius, ascending angle.
    Azimuth {
        center: Vec3<T>,
        radius: T,
        start_deg: T,
        step_deg: T,
        count: usize,
    },
}

#[derive(Debug, Clone)]
pub struct CandidateGrid<T> {
    shape: GridShape<T>,
    points: Vec<Vec3<T>>,
}

impl<T: Scalar> CandidateGrid<T> {
    pub fn planar(x0: T, y0: T, z: T, nx: usize, ny: usize, spacing: T) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config("planar grid must have nx, ny >= 1".into()));
        }
        if !(spacing > T::zero()) {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        let mut points = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                points.push(Vec3::new(
                    x0 + spacing * real::<T>(ix as f64),
                    y0 + spacing * real::<T>(iy as f64),
                    z,
                ));
            }
        }
        Ok(Self {
            shape: GridShape::Planar {
                x0,
                y0,
                z,
                nx,
                ny,
                spacing,
            },
            points,
        })
    }

    pub fn azimuth(center: Vec3<T>, radius: T, start_deg: T, step_deg: T, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("azimuth grid must have count >= 1".into()));
        }
        if !(radius > T::zero() && step_deg > T::zero()) {
            return Err(Error::Config(
                "azimuth grid needs positive radius and step".into(),
            ));
        }
        if step_deg * real::<T>(count as f64) > real::<T>(360.0 + 1e-9) {
            return Err(Error::Config(
                "azimuth grid wraps past a full circle".into(),
            ));
        }
        let points = (0..count)
            .map(|i| {
                let theta = (start_deg + step_deg * real::<T>(i as f64)).to_radians();
                Vec3::new(
                    center.x + radius * theta.cos(),
                    center.y + radius * theta.sin(),
                    center.z,
                )
            })
            .collect();
        Ok(Self {
            shape: GridShape::Azimuth {
                center,
                radius,
                start_deg,
                step_deg,
                count,
            },
            points,
        })
    }

    pub fn shape(&self) -> &GridShape<T> {
        &self.shape
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Vec3<T> {
        self.points[index]
    }

    /// Grid ordinal of the planar cell `(ix, iy)`.
    pub fn planar_index(&self, ix: usize, iy: usize) -> Option<usize> {
        match self.shape {
            GridShape::Planar { nx, ny, .. } if ix < nx && iy < ny => Some(iy * nx + ix),
            _ => None,
        }
    }

    /// Steering angle of an azimuth grid point, in degrees.
    pub fn azimuth_deg(&self, index: usize) -> Option<T> {
        match self.shape {
            GridShape::Azimuth {
                start_deg,
                step_deg,
                count,
                ..
            } if index < count => Some(start_deg + step_deg * real::<T>(index as f64)),
            _ => None,
        }
    }

    /// Ordinal of the grid point closest to `p`; first wins on ties.
    pub fn nearest_index(&self, p: Vec3<T>) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, &q) in self.points.iter().enumerate() {
            let d = p.distance(q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Broadband steered response over a candidate grid for one frame.
#[derive(Debug, Clone)]
pub struct SrpMap<T> {
    pub grid: Arc<CandidateGrid<T>>,
    pub values: Vec<T>,
    pub frame: usize,
}

impl<T: Scalar> SrpMap<T> {
    /// Location estimate, Eq. 8: maximal value, ties broken by lowest
    /// ordinal. NaN values are skipped; an all-NaN map is an error.
    pub fn argmax(&self) -> Result<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((i, v)),
            }
        }
        best.ok_or(Error::EmptyArgmax)
    }

    /// Map rescaled to peak value 1 for export; an all-zero map is returned
    /// unchanged.
    pub fn normalized(&self) -> SrpMap<T> {
        let peak = self
            .values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a });
        if !(peak > T::zero()) {
            return self.clone();
        }
        SrpMap {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| v / peak).collect(),
            frame: self.frame,
        }
    }
}

/// Pointwise mean of frame-wise maps over a shared grid.
pub fn average_maps<T: Scalar>(maps: &[SrpMap<T>]) -> Result<SrpMap<T>> {
    let first = maps.first().ok_or(Error::EmptyArgmax)?;
    let n = first.values.len();
    let mut acc = vec![T::zero(); n];
    for map in maps {
        if map.values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "map with {} points averaged against {}",
                map.values.len(),
                n
            )));
        }
        for (a, &v) in acc.iter_mut().zip(&map.values) {
            *a += v;
        }
    }
    let scale = T::one() / real::<T>(maps.len() as f64);
    for a in &mut acc {
        *a *= scale;
    }
    Ok(SrpMap {
        grid: Arc::clone(&first.grid),
        values: acc,
        frame: first.frame,
    })
}

/// Per-bin working set shared by all grid points of one frame.
struct BinContext<T> {
    bin: usize,
    /// SCM the PSD quadratic forms see (PHAT-transformed for that weighting).
    scm: HermitianMatrix<T>,
    scm_inv: Option<HermitianMatrix<T>>,
    ncm_inv: Option<HermitianMatrix<T>>,
    sigma_v2: T,
    zeta2: T,
}

/// Evaluates broadband SRP maps for one fixed (model, beamformer, weighting,
/// grid) combination; steering vectors are cached per (point, in-band bin) at
/// construction and shared across frames.
pub struct MapEngine<T> {
    geom: ArrayGeometry<T>,
    beamformer: BeamformerKind,
    weighting: WeightingKind,
    grid: Arc<CandidateGrid<T>>,
    band_bins: Vec<usize>,
    bins: usize,
    eps_reg: T,
    steering: Vec<Complex<T>>,
    zero_steering: AtomicUsize,
}

impl<T: Scalar> MapEngine<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        geom: ArrayGeometry<T>,
        model: &AcousticModel<T>,
        beamformer: BeamformerKind,
        weighting: WeightingKind,
        band: Band<T>,
        grid: Arc<CandidateGrid<T>>,
        bin_freqs: &[T],
        eps_reg: T,
    ) -> Result<Self> {
        geom.validate()?;
        if grid.is_empty() {
            return Err(Error::Config("empty candidate grid".into()));
        }
        if bin_freqs.is_empty() {
            return Err(Error::Config("no frequency bins".into()));
        }
        if !(eps_reg >= T::zero()) {
            return Err(Error::Config("eps_reg must be non-negative".into()));
        }
        if weighting == WeightingKind::Phat && beamformer != BeamformerKind::Ds {
            return Err(Error::Config(
                "phat weighting pairs only with the ds beamformer".into(),
            ));
        }
        if model.requires_orientations() && geom.mic_orientations.is_none() {
            return Err(Error::Config(
                "composed directivity model needs microphone orientations".into(),
            ));
        }
        let nyquist = *bin_freqs.last().unwrap();
        band.validate(nyquist)?;
        if let AcousticModel::Table(table) = model {
            table.validate_bins(bin_freqs)?;
            if table.mics() != geom.mics() {
                return Err(Error::Config(format!(
                    "ATF table has {} microphones, geometry {}",
                    table.mics(),
                    geom.mics()
                )));
            }
            if table.points().len() != grid.len() {
                return Err(Error::Config(format!(
                    "ATF table covers {} points, grid has {}",
                    table.points().len(),
                    grid.len()
                )));
            }
            for (i, (&tp, &gp)) in table.points().iter().zip(grid.points()).enumerate() {
                if tp.distance(gp) > real(1e-9) {
                    return Err(Error::Config(format!(
                        "ATF table point {i} at {tp} does not match grid point {gp}"
                    )));
                }
            }
        }

        let band_bins: Vec<usize> = bin_freqs
            .iter()
            .enumerate()
            .filter(|(_, &f)| band.contains(f))
            .map(|(k, _)| k)
            .collect();
        if band_bins.is_empty() {
            return Err(Error::Config(format!(
                "band [{}, {}] selects no bins",
                band.f_lo, band.f_hi
            )));
        }

        let mics = geom.mics();
        let mut steering = Vec::with_capacity(grid.len() * band_bins.len() * mics);
        for (pi, &p) in grid.points().iter().enumerate() {
            for &k in &band_bins {
                let d = model.steer(&geom, p, pi, bin_freqs[k], k)?;
                debug_assert_eq!(d.values.len(), mics);
                steering.extend(d.values);
            }
        }

        Ok(Self {
            geom,
            beamformer,
            weighting,
            grid,
            band_bins,
            bins: bin_freqs.len(),
            eps_reg,
            steering,
            zero_steering: AtomicUsize::new(0),
        })
    }

    pub fn grid(&self) -> &Arc<CandidateGrid<T>> {
        &self.grid
    }

    /// How many (point, bin) PSD evaluations were skipped because the model
    /// produced an all-zero steering vector (point invisible to the array).
    pub fn zero_steering_encounters(&self) -> usize {
        self.zero_steering.load(Ordering::Relaxed)
    }

    fn steering_at(&self, point: usize, band_slot: usize) -> &[Complex<T>] {
        let mics = self.geom.mics();
        let base = (point * self.band_bins.len() + band_slot) * mics;
        &self.steering[base..base + mics]
    }

    /// Broadband SRP map for one frame of per-bin SCMs.
    ///
    /// `ncm` is required by MVDR/MVCNR/MPCNR and the flat weighting; NMF and
    /// frob fall back to the unit noise power convention without one.
    pub fn compute_map(
        &self,
        scm: &CovarianceSpectrum<T>,
        ncm: Option<&CovarianceSpectrum<T>>,
        frame: usize,
    ) -> Result<SrpMap<T>> {
        let mics = self.geom.mics();
        if scm.bins() != self.bins || scm.dim() != mics {
            return Err(Error::DimensionMismatch(format!(
                "SCM spectrum {}x{} against {} bins, {} mics",
                scm.bins(),
                scm.dim(),
                self.bins,
                mics
            )));
        }
        let needs_ncm = self.beamformer.requires_ncm() || self.weighting.requires_ncm();
        if needs_ncm && ncm.is_none() {
            return Err(Error::Config(format!(
                "{} with {} weighting requires a noise covariance estimate",
                self.beamformer.name(),
                self.weighting.name()
            )));
        }
        if let Some(ncm) = ncm {
            if ncm.bins() != self.bins || ncm.dim() != mics {
                return Err(Error::DimensionMismatch(format!(
                    "NCM spectrum {}x{} against {} bins, {} mics",
                    ncm.bins(),
                    ncm.dim(),
                    self.bins,
                    mics
                )));
            }
        }

        let contexts = self.prepare_bins(scm, ncm)?;
        let values: Vec<T> = (0..self.grid.len())
            .into_par_iter()
            .map(|pi| self.point_value(pi, &contexts))
            .collect::<Result<Vec<T>>>()?;

        Ok(SrpMap {
            grid: Arc::clone(&self.grid),
            values,
            frame,
        })
    }

    fn prepare_bins(
        &self,
        scm: &CovarianceSpectrum<T>,
        ncm: Option<&CovarianceSpectrum<T>>,
    ) -> Result<Vec<BinContext<T>>> {
        let mics = self.geom.mics();
        let needs_ncm_inv = self.beamformer.requires_ncm();
        let needs_flat = self.weighting == WeightingKind::Flat;
        self.band_bins
            .iter()
            .map(|&bin| {
                let raw_scm = scm.get(bin);
                let sigma_y2 = mean_mic_power(raw_scm);
                let at_bin = |source: Error| Error::AtBin {
                    bin,
                    source: Box::new(source),
                };

                let ncm_inv = if needs_ncm_inv || needs_flat {
                    let raw_ncm = ncm.unwrap().get(bin);
                    let loaded = regularize_ncm(raw_ncm, sigma_y2, self.eps_reg);
                    Some(hermitian_inverse(&loaded).map_err(at_bin)?)
                } else {
                    None
                };
                let scm_inv = if self.beamformer.requires_scm_inverse() {
                    let loaded = regularize_ncm(raw_scm, sigma_y2, self.eps_reg);
                    Some(hermitian_inverse(&loaded).map_err(at_bin)?)
                } else {
                    None
                };

                let sigma_v2 = match ncm {
                    Some(ncm) => mean_mic_power(ncm.get(bin)),
                    None => T::one(),
                };
                let zeta2 = match self.weighting {
                    WeightingKind::None | WeightingKind::Phat => T::one(),
                    WeightingKind::Snr => zeta2_snr(mics),
                    WeightingKind::Flat => zeta2_flat(ncm_inv.as_ref().unwrap(), raw_scm),
                    WeightingKind::Frob => zeta2_frob(sigma_v2, raw_scm),
                };

                let scm_eff = if self.weighting == WeightingKind::Phat {
                    let floor = phat_floor(raw_scm);
                    if floor > T::zero() {
                        phat_transform(raw_scm, floor)
                    } else {
                        raw_scm.clone()
                    }
                } else {
                    raw_scm.clone()
                };

                Ok(BinContext {
                    bin,
                    scm: scm_eff,
                    scm_inv,
                    ncm_inv,
                    sigma_v2,
                    zeta2,
                })
            })
            .collect()
    }

    fn point_value(&self, pi: usize, contexts: &[BinContext<T>]) -> Result<T> {
        let mut acc = T::zero();
        for (slot, ctx) in contexts.iter().enumerate() {
            let values = self.steering_at(pi, slot);
            if values.iter().all(|v| v.norm_sqr() == T::zero()) {
                self.zero_steering.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let d = SteeringVector {
                values: values.to_vec(),
                frequency: T::zero(),
                point: self.grid.point(pi),
            };
            let psd = match self.beamformer {
                BeamformerKind::Ds => ds_psd(&d, &ctx.scm),
                BeamformerKind::Mvdr => mvdr_psd(&d, &ctx.scm, ctx.ncm_inv.as_ref().unwrap()),
                BeamformerKind::Mpdr => mpdr_psd(&d, &ctx.scm, ctx.scm_inv.as_ref().unwrap()),
                BeamformerKind::Mvcnr => {
                    mvcnr_psd(&d, &ctx.scm, ctx.ncm_inv.as_ref().unwrap(), T::one())
                }
                BeamformerKind::Nmf => nmf_psd(&d, &ctx.scm, ctx.sigma_v2, T::one()),
                BeamformerKind::Mpcnr => mpcnr_psd(
                    &d,
                    ctx.scm_inv.as_ref().unwrap(),
                    ctx.ncm_inv.as_ref().unwrap(),
                    T::one(),
                ),
            }
            .map_err(|source| Error::AtPoint {
                bin: ctx.bin,
                point: pi,
                source: Box::new(source),
            })?;
            acc += ctx.zeta2 * psd;
        }
        Ok(acc)
    }
}

/// One-shot convenience wrapper: builds an engine and evaluates a single
/// frame.
#[allow(clippy::too_many_arguments)]
pub fn compute_map<T: Scalar>(
    scm: &CovarianceSpectrum<T>,
    ncm: Option<&CovarianceSpectrum<T>>,
    geom: ArrayGeometry<T>,
    model: &AcousticModel<T>,
    beamformer: BeamformerKind,
    weighting: WeightingKind,
    band: Band<T>,
    grid: Arc<CandidateGrid<T>>,
    bin_freqs: &[T],
    eps_reg: T,
) -> Result<SrpMap<T>> {
    let engine = MapEngine::new(
        geom, model, beamformer, weighting, band, grid, bin_freqs, eps_reg,
    )?;
    engine.compute_map(scm, ncm, 0)
}
