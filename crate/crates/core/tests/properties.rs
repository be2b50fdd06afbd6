//! Randomized invariants of the numerical kernels and model primitives.

use std::sync::Arc;

use proptest::prelude::*;

use gsrp::beamformer::mvcnr_psd;
use gsrp::model::{steer_far_field, steer_near_field, ArrayGeometry, Vec3};
use gsrp::numerics::{
    cholesky, hermitian_form, hermitian_inverse, quadratic_form, HermitianMatrix,
};
use gsrp::pipeline::wrap_angle_deg;
use gsrp::srp::{CandidateGrid, SrpMap};
use gsrp::weighting::{band_mask, phat_floor, phat_transform, zeta2_flat, Band};
use gsrp::{Cpx, Real};

fn cpx() -> impl Strategy<Value = Cpx> {
    (-1.0..1.0, -1.0..1.0).prop_map(|(re, im)| Cpx::new(re, im))
}

fn cvec(dim: usize) -> impl Strategy<Value = Vec<Cpx>> {
    prop::collection::vec(cpx(), dim)
}

/// Sum of `dim` random outer products plus a small ridge: Hermitian and PD.
fn pd_matrix(dim: usize) -> impl Strategy<Value = HermitianMatrix<Real>> {
    (
        prop::collection::vec(cvec(dim), dim),
        0.05..1.0 as Real,
    )
        .prop_map(move |(vectors, ridge)| {
            let mut m = HermitianMatrix::zeros(dim);
            for v in &vectors {
                m = m.add(&HermitianMatrix::from_outer(v));
            }
            m.add_scaled_identity(ridge)
        })
}

fn dims() -> impl Strategy<Value = usize> {
    2usize..=6
}

fn point() -> impl Strategy<Value = Vec3<Real>> {
    (-5.0..5.0 as Real, -5.0..5.0 as Real, -5.0..5.0 as Real)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn geometry(mics: usize) -> impl Strategy<Value = ArrayGeometry<Real>> {
    prop::collection::vec(
        (-0.5..0.5 as Real, -0.5..0.5 as Real, -0.5..0.5 as Real),
        mics,
    )
    .prop_map(|positions| {
        ArrayGeometry::new(
            positions
                .into_iter()
                .map(|(x, y, z)| Vec3::new(x, y, z))
                .collect(),
        )
    })
}

fn max_abs(m: &HermitianMatrix<Real>) -> Real {
    let mut v: Real = 0.0;
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            v = v.max(m.get(i, j).norm());
        }
    }
    v
}

proptest! {
    #[test]
    fn cholesky_reconstructs_the_matrix(dim in dims()) {
        let runner = pd_matrix(dim);
        proptest!(|(m in runner)| {
            let l = cholesky(&m).unwrap();
            let back = l.mul(&l.conj_transpose());
            let scale = max_abs(&m);
            for i in 0..dim {
                for j in 0..dim {
                    let err = (back.get(i, j) - m.get(i, j)).norm();
                    prop_assert!(err <= 1e-10 * scale, "entry ({i},{j}) off by {err}");
                }
            }
        });
    }

    #[test]
    fn inverse_roundtrips_to_identity(dim in dims()) {
        proptest!(|(m in pd_matrix(dim))| {
            let inv = hermitian_inverse(&m).unwrap();
            for i in 0..dim {
                let col: Vec<Cpx> = (0..dim)
                    .map(|j| if i == j { Cpx::new(1.0, 0.0) } else { Cpx::new(0.0, 0.0) })
                    .collect();
                let mapped = m.matvec(&inv.matvec(&col));
                for (j, v) in mapped.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v.re - target).abs() < 1e-8 && v.im.abs() < 1e-8);
                }
            }
        });
    }

    #[test]
    fn hermitian_form_is_positive_on_pd(dim in dims()) {
        proptest!(|(m in pd_matrix(dim), d in cvec(dim))| {
            prop_assume!(d.iter().any(|v| v.norm() > 1e-3));
            prop_assert!(hermitian_form(&d, &m) > 0.0);
        });
    }

    #[test]
    fn quadratic_form_is_conjugate_symmetric(dim in dims()) {
        proptest!(|(m in pd_matrix(dim), a in cvec(dim), b in cvec(dim))| {
            let ab = quadratic_form(&a, &m, &b).unwrap();
            let ba = quadratic_form(&b, &m, &a).unwrap();
            prop_assert!((ab - ba.conj()).norm() < 1e-10);
        });
    }

    #[test]
    fn phat_is_idempotent_and_unit_magnitude(dim in dims()) {
        proptest!(|(m in pd_matrix(dim))| {
            let floor = phat_floor(&m);
            let once = phat_transform(&m, floor);
            let twice = phat_transform(&once, phat_floor(&once));
            for i in 0..dim {
                for j in 0..dim {
                    prop_assert!((once.get(i, j).norm() - 1.0).abs() < 1e-9);
                    prop_assert!((twice.get(i, j) - once.get(i, j)).norm() < 1e-9);
                }
            }
        });
    }

    #[test]
    fn band_mask_agrees_with_half_open_interval(
        freqs in prop::collection::vec(0.0..8000.0 as Real, 1..64),
        lo in 0.0..4000.0 as Real,
        width in 1.0..4000.0 as Real,
    ) {
        let band = Band { f_lo: lo, f_hi: lo + width };
        let mask = band_mask(&freqs, band);
        for (f, &m) in freqs.iter().zip(&mask) {
            prop_assert_eq!(m, *f >= lo && *f < lo + width);
        }
    }

    #[test]
    fn far_field_steering_is_unit_modulus(
        mics in 2usize..=6,
        f in 50.0..8000.0 as Real,
    ) {
        proptest!(|(geom in geometry(mics), p in point())| {
            let d = steer_far_field(&geom, p, f);
            for v in &d.values {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        });
    }

    #[test]
    fn near_field_magnitude_decays_with_range(
        mics in 2usize..=6,
        f in 50.0..8000.0 as Real,
        stretch in 1.1..4.0 as Real,
    ) {
        proptest!(|(geom in geometry(mics), p in point())| {
            let r_min = 0.05;
            let near = steer_near_field(&geom, p, f, r_min);
            let far = steer_near_field(&geom, p.scaled(stretch), f, r_min);
            for m in 0..mics {
                let r_near = p.distance(geom.mic_positions[m]).max(r_min);
                let r_far = p
                    .scaled(stretch)
                    .distance(geom.mic_positions[m])
                    .max(r_min);
                if r_far > r_near {
                    prop_assert!(far.values[m].norm() <= near.values[m].norm() + 1e-15);
                }
            }
        });
    }

    #[test]
    fn argmax_matches_a_naive_scan(
        values in prop::collection::vec(
            prop_oneof![9 => (-1e3..1e3 as Real).boxed(), 1 => Just(Real::NAN).boxed()],
            1..128,
        ),
    ) {
        let grid = Arc::new(CandidateGrid::azimuth(Vec3::zero(), 1.0, 0.0, 1.0, values.len()).unwrap());
        let map = SrpMap { grid, values: values.clone(), frame: 0 };
        let naive = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .fold(None::<(usize, Real)>, |best, (i, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            });
        match naive {
            Some((i, v)) => {
                let (ai, av) = map.argmax().unwrap();
                prop_assert_eq!(ai, i);
                prop_assert_eq!(av, v);
            }
            None => prop_assert!(map.argmax().is_err()),
        }
    }

    #[test]
    fn wrapped_angle_is_folded_and_symmetric(delta in -1e4..1e4 as Real, turns in -5i32..5) {
        let w = wrap_angle_deg(delta);
        prop_assert!((0.0..=180.0).contains(&w));
        prop_assert!((w - wrap_angle_deg(-delta)).abs() < 1e-9);
        let shifted = wrap_angle_deg(delta + 360.0 * turns as Real);
        prop_assert!((w - shifted).abs() < 1e-6);
    }

    #[test]
    fn flat_weighting_stays_in_unit_interval(dim in dims()) {
        proptest!(|(ncm in pd_matrix(dim), scm in pd_matrix(dim))| {
            let z2 = zeta2_flat(&hermitian_inverse(&ncm).unwrap(), &scm);
            prop_assert!(z2 > 0.0 && z2 <= 1.0, "zeta2 = {z2}");
        });
    }

    #[test]
    fn mvcnr_psd_ignores_steering_scale(dim in dims()) {
        proptest!(|(
            scm in pd_matrix(dim),
            ncm in pd_matrix(dim),
            d in cvec(dim),
            c in cpx(),
        )| {
            prop_assume!(d.iter().any(|v| v.norm() > 1e-3));
            prop_assume!(c.norm() > 1e-3);
            let ncm_inv = hermitian_inverse(&ncm).unwrap();
            let base = {
                let sv = steering_of(&d, 1000.0);
                mvcnr_psd(&sv, &scm, &ncm_inv, 1.0).unwrap()
            };
            let scaled = {
                let values: Vec<Cpx> = d.iter().map(|v| v * c).collect();
                let sv = steering_of(&values, 1000.0);
                mvcnr_psd(&sv, &scm, &ncm_inv, 1.0).unwrap()
            };
            prop_assert!((scaled / base - 1.0).abs() < 1e-9);
        });
    }
}

fn steering_of(values: &[Cpx], f: Real) -> gsrp::model::SteeringVector<Real> {
    gsrp::model::SteeringVector {
        values: values.to_vec(),
        frequency: f,
        point: Vec3::zero(),
    }
}
