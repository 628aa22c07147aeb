//! Observables along an orbit.
//!
//! Everything is stated at the level of `psi = 2 phi`: `psi_r = 2 sum phi_a`,
//! `d_s psi_r = 2 sum (C V1)_a` and `d_{u3} psi_i = 2 sum (C V3)_a`.

use crate::abelmat::{matL, vecV, matC, CVec3, PhaseState, C64};
use crate::curve::CurveParams;
use crate::error::{Error, Result};
use crate::orbit::pair_sum;

/// Same-sheet pairs closer than this in `|sin(phi_a - phi_b)|` are summed with
/// the form that stays regular at coincidence.
const PAIR_FORM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSample {
    pub s: f64,
    pub state: PhaseState,
    pub psi_r: f64,
    pub dpsi_r_ds: f64,
    pub dpsi_i_du3: f64,
    pub psi_i_circ: f64,
    pub gauge_a: f64,
    pub du_accum: CVec3,
}

pub fn psi_r(state: &PhaseState) -> f64 {
    2.0 * (state.phi[0] + state.phi[1] + state.phi[2])
}

/// `sum_a (C V_index)_a`, finite through same-sheet coincidences.
pub fn field_sum(curve: &CurveParams, state: &PhaseState, index: usize) -> Result<f64> {
    let phi = &state.phi;
    let sep = |a: usize, b: usize| (phi[a] - phi[b]).sin().abs();
    let mut closest = (0usize, 1usize);
    for (a, b) in [(1, 2), (0, 2)] {
        if sep(a, b) < sep(closest.0, closest.1) {
            closest = (a, b);
        }
    }
    let (a, b) = closest;
    let c = 3 - a - b;
    let singular = crate::abelmat::COLLISION_SINGULAR;
    if sep(a, c) < singular && sep(b, c) < singular {
        return Err(Error::TripleCollision { s: f64::NAN });
    }
    if sep(a, b) < PAIR_FORM {
        if state.sheet[a] != state.sheet[b] {
            if sep(a, b) < singular {
                return Err(Error::CollisionSingular { a: a + 1, b: b + 1, value: sep(a, b) });
            }
        } else {
            let m = 0.5 * (phi[a] + phi[b]);
            let h = 0.5 * (phi[a] - phi[b]);
            let pair = pair_sum(curve, m, h, phi[c], state.gamma(a), index)?;
            let kt = crate::curve::ktilde(curve, phi[c])?;
            let third = state.gamma(c) * kt * crate::abelmat::numerator(index, phi[a], phi[b])
                / crate::abelmat::denominator(phi, c);
            return Ok(pair + third);
        }
    }
    let v = vecV(curve, state, index)?;
    Ok((0..3).map(|a| state.gamma(a) * v[a]).sum())
}

pub fn dpsi_r_ds(curve: &CurveParams, state: &PhaseState) -> Result<f64> {
    Ok(2.0 * field_sum(curve, state, 1)?)
}

pub fn dpsi_i_du3(curve: &CurveParams, state: &PhaseState) -> Result<f64> {
    Ok(2.0 * field_sum(curve, state, 3)?)
}

/// `(lambda6 - 3 - 0.75 (d_{u3} psi_i)^2) / 2`.
pub fn gauge_a(curve: &CurveParams, state: &PhaseState) -> Result<f64> {
    Ok(gauge_a_from(curve, dpsi_i_du3(curve, state)?))
}

pub fn gauge_a_from(curve: &CurveParams, dpsi_i: f64) -> f64 {
    (curve.lambda6 - 3.0 - 0.75 * dpsi_i * dpsi_i) / 2.0
}

/// The one-forms evaluated at `state` on the displacement `C V1 ds`.
///
/// Pointwise this is `e1 ds` up to rounding; the integrator accumulates the
/// forms along its actual discrete path instead (see [`crate::orbit::StepOutcome::du`]).
pub fn abel_increment(curve: &CurveParams, state: &PhaseState, ds: f64) -> Result<CVec3> {
    let l = matL(curve, state)?;
    let dphi = (matC(state) * vecV(curve, state, 1)?).map(|x| C64::from(x * ds));
    Ok(l * dphi)
}

/// Cumulative trapezoid of `f` over `s`, starting at 0.
pub fn trapezoid_cumulative(s: &[f64], f: &[f64]) -> Vec<f64> {
    assert_eq!(s.len(), f.len());
    let mut out = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for i in 0..s.len() {
        if i > 0 {
            acc += 0.5 * (f[i] + f[i - 1]) * (s[i] - s[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `psi_i° = int^s d_{u3} psi_i ds` over the given samples.
pub fn psi_i_circ_accumulate(samples: &[OrbitSample]) -> Vec<f64> {
    let s: Vec<f64> = samples.iter().map(|x| x.s).collect();
    let f: Vec<f64> = samples.iter().map(|x| x.dpsi_i_du3).collect();
    trapezoid_cumulative(&s, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelmat::BasisVectorsC3;
    use crate::curve::{make_curve, Case};
    use crate::orbit::{default_init, rhs};

    fn fig2() -> CurveParams {
        make_curve(1.0400, 1.0392, 1.010, Case::A).unwrap()
    }

    #[test]
    fn psi_r_values() {
        let c = fig2();
        let s = default_init(&c, -0.9).unwrap();
        assert!((psi_r(&s) - 2.0 * (c.phi_b_plus - 1.8)).abs() < 1e-15);
        assert_eq!(psi_r(&s.permuted([2, 0, 1])), psi_r(&s));
    }

    #[test]
    fn dpsi_r_is_twice_rhs_sum() {
        let c = fig2();
        let s = PhaseState::new(&c, [0.5, 0.1, -0.3], [1, -1, 1]).unwrap();
        let r = rhs(&c, &s).unwrap();
        let want = 2.0 * (r[0] + r[1] + r[2]);
        assert!((dpsi_r_ds(&c, &s).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn gauge_values() {
        let c = fig2();
        assert_eq!(gauge_a_from(&c, 0.0), (c.lambda6 - 3.0) / 2.0);
        let closed = (1.0 + 4.0 * c.beta.iter().map(|b| b * b).sum::<f64>() - 3.0) / 2.0;
        assert!((gauge_a_from(&c, 0.0) - closed).abs() < 1e-12);
        let s = PhaseState::new(&c, [0.5, 0.1, -0.3], [1, -1, 1]).unwrap();
        let mut f = s;
        f.sheet = [-1, 1, -1];
        assert!((gauge_a(&c, &s).unwrap() - gauge_a(&c, &f).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn abel_increment_is_e1_ds() {
        let c = fig2();
        let s = PhaseState::new(&c, [0.5, 0.1, -0.3], [1, -1, 1]).unwrap();
        let ds = 1e-3;
        let du = abel_increment(&c, &s, ds).unwrap();
        let e1 = BasisVectorsC3::get(1) * C64::from(ds);
        assert!((du - e1).camax() < 1e-10 * ds);
        assert!(du.iter().all(|z| z.im.abs() < 1e-10 * ds));
    }

    #[test]
    fn trapezoid() {
        let s = [0.0, 0.5, 1.5, 2.0];
        let f = [3.0; 4];
        let out = trapezoid_cumulative(&s, &f);
        assert!((out[3] - 6.0).abs() < 1e-15);
        assert_eq!(trapezoid_cumulative(&[1.0], &[2.0]), vec![0.0]);
    }
}
