//! Transition matrices between angle differentials and the flat coordinates of
//! the Jacobian, and the real frame `V1, V2, V3`.
//!
//! Conventions (fixed once here, everything else is derived):
//!
//! * `K_j = gamma_j K~(phi_j)` is the signed value on the sheet of point `j`.
//! * `C = diag(gamma_1, gamma_2, gamma_3)`.
//! * The natural one-forms `x^{i-1} dx / 2y` on the real arc are
//!   `e^{-2i phi}/(8K)`, `i e^{-i phi} sin(phi)/(4K)` and `-sin^2(phi)/(2K)` times `dphi`.
//! * `du = L dphi` uses the combinations
//!
//!   ```text
//!   row 1: (1 - i sin 2phi_j) / (8 K_j)      =  nu1 - nu3/2
//!   row 2: -i e^{-i phi_j} sin(phi_j) / (4 K_j) = -nu2
//!   row 3:  sin^2(phi_j) / (2 K_j)           = -nu3
//!   ```
//!
//!   These are the unique rows for which `L C V_i = e_i` holds with
//!   `e1 = (1/2, -1/2, 1)`, `e2 = (1, 0, 0)`, `e3 = (i/2, i/2, 0)`.
//!   Rows 2 and 3 are the textbook `-(nu2, nu3)`; row 1 needs the `-nu3/2`
//!   admixture because `nu1` annihilates `C V1`.
//! * With these rows `det L = -i sin(phi1-phi2) sin(phi2-phi3) sin(phi3-phi1) / (64 K1 K2 K3)`.
//!   The phase `-i` is forced: `det L = det(e1,e2,e3) / det(C V)` with `det(e) = i/2`
//!   and `det(C V)` real.

use nalgebra::{Complex, Matrix3, Vector3};

use crate::curve::{ktilde, CurveParams};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat3 = Matrix3<C64>;
pub type CVec3 = Vector3<C64>;

/// `K~` below this makes `L` unusable (columns scale like `1/K`).
pub const BRANCH_SINGULAR: f64 = 1e-12;
/// `|sin(phi_a - phi_b)|` below this makes `K M` unusable.
pub const COLLISION_SINGULAR: f64 = 1e-10;

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Flat basis of `C^3`; `e1` and `e2` span the real plane.
pub struct BasisVectorsC3;

impl BasisVectorsC3 {
    pub const E1: [C64; 3] = [c(0.5, 0.0), c(-0.5, 0.0), c(1.0, 0.0)];
    pub const E2: [C64; 3] = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
    pub const E3: [C64; 3] = [c(0.0, 0.5), c(0.0, 0.5), c(0.0, 0.0)];

    pub fn get(i: usize) -> CVec3 {
        let v = match i {
            1 => Self::E1,
            2 => Self::E2,
            3 => Self::E3,
            _ => panic!("basis index {i} out of range 1..=3"),
        };
        CVec3::new(v[0], v[1], v[2])
    }
}

/// Three points on the real arc with their sheets.
///
/// The triple is an unordered multiset; the storage order is only a labelling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub phi: [f64; 3],
    pub sheet: [i8; 3],
}

/// Samples may sit this far outside the arc because of rounding.
pub const CONFINEMENT_SLACK: f64 = 1e-9;

impl PhaseState {
    pub fn new(curve: &CurveParams, phi: [f64; 3], sheet: [i8; 3]) -> Result<Self> {
        for a in 0..3 {
            if !phi[a].is_finite() || !curve.contains(phi[a], CONFINEMENT_SLACK) {
                return Err(Error::InvalidState(format!(
                    "phi{} = {} lies outside [{}, {}]",
                    a + 1,
                    phi[a],
                    curve.phi_b_minus,
                    curve.phi_b_plus
                )));
            }
            if sheet[a] != 1 && sheet[a] != -1 {
                return Err(Error::InvalidState(format!(
                    "g{} = {} must be +1 or -1",
                    a + 1,
                    sheet[a]
                )));
            }
        }
        if phi[0] == phi[1] && phi[1] == phi[2] {
            return Err(Error::InvalidState(
                "all three angles coincide".to_string(),
            ));
        }
        Ok(PhaseState { phi, sheet })
    }

    pub fn gamma(&self, a: usize) -> f64 {
        f64::from(self.sheet[a])
    }

    /// Whether the labels are in decreasing order `phi1 >= phi2 >= phi3`.
    pub fn is_canonical(&self) -> bool {
        self.phi[0] >= self.phi[1] && self.phi[1] >= self.phi[2]
    }

    /// Unsigned `K~` of every component.
    pub fn ktildes(&self, curve: &CurveParams) -> Result<[f64; 3]> {
        Ok([
            ktilde(curve, self.phi[0])?,
            ktilde(curve, self.phi[1])?,
            ktilde(curve, self.phi[2])?,
        ])
    }

    /// The state with the points relabelled by `perm` (new slot `i` takes old `perm[i]`).
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        PhaseState {
            phi: perm.map(|p| self.phi[p]),
            sheet: perm.map(|p| self.sheet[p]),
        }
    }
}

/// The other two labels of `a`, in cyclic order.
pub fn others(a: usize) -> (usize, usize) {
    ((a + 1) % 3, (a + 2) % 3)
}

/// Numerator of component `a` of `V_index`, as a function of the other two angles.
/// Symmetric in its arguments.
pub fn numerator(index: usize, pb: f64, pc: f64) -> f64 {
    match index {
        1 => 2.0 * (pb - pc).cos(),
        2 => 8.0 * pb.sin() * pc.sin(),
        3 => 2.0 * (pb + pc).sin(),
        _ => panic!("V index {index} out of range 1..=3"),
    }
}

/// `sin(phi_b - phi_a) sin(phi_c - phi_a)`.
pub fn denominator(phi: &[f64; 3], a: usize) -> f64 {
    let (b, c) = others(a);
    (phi[b] - phi[a]).sin() * (phi[c] - phi[a]).sin()
}

fn min_separation(phi: &[f64; 3]) -> (usize, usize, f64) {
    let mut best = (0, 1, f64::INFINITY);
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        let v = (phi[a] - phi[b]).sin().abs();
        if v < best.2 {
            best = (a, b, v);
        }
    }
    best
}

fn check_collision(state: &PhaseState) -> Result<()> {
    let (a, b, v) = min_separation(&state.phi);
    if v < COLLISION_SINGULAR {
        return Err(Error::CollisionSingular { a: a + 1, b: b + 1, value: v });
    }
    Ok(())
}

fn signed_k(curve: &CurveParams, state: &PhaseState) -> Result<[f64; 3]> {
    let kt = state.ktildes(curve)?;
    for (a, &v) in kt.iter().enumerate() {
        if v < BRANCH_SINGULAR {
            return Err(Error::BranchSingular { component: a + 1, value: v });
        }
    }
    Ok([0, 1, 2].map(|a| state.gamma(a) * kt[a]))
}

/// `K`-free part of column `j` of `L`: the column equals this divided by `K_j`.
pub fn one_form_numerators(phi: f64) -> CVec3 {
    let (s, co) = phi.sin_cos();
    let e_m = C64::new(co, -s);
    CVec3::new(
        C64::new(1.0, -(2.0 * phi).sin()) / 8.0,
        C64::new(0.0, -1.0) * e_m * s / 4.0,
        C64::new(s * s / 2.0, 0.0),
    )
}

/// The matrix `L` with `du = L dphi`. Columns are indexed by the points.
#[allow(non_snake_case)]
pub fn matL(curve: &CurveParams, state: &PhaseState) -> Result<CMat3> {
    let kk = signed_k(curve, state)?;
    let mut m = CMat3::zeros();
    for j in 0..3 {
        m.set_column(j, &(one_form_numerators(state.phi[j]) / C64::from(kk[j])));
    }
    Ok(m)
}

/// `L` built from the unmodified `-(nu1, nu2, nu3)`. Kept because its inverse is
/// the textbook `K M` below, which gives an independent check of the algebra.
pub fn mat_l_reference(curve: &CurveParams, state: &PhaseState) -> Result<CMat3> {
    let kk = signed_k(curve, state)?;
    let mut m = CMat3::zeros();
    for j in 0..3 {
        let p = state.phi[j];
        let (s, co) = p.sin_cos();
        let k = C64::from(kk[j]);
        m[(0, j)] = -C64::from_polar(1.0, -2.0 * p) / (8.0 * k);
        m[(1, j)] = -C64::new(0.0, 1.0) * C64::new(co, -s) * s / (4.0 * k);
        m[(2, j)] = C64::from(s * s) / (2.0 * k);
    }
    Ok(m)
}

/// The diagonal factor and the explicit matrix whose product inverts
/// [`mat_l_reference`].
pub fn km_reference_factors(curve: &CurveParams, state: &PhaseState) -> Result<(CMat3, CMat3)> {
    check_collision(state)?;
    let kk = signed_k(curve, state)?;
    let phi = &state.phi;
    let mut kd = CMat3::zeros();
    let mut m = CMat3::zeros();
    for a in 0..3 {
        let (b, c) = others(a);
        kd[(a, a)] = C64::from(-kk[a] / denominator(phi, a));
        let sb = phi[b].sin();
        let sc = phi[c].sin();
        m[(a, 0)] = C64::from(8.0 * sb * sc);
        m[(a, 1)] = C64::new(0.0, -4.0) * C64::new(-(phi[b] + phi[c]).sin(), 2.0 * sb * sc);
        m[(a, 2)] = -2.0 * C64::from_polar(1.0, -(phi[b] + phi[c]));
    }
    Ok((kd, m))
}

/// `L^{-1}`, assembled from the diagonal/explicit factorisation.
///
/// Columns: `(C V2, -C(V2 + 2i V3), C(V1 - V2 - i V3))`.
#[allow(non_snake_case)]
pub fn matKM(curve: &CurveParams, state: &PhaseState) -> Result<CMat3> {
    let (kd, m) = km_reference_factors(curve, state)?;
    // L = T (-L_ref) with T = [[1,0,-1/2],[0,-1,0],[0,0,-1]] and T^2 = I.
    let t = CMat3::new(
        c(1.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0),
        c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0),
        c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0),
    );
    Ok(-(kd * m) * t)
}

/// `V_index` evaluated with unsigned `K~`.
#[allow(non_snake_case)]
pub fn vecV(curve: &CurveParams, state: &PhaseState, index: usize) -> Result<Vector3<f64>> {
    check_collision(state)?;
    let kt = state.ktildes(curve)?;
    let mut v = Vector3::zeros();
    for a in 0..3 {
        let (b, c) = others(a);
        v[a] = kt[a] * numerator(index, state.phi[b], state.phi[c]) / denominator(&state.phi, a);
    }
    Ok(v)
}

/// `C = diag(gamma)`.
#[allow(non_snake_case)]
pub fn matC(state: &PhaseState) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(state.gamma(0), state.gamma(1), state.gamma(2)))
}

/// `max_i || L C V_i - e_i ||_inf`.
pub fn basis_identity_residual(curve: &CurveParams, state: &PhaseState) -> Result<f64> {
    let l = matL(curve, state)?;
    basis_identity_residual_with(curve, state, &l)
}

/// Same as [`basis_identity_residual`] for a caller-supplied `L`.
pub fn basis_identity_residual_with(
    curve: &CurveParams,
    state: &PhaseState,
    l: &CMat3,
) -> Result<f64> {
    let cm = matC(state);
    let mut worst = 0.0f64;
    for i in 1..=3 {
        let cv = (cm * vecV(curve, state, i)?).map(C64::from);
        let r = l * cv - BasisVectorsC3::get(i);
        worst = worst.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Closed form of `det L` (see module docs for the phase).
pub fn det_closed_form(curve: &CurveParams, state: &PhaseState) -> Result<C64> {
    let kk = signed_k(curve, state)?;
    let p = &state.phi;
    let f = (p[0] - p[1]).sin() * (p[1] - p[2]).sin() * (p[2] - p[0]).sin()
        / (64.0 * kk[0] * kk[1] * kk[2]);
    Ok(C64::new(0.0, -f))
}

const D_MAT: [[C64; 3]; 3] = [
    [c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)],
    [c(0.0, 0.0), c(0.0, -2.0), c(0.0, -1.0)],
    [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
];

const D_INV: [[C64; 3]; 3] = [
    [c(1.0, 0.0), c(0.0, 0.5), c(0.5, 0.0)],
    [c(0.0, 0.0), c(0.0, 0.5), c(-0.5, 0.0)],
    [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
];

fn apply(m: &[[C64; 3]; 3], v: &CVec3) -> CVec3 {
    CVec3::from_fn(|r, _| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

/// `dt = D du`: maps `e1` to the pure `s` direction `(0, 0, 1)` and `e2` to `(1, 0, 0)`.
#[allow(non_snake_case)]
pub fn transform_D(du: &CVec3) -> CVec3 {
    apply(&D_MAT, du)
}

#[allow(non_snake_case)]
pub fn transform_D_inverse(dt: &CVec3) -> CVec3 {
    apply(&D_INV, dt)
}
