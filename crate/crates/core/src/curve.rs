//! The genus-three curve in angle form.
//!
//! The curve is `y^2 = -(x - b0)(x - b1)...(x - b6)` with `b0 = -1` and the six
//! other branch points on the unit circle around `b0`, `b_j = e_j + b0`,
//! `e_{2a-1} = (alpha_a + i beta_a)^2`, `e_{2a} = conj(e_{2a-1})`, `beta_a = 1/k_a`.
//! On the real arc `x = e^{2i phi} + b0` the curve collapses to the single real
//! function
//!
//! ```text
//! K~(phi) = sqrt((1 - k1^2 sin^2 phi)(1 - k2^2 sin^2 phi)(1 - k3^2 sin^2 phi)) / (k1 k2 k3)
//! ```
//!
//! and `y = 8i gamma K~(phi) e^{4i phi}`, where `gamma = +-1` is the sheet.

use nalgebra::Complex;

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Radicands in `[-RADICAND_CLAMP, 0)` are rounding noise at a branch angle and
/// are clamped to zero.
pub const RADICAND_CLAMP: f64 = 1e-14;

/// Below this value of `K~` the closed-form derivative is refused.
pub const NEAR_BRANCH: f64 = 1e-12;

/// Ordering of the moduli.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// `k1 > k2 > k3 > 1`; the real arc is `[-asin(1/k1), asin(1/k1)]`.
    A,
    /// `k3 > k2 > k1 > 1`. Only construction and branch angles are supported.
    B,
}

impl std::str::FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Case::A),
            "B" | "b" => Ok(Case::B),
            other => Err(format!("unknown case `{other}` (expected A or B)")),
        }
    }
}

/// Immutable curve data. Build with [`make_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveParams {
    pub k: [f64; 3],
    pub case: Case,
    pub beta: [f64; 3],
    pub alpha: [f64; 3],
    pub e: [C64; 6],
    pub b0: f64,
    pub b: [C64; 6],
    pub lambda6: f64,
    pub phi_b_minus: f64,
    pub phi_b_plus: f64,
    /// `k1 k2 k3`
    pub kprod: f64,
    /// `asin(1/k_a)` for each modulus.
    pub asin_beta: [f64; 3],
}

/// Validates the moduli and fills in every derived field.
pub fn make_curve(k1: f64, k2: f64, k3: f64, case: Case) -> Result<CurveParams> {
    let k = [k1, k2, k3];
    for (a, name) in ["k1", "k2", "k3"].iter().enumerate() {
        if !k[a].is_finite() || k[a] <= 1.0 {
            return Err(Error::OrderingViolation {
                field: name,
                detail: format!("{name} = {} must be a finite number > 1", k[a]),
            });
        }
    }
    match case {
        Case::A => {
            if k1 <= k2 {
                return Err(Error::OrderingViolation {
                    field: "k2",
                    detail: format!("case A needs k1 > k2, got k1 = {k1}, k2 = {k2}"),
                });
            }
            if k2 <= k3 {
                return Err(Error::OrderingViolation {
                    field: "k3",
                    detail: format!("case A needs k2 > k3, got k2 = {k2}, k3 = {k3}"),
                });
            }
        }
        Case::B => {
            if k2 <= k1 {
                return Err(Error::OrderingViolation {
                    field: "k2",
                    detail: format!("case B needs k2 > k1, got k1 = {k1}, k2 = {k2}"),
                });
            }
            if k3 <= k2 {
                return Err(Error::OrderingViolation {
                    field: "k3",
                    detail: format!("case B needs k3 > k2, got k2 = {k2}, k3 = {k3}"),
                });
            }
        }
    }

    let beta = k.map(|ka| 1.0 / ka);
    let alpha = beta.map(|bt| (1.0 - bt * bt).sqrt());
    let b0 = -1.0;
    let mut e = [C64::new(0.0, 0.0); 6];
    for a in 0..3 {
        let root = C64::new(alpha[a], beta[a]);
        e[2 * a] = root * root;
        e[2 * a + 1] = e[2 * a].conj();
    }
    let b = e.map(|ej| ej + b0);

    let lam = -(b.iter().fold(C64::new(b0, 0.0), |acc, bj| acc + bj));
    if lam.im.abs() > 1e-12 {
        return Err(Error::NonRealLambda { im: lam.im });
    }
    let closed = 1.0 + 4.0 * beta.iter().map(|bt| bt * bt).sum::<f64>();
    debug_assert!((lam.re - closed).abs() <= 1e-12 * closed.max(1.0));

    // The arc around phi = 0 is cut off by the largest modulus.
    let kmax = match case {
        Case::A => k1,
        Case::B => k3,
    };
    let phi_b_plus = (1.0 / kmax).asin();

    Ok(CurveParams {
        k,
        case,
        beta,
        alpha,
        e,
        b0,
        b,
        lambda6: lam.re,
        phi_b_minus: -phi_b_plus,
        phi_b_plus,
        kprod: k1 * k2 * k3,
        asin_beta: beta.map(f64::asin),
    })
}

impl CurveParams {
    /// `lambda6` from the closed form `1 + 4 sum beta_a^2`.
    pub fn lambda6_closed_form(&self) -> f64 {
        1.0 + 4.0 * self.beta.iter().map(|bt| bt * bt).sum::<f64>()
    }

    /// The modulus whose branch angle bounds the real arc.
    pub fn k_edge(&self) -> f64 {
        match self.case {
            Case::A => self.k[0],
            Case::B => self.k[2],
        }
    }

    pub fn contains(&self, phi: f64, slack: f64) -> bool {
        phi >= self.phi_b_minus - slack && phi <= self.phi_b_plus + slack
    }

    /// `prod_a (1 - k_a^2 sin^2 phi)`, written as `prod_a sin(p_a - phi) sin(p_a + phi)`
    /// with `p_a = asin(1/k_a)` (the `k_a^2` cancel against `(k1k2k3)^2`). This vanishes
    /// exactly at `phi = +-p_a` and has no cancellation nearby.
    fn radicand(&self, phi: f64) -> f64 {
        self.asin_beta.iter().map(|p| (p - phi).sin() * (p + phi).sin()).product::<f64>()
            * self.kprod
            * self.kprod
    }
}

/// Unsigned `K~(phi)`. The sheet sign is applied by the caller.
pub fn ktilde(curve: &CurveParams, phi: f64) -> Result<f64> {
    let r = curve.radicand(phi);
    // beyond the edge the product can turn positive again, so check the arc too
    if r < -RADICAND_CLAMP || !curve.contains(phi, 1e-12) {
        return Err(Error::DomainError { phi, radicand: r });
    }
    Ok(r.max(0.0).sqrt() / curve.kprod)
}

/// `dK/dphi` for `K = sheet * K~`.
///
/// Differentiating `K~^2 = prod(1 - k_a^2 sin^2 phi) / (k1 k2 k3)^2` gives
///
/// ```text
/// K' = -sin(2 phi) (3 (k1k2k3)^2 s^4 - 2 (k1^2k2^2 + k1^2k3^2 + k2^2k3^2) s^2 + (k1^2+k2^2+k3^2))
///      / (2 (k1k2k3)^2 K)
/// ```
///
/// with `s = sin phi`. Note the `(k1k2k3)^2` in the denominator; without it the
/// expression is off by that constant factor.
pub fn kprime(curve: &CurveParams, phi: f64, sheet: i8) -> Result<f64> {
    let kt = ktilde(curve, phi)?;
    if kt < NEAR_BRANCH {
        return Err(Error::NearBranchError { phi, value: kt });
    }
    let [k1, k2, k3] = curve.k.map(|x| x * x);
    let s2 = phi.sin().powi(2);
    let p3 = k1 * k2 * k3;
    let p2 = k1 * k2 + k1 * k3 + k2 * k3;
    let p1 = k1 + k2 + k3;
    let poly = 3.0 * p3 * s2 * s2 - 2.0 * p2 * s2 + p1;
    let kk = f64::from(sheet) * kt;
    Ok(-(2.0 * phi).sin() * poly / (2.0 * p3 * kk))
}

/// `(phi_b_minus, phi_b_plus)`.
pub fn branch_angles(curve: &CurveParams) -> (f64, f64) {
    (curve.phi_b_minus, curve.phi_b_plus)
}

/// Regular factor of `K~` in the branch chart `phi = +-(phi_b - t^2)`:
/// `K~ = |t| * ktilde_hat(t)`.
///
/// The edge factor `sin(phi_b - phi) = sin(t^2)` is divided by `t^2` analytically.
pub fn ktilde_hat(curve: &CurveParams, t: f64) -> f64 {
    let tau = t * t;
    let phi = curve.phi_b_plus - tau;
    let edge = match curve.case {
        Case::A => 0,
        Case::B => 2,
    };
    // sin(tau)/tau from the edge factor, the rest as in `radicand`
    let sinc = if tau < 1e-8 { 1.0 - tau * tau / 6.0 } else { tau.sin() / tau };
    let mut rad = sinc * (curve.asin_beta[edge] + phi).sin();
    for (a, p) in curve.asin_beta.iter().enumerate() {
        if a != edge {
            rad *= (p - phi).sin() * (p + phi).sin();
        }
    }
    rad.max(0.0).sqrt()
}

/// `xi_b(t) = (1 - k sin(phi_b - t^2)) / t^2`, regular at `t = 0` where it equals
/// `k cos(phi_b)`; its expansion starts `k cos(phi_b) + t^2/2 + ...`.
pub fn xi_b(curve: &CurveParams, t: f64) -> f64 {
    let tau = t * t;
    let ke = curve.k_edge();
    // 1 - k sin(pb - tau) = k (sin pb - sin(pb - tau)) = 2k cos(pb - tau/2) sin(tau/2)
    let half = if tau < 1e-8 { 0.5 * (1.0 - tau * tau / 24.0) } else { (tau / 2.0).sin() / tau };
    2.0 * ke * (curve.phi_b_plus - tau / 2.0).cos() * half
}

/// A point of the curve over the real arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePointHat {
    pub phi: f64,
    pub sheet: i8,
}

impl CurvePointHat {
    pub fn w(&self) -> C64 {
        C64::from_polar(1.0, self.phi)
    }

    /// `y / w = 8i gamma K~ e^{3i phi}`.
    pub fn yhat(&self, curve: &CurveParams) -> Result<C64> {
        let kt = ktilde(curve, self.phi)?;
        Ok(C64::new(0.0, 8.0 * f64::from(self.sheet) * kt) * C64::from_polar(1.0, 3.0 * self.phi))
    }

    /// `x = w^2 + b0`, so that `|x - b0| = 1`.
    pub fn x(&self, curve: &CurveParams) -> C64 {
        self.w() * self.w() + curve.b0
    }

    pub fn y(&self, curve: &CurveParams) -> Result<C64> {
        Ok(self.w() * self.yhat(curve)?)
    }

    /// Relative residual of `y^2 = -prod_{i=0..6}(x - b_i)`.
    pub fn curve_residual(&self, curve: &CurveParams) -> Result<f64> {
        let x = self.x(curve);
        let y = self.y(curve)?;
        let rhs = -curve.b.iter().fold(x - curve.b0, |acc, bj| acc * (x - bj));
        let scale = (y * y).norm().max(rhs.norm());
        if scale == 0.0 {
            return Ok(0.0);
        }
        Ok((y * y - rhs).norm() / scale)
    }
}
