//! Integration of the real orbit `dphi = C V1 ds`.
//!
//! The vector field is first order Euler, as in the reference computation, but
//! two places need a different coordinate to stay regular:
//!
//! * **Branch points.** Near `phi = +-phi_b` the speed goes like `sqrt(phi_b - |phi|)`.
//!   In the chart `phi = e (phi_b - t^2)` one has `K = sigma t K^(t)` with a regular
//!   `K^` and `sigma = gamma sgn(t)`, and `dt/ds` is finite. Crossing `t = 0` is the
//!   turning point, and it flips the sheet.
//! * **Collisions.** A pair on the same sheet approaching each other has
//!   `(phi_a - phi_b)(d/ds)(phi_a - phi_b) -> const`, so the separation closes
//!   like a square root. The pair is advanced in `(m, delta)` with
//!   `m = (phi_a + phi_b)/2` and `delta = (phi_a - phi_b)^2`, both smooth in `s`.
//!   When `delta` reaches zero the pair passes through each other, and both sheets
//!   flip (the real slice folds there exactly as it does at a branch point).
//!
//! Both charts are recomputed from the plain state at every step, so a
//! [`PhaseState`] is all that needs to be carried between steps.

use crate::abelmat::{
    denominator, numerator, one_form_numerators, others, CVec3, PhaseState, C64,
};
use crate::curve::{kprime, ktilde, ktilde_hat, xi_b, Case, CurveParams};
use crate::error::{Error, Result};
use crate::observe::{self, OrbitSample};

/// Which real field to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `dphi = C V1 ds`.
    V1S,
    /// `dphi = C V2 dt`. Experimental.
    V2T,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::V1S => 1,
            Direction::V2T => 2,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "V1_s" | "v1_s" | "s" => Ok(Direction::V1S),
            "V2_t" | "v2_t" | "t" => Ok(Direction::V2T),
            other => Err(format!("unknown direction `{other}` (expected V1_s or V2_t)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub ds: f64,
    pub s_max: f64,
    /// Enter the branch chart when `K~` drops below this.
    pub eps_branch: f64,
    /// Opposite-sheet pairs closer than this in `|sin(phi_a - phi_b)|` are an error,
    /// and observables switch to the coincidence limit below it.
    pub eps_collision: f64,
    pub output_stride: usize,
    pub direction: Direction,
    /// Half-width of the branch chart in `t`; `phi` is within `width^2` of the end.
    pub branch_chart_width: f64,
    /// Same-sheet pairs closer than this in `|phi_a - phi_b|` use the pair chart.
    pub pair_chart_width: f64,
    /// Allows case B curves and the `V2_t` direction.
    pub experimental: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            ds: 1e-5,
            s_max: 1.0,
            eps_branch: 1e-8,
            eps_collision: 1e-6,
            output_stride: 1,
            direction: Direction::V1S,
            branch_chart_width: 0.02,
            pair_chart_width: 0.02,
            experimental: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, detail: String| {
            Err(Error::Config { field: field.to_string(), detail })
        };
        if !(self.ds.is_finite() && self.ds > 0.0) {
            return bad("ds", format!("must be positive, got {}", self.ds));
        }
        if !(self.s_max.is_finite() && self.s_max >= 0.0) {
            return bad("s_max", format!("must be >= 0, got {}", self.s_max));
        }
        if !(self.eps_branch > 0.0) {
            return bad("eps_branch", format!("must be positive, got {}", self.eps_branch));
        }
        if !(self.eps_collision > 0.0) {
            return bad("eps_collision", format!("must be positive, got {}", self.eps_collision));
        }
        if self.output_stride == 0 {
            return bad("output_stride", "must be a positive integer".to_string());
        }
        if !(self.branch_chart_width > 0.0 && self.branch_chart_width < 0.5) {
            return bad("branch_chart_width", format!("must lie in (0, 0.5), got {}", self.branch_chart_width));
        }
        if !(self.pair_chart_width > 0.0 && self.pair_chart_width < 0.5) {
            return bad("pair_chart_width", format!("must lie in (0, 0.5), got {}", self.pair_chart_width));
        }
        if self.direction == Direction::V2T && !self.experimental {
            return bad("direction", "V2_t requires experimental = true".to_string());
        }
        Ok(())
    }
}

/// `C V_index`, the plain right-hand side.
pub fn rhs_dir(curve: &CurveParams, state: &PhaseState, index: usize) -> Result<[f64; 3]> {
    let phi = &state.phi;
    for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
        let v = (phi[a] - phi[b]).sin().abs();
        if v < crate::abelmat::COLLISION_SINGULAR {
            return Err(Error::CollisionSingular { a: a + 1, b: b + 1, value: v });
        }
    }
    let mut r = [0.0; 3];
    for (a, slot) in r.iter_mut().enumerate() {
        *slot = component_rate(curve, state, a, index)?.expect("separated points have a nonzero denominator");
    }
    Ok(r)
}

/// Plain rate of component `c`, or `None` if its denominator vanishes.
fn component_rate(curve: &CurveParams, state: &PhaseState, c: usize, index: usize) -> Result<Option<f64>> {
    let (b, d) = others(c);
    let den = denominator(&state.phi, c);
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(state.gamma(c) * ktilde(curve, state.phi[c])? * numerator(index, state.phi[b], state.phi[d]) / den))
}

/// `dphi/ds = C V1`.
pub fn rhs(curve: &CurveParams, state: &PhaseState) -> Result<[f64; 3]> {
    rhs_dir(curve, state, 1)
}

/// Component `a` near one end of the arc, in the coordinate `phi = end (phi_b - t^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchChart {
    pub component: usize,
    /// `+1` at `phi_b_plus`, `-1` at `phi_b_minus`.
    pub end: f64,
    pub t: f64,
    /// `gamma = sigma sgn(t)`; constant while in the chart.
    pub sigma: f64,
}

impl BranchChart {
    /// Chart for component `a`, with `t >= 0` so that `sigma` is the current sheet.
    pub fn enter(curve: &CurveParams, state: &PhaseState, a: usize) -> Self {
        let end = if state.phi[a] >= 0.0 { 1.0 } else { -1.0 };
        let t = (curve.phi_b_plus - end * state.phi[a]).max(0.0).sqrt();
        BranchChart { component: a, end, t, sigma: state.gamma(a) }
    }

    pub fn phi(&self, curve: &CurveParams, t: f64) -> f64 {
        self.end * (curve.phi_b_plus - t * t)
    }

    pub fn xi(&self, curve: &CurveParams) -> f64 {
        xi_b(curve, self.t)
    }

    pub fn sheet_at(&self, t: f64) -> i8 {
        let s = if t < 0.0 { -self.sigma } else { self.sigma };
        s as i8
    }

    /// `dt/ds` given the angles of the other two points.
    pub fn rate(&self, curve: &CurveParams, phi: &[f64; 3], index: usize) -> f64 {
        let a = self.component;
        let (b, c) = others(a);
        let den = denominator(phi, a);
        -self.end * self.sigma * ktilde_hat(curve, self.t) * numerator(index, phi[b], phi[c])
            / (2.0 * den)
    }
}

/// Local data at a same-sheet crossing `phi_a = phi_b = phi0` with the third point at `phi3`.
///
/// With `phi_a = phi0 + eta1`, `phi_b = phi0 - eta2` the field reduces to
/// `(eta1 + eta2)(1 - b1 eta1 - b2 eta2) d eta1 = -a ds`, which gives
/// `eta2 = eta1 - (b1 + b2) eta1^2 + ...` and `s - s0 = -eta1^2/a + (b1 + b2) eta1^3/a + ...`.
///
/// `a_coef` is normalised for the field actually integrated (`C V1`, with its
/// factor 2 in the numerator), which makes it `-2 K0 cos(phi0 - phi3)/sin(phi0 - phi3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionExpansion {
    pub s0: f64,
    pub phi0: f64,
    pub phi3: f64,
    /// Signed `K` at `phi0` on the incoming sheet.
    pub k0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub a_coef: f64,
    pub b1_coef: f64,
    pub b2_coef: f64,
}

impl CollisionExpansion {
    pub fn at(curve: &CurveParams, s0: f64, phi0: f64, phi3: f64, sheet: i8) -> Result<Self> {
        let k0 = f64::from(sheet) * ktilde(curve, phi0)?;
        let dk = kprime(curve, phi0, sheet)?;
        let d = phi0 - phi3;
        Ok(CollisionExpansion {
            s0,
            phi0,
            phi3,
            k0,
            eta1: 0.0,
            eta2: 0.0,
            a_coef: -2.0 * k0 * d.cos() / d.sin(),
            b1_coef: dk / k0 + (phi3 - phi0).cos() / (phi3 - phi0).sin(),
            b2_coef: d.tan(),
        })
    }

    pub fn eta2_of(&self, eta1: f64) -> f64 {
        eta1 - (self.b1_coef + self.b2_coef) * eta1 * eta1
    }

    /// `s - s0` as a function of `eta1`, truncated after the cubic term.
    pub fn s_offset(&self, eta1: f64) -> f64 {
        let bb = self.b1_coef + self.b2_coef;
        (-eta1 * eta1 + bb * eta1.powi(3)) / self.a_coef
    }

    pub fn with_eta1(mut self, eta1: f64) -> Self {
        self.eta1 = eta1;
        self.eta2 = self.eta2_of(eta1);
        self
    }

    /// `d(phi_a + phi_b)/ds` at the crossing: `-a (b1 + b2)`.
    pub fn pair_rate_limit(&self) -> f64 {
        -self.a_coef * (self.b1_coef + self.b2_coef)
    }
}

/// `d/dpb numerator(index, pb, pc)`.
fn numerator_d1(index: usize, pb: f64, pc: f64) -> f64 {
    match index {
        1 => -2.0 * (pb - pc).sin(),
        2 => 8.0 * pb.cos() * pc.sin(),
        3 => 2.0 * (pb + pc).cos(),
        _ => panic!("V index {index} out of range 1..=3"),
    }
}

/// `H(h) = gamma K~(m + h) N(m - h, phi3) / sin(phi3 - m - h)`.
///
/// For a pair `phi_a = m + h`, `phi_b = m - h` on a common sheet, component `a` of
/// `C V_index` is `-H(h)/sin 2h` and component `b` is `H(-h)/sin 2h`.
fn pair_h(curve: &CurveParams, m: f64, h: f64, phi3: f64, gamma: f64, index: usize) -> Result<f64> {
    Ok(gamma * ktilde(curve, m + h)? * numerator(index, m - h, phi3) / (phi3 - m - h).sin())
}

fn pair_h_prime0(curve: &CurveParams, m: f64, phi3: f64, gamma: f64, index: usize) -> Result<f64> {
    let k = ktilde(curve, m)?;
    let dk = kprime(curve, m, 1)?;
    let s = (phi3 - m).sin();
    let n = numerator(index, m, phi3);
    let dn = -numerator_d1(index, m, phi3);
    Ok(gamma * (dk * n / s + k * dn / s + k * n * (phi3 - m).cos() / (s * s)))
}

/// Below this `|h|` the pair sum uses its `h -> 0` limit.
const PAIR_LIMIT_H: f64 = 1e-7;

/// Sum of the two pair components of `C V_index`, regular through `h = 0`.
pub fn pair_sum(
    curve: &CurveParams,
    m: f64,
    h: f64,
    phi3: f64,
    gamma: f64,
    index: usize,
) -> Result<f64> {
    if h.abs() < PAIR_LIMIT_H {
        return Ok(-pair_h_prime0(curve, m, phi3, gamma, index)?);
    }
    Ok((pair_h(curve, m, -h, phi3, gamma, index)? - pair_h(curve, m, h, phi3, gamma, index)?)
        / (2.0 * h).sin())
}

/// `(dm/ds, d delta/ds)` for a same-sheet pair.
pub fn pair_rates(
    curve: &CurveParams,
    m: f64,
    h: f64,
    phi3: f64,
    gamma: f64,
    index: usize,
) -> Result<(f64, f64)> {
    let hp = pair_h(curve, m, h, phi3, gamma, index)?;
    let hm = pair_h(curve, m, -h, phi3, gamma, index)?;
    let ratio = if h.abs() < 1e-8 { 2.0 } else { 4.0 * h / (2.0 * h).sin() };
    let ddelta = -ratio * (hp + hm);
    let dm = pair_sum(curve, m, h, phi3, gamma, index)? / 2.0;
    Ok((dm, ddelta))
}

/// How a step treats each point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPlan {
    pub branch: [Option<BranchChart>; 3],
    pub pair: Option<(usize, usize)>,
}

/// A same-sheet crossing found inside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub a: usize,
    pub b: usize,
    /// Position inside the step, in `[0, 1]`.
    pub frac: f64,
    pub phi0: f64,
    pub phi3: f64,
    pub sheet_before: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: PhaseState,
    /// `(component, fraction of the step)` for each sheet flip at a branch point.
    pub branch_flips: Vec<(usize, f64)>,
    pub crossing: Option<Crossing>,
    /// One-forms integrated along the straight segments of this step.
    pub du: CVec3,
    pub plan: ChartPlan,
}

fn in_branch_zone(curve: &CurveParams, phi: f64, w: f64) -> bool {
    curve.phi_b_plus - phi.abs() < w * w
}

/// Picks the charts for the next step.
pub fn plan_step(curve: &CurveParams, state: &PhaseState, cfg: &IntegratorConfig) -> Result<ChartPlan> {
    let phi = &state.phi;
    let sep = |a: usize, b: usize| (phi[a] - phi[b]).sin().abs();
    if sep(0, 1) < cfg.eps_collision && sep(1, 2) < cfg.eps_collision && sep(0, 2) < cfg.eps_collision {
        return Err(Error::TripleCollision { s: f64::NAN });
    }
    let wb = cfg.branch_chart_width;

    // closest pair
    let mut pair = None;
    let mut best = f64::INFINITY;
    for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
        let d = (phi[a] - phi[b]).abs();
        if d < best {
            best = d;
            pair = Some((a, b));
        }
    }
    let (a, b) = pair.expect("three points have a closest pair");
    let mut pair = None;
    if best < cfg.pair_chart_width {
        let near_branch = in_branch_zone(curve, phi[a], wb) || in_branch_zone(curve, phi[b], wb);
        if state.sheet[a] == state.sheet[b] && !near_branch {
            pair = Some((a, b));
        } else if sep(a, b) < cfg.eps_collision {
            if state.sheet[a] != state.sheet[b] {
                return Err(Error::CollisionSingular { a: a + 1, b: b + 1, value: sep(a, b) });
            }
            return Err(Error::ExpansionDiverged(format!(
                "points {} and {} collide inside the branch chart",
                a + 1,
                b + 1
            )));
        }
    }

    let mut branch = [None, None, None];
    for c in 0..3 {
        if let Some((p, q)) = pair {
            if c == p || c == q {
                continue;
            }
        }
        let kt = ktilde(curve, phi[c])?;
        let mut enter = in_branch_zone(curve, phi[c], wb) || kt < cfg.eps_branch;
        if !enter {
            // would a plain step land in (or beyond) the zone?
            if let Some(r) = component_rate(curve, state, c, cfg.direction.index())? {
                let p1 = phi[c] + r * cfg.ds;
                enter = in_branch_zone(curve, p1, wb) || !curve.contains(p1, 0.0);
            }
        }
        if enter {
            branch[c] = Some(BranchChart::enter(curve, state, c));
        }
    }
    Ok(ChartPlan { branch, pair })
}

fn segment_du(curve: &CurveParams, p0: f64, p1: f64, sheet: i8) -> Result<CVec3> {
    let mid = 0.5 * (p0 + p1);
    let k = f64::from(sheet) * ktilde(curve, mid)?;
    Ok(one_form_numerators(mid) * C64::from((p1 - p0) / k))
}

/// One explicit step with the charts chosen by [`plan_step`].
pub fn step(curve: &CurveParams, state: &PhaseState, cfg: &IntegratorConfig) -> Result<StepOutcome> {
    let plan = plan_step(curve, state, cfg)?;
    step_with_plan(curve, state, cfg, plan)
}

/// A step with component `a` forced into the branch chart.
pub fn branch_step(
    curve: &CurveParams,
    state: &PhaseState,
    a: usize,
    cfg: &IntegratorConfig,
) -> Result<StepOutcome> {
    let mut plan = plan_step(curve, state, cfg)?;
    if let Some((p, q)) = plan.pair {
        if p == a || q == a {
            plan.pair = None;
        }
    }
    plan.branch[a] = Some(BranchChart::enter(curve, state, a));
    step_with_plan(curve, state, cfg, plan)
}

/// A step with the pair `(a, b)` forced into the pair chart. The pair must share a sheet.
pub fn collision_step(
    curve: &CurveParams,
    state: &PhaseState,
    pair: (usize, usize),
    cfg: &IntegratorConfig,
) -> Result<StepOutcome> {
    let (a, b) = pair;
    if state.sheet[a] != state.sheet[b] {
        return Err(Error::CollisionSingular {
            a: a + 1,
            b: b + 1,
            value: (state.phi[a] - state.phi[b]).sin().abs(),
        });
    }
    let mut plan = plan_step(curve, state, cfg)?;
    plan.pair = Some((a.min(b), a.max(b)));
    plan.branch[a] = None;
    plan.branch[b] = None;
    step_with_plan(curve, state, cfg, plan)
}

fn step_with_plan(
    curve: &CurveParams,
    state: &PhaseState,
    cfg: &IntegratorConfig,
    plan: ChartPlan,
) -> Result<StepOutcome> {
    let ds = cfg.ds;
    let index = cfg.direction.index();
    let phi = state.phi;
    let mut next = *state;
    let mut du = CVec3::zeros();
    let mut branch_flips = Vec::new();
    let mut crossing = None;

    let in_pair = |c: usize| plan.pair.is_some_and(|(p, q)| c == p || c == q);

    // Rates are all taken at the old state before anything moves.
    let mut plain_rate = [0.0; 3];
    let mut branch_rate = [0.0; 3];
    for c in 0..3 {
        if in_pair(c) {
            continue;
        }
        if let Some(ch) = &plan.branch[c] {
            branch_rate[c] = ch.rate(curve, &phi, index);
        } else {
            plain_rate[c] = component_rate(curve, state, c, index)?.ok_or_else(|| {
                let (b, d) = others(c);
                Error::CollisionSingular { a: c + 1, b: b.min(d) + 1, value: 0.0 }
            })?;
        }
    }
    let pair_rate = match plan.pair {
        Some((p, q)) => {
            let third = 3 - p - q;
            let m = 0.5 * (phi[p] + phi[q]);
            let h = 0.5 * (phi[p] - phi[q]);
            Some(pair_rates(curve, m, h, phi[third], state.gamma(p), index)?)
        }
        None => None,
    };

    for c in 0..3 {
        if in_pair(c) {
            continue;
        }
        if let Some(ch) = &plan.branch[c] {
            let t1 = ch.t + branch_rate[c] * ds;
            let p1 = ch.phi(curve, t1);
            next.phi[c] = p1;
            next.sheet[c] = ch.sheet_at(t1);
            if next.sheet[c] != state.sheet[c] {
                let frac = if ch.t - t1 != 0.0 { ch.t / (ch.t - t1) } else { 0.0 };
                branch_flips.push((c, frac.clamp(0.0, 1.0)));
            }
            let tm = 0.5 * (ch.t + t1);
            let pm = ch.phi(curve, tm);
            let kh = ktilde_hat(curve, tm);
            if kh > 0.0 {
                du += one_form_numerators(pm) * C64::from(-2.0 * ch.end * (t1 - ch.t) / (ch.sigma * kh));
            }
        } else {
            let p1 = phi[c] + plain_rate[c] * ds;
            next.phi[c] = p1;
            du += segment_du(curve, phi[c], p1, state.sheet[c])?;
        }
    }

    if let (Some((p, q)), Some((dm, ddelta))) = (plan.pair, pair_rate) {
        let third = 3 - p - q;
        let m0 = 0.5 * (phi[p] + phi[q]);
        let dvec = phi[p] - phi[q];
        let delta0 = dvec * dvec;
        let mut orient = if dvec < 0.0 { -1.0 } else { 1.0 };
        let m1 = m0 + dm * ds;
        let mut delta1 = delta0 + ddelta * ds;
        let g = state.sheet[p];
        if delta1 < 0.0 {
            let frac = if delta0 > 0.0 { delta0 / (delta0 - delta1) } else { 0.0 };
            delta1 = -delta1;
            orient = -orient;
            next.sheet[p] = -g;
            next.sheet[q] = -g;
            let mc = m0 + frac * (m1 - m0);
            crossing = Some(Crossing {
                a: p,
                b: q,
                frac,
                phi0: mc,
                phi3: phi[third],
                sheet_before: g,
            });
        }
        let d1 = orient * delta1.sqrt();
        next.phi[p] = m1 + 0.5 * d1;
        next.phi[q] = m1 - 0.5 * d1;
        for c in [p, q] {
            if !curve.contains(next.phi[c], 0.0) {
                return Err(Error::ExpansionDiverged(format!(
                    "pair ({}, {}) left the arc at phi = {}",
                    p + 1,
                    q + 1,
                    next.phi[c]
                )));
            }
            match &crossing {
                Some(x) => {
                    du += segment_du(curve, phi[c], x.phi0, g)?;
                    du += segment_du(curve, x.phi0, next.phi[c], -g)?;
                }
                None => du += segment_du(curve, phi[c], next.phi[c], g)?,
            }
        }
    }

    for c in 0..3 {
        next.phi[c] = next.phi[c].clamp(curve.phi_b_minus, curve.phi_b_plus);
    }
    Ok(StepOutcome { state: next, branch_flips, crossing, du, plan })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Branch { component: usize },
    Collision { a: usize, b: usize },
}

/// Components are 0-based here and 1-based in the events file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub s: f64,
    pub kind: EventKind,
    /// Index of the step in which the event happened (`s_i <= s < s_{i+1}`).
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct OrbitResult {
    pub samples: Vec<OrbitSample>,
    pub events: Vec<Event>,
    pub collisions: Vec<CollisionExpansion>,
    pub steps: usize,
    /// Maxima over every step, not only the stored samples.
    pub max_abs_dpsi_r: f64,
    pub max_abs_dpsi_i: f64,
    /// Set when the run stopped early; the samples up to that point are kept.
    pub abort: Option<Error>,
}

/// Runs from `init` to `cfg.s_max`, storing every `cfg.output_stride`-th step and the last one.
pub fn integrate(curve: &CurveParams, init: &PhaseState, cfg: &IntegratorConfig) -> Result<OrbitResult> {
    integrate_with(curve, init, cfg, |_, _| {})
}

/// [`integrate`] with a callback on every step `(s, state)`, including ones not stored.
pub fn integrate_with<F: FnMut(f64, &PhaseState)>(
    curve: &CurveParams,
    init: &PhaseState,
    cfg: &IntegratorConfig,
    mut on_step: F,
) -> Result<OrbitResult> {
    cfg.validate()?;
    if curve.case == Case::B && !cfg.experimental {
        return Err(Error::Config {
            field: "case".to_string(),
            detail: "integration on case B curves requires experimental = true".to_string(),
        });
    }
    let init = PhaseState::new(curve, init.phi, init.sheet)?;
    let n = (cfg.s_max / cfg.ds).round() as usize;
    let mut out = OrbitResult {
        samples: Vec::with_capacity(n / cfg.output_stride + 2),
        events: Vec::new(),
        collisions: Vec::new(),
        steps: 0,
        max_abs_dpsi_r: 0.0,
        max_abs_dpsi_i: 0.0,
        abort: None,
    };
    let mut state = init;
    let mut du = CVec3::zeros();
    let mut psi_i_circ = 0.0;
    let mut prev_di: Option<f64> = None;

    for i in 0..=n {
        let s = i as f64 * cfg.ds;
        on_step(s, &state);
        let (dr, di) = match (observe::dpsi_r_ds(curve, &state), observe::dpsi_i_du3(curve, &state)) {
            (Ok(dr), Ok(di)) => (dr, di),
            (Err(e), _) | (_, Err(e)) => {
                out.abort = Some(fill_s(e, s));
                break;
            }
        };
        if let Some(p) = prev_di {
            psi_i_circ += 0.5 * (p + di) * cfg.ds;
        }
        prev_di = Some(di);
        out.max_abs_dpsi_r = out.max_abs_dpsi_r.max(dr.abs());
        out.max_abs_dpsi_i = out.max_abs_dpsi_i.max(di.abs());
        if i % cfg.output_stride == 0 || i == n {
            out.samples.push(OrbitSample {
                s,
                state,
                psi_r: observe::psi_r(&state),
                dpsi_r_ds: dr,
                dpsi_i_du3: di,
                psi_i_circ,
                gauge_a: observe::gauge_a_from(curve, di),
                du_accum: du,
            });
        }
        if i == n {
            break;
        }
        let outcome = match step(curve, &state, cfg) {
            Ok(o) => o,
            Err(e) => {
                out.abort = Some(fill_s(e, s));
                break;
            }
        };
        for &(c, frac) in &outcome.branch_flips {
            out.events.push(Event { s: s + frac * cfg.ds, kind: EventKind::Branch { component: c }, step: i });
        }
        if let Some(x) = outcome.crossing {
            let s0 = s + x.frac * cfg.ds;
            out.events.push(Event { s: s0, kind: EventKind::Collision { a: x.a, b: x.b }, step: i });
            if let Ok(ce) = CollisionExpansion::at(curve, s0, x.phi0, x.phi3, x.sheet_before) {
                out.collisions.push(ce);
            }
        }
        du += outcome.du;
        state = outcome.state;
        out.steps = i + 1;
    }
    // several events can land in one step; keep the log in s order
    out.events.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(out)
}

fn fill_s(e: Error, s: f64) -> Error {
    match e {
        Error::TripleCollision { .. } => Error::TripleCollision { s },
        other => other,
    }
}

/// `(phi_b, phi_c, phi_c)` with a common sheet `+1` on the coincident pair.
///
/// The sheet of the point sitting on the branch angle is fixed by requiring
/// `gamma_1 sin^2(phi_1) dphi_1 / (2 K~_1) > 0` for the inward motion `dphi_1 < 0`,
/// i.e. `gamma_1 = -1`. That is the sheet on which the field actually carries the
/// point into the arc.
pub fn default_init(curve: &CurveParams, phi_c: f64) -> Result<PhaseState> {
    let pb = curve.phi_b_plus;
    if !phi_c.is_finite() || !(phi_c > curve.phi_b_minus && phi_c < pb) {
        return Err(Error::DomainError { phi: phi_c, radicand: f64::NAN });
    }
    if (pb - phi_c).abs() < 1e-12 {
        return Err(Error::DomainError { phi: phi_c, radicand: 0.0 });
    }
    PhaseState::new(curve, [pb, phi_c, phi_c], [-1, 1, 1])
}
