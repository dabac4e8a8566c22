//! η-parameterized linear state-feedback gains and the conditions that make
//! them valid.
//!
//! With ĥ = 1 − η² the gains are
//!
//! ```text
//! K(η) = −(ĥ BᵀP⁰B + M)⁻¹ ĥ BᵀP⁰E
//! W(η) = −(ĥ HᵀP¹H − N)⁻¹ ĥ HᵀP¹E
//! ```
//!
//! so η = 0 gives the single-player gains and η = 1 gives zero gains.

use nalgebra::{DMatrix, DVector};

use crate::error::{FlipDynError, Result};
use crate::matrix_game::StageRegime;

/// Strictness margin for definiteness tests.
pub const DEFINITENESS_TOL: f64 = 1e-12;

/// Margin kept from both ends of the η search interval.
pub const ETA_EDGE: f64 = 1e-9;

const SCAN_INTERVALS: usize = 64;
const RESIDUAL_TOL: f64 = 1e-12;
const BISECTION_STEPS: usize = 400;

const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_MAX_ITER: usize = 200;
const FIXED_POINT_TOL: f64 = 1e-10;
// extra iterations after convergence so the bounds hold to eigenvalue precision
const POLISH_MAX_ITER: usize = 100;
/// Relative change at which polishing stops.
const POLISH_TOL: f64 = 1e-15;

pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `x`, ascending.
pub fn sym_eigenvalues(x: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = symmetrize(x).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

pub fn min_eigenvalue(x: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(x)[0]
}

pub fn max_eigenvalue(x: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(x);
    ev[ev.len() - 1]
}

pub fn is_positive_definite(x: &DMatrix<f64>) -> bool {
    min_eigenvalue(x) > DEFINITENESS_TOL
}

pub fn is_negative_definite(x: &DMatrix<f64>) -> bool {
    max_eigenvalue(x) < -DEFINITENESS_TOL
}

/// Upper end of the admissible η interval, sqrt(min(d, a) / max(d, a)).
pub fn eta_upper_limit(d: f64, a: f64) -> f64 {
    let (lo, hi) = if d < a { (d, a) } else { (a, d) };
    if hi <= 0.0 {
        0.0
    } else {
        (lo / hi).sqrt()
    }
}

pub fn gain_defender(
    eta: f64,
    e: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p0_next: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let h = 1.0 - eta * eta;
    if h == 0.0 {
        return Ok(DMatrix::zeros(b.ncols(), e.ncols()));
    }
    let bt_p = b.transpose() * p0_next;
    let inner = &bt_p * b * h + m;
    let inv = inner.try_inverse().ok_or_else(|| {
        FlipDynError::SecondOrderConditionViolated(
            "(1-η²)BᵀP⁰B + M is singular".to_string(),
        )
    })?;
    Ok(-(inv * (bt_p * e * h)))
}

pub fn gain_adversary(
    eta: f64,
    e: &DMatrix<f64>,
    h_mat: &DMatrix<f64>,
    p1_next: &DMatrix<f64>,
    n: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let h = 1.0 - eta * eta;
    if h == 0.0 {
        return Ok(DMatrix::zeros(h_mat.ncols(), e.ncols()));
    }
    let ht_p = h_mat.transpose() * p1_next;
    let inner = &ht_p * h_mat * h - n;
    let inv = inner.try_inverse().ok_or_else(|| {
        FlipDynError::SecondOrderConditionViolated(
            "(1-η²)HᵀP¹H − N is singular".to_string(),
        )
    })?;
    Ok(-(inv * (ht_p * e * h)))
}

/// BᵀP⁰B + M ≻ 0 and HᵀP¹H − N ≺ 0.
pub fn check_second_order(
    p0_next: &DMatrix<f64>,
    p1_next: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n: &DMatrix<f64>,
) -> bool {
    let def = b.transpose() * p0_next * b + m;
    let adv = h.transpose() * p1_next * h - n;
    is_positive_definite(&def) && is_negative_definite(&adv)
}

/// 𝐏 = W̌ᵀP¹W̌ − B̌ᵀP⁰B̌, the quadratic form of the next-step value gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGapMatrix {
    pub p_gap: DMatrix<f64>,
}

impl ValueGapMatrix {
    pub fn from_closed_loops(
        defender_closed_loop: &DMatrix<f64>,
        adversary_closed_loop: &DMatrix<f64>,
        p0_next: &DMatrix<f64>,
        p1_next: &DMatrix<f64>,
    ) -> Self {
        let w = adversary_closed_loop;
        let bc = defender_closed_loop;
        let gap = w.transpose() * p1_next * w - bc.transpose() * p0_next * bc;
        ValueGapMatrix { p_gap: symmetrize(&gap) }
    }

    /// xᵀ𝐏x.
    pub fn quadratic(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p_gap * x))
    }
}

/// Inputs of one backward step for an n-dimensional stage.
#[derive(Debug, Clone, Copy)]
pub struct MatrixStage<'a> {
    pub e: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub h: &'a DMatrix<f64>,
    pub p0_next: &'a DMatrix<f64>,
    pub p1_next: &'a DMatrix<f64>,
    pub m: &'a DMatrix<f64>,
    pub n: &'a DMatrix<f64>,
    pub d: f64,
    pub a: f64,
}

impl MatrixStage<'_> {
    pub fn gains(&self, eta_lower: f64, eta_upper: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = gain_defender(eta_lower, self.e, self.b, self.p0_next, self.m)?;
        let w = gain_adversary(eta_upper, self.e, self.h, self.p1_next, self.n)?;
        Ok((k, w))
    }

    pub fn closed_loops(&self, k: &DMatrix<f64>, w: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.e + self.b * k, self.e + self.h * w)
    }

    pub fn gap(&self, k: &DMatrix<f64>, w: &DMatrix<f64>) -> ValueGapMatrix {
        let (bc, wc) = self.closed_loops(k, w);
        ValueGapMatrix::from_closed_loops(&bc, &wc, self.p0_next, self.p1_next)
    }

    pub fn second_order_holds(&self) -> bool {
        check_second_order(self.p0_next, self.p1_next, self.b, self.h, self.m, self.n)
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }
}

/// Inputs of one backward step for a scalar stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarStage {
    pub e: f64,
    pub b: f64,
    pub h: f64,
    pub p0_next: f64,
    pub p1_next: f64,
    pub m: f64,
    pub n: f64,
    pub d: f64,
    pub a: f64,
}

impl ScalarStage {
    pub fn gain_defender(&self, eta: f64) -> f64 {
        let h = 1.0 - eta * eta;
        -(h * self.b * self.p0_next * self.e) / (h * self.b * self.b * self.p0_next + self.m)
    }

    pub fn gain_adversary(&self, eta: f64) -> f64 {
        let h = 1.0 - eta * eta;
        -(h * self.h * self.p1_next * self.e) / (h * self.h * self.h * self.p1_next - self.n)
    }

    /// 𝐩̌ = W̌²p¹ − B̌²p⁰ for the given gains.
    pub fn check_p(&self, k: f64, w: f64) -> f64 {
        let bc = self.e + self.b * k;
        let wc = self.e + self.h * w;
        wc * wc * self.p1_next - bc * bc * self.p0_next
    }

    pub fn second_order_holds(&self) -> bool {
        self.b * self.b * self.p0_next + self.m > DEFINITENESS_TOL
            && self.h * self.h * self.p1_next - self.n < -DEFINITENESS_TOL
    }
}

/// 𝐩̌(η) − sqrt(ad)/η; a root is a self-consistent η.
pub fn eta_residual_scalar(eta: f64, stage: &ScalarStage) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(FlipDynError::InvalidInput(format!("η must be positive, got {eta}")));
    }
    let k = stage.gain_defender(eta);
    let w = stage.gain_adversary(eta);
    Ok(stage.check_p(k, w) - (stage.a * stage.d).sqrt() / eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSolution {
    pub eta: f64,
    pub eta_lower: f64,
    pub eta_upper: f64,
    pub k: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub defender_closed_loop: DMatrix<f64>,
    pub adversary_closed_loop: DMatrix<f64>,
    pub gap: ValueGapMatrix,
    pub residual: f64,
}

/// Result of an η search. Failing to find one is a regime signal, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaOutcome {
    Mixed(GainSolution),
    NoMixedEta,
}

impl EtaOutcome {
    pub fn mixed(self) -> Option<GainSolution> {
        match self {
            EtaOutcome::Mixed(g) => Some(g),
            EtaOutcome::NoMixedEta => None,
        }
    }
}

/// Smallest root of `f` on [lo, hi] via a uniform scan and bisection.
pub(crate) fn smallest_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Option<f64> {
    if !(hi > lo) {
        return None;
    }
    let xs: Vec<f64> = (0..=SCAN_INTERVALS)
        .map(|i| lo + (hi - lo) * i as f64 / SCAN_INTERVALS as f64)
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for i in 0..SCAN_INTERVALS {
        if fs[i] == 0.0 {
            return Some(xs[i]);
        }
        if !fs[i].is_finite() || !fs[i + 1].is_finite() {
            continue;
        }
        if (fs[i] < 0.0) != (fs[i + 1] < 0.0) {
            return Some(bisect(&f, xs[i], xs[i + 1], fs[i], fs[i + 1]));
        }
    }
    if fs[SCAN_INTERVALS] == 0.0 {
        return Some(xs[SCAN_INTERVALS]);
    }
    None
}

/// Root in (0, lo) when the residual is already positive at `lo`. The scalar
/// residual tends to −∞ as η → 0, so halving finds a sign change.
fn root_below_edge<F: Fn(f64) -> f64>(f: &F, lo: f64) -> Option<f64> {
    let mut r = lo;
    let mut fr = f(r);
    if !(fr > 0.0 && fr.is_finite()) {
        return None;
    }
    while r > f64::MIN_POSITIVE {
        let l = 0.5 * r;
        let fl = f(l);
        if fl == 0.0 {
            return Some(l);
        }
        if !fl.is_finite() {
            return None;
        }
        if fl < 0.0 {
            return Some(bisect(f, l, r, fl, fr));
        }
        r = l;
        fr = fl;
    }
    None
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut l: f64, mut r: f64, mut fl: f64, mut fr: f64) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (l + r);
        if mid <= l || mid >= r {
            break;
        }
        let fm = f(mid);
        if fm.abs() < RESIDUAL_TOL {
            return mid;
        }
        if (fm < 0.0) == (fl < 0.0) {
            l = mid;
            fl = fm;
        } else {
            r = mid;
            fr = fm;
        }
    }
    if fl.abs() <= fr.abs() {
        l
    } else {
        r
    }
}

fn scalar_matrix(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

/// Smallest admissible η for a scalar stage, with the mixed conditions
/// 𝐩̌ > d and 𝐩̌ > a verified at the resulting gains.
pub fn solve_eta_scalar(stage: &ScalarStage) -> EtaOutcome {
    let (d, a) = (stage.d, stage.a);
    if d * a <= 0.0 {
        return EtaOutcome::NoMixedEta;
    }
    let lo = ETA_EDGE;
    let hi = eta_upper_limit(d, a) - ETA_EDGE;
    let residual = |eta: f64| eta_residual_scalar(eta, stage).unwrap_or(f64::NAN);
    let Some(eta) = root_below_edge(&residual, lo).or_else(|| smallest_root(&residual, lo, hi)) else {
        return EtaOutcome::NoMixedEta;
    };
    let k = stage.gain_defender(eta);
    let w = stage.gain_adversary(eta);
    let check = stage.check_p(k, w);
    if !(check > d && check > a) || !k.is_finite() || !w.is_finite() {
        return EtaOutcome::NoMixedEta;
    }
    let bc = stage.e + stage.b * k;
    let wc = stage.e + stage.h * w;
    EtaOutcome::Mixed(GainSolution {
        eta,
        eta_lower: eta,
        eta_upper: eta,
        k: scalar_matrix(k),
        w: scalar_matrix(w),
        defender_closed_loop: scalar_matrix(bc),
        adversary_closed_loop: scalar_matrix(wc),
        gap: ValueGapMatrix { p_gap: scalar_matrix(check) },
        residual: residual(eta),
    })
}

/// Bounding pair (η̲, η̄) for an n-dimensional stage by damped fixed-point
/// iteration on η̲ ← sqrt(ad)/λ_min(𝐏), η̄ ← sqrt(ad)/λ_max(𝐏).
pub fn solve_eta_bounds_ndim(stage: &MatrixStage) -> Result<EtaOutcome> {
    let (d, a) = (stage.d, stage.a);
    if d * a <= 0.0 {
        return Ok(EtaOutcome::NoMixedEta);
    }
    let s = (a * d).sqrt();
    let bound = eta_upper_limit(d, a);
    let mut lower = 0.5 * bound;
    let mut upper = 0.5 * bound;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let (k, w) = stage.gains(lower, upper)?;
        let ev = sym_eigenvalues(&stage.gap(&k, &w).p_gap);
        let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
        if !(lmin > 0.0) {
            return Ok(EtaOutcome::NoMixedEta);
        }
        let next_lower = FIXED_POINT_DAMPING * lower + (1.0 - FIXED_POINT_DAMPING) * s / lmin;
        let next_upper = FIXED_POINT_DAMPING * upper + (1.0 - FIXED_POINT_DAMPING) * s / lmax;
        let done = (next_lower - lower).abs() < FIXED_POINT_TOL
            && (next_upper - upper).abs() < FIXED_POINT_TOL;
        lower = next_lower;
        upper = next_upper;
        if done {
            let (lower, upper) = polish_bounds(stage, lower, upper)?;
            return bounds_solution(stage, lower, upper, bound);
        }
    }
    Ok(EtaOutcome::NoMixedEta)
}

fn polish_bounds(stage: &MatrixStage, mut lower: f64, mut upper: f64) -> Result<(f64, f64)> {
    let s = (stage.a * stage.d).sqrt();
    for _ in 0..POLISH_MAX_ITER {
        let (k, w) = stage.gains(lower, upper)?;
        let ev = sym_eigenvalues(&stage.gap(&k, &w).p_gap);
        let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
        if !(lmin > 0.0) {
            break;
        }
        let next_lower = FIXED_POINT_DAMPING * lower + (1.0 - FIXED_POINT_DAMPING) * s / lmin;
        let next_upper = FIXED_POINT_DAMPING * upper + (1.0 - FIXED_POINT_DAMPING) * s / lmax;
        let settled = (next_lower - lower).abs() <= POLISH_TOL * lower
            && (next_upper - upper).abs() <= POLISH_TOL * upper;
        lower = next_lower;
        upper = next_upper;
        if settled {
            break;
        }
    }
    Ok((lower, upper))
}

fn bounds_solution(stage: &MatrixStage, lower: f64, upper: f64, bound: f64) -> Result<EtaOutcome> {
    let (k, w) = stage.gains(lower, upper)?;
    let (bc, wc) = stage.closed_loops(&k, &w);
    let gap = ValueGapMatrix::from_closed_loops(&bc, &wc, stage.p0_next, stage.p1_next);
    let ev = sym_eigenvalues(&gap.p_gap);
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    let mixed = lmin - stage.d > DEFINITENESS_TOL && lmin - stage.a > DEFINITENESS_TOL;
    let in_range = 0.0 < upper && upper <= lower && lower < bound;
    if !(mixed && in_range) {
        return Ok(EtaOutcome::NoMixedEta);
    }
    let s = (stage.a * stage.d).sqrt();
    let residual = (s / lmin - lower).abs().max((s / lmax - upper).abs());
    Ok(EtaOutcome::Mixed(GainSolution {
        eta: lower,
        eta_lower: lower,
        eta_upper: upper,
        k,
        w,
        defender_closed_loop: bc,
        adversary_closed_loop: wc,
        gap,
        residual,
    }))
}

/// Quadrant of the value gap relative to the two takeover costs.
///
/// Each quadrant fixes the stage regime in both flip states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// gap > d and gap > a.
    Mixed,
    /// gap ≤ d and gap > a.
    AdversaryTakeover,
    /// gap > d and gap ≤ a.
    DefenderTakeover,
    /// gap ≤ d and gap ≤ a.
    BothIdle,
}

impl Branch {
    pub fn from_conditions(above_d: bool, above_a: bool) -> Self {
        match (above_d, above_a) {
            (true, true) => Branch::Mixed,
            (false, true) => Branch::AdversaryTakeover,
            (true, false) => Branch::DefenderTakeover,
            (false, false) => Branch::BothIdle,
        }
    }

    pub fn classify(check: f64, d: f64, a: f64) -> Self {
        Branch::from_conditions(check > d, check > a)
    }

    /// Stage regimes for flip states 0 and 1.
    pub fn regimes(self) -> [StageRegime; 2] {
        match self {
            Branch::Mixed => [StageRegime::MixedNE, StageRegime::MixedNE],
            Branch::AdversaryTakeover => [StageRegime::PureAdvTakeover, StageRegime::PureBothIdle],
            Branch::DefenderTakeover => [StageRegime::PureBothIdle, StageRegime::PureDefTakeover],
            Branch::BothIdle => [StageRegime::PureBothIdle, StageRegime::PureBothIdle],
        }
    }

    /// Pure branches in the order they are tried when no mixed η exists.
    pub const PURE_ORDER: [Branch; 3] =
        [Branch::BothIdle, Branch::AdversaryTakeover, Branch::DefenderTakeover];
}

/// Feedback gains for a branch.
///
/// Mixed uses K(η̲), W(η̄). A player that takes over or idles against a
/// takeover uses the zero gain K(1) or W(1); otherwise the η = 0 gain.
pub fn regime_gains(
    branch: Branch,
    stage: &MatrixStage,
    eta_lower: f64,
    eta_upper: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (kl, wu) = match branch {
        Branch::Mixed => (eta_lower, eta_upper),
        Branch::AdversaryTakeover => (1.0, 0.0),
        Branch::DefenderTakeover => (0.0, 1.0),
        Branch::BothIdle => (0.0, 0.0),
    };
    stage.gains(kl, wu)
}

/// Scalar counterpart of [`regime_gains`].
pub fn regime_gains_scalar(branch: Branch, stage: &ScalarStage, eta: f64) -> (f64, f64) {
    match branch {
        Branch::Mixed => (stage.gain_defender(eta), stage.gain_adversary(eta)),
        Branch::AdversaryTakeover => (0.0, stage.gain_adversary(0.0)),
        Branch::DefenderTakeover => (stage.gain_defender(0.0), 0.0),
        Branch::BothIdle => (stage.gain_defender(0.0), stage.gain_adversary(0.0)),
    }
}
