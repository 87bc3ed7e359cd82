//! Quantization by minima and level sets of a positive energy functional.
//!
//! For each order the functional's local minima are located on a grid and
//! refined. Across orders the minimum values of one state increase towards a
//! limit; a cap `B_U` above that limit turns the level set
//! `{E : F_I(E) ≤ B_U}` around the minimum into an interval containing the
//! physical energy, and those intervals nest as the order grows.

use rug::Float;

use crate::cdr::Engine;
use crate::error::{Error, Result};
use crate::mer::Constraint;
use crate::mer::ProblemSpec;
use crate::poly::{coefficient_polys, lambda_polys, Poly};
use crate::precision::{format_sig, Precision, Real};
use crate::weight::BasisTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionalKind {
    /// Smallest eigenvalue of `P_I` (unit-norm constraint).
    Lambda,
    /// Constrained minimum under `u₀ = 1`.
    Constrained,
    /// A user-supplied function (tests, diagnostics).
    Other,
}

impl FunctionalKind {
    pub fn from_constraint(c: Constraint) -> Self {
        match c {
            Constraint::UnitNorm => FunctionalKind::Lambda,
            Constraint::LeadingOne => FunctionalKind::Constrained,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FunctionalKind::Lambda => "lambda",
            FunctionalKind::Constrained => "L",
            FunctionalKind::Other => "other",
        }
    }
}

/// A scalar function of the energy parameter.
pub trait EnergyFunction: Sync {
    fn precision(&self) -> Precision;
    fn order(&self) -> usize;
    fn kind(&self) -> FunctionalKind;
    fn value(&self, e: &Real) -> Result<Real>;
    /// `(F(E), F'(E))`; the derivative is `None` when unavailable.
    fn value_and_derivative(&self, e: &Real) -> Result<(Real, Option<Real>)> {
        Ok((self.value(e)?, None))
    }
}

/// The engine's functional at a fixed order.
pub struct OrderFunctional<'a> {
    pub engine: &'a Engine,
    pub order: usize,
}

impl EnergyFunction for OrderFunctional<'_> {
    fn precision(&self) -> Precision {
        self.engine.precision()
    }

    fn order(&self) -> usize {
        self.order
    }

    fn kind(&self) -> FunctionalKind {
        FunctionalKind::from_constraint(self.engine.spec().constraint)
    }

    fn value(&self, e: &Real) -> Result<Real> {
        Ok(self.engine.evaluate(e, self.order, false)?.value)
    }

    fn value_and_derivative(&self, e: &Real) -> Result<(Real, Option<Real>)> {
        let f = self.engine.evaluate(e, self.order, true)?;
        Ok((f.value, f.derivative))
    }
}

/// How a grid minimum is polished.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Refine {
    /// Golden-section search on the value.
    Golden,
    /// Root of the analytic derivative (falls back to golden section when the
    /// derivative does not change sign across the grid bracket).
    Derivative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimaRecord {
    pub order: usize,
    pub energy: Real,
    pub value: Real,
    pub kind: FunctionalKind,
    pub window: (Real, Real),
    pub grid_step: Real,
    /// The minimum lies within one grid step of a window edge.
    pub near_edge: bool,
    pub derivative: Option<Real>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRecord {
    pub order: usize,
    pub cap: Real,
    pub minimum: Real,
    pub lower: Real,
    pub upper: Real,
    pub tolerance: Real,
    pub state: String,
}

fn abs(x: &Real) -> Real {
    Float::with_val(x.prec(), x.abs_ref())
}

fn scale_of(e: &Real, step: &Real) -> Real {
    let a = abs(e);
    if a > *step {
        a
    } else {
        step.clone()
    }
}

/// Local minima of `f` on `[lo, hi]`, scanned on a grid of spacing at most
/// `grid_step` and refined to `refine_tol` relative to `max(|E|, grid_step)`.
pub fn find_local_minima(
    f: &dyn EnergyFunction,
    lo: &Real,
    hi: &Real,
    grid_step: &Real,
    refine: Refine,
    refine_tol: &Real,
) -> Result<Vec<MinimaRecord>> {
    let prec = f.precision();
    let bits = prec.bits();
    if lo >= hi {
        return Err(Error::InvalidParameter("energy window is empty".into()));
    }
    if grid_step.is_sign_negative() || grid_step.is_zero() {
        return Err(Error::InvalidParameter("grid step must be positive".into()));
    }
    let width = Float::with_val(bits, hi - lo);
    let cells = Float::with_val(bits, &width / grid_step).ceil().to_f64().max(2.0) as usize;
    let step = Float::with_val(bits, &width / cells as u64);
    let points: Vec<Real> = (0..=cells)
        .map(|k| {
            if k == cells {
                prec.real(hi)
            } else {
                let mut e = Float::with_val(bits, &step * k as u64);
                e += lo;
                e
            }
        })
        .collect();
    let values: Vec<Real> = points.iter().map(|e| f.value(e)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 1..cells {
        if values[k] < values[k - 1] && values[k] <= values[k + 1] {
            let (e, v, d) = refine_minimum(
                f,
                &points[k - 1],
                &points[k],
                &points[k + 1],
                &values[k],
                refine,
                refine_tol,
                &step,
            )?;
            let near_edge = Float::with_val(bits, &e - lo) < step || Float::with_val(bits, hi - &e) < step;
            out.push(MinimaRecord {
                order: f.order(),
                energy: e,
                value: v,
                kind: f.kind(),
                window: (prec.real(lo), prec.real(hi)),
                grid_step: step.clone(),
                near_edge,
                derivative: d,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::NoMinimumFound {
            lo: format_sig(lo, 20),
            hi: format_sig(hi, 20),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn refine_minimum(
    f: &dyn EnergyFunction,
    a: &Real,
    c: &Real,
    b: &Real,
    fc: &Real,
    refine: Refine,
    tol: &Real,
    step: &Real,
) -> Result<(Real, Real, Option<Real>)> {
    if refine == Refine::Derivative {
        if let Some(r) = derivative_root(f, a, b, tol, step)? {
            return Ok(r);
        }
    }
    let (e, v) = golden_section(f, a, c, b, fc, tol, step)?;
    let d = if refine == Refine::Derivative {
        f.value_and_derivative(&e)?.1
    } else {
        None
    };
    Ok((e, v, d))
}

/// Golden-section search on `[a, b]` with interior point `c`, `f(c) ≤ f(a), f(b)`.
pub fn golden_section(
    f: &dyn EnergyFunction,
    a: &Real,
    c: &Real,
    b: &Real,
    fc: &Real,
    tol: &Real,
    step: &Real,
) -> Result<(Real, Real)> {
    let bits = f.precision().bits();
    let inv_phi = (Float::with_val(bits, 5).sqrt() - 1u32) / 2u32;
    let mut a = a.clone();
    let mut b = b.clone();
    let mut best = (c.clone(), fc.clone());
    let mut x1 = Float::with_val(bits, &b - &a);
    x1 *= &inv_phi;
    let mut x2 = Float::with_val(bits, &a + &x1);
    x1 = Float::with_val(bits, &b - &x1);
    let mut f1 = f.value(&x1)?;
    let mut f2 = f.value(&x2)?;
    for _ in 0..600 {
        let scale = scale_of(&best.0, step);
        let width = Float::with_val(bits, &b - &a);
        if width <= Float::with_val(bits, tol * &scale) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            let mut d = Float::with_val(bits, &b - &a);
            d *= &inv_phi;
            x1 = Float::with_val(bits, &b - &d);
            f1 = f.value(&x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            let mut d = Float::with_val(bits, &b - &a);
            d *= &inv_phi;
            x2 = Float::with_val(bits, &a + &d);
            f2 = f.value(&x2)?;
        }
        if f1 < best.1 {
            best = (x1.clone(), f1.clone());
        }
        if f2 < best.1 {
            best = (x2.clone(), f2.clone());
        }
    }
    Ok(best)
}

/// Root of `F'` in `[a, b]` by bisection, when the derivative changes sign.
fn derivative_root(
    f: &dyn EnergyFunction,
    a: &Real,
    b: &Real,
    tol: &Real,
    step: &Real,
) -> Result<Option<(Real, Real, Option<Real>)>> {
    let bits = f.precision().bits();
    let (_, da) = f.value_and_derivative(a)?;
    let (_, db) = f.value_and_derivative(b)?;
    let (Some(da), Some(db)) = (da, db) else {
        return Ok(None);
    };
    if !(da.is_sign_negative() && db.is_sign_positive()) {
        return Ok(None);
    }
    let mut lo = a.clone();
    let mut hi = b.clone();
    for _ in 0..2000 {
        let mid = Float::with_val(bits, &lo + &hi) / 2u32;
        let width = Float::with_val(bits, &hi - &lo);
        if width <= Float::with_val(bits, tol * &scale_of(&mid, step)) || mid == lo || mid == hi {
            let (v, d) = f.value_and_derivative(&mid)?;
            return Ok(Some((mid, v, d)));
        }
        let (_, d) = f.value_and_derivative(&mid)?;
        let d = d.expect("derivative available");
        if d.is_sign_negative() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = Float::with_val(bits, &lo + &hi) / 2u32;
    let (v, d) = f.value_and_derivative(&mid)?;
    Ok(Some((mid, v, d)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOptions {
    /// Grid intervals across the initial window.
    pub grid_points: usize,
    /// Grid intervals across a tracked window.
    pub tracked_grid_points: usize,
    pub refine: Refine,
    /// Relative refinement tolerance; defaults to the precision's root tolerance.
    pub refine_tol: Option<Real>,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            grid_points: 200,
            tracked_grid_points: 24,
            refine: Refine::Golden,
            refine_tol: None,
        }
    }
}

/// A decrease in the minima sequence beyond rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub order: usize,
    pub previous: Real,
    pub current: Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimaSequence {
    pub records: Vec<MinimaRecord>,
    pub violations: Vec<Violation>,
}

/// Minima of one state across increasing orders.
///
/// The first order is scanned over the whole window and the minimum nearest
/// the window centre is taken; the second order rescans the whole window;
/// later orders search `E_min ± max(10 |last shift|, initial grid step)`,
/// clipped to the window, and fall back to the whole window when the tracked
/// minimum lands on a tracked-window edge. The minimum nearest the previous
/// one is followed.
pub fn minima_sequence<E, G>(
    make: G,
    lo: &Real,
    hi: &Real,
    orders: &[usize],
    opts: &SequenceOptions,
) -> Result<MinimaSequence>
where
    E: EnergyFunction,
    G: Fn(usize) -> Result<E>,
{
    minima_sequence_resume(make, lo, hi, orders, opts, Vec::new(), |_| Ok(()))
}

/// [`minima_sequence`] continued from `prior` records (a checkpoint). The
/// callback sees each new record as soon as it is found; the returned
/// sequence includes the prior records.
pub fn minima_sequence_resume<E, G, C>(
    make: G,
    lo: &Real,
    hi: &Real,
    orders: &[usize],
    opts: &SequenceOptions,
    prior: Vec<MinimaRecord>,
    mut on_record: C,
) -> Result<MinimaSequence>
where
    E: EnergyFunction,
    G: Fn(usize) -> Result<E>,
    C: FnMut(&MinimaRecord) -> Result<()>,
{
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("orders must be strictly increasing".into()));
    }
    if orders.is_empty() && prior.is_empty() {
        return Err(Error::InvalidParameter("no orders given".into()));
    }
    if let (Some(last), Some(&first)) = (prior.last(), orders.first()) {
        if first <= last.order {
            return Err(Error::InvalidParameter(
                "orders must continue past the checkpoint".into(),
            ));
        }
    }
    let mut records: Vec<MinimaRecord> = prior;
    let mut violations = Vec::new();
    for &order in orders {
        let f = make(order)?;
        let prec = f.precision();
        let bits = prec.bits();
        let tol = opts.refine_tol.clone().unwrap_or_else(|| prec.root_tolerance());
        let lo = prec.real(lo);
        let hi = prec.real(hi);
        let full_step = Float::with_val(bits, &hi - &lo) / opts.grid_points.max(2) as u64;
        let pick = |found: Vec<MinimaRecord>, target: &Real| -> MinimaRecord {
            found
                .into_iter()
                .min_by(|x, y| {
                    let dx = abs(&Float::with_val(bits, &x.energy - target));
                    let dy = abs(&Float::with_val(bits, &y.energy - target));
                    dx.partial_cmp(&dy).expect("finite energies")
                })
                .expect("nonempty")
        };
        let record = if records.len() < 2 {
            let target = match records.last() {
                Some(r) => r.energy.clone(),
                None => Float::with_val(bits, &lo + &hi) / 2u32,
            };
            pick(find_local_minima(&f, &lo, &hi, &full_step, opts.refine, &tol)?, &target)
        } else {
            let last = &records[records.len() - 1];
            let before = &records[records.len() - 2];
            let shift = abs(&Float::with_val(bits, &last.energy - &before.energy));
            let mut half = Float::with_val(bits, &shift * 10u32);
            if half < full_step {
                half = full_step.clone();
            }
            let mut wlo = Float::with_val(bits, &last.energy - &half);
            let mut whi = Float::with_val(bits, &last.energy + &half);
            if wlo < lo {
                wlo = lo.clone();
            }
            if whi > hi {
                whi = hi.clone();
            }
            let step = Float::with_val(bits, &whi - &wlo) / opts.tracked_grid_points.max(2) as u64;
            let tracked = find_local_minima(&f, &wlo, &whi, &step, opts.refine, &tol);
            let tracked_ok = match &tracked {
                Ok(found) => {
                    let r = pick(found.clone(), &last.energy);
                    if r.near_edge && (wlo != lo || whi != hi) {
                        None
                    } else {
                        Some(r)
                    }
                }
                Err(Error::NoMinimumFound { .. }) => None,
                Err(e) => return Err(e.clone()),
            };
            match tracked_ok {
                Some(r) => r,
                None => pick(
                    find_local_minima(&f, &lo, &hi, &full_step, opts.refine, &tol)?,
                    &last.energy,
                ),
            }
        };
        if let Some(prev) = records.last() {
            let slack = Float::with_val(bits, &prev.value * &prec.tolerance());
            let floor = Float::with_val(bits, &prev.value - &slack);
            if record.value < floor {
                violations.push(Violation {
                    order,
                    previous: prev.value.clone(),
                    current: record.value.clone(),
                });
            }
        }
        on_record(&record)?;
        records.push(record);
    }
    Ok(MinimaSequence { records, violations })
}

/// `B_U = (1 + margin) · max(values)`.
pub fn choose_cap(seq: &[MinimaRecord], margin: &Real) -> Result<Real> {
    let top = seq
        .iter()
        .map(|r| &r.value)
        .max_by(|a, b| a.partial_cmp(b).expect("finite values"))
        .ok_or_else(|| Error::InvalidParameter("empty minima sequence".into()))?;
    if margin.is_sign_negative() || margin.is_zero() {
        return Err(Error::InvalidParameter("cap margin must be positive".into()));
    }
    let mut factor = Float::with_val(top.prec(), 1);
    factor += margin;
    Ok(factor * top)
}

/// Level-set roots `F(E_L) = F(E_U) = B_U` around a minimum.
///
/// Steps outward from the minimum, starting at a sixteenth of the grid step
/// and doubling, until the functional exceeds the cap; the expansion stops at
/// `limits` (adjacent minima or window edges). Each side is then bisected to
/// the precision's root tolerance, and the outer endpoint (where the
/// functional is above the cap) is reported.
pub fn bracket_bounds(
    f: &dyn EnergyFunction,
    minimum: &MinimaRecord,
    cap: &Real,
    limits: Option<(Real, Real)>,
) -> Result<BoundRecord> {
    let prec = f.precision();
    let bits = prec.bits();
    let cap = prec.real(cap);
    if cap <= minimum.value {
        return Err(Error::CapBelowMinimum {
            cap: format_sig(&cap, 20),
            minimum: format_sig(&minimum.value, 20),
        });
    }
    let (lim_lo, lim_hi) = limits.unwrap_or_else(|| minimum.window.clone());
    let tol = prec.root_tolerance();
    let step0 = Float::with_val(bits, &minimum.grid_step / 16u32);
    let lower = bracket_side(f, &minimum.energy, &cap, &step0, &lim_lo, -1, &tol)?;
    let upper = bracket_side(f, &minimum.energy, &cap, &step0, &lim_hi, 1, &tol)?;
    Ok(BoundRecord {
        order: minimum.order,
        cap,
        minimum: minimum.energy.clone(),
        lower,
        upper,
        tolerance: tol,
        state: String::new(),
    })
}

fn bracket_side(
    f: &dyn EnergyFunction,
    center: &Real,
    cap: &Real,
    step0: &Real,
    limit: &Real,
    dir: i32,
    tol: &Real,
) -> Result<Real> {
    let bits = f.precision().bits();
    let side = if dir < 0 { "lower" } else { "upper" };
    let beyond = |x: &Real| if dir < 0 { x <= limit } else { x >= limit };
    let mut inner = center.clone();
    let mut step = step0.clone();
    let outer = loop {
        let mut x = Float::with_val(bits, &step * dir);
        x += center;
        let at_limit = beyond(&x);
        if at_limit {
            x = limit.clone();
        }
        if f.value(&x)? > *cap {
            break x;
        }
        if at_limit {
            return Err(Error::NeighborCollision {
                side,
                limit: format_sig(limit, 20),
            });
        }
        inner = x;
        step *= 2u32;
    };
    let mut outer = outer;
    let scale = scale_of(center, step0);
    let goal = Float::with_val(bits, tol * &scale);
    loop {
        let gap = abs(&Float::with_val(bits, &outer - &inner));
        if gap <= goal {
            break;
        }
        let mid = Float::with_val(bits, &outer + &inner) / 2u32;
        if mid == outer || mid == inner {
            break;
        }
        if f.value(&mid)? > *cap {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    Ok(outer)
}

/// Energies from the approximation method (`c_I(E) = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct AmRoots {
    /// Real roots inside the window, ascending.
    pub real: Vec<Real>,
    /// Non-real roots discarded.
    pub complex_count: usize,
}

/// For `m_s = 0`, the real roots of `c_I(E) = Λ^{(I)}_0(E)`; for `m_s = 1`, the
/// energies where `c_I = c_{I−1} = 0` has a nontrivial missing-moment solution
/// (roots of the 2 × 2 determinant).
pub fn oppq_am_roots(
    spec: &ProblemSpec,
    basis: &BasisTable,
    order: usize,
    lo: &Real,
    hi: &Real,
    prec: Precision,
) -> Result<AmRoots> {
    let m_s = spec
        .fixed_m_s()
        .ok_or_else(|| Error::InvalidParameter("approximation-method roots need a fixed m_s".into()))?;
    if m_s > 1 {
        return Err(Error::InvalidParameter(
            "approximation-method roots support m_s ≤ 1".into(),
        ));
    }
    if order < m_s {
        return Err(Error::InvalidParameter(format!("order must be at least {m_s}")));
    }
    let coeffs = coefficient_polys(spec, order.max(m_s), prec)?;
    let lam = lambda_polys(basis, &coeffs, order, prec);
    let target: Poly = if m_s == 0 {
        lam[order][0].clone()
    } else {
        let a = lam[order][0].mul(&lam[order - 1][1]);
        let b = lam[order][1].mul(&lam[order - 1][0]);
        a.sub(&b)
    };
    let bits = prec.bits();
    let roots = target.roots()?;
    let cutoff = prec.pow10(-i64::from(prec.digits() / 3));
    let mut real = Vec::new();
    let mut complex_count = 0;
    let deriv = target.derivative();
    for z in roots {
        let mag = Float::with_val(bits, z.abs_ref());
        let one = Float::with_val(bits, 1);
        let scale = if mag > one { mag } else { one };
        if Float::with_val(bits, z.imag().abs_ref()) > Float::with_val(bits, &cutoff * &scale) {
            complex_count += 1;
            continue;
        }
        let mut x = z.real().clone();
        for _ in 0..50 {
            let d = deriv.eval(&x);
            if d.is_zero() {
                break;
            }
            let dx = Float::with_val(bits, target.eval(&x) / d);
            x -= &dx;
            if dx.is_zero()
                || Float::with_val(bits, dx.abs_ref())
                    < Float::with_val(bits, &scale * &Float::with_val(bits, Float::i_exp(1, 8 - bits as i32)))
            {
                break;
            }
        }
        if &x >= lo && &x <= hi {
            real.push(x);
        }
    }
    real.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    Ok(AmRoots { real, complex_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Parabola(Precision);

    impl EnergyFunction for Parabola {
        fn precision(&self) -> Precision {
            self.0
        }
        fn order(&self) -> usize {
            0
        }
        fn kind(&self) -> FunctionalKind {
            FunctionalKind::Other
        }
        fn value(&self, e: &Real) -> Result<Real> {
            let d = Float::with_val(self.0.bits(), e - 2u32);
            Ok(d.square() + 1u32)
        }
        fn value_and_derivative(&self, e: &Real) -> Result<(Real, Option<Real>)> {
            let d = Float::with_val(self.0.bits(), e - 2u32);
            Ok((self.value(e)?, Some(d * 2u32)))
        }
    }

    fn p() -> Precision {
        Precision::new(40).unwrap()
    }

    #[test]
    fn parabola_minimum_and_bounds() {
        let f = Parabola(p());
        for refine in [Refine::Golden, Refine::Derivative] {
            let found = find_local_minima(
                &f,
                &p().zero(),
                &p().int(4),
                &p().parse("0.03").unwrap(),
                refine,
                &p().pow10(-15),
            )
            .unwrap();
            assert_eq!(found.len(), 1);
            let m = &found[0];
            assert!((m.energy.clone() - 2u32).abs() < 1e-14);
            assert!((m.value.clone() - 1u32).abs() < 1e-25);
            let b = bracket_bounds(&f, m, &p().int(2), None).unwrap();
            assert!((b.lower.clone() - 1u32).abs() < 1e-18);
            assert!((b.upper.clone() - 3u32).abs() < 1e-18);
        }
    }

    #[test]
    fn monotone_function_has_no_minimum() {
        let f = Parabola(p());
        assert!(matches!(
            find_local_minima(
                &f,
                &p().int(3),
                &p().int(5),
                &p().parse("0.1").unwrap(),
                Refine::Golden,
                &p().pow10(-10)
            ),
            Err(Error::NoMinimumFound { .. })
        ));
    }

    #[test]
    fn cap_rules() {
        let f = Parabola(p());
        let m = find_local_minima(
            &f,
            &p().zero(),
            &p().int(4),
            &p().parse("0.1").unwrap(),
            Refine::Golden,
            &p().pow10(-12),
        )
        .unwrap();
        let cap = choose_cap(&m, &p().parse("0.1").unwrap()).unwrap();
        assert!((cap.clone() - p().parse("1.1").unwrap()).abs() < 1e-20);
        assert!(matches!(
            bracket_bounds(&f, &m[0], &p().parse("0.5").unwrap(), None),
            Err(Error::CapBelowMinimum { .. })
        ));
        assert!(matches!(
            bracket_bounds(&f, &m[0], &p().int(50), None),
            Err(Error::NeighborCollision { .. })
        ));
    }
}
