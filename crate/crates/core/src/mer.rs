//! Moment recursions and the energy-dependent coefficient tables.
//!
//! A problem's moments satisfy a linear recursion with the energy as a
//! parameter. Writing every moment as a combination of the free ("missing")
//! moments `u_ℓ`,
//!
//! ```text
//! u(p) = Σ_ℓ M_E(p, ℓ) u_ℓ ,        M_E(ℓ₁, ℓ₂) = δ_{ℓ₁ℓ₂},
//! ```
//!
//! the coefficients `M_E(p, ℓ)` obey the same recursion in `p`. Tables are
//! built numerically at one energy at a time.

use rug::Float;

use crate::error::{Error, Result};
use crate::precision::{log10_abs, Decimal, Precision, Real};

/// Layout of the moment indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexSpace {
    /// Nonnegative integers `p`.
    OneD,
    /// Nonnegative pairs `(m, n)` with `u(m, n) = u(n, m)`.
    TwoDSymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MissingMomentOrder {
    Fixed(usize),
    /// Grows with the expansion order (multidimensional problems).
    Hierarchical,
}

/// Normalization imposed on the missing-moment vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// `‖u‖ = 1`; the functional is the smallest eigenvalue of `P_I`.
    UnitNorm,
    /// `u₀ = 1`; the functional is the constrained minimum `L_I`.
    LeadingOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnergyParam {
    /// The eigenvalue `E` itself.
    Energy,
    /// Binding energy `ε = B/2 − E`.
    BindingEnergy,
}

/// One term `c(p, E) · u(p + offset)` of a one-dimensional recursion, with
/// `c(p, E) = energy · E + Σ_k poly[k] p^k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub offset: isize,
    pub energy: i64,
    pub poly: Vec<i64>,
}

impl Term {
    pub fn new(offset: isize, energy: i64, poly: &[i64]) -> Self {
        Term {
            offset,
            energy,
            poly: poly.to_vec(),
        }
    }

    pub fn coefficient(&self, p: usize, energy: &Real) -> Real {
        let prec = energy.prec();
        let mut c = Float::with_val(prec, 0);
        let mut pk = Float::with_val(prec, 1);
        for &a in &self.poly {
            if a != 0 {
                c += Float::with_val(prec, &pk * a);
            }
            pk *= p as u64;
        }
        if self.energy != 0 {
            c += Float::with_val(prec, energy * self.energy);
        }
        c
    }
}

/// `u(p + lead) = Σ_t c_t(p, E) u(p + offset_t)` for `p ≥ 0`; terms whose
/// index falls below zero are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearRecurrence {
    pub lead: usize,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Recurrence {
    Linear(LinearRecurrence),
    /// Parabolic-coordinate quadratic Zeeman moment equation with field `B`:
    /// `m²u(m−1,n) + n²u(m,n−1) − ½(Bm+ε)u(m,n+1) − ½(Bn+ε)u(m+1,n) + u(m,n) = 0`.
    Qzm {
        field: Decimal,
    },
}

/// A registered moment-equation representation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProblemSpec {
    pub name: String,
    pub missing_moment_order: MissingMomentOrder,
    pub recurrence: Recurrence,
    pub energy_param: EnergyParam,
    pub index_space: IndexSpace,
    pub constraint: Constraint,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.recurrence, self.index_space, self.missing_moment_order) {
            (Recurrence::Linear(rec), IndexSpace::OneD, MissingMomentOrder::Fixed(ms)) => {
                if rec.lead != ms + 1 {
                    return Err(Error::InvalidParameter(format!(
                        "recursion of order {} needs {} missing moments, spec says {}",
                        rec.lead,
                        rec.lead,
                        ms + 1
                    )));
                }
                for t in &rec.terms {
                    if t.offset >= rec.lead as isize {
                        return Err(Error::InvalidParameter(
                            "recursion term refers to a moment not yet generated".into(),
                        ));
                    }
                }
                Ok(())
            }
            (Recurrence::Qzm { .. }, IndexSpace::TwoDSymmetric, MissingMomentOrder::Hierarchical) => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "inconsistent index space / recursion for `{}`",
                self.name
            ))),
        }
    }

    /// Fixed missing-moment order for 1D specs.
    pub fn fixed_m_s(&self) -> Option<usize> {
        match self.missing_moment_order {
            MissingMomentOrder::Fixed(ms) => Some(ms),
            MissingMomentOrder::Hierarchical => None,
        }
    }
}

/// A moment index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MomentIndex {
    Single(usize),
    Pair(usize, usize),
}

impl std::fmt::Display for MomentIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentIndex::Single(p) => write!(f, "u({p})"),
            MomentIndex::Pair(m, n) => write!(f, "u({m},{n})"),
        }
    }
}

/// First storage row of antidiagonal `d` in the symmetry-reduced layout
/// (pairs `(m, n)`, `m ≤ n`, ordered by `m + n` then `m`).
pub fn antidiagonal_offset(d: usize) -> usize {
    if d % 2 == 0 {
        (d / 2) * (d / 2 + 1)
    } else {
        ((d + 1) / 2) * ((d + 1) / 2)
    }
}

/// Storage row of `u(m, n)` in the symmetry-reduced layout.
pub fn reduced_row(m: usize, n: usize) -> usize {
    let (a, b) = if m <= n { (m, n) } else { (n, m) };
    antidiagonal_offset(a + b) + a
}

/// `M_E(index, ℓ)` (and optionally `∂_E M_E`) at one energy.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTable {
    energy: Real,
    m_s: usize,
    max_index: usize,
    space: IndexSpace,
    values: Vec<Vec<Real>>,
    derivatives: Option<Vec<Vec<Real>>>,
    max_residual: f64,
}

impl CoeffTable {
    /// Reassembles a table from stored parts (cache loading).
    pub fn from_parts(
        energy: Real,
        m_s: usize,
        max_index: usize,
        space: IndexSpace,
        values: Vec<Vec<Real>>,
        derivatives: Option<Vec<Vec<Real>>>,
    ) -> Result<Self> {
        let rows = match space {
            IndexSpace::OneD => max_index + 1,
            IndexSpace::TwoDSymmetric => antidiagonal_offset(max_index + 1),
        };
        let shape_ok = |v: &Vec<Vec<Real>>| v.len() == rows && v.iter().all(|r| r.len() == m_s + 1);
        if !shape_ok(&values) || derivatives.as_ref().is_some_and(|d| !shape_ok(d)) {
            return Err(Error::InvalidParameter("coefficient table has the wrong shape".into()));
        }
        Ok(CoeffTable {
            energy,
            m_s,
            max_index,
            space,
            values,
            derivatives,
            max_residual: 0.0,
        })
    }

    pub fn energy(&self) -> &Real {
        &self.energy
    }

    pub fn m_s(&self) -> usize {
        self.m_s
    }

    /// 1D: largest `p`; 2D: largest antidiagonal sum `m + n`.
    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn index_space(&self) -> IndexSpace {
        self.space
    }

    /// Largest relative recursion residual seen when the table was checked.
    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn rows(&self) -> &[Vec<Real>] {
        &self.values
    }

    pub fn derivative_rows(&self) -> Option<&[Vec<Real>]> {
        self.derivatives.as_deref()
    }

    pub fn row_of(&self, index: MomentIndex) -> Result<usize> {
        let row = match (self.space, index) {
            (IndexSpace::OneD, MomentIndex::Single(p)) if p <= self.max_index => Some(p),
            (IndexSpace::TwoDSymmetric, MomentIndex::Pair(m, n)) if m + n <= self.max_index => Some(reduced_row(m, n)),
            _ => None,
        };
        row.ok_or_else(|| Error::CoverageError {
            index: index.to_string(),
        })
    }

    /// `M_E(index, ·)`.
    pub fn row(&self, index: MomentIndex) -> Result<&[Real]> {
        Ok(&self.values[self.row_of(index)?])
    }

    /// `∂_E M_E(index, ·)`, if the derivative table was built.
    pub fn derivative_row(&self, index: MomentIndex) -> Result<Option<&[Real]>> {
        let r = self.row_of(index)?;
        Ok(self.derivatives.as_ref().map(|d| d[r].as_slice()))
    }

    /// Moments generated from a missing-moment vector: `Σ_ℓ M_E(·, ℓ) u_ℓ`.
    pub fn apply(&self, u: &[Real]) -> Vec<Real> {
        self.values
            .iter()
            .map(|row| crate::linalg::dot(row, &u[..row.len().min(u.len())]))
            .collect()
    }
}

fn delta_row(m_s: usize, l: Option<usize>, prec: Precision) -> Vec<Real> {
    (0..=m_s)
        .map(|k| if Some(k) == l { prec.int(1) } else { prec.zero() })
        .collect()
}

/// Builds `M_E(p, ℓ)` for `p ≤ max_index` (1D) or `u(m, n)`, `m + n ≤ max_index`
/// (2D, where `max_index` must be `2 m_s + 1`).
pub fn build_coeff_table(spec: &ProblemSpec, energy: &Real, max_index: usize, m_s: usize) -> Result<CoeffTable> {
    spec.validate()?;
    if max_index < m_s {
        return Err(Error::InvalidParameter(format!(
            "max_index {max_index} is below the missing-moment order {m_s}"
        )));
    }
    match &spec.recurrence {
        Recurrence::Linear(rec) => {
            if spec.fixed_m_s() != Some(m_s) {
                return Err(Error::InvalidParameter(format!(
                    "`{}` has a fixed missing-moment order, not {m_s}",
                    spec.name
                )));
            }
            let table = linear_table(rec, energy, max_index, m_s);
            check_linear(rec, &table)?;
            Ok(table)
        }
        Recurrence::Qzm { field } => {
            if max_index != 2 * m_s + 1 {
                return Err(Error::InvalidParameter(format!(
                    "the 2D table for m_s = {m_s} spans antidiagonals up to {}, not {max_index}",
                    2 * m_s + 1
                )));
            }
            let prec = precision_of(energy)?;
            generate_qzm_moments(spec, energy, &field.to_real(prec), m_s)
        }
    }
}

/// Adds `∂_E M_E` by differentiating the recursion; initialization rows are
/// exactly zero.
pub fn build_derivative_table(spec: &ProblemSpec, table: &CoeffTable) -> Result<CoeffTable> {
    let mut out = table.clone();
    match &spec.recurrence {
        Recurrence::Linear(rec) => {
            out.derivatives = Some(linear_derivatives(rec, table));
            check_linear(rec, &out)?;
        }
        Recurrence::Qzm { field } => {
            let prec = precision_of(&table.energy)?;
            let field = field.to_real(prec);
            out.derivatives = Some(qzm_sweep(&field, &table.energy, table.m_s, Some(&table.values))?);
            out.max_residual = qzm_residual(&field, &out)?;
        }
    }
    Ok(out)
}

fn precision_of(x: &Real) -> Result<Precision> {
    let digits = (f64::from(x.prec() - 4) / std::f64::consts::LOG2_10).floor() as u32;
    Precision::new(digits)
}

fn linear_table(rec: &LinearRecurrence, energy: &Real, max_index: usize, m_s: usize) -> CoeffTable {
    let prec = energy.prec();
    let p = Precision::new((f64::from(prec) / std::f64::consts::LOG2_10) as u32).unwrap_or_else(|_| {
        // precision_of has already been checked by callers that care
        Precision::new(16).expect("16 digits")
    });
    let mut values: Vec<Vec<Real>> = (0..=m_s).map(|l| delta_row(m_s, Some(l), p)).collect();
    for q in 0..=max_index.saturating_sub(rec.lead) {
        if q + rec.lead > max_index {
            break;
        }
        let mut row = vec![Float::new(prec); m_s + 1];
        for t in &rec.terms {
            let idx = q as isize + t.offset;
            if idx < 0 {
                continue;
            }
            let c = t.coefficient(q, energy);
            for (acc, src) in row.iter_mut().zip(&values[idx as usize]) {
                *acc += &c * src;
            }
        }
        values.push(row);
    }
    CoeffTable {
        energy: energy.clone(),
        m_s,
        max_index,
        space: IndexSpace::OneD,
        values,
        derivatives: None,
        max_residual: 0.0,
    }
}

fn linear_derivatives(rec: &LinearRecurrence, table: &CoeffTable) -> Vec<Vec<Real>> {
    let prec = table.energy.prec();
    let m_s = table.m_s;
    let mut d: Vec<Vec<Real>> = vec![vec![Float::new(prec); m_s + 1]; m_s + 1];
    for q in 0..=table.max_index.saturating_sub(rec.lead) {
        if q + rec.lead > table.max_index {
            break;
        }
        let mut row = vec![Float::new(prec); m_s + 1];
        for t in &rec.terms {
            let idx = q as isize + t.offset;
            if idx < 0 {
                continue;
            }
            let idx = idx as usize;
            let c = t.coefficient(q, &table.energy);
            for (acc, src) in row.iter_mut().zip(&d[idx]) {
                *acc += &c * src;
            }
            if t.energy != 0 {
                for (acc, src) in row.iter_mut().zip(&table.values[idx]) {
                    *acc += Float::with_val(prec, src * t.energy);
                }
            }
        }
        d.push(row);
    }
    d
}

/// Relative residual of every recursion instance (values and, if present,
/// derivatives) against the working tolerance.
fn check_linear(rec: &LinearRecurrence, table: &CoeffTable) -> Result<()> {
    let prec = precision_of(&table.energy)?;
    let tol = prec.tolerance().to_f64();
    let bits = table.energy.prec();
    let mut worst = 0f64;
    for q in 0..=table.max_index.saturating_sub(rec.lead) {
        if q + rec.lead > table.max_index {
            break;
        }
        for l in 0..=table.m_s {
            for pass in 0..2 {
                let rows = match (pass, &table.derivatives) {
                    (0, _) => &table.values,
                    (_, Some(d)) => d,
                    _ => continue,
                };
                let mut r = rows[q + rec.lead][l].clone();
                let mut scale = Float::with_val(bits, r.abs_ref());
                for t in &rec.terms {
                    let idx = q as isize + t.offset;
                    if idx < 0 {
                        continue;
                    }
                    let idx = idx as usize;
                    let mut term = Float::with_val(bits, &t.coefficient(q, &table.energy) * &rows[idx][l]);
                    if pass == 1 && t.energy != 0 {
                        term += Float::with_val(bits, &table.values[idx][l] * t.energy);
                    }
                    scale += &*term.as_abs();
                    r -= &term;
                }
                let rel = relative(&r, &scale);
                worst = worst.max(rel);
                if rel > tol {
                    return Err(Error::PrecisionExhausted {
                        at: format!("p = {}, ℓ = {l}", q + rec.lead),
                        residual: rel,
                        tolerance: tol,
                    });
                }
            }
        }
    }
    let _ = worst;
    Ok(())
}

fn relative(r: &Real, scale: &Real) -> f64 {
    if scale.is_zero() {
        return if r.is_zero() { 0.0 } else { f64::INFINITY };
    }
    10f64.powf(log10_abs(r) - log10_abs(scale)).min(f64::MAX)
}

/// Generates `M_ε(m, n, ℓ)` for all `m + n ≤ 2 m_s + 1` by an antidiagonal
/// sweep.
///
/// The instances of the moment equation with `m + n = d` (one per reduced pair,
/// since `(m, n)` and `(n, m)` give the same equation) determine the reduced
/// moments on antidiagonal `d + 1`, except the diagonal `u(k, k)` which is a
/// missing moment. In the reduced ordering that square system is upper
/// bidiagonal, so it is solved exactly by back substitution from the middle of
/// the antidiagonal outwards.
pub fn generate_qzm_moments(spec: &ProblemSpec, eps: &Real, field: &Real, m_s: usize) -> Result<CoeffTable> {
    if !matches!(spec.recurrence, Recurrence::Qzm { .. }) {
        return Err(Error::InvalidParameter(format!("`{}` is not a 2D problem", spec.name)));
    }
    if !eps.is_finite() || eps.is_sign_negative() || eps.is_zero() {
        return Err(Error::InvalidParameter(format!(
            "binding energy must be positive, got {}",
            eps.to_f64()
        )));
    }
    if field.is_sign_negative() || field.is_zero() {
        return Err(Error::InvalidParameter("magnetic field must be positive".into()));
    }
    let values = qzm_sweep(field, eps, m_s, None)?;
    let mut table = CoeffTable {
        energy: eps.clone(),
        m_s,
        max_index: 2 * m_s + 1,
        space: IndexSpace::TwoDSymmetric,
        values,
        derivatives: None,
        max_residual: 0.0,
    };
    table.max_residual = qzm_residual(field, &table)?;
    Ok(table)
}

/// Shared sweep for values (`base = None`) and ε-derivatives (`base` holds the
/// value table, which supplies the inhomogeneous terms).
fn qzm_sweep(field: &Real, eps: &Real, m_s: usize, base: Option<&Vec<Vec<Real>>>) -> Result<Vec<Vec<Real>>> {
    let bits = eps.prec();
    let max_d = 2 * m_s + 1;
    let rows = antidiagonal_offset(max_d + 1);
    let zero_row = vec![Float::new(bits); m_s + 1];
    let mut v: Vec<Vec<Real>> = vec![zero_row.clone(); rows];
    // missing moments u(ℓ, ℓ)
    for l in 0..=m_s {
        if base.is_none() {
            v[reduced_row(l, l)][l] = Float::with_val(bits, 1);
        }
    }
    let half = |k: usize| -> Real {
        let mut c = Float::with_val(bits, field * (k as u64));
        c += eps;
        c / 2u32
    };
    for d in 0..max_d {
        let k = d / 2;
        // unknowns: reduced pairs (a, d + 1 − a), a = 0..=k
        let mut solved: Vec<Option<Vec<Real>>> = vec![None; k + 2];
        for m in (0..=k).rev() {
            let n = d - m;
            let mut rhs = zero_row.clone();
            // m² u(m−1, n) + n² u(m, n−1) + u(m, n)
            if m > 0 {
                let r = &v[reduced_row(m - 1, n)];
                for (acc, x) in rhs.iter_mut().zip(r) {
                    *acc += Float::with_val(bits, x * (m * m) as u64);
                }
            }
            if n > 0 {
                let r = &v[reduced_row(m, n - 1)];
                for (acc, x) in rhs.iter_mut().zip(r) {
                    *acc += Float::with_val(bits, x * (n * n) as u64);
                }
            }
            for (acc, x) in rhs.iter_mut().zip(&v[reduced_row(m, n)]) {
                *acc += x;
            }
            if let Some(vals) = base {
                // −½ u(m, n+1) − ½ u(m+1, n) from differentiating the ε coefficients
                for (acc, (x, y)) in rhs
                    .iter_mut()
                    .zip(vals[reduced_row(m, n + 1)].iter().zip(&vals[reduced_row(m + 1, n)]))
                {
                    let s = Float::with_val(bits, x + y);
                    *acc -= s / 2u32;
                }
            }
            let pivot = if m == n {
                // u(m+1, n) = u(n, m+1) is the same unknown
                Float::with_val(bits, half(m) * 2u32)
            } else {
                // −½(Bn+ε) u(m+1, n): either the next unknown or a missing moment
                let coeff = half(n);
                let known: Vec<Real> = if m + 1 == n {
                    v[reduced_row(n, n)].clone()
                } else {
                    solved[m + 1]
                        .clone()
                        .ok_or(Error::LinearSolveSingular { antidiagonal: d })?
                };
                for (acc, x) in rhs.iter_mut().zip(&known) {
                    *acc -= &coeff * x;
                }
                half(m)
            };
            if pivot.is_zero() || !pivot.is_finite() {
                return Err(Error::LinearSolveSingular { antidiagonal: d });
            }
            for x in rhs.iter_mut() {
                *x /= &pivot;
            }
            v[reduced_row(m, n + 1)] = rhs.clone();
            solved[m] = Some(rhs);
        }
    }
    Ok(v)
}

/// Largest relative residual of the moment equation over all `m + n ≤ 2 m_s`
/// (both orientations), for values and derivatives.
fn qzm_residual(field: &Real, table: &CoeffTable) -> Result<f64> {
    let prec = precision_of(&table.energy)?;
    let tol = prec.tolerance().to_f64();
    let bits = table.energy.prec();
    let eps = &table.energy;
    let mut worst = 0f64;
    for d in 0..=2 * table.m_s {
        for m in 0..=d {
            let n = d - m;
            let cm = {
                let mut c = Float::with_val(bits, field * (m as u64));
                c += eps;
                c / 2u32
            };
            let cn = {
                let mut c = Float::with_val(bits, field * (n as u64));
                c += eps;
                c / 2u32
            };
            for l in 0..=table.m_s {
                for pass in 0..2 {
                    let rows = match (pass, &table.derivatives) {
                        (0, _) => &table.values,
                        (_, Some(dv)) => dv,
                        _ => continue,
                    };
                    let at = |a: usize, b: usize| &rows[reduced_row(a, b)][l];
                    let mut terms: Vec<Real> = Vec::with_capacity(7);
                    if m > 0 {
                        terms.push(Float::with_val(bits, at(m - 1, n) * (m * m) as u64));
                    }
                    if n > 0 {
                        terms.push(Float::with_val(bits, at(m, n - 1) * (n * n) as u64));
                    }
                    terms.push(-Float::with_val(bits, &cm * at(m, n + 1)));
                    terms.push(-Float::with_val(bits, &cn * at(m + 1, n)));
                    terms.push(at(m, n).clone());
                    if pass == 1 {
                        let vals = &table.values;
                        terms.push(-Float::with_val(bits, &vals[reduced_row(m, n + 1)][l] / 2u32));
                        terms.push(-Float::with_val(bits, &vals[reduced_row(m + 1, n)][l] / 2u32));
                    }
                    let mut r = Float::new(bits);
                    let mut scale = Float::new(bits);
                    for t in &terms {
                        r += t;
                        scale += &*t.as_abs();
                    }
                    let rel = relative(&r, &scale);
                    worst = worst.max(rel);
                    if rel > tol {
                        return Err(Error::PrecisionExhausted {
                            at: format!("(m, n) = ({m}, {n}), ℓ = {l}"),
                            residual: rel,
                            tolerance: tol,
                        });
                    }
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{harmonic_spec, quartic_spec, qzm_spec};

    fn prec() -> Precision {
        Precision::new(50).unwrap()
    }

    #[test]
    fn harmonic_first_steps() {
        let e = prec().int(1);
        let t = build_coeff_table(&harmonic_spec(), &e, 4, 0).unwrap();
        // u(1) = E, u(2) = E² + 2 at E = 1
        assert_eq!(t.row(MomentIndex::Single(0)).unwrap()[0], 1);
        assert_eq!(t.row(MomentIndex::Single(1)).unwrap()[0], 1);
        assert_eq!(t.row(MomentIndex::Single(2)).unwrap()[0], 3);
    }

    #[test]
    fn quartic_initialization_is_identity() {
        let e = prec().parse("-2.75").unwrap();
        let t = build_coeff_table(&quartic_spec(), &e, 10, 1).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 1 } else { 0 };
                assert_eq!(t.row(MomentIndex::Single(a)).unwrap()[b], expect);
            }
        }
        let d = build_derivative_table(&quartic_spec(), &t).unwrap();
        for a in 0..2 {
            for x in d.derivative_row(MomentIndex::Single(a)).unwrap().unwrap() {
                assert!(x.is_zero());
            }
        }
        // first differentiated step: ∂M(2, 0) = M(0, 0) = 1
        assert_eq!(d.derivative_row(MomentIndex::Single(2)).unwrap().unwrap()[0], 1);
    }

    #[test]
    fn wrong_missing_order_rejected() {
        let e = prec().int(1);
        assert!(matches!(
            build_coeff_table(&quartic_spec(), &e, 10, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_coeff_table(&harmonic_spec(), &e, 0, 1).is_err());
    }

    #[test]
    fn qzm_first_moment_hand_solved() {
        // (m, n) = (0, 0): −(ε/2)u(0,1) − (ε/2)u(1,0) + u(0,0) = 0 ⇒ u(1,0) = 1/ε
        let p = prec();
        let spec = qzm_spec("2".parse().unwrap());
        let eps = p.parse("0.75").unwrap();
        let t = build_coeff_table(&spec, &eps, 1, 0).unwrap();
        let u10 = &t.row(MomentIndex::Pair(1, 0)).unwrap()[0];
        let expect = Float::with_val(p.bits(), 1) / &eps;
        assert_eq!(*u10, expect);
        assert_eq!(
            t.row(MomentIndex::Pair(0, 1)).unwrap(),
            t.row(MomentIndex::Pair(1, 0)).unwrap()
        );
    }

    #[test]
    fn qzm_rejects_nonpositive_binding_energy() {
        let p = prec();
        let spec = qzm_spec("2".parse().unwrap());
        for e in ["0", "-0.1"] {
            assert!(matches!(
                build_coeff_table(&spec, &p.parse(e).unwrap(), 5, 2),
                Err(Error::InvalidParameter(_))
            ));
        }
        assert!(build_coeff_table(&spec, &p.parse("1").unwrap(), 4, 2).is_err());
    }

    #[test]
    fn qzm_diagonal_initialization() {
        let p = prec();
        let spec = qzm_spec("0.2".parse().unwrap());
        let t = build_coeff_table(&spec, &p.parse("0.59").unwrap(), 9, 4).unwrap();
        for a in 0..=4 {
            for b in 0..=4 {
                let expect = if a == b { 1 } else { 0 };
                assert_eq!(t.row(MomentIndex::Pair(a, a)).unwrap()[b], expect);
            }
        }
        assert!(t.max_residual() < p.tolerance().to_f64());
    }

    #[test]
    fn coverage_error_outside_table() {
        let p = prec();
        let t = build_coeff_table(&harmonic_spec(), &p.int(3), 5, 0).unwrap();
        assert!(matches!(
            t.row(MomentIndex::Single(6)),
            Err(Error::CoverageError { .. })
        ));
        assert!(t.row(MomentIndex::Pair(0, 1)).is_err());
    }

    #[test]
    fn reduced_rows_are_dense() {
        let mut seen = Vec::new();
        for d in 0..9 {
            for m in 0..=d / 2 {
                seen.push(reduced_row(m, d - m));
            }
        }
        assert_eq!(seen, (0..seen.len()).collect::<Vec<_>>());
        assert_eq!(reduced_row(3, 1), reduced_row(1, 3));
    }
}
