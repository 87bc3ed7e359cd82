//! Reference weights, their power moments, and orthonormal polynomial tables.
//!
//! Two weights are built in:
//!
//! * the half-line Hermite weight `R(ξ) = e^{−ξ/2}/√ξ` with moments
//!   `w(p) = Γ(p + ½) 2^{p+½}`, whose orthonormal polynomials have a closed form;
//! * the QZM weight `exp(−βξη − α(ξ+η))` on the quarter plane, `α = √(ε₀/2)`,
//!   `β = B/2`, whose moments are `w(m, n) = n!/α^{m+n+2} Ω(m, n+1, g)` with
//!   `g = B/ε₀`. Its polynomials come from a Cholesky factorization of the Gram
//!   matrix in antidiagonal monomial order.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Float, Integer};

use crate::error::{Error, Result};
use crate::linalg::Packed;
use crate::mer::MomentIndex;
use crate::precision::{log10_abs, Decimal, Precision, Real, GUARD_DIGITS};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum WeightSpec {
    HermiteHalfline,
    Qzm { field: Decimal, eps0: Decimal },
}

impl WeightSpec {
    pub fn qzm(field: Decimal, eps0: Decimal) -> Self {
        WeightSpec::Qzm { field, eps0 }
    }

    /// Stable textual identity, used in cache keys.
    pub fn id(&self) -> String {
        match self {
            WeightSpec::HermiteHalfline => "hermite_halfline".to_string(),
            WeightSpec::Qzm { field, eps0 } => format!("qzm(B={field},eps0={eps0})"),
        }
    }

    pub fn ordering(&self) -> MonomialOrdering {
        match self {
            WeightSpec::HermiteHalfline => MonomialOrdering::Powers,
            WeightSpec::Qzm { .. } => MonomialOrdering::Antidiagonal,
        }
    }

    pub fn validate(&self, prec: Precision) -> Result<()> {
        if let WeightSpec::Qzm { field, eps0 } = self {
            let b = field.to_real(prec);
            let e = eps0.to_real(prec);
            if b.is_sign_negative() || b.is_zero() || e.is_sign_negative() || e.is_zero() {
                return Err(Error::InvalidParameter(format!(
                    "QZM weight needs B > 0 and eps0 > 0, got B = {field}, eps0 = {eps0}"
                )));
            }
        }
        Ok(())
    }
}

/// `w(p) = Γ(p+½) 2^{p+½}` for `0 ≤ p ≤ p_max`.
pub fn weight_moments_1d(spec: &WeightSpec, p_max: usize, prec: Precision) -> Result<Vec<Real>> {
    if *spec != WeightSpec::HermiteHalfline {
        return Err(Error::InvalidParameter(
            "1D moments exist only for the half-line Hermite weight".into(),
        ));
    }
    let bits = prec.bits();
    let mut w = Vec::with_capacity(p_max + 1);
    let two_pi = Float::with_val(bits, Constant::Pi) * 2u32;
    w.push(two_pi.sqrt());
    for p in 0..p_max {
        let next = Float::with_val(bits, &w[p] * (2 * p + 1) as u64);
        w.push(next);
    }
    Ok(w)
}

/// Enumeration of the monomials a polynomial table is expanded in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MonomialOrdering {
    /// `ξ^j`.
    Powers,
    /// `ξ^m η^n` by increasing `m + n`, and by decreasing `m` within an
    /// antidiagonal: `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), …`.
    Antidiagonal,
}

impl MonomialOrdering {
    pub fn monomial(self, j: usize) -> MomentIndex {
        match self {
            MonomialOrdering::Powers => MomentIndex::Single(j),
            MonomialOrdering::Antidiagonal => {
                let d = antidiagonal_of(j);
                let k = j - d * (d + 1) / 2;
                MomentIndex::Pair(d - k, k)
            }
        }
    }

    /// Total degree of monomial `j`.
    pub fn degree(self, j: usize) -> usize {
        match self {
            MonomialOrdering::Powers => j,
            MonomialOrdering::Antidiagonal => antidiagonal_of(j),
        }
    }
}

/// Antidiagonal `m + n` of the `j`-th monomial in antidiagonal order.
pub fn antidiagonal_of(j: usize) -> usize {
    let mut d = ((((8 * j + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while d * (d + 1) / 2 > j {
        d -= 1;
    }
    while (d + 1) * (d + 2) / 2 <= j {
        d += 1;
    }
    d
}

/// `Ω(m, n+1, g)` for `m ≤ max_m`, `n ≤ max_n`.
#[derive(Clone, Debug)]
pub struct OmegaTable {
    g: Real,
    values: Vec<Vec<Real>>,
    lost_digits: f64,
}

impl OmegaTable {
    /// `Ω(m, n+1, g)`.
    pub fn get(&self, m: usize, n: usize) -> &Real {
        &self.values[m][n]
    }

    pub fn g(&self) -> &Real {
        &self.g
    }

    pub fn max_m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn max_n(&self) -> usize {
        self.values[0].len() - 1
    }

    /// Estimated number of decimal digits lost to cancellation while building
    /// the table (relative to the arithmetic precision used).
    pub fn lost_digits(&self) -> f64 {
        self.lost_digits
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize, bits: u32) -> Vec<(Real, Real)> {
    let mut nodes: Vec<(Real, Real)> = Vec::with_capacity(n);
    let stop = Float::with_val(bits, Float::i_exp(1, 8 - bits as i32));
    let half = n.div_ceil(2);
    for i in 0..half {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut x = Float::with_val(bits, guess);
        for _ in 0..200 {
            let (p, pm1) = legendre(n, &x);
            // P'_n = n (x P_n − P_{n−1}) / (x² − 1)
            let x2m1 = Float::with_val(bits, x.square_ref()) - 1u32;
            let mut dp = Float::with_val(bits, &x * &p);
            dp -= &pm1;
            dp *= n as u64;
            dp /= &x2m1;
            let dx = Float::with_val(bits, &p / &dp);
            x -= &dx;
            if *dx.as_abs() <= stop {
                break;
            }
        }
        let (p, pm1) = legendre(n, &x);
        let x2m1 = Float::with_val(bits, x.square_ref()) - 1u32;
        let mut dp = Float::with_val(bits, &x * &p);
        dp -= &pm1;
        dp *= n as u64;
        dp /= &x2m1;
        let one_m_x2 = Float::with_val(bits, -&x2m1);
        let w = Float::with_val(bits, 2u32) / (one_m_x2 * dp.square());
        nodes.push((x, w));
    }
    let mut all: Vec<(Real, Real)> = Vec::with_capacity(n);
    for (i, (x, w)) in nodes.into_iter().enumerate() {
        if n % 2 == 1 && i == half - 1 {
            all.push((Float::new(bits), w));
        } else {
            all.push((Float::with_val(bits, -&x), w.clone()));
            all.push((x, w));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    all
}

fn legendre(n: usize, x: &Real) -> (Real, Real) {
    let bits = x.prec();
    let mut p0 = Float::with_val(bits, 1);
    let mut p1 = x.clone();
    if n == 0 {
        return (p0, Float::new(bits));
    }
    for k in 1..n {
        let mut p2 = Float::with_val(bits, x * &p1);
        p2 *= (2 * k + 1) as u64;
        p2 -= Float::with_val(bits, &p0 * k as u64);
        p2 /= (k + 1) as u64;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// `Ω(0, 1, g) = ∫₀^∞ e^{−s}/(1 + gs) ds` by composite Gauss–Legendre.
///
/// Panels start at `s = 0`, have width `min(4, max(s, 1/g))` (so the pole at
/// `s = −1/g` stays at least one panel width away) and run until `e^{−s}` is
/// negligible; the node count per panel doubles until two successive sums
/// agree to the requested precision.
pub fn omega_zero(g: &Real, prec: Precision) -> Result<Real> {
    if g.is_sign_negative() || g.is_zero() {
        return Err(Error::InvalidParameter("Ω needs g > 0".into()));
    }
    let work = prec.raised(GUARD_DIGITS);
    let bits = work.bits();
    let inv_g = Float::with_val(bits, g.recip_ref());
    let g = Float::with_val(bits, g);
    // e^{-S} well below the target relative to Ω ≳ ln(1+g)/(2g)
    let cutoff = f64::from(work.digits()) * std::f64::consts::LN_10 + g.to_f64().max(1.0).ln() + 8.0;
    let mut panels: Vec<(Real, Real)> = Vec::new();
    let mut a = Float::new(bits);
    let four = Float::with_val(bits, 4);
    while a.to_f64() < cutoff {
        let mut width = if a > inv_g { a.clone() } else { inv_g.clone() };
        if width > four {
            width = four.clone();
        }
        let b = Float::with_val(bits, &a + &width);
        panels.push((a, b.clone()));
        a = b;
    }
    let tol = prec.pow10(-i64::from(prec.digits()));
    let mut n = 16usize;
    let mut previous: Option<Real> = None;
    while n <= 4096 {
        let rule = gauss_legendre(n, bits);
        let mut total = Float::new(bits);
        for (lo, hi) in &panels {
            let mid = Float::with_val(bits, lo + hi) / 2u32;
            let rad = Float::with_val(bits, hi - lo) / 2u32;
            let mut panel = Float::new(bits);
            for (x, w) in &rule {
                let mut s = Float::with_val(bits, &rad * x);
                s += &mid;
                let mut den = Float::with_val(bits, &g * &s);
                den += 1u32;
                let f = Float::with_val(bits, -&s).exp() / den;
                panel += Float::with_val(bits, w * &f);
            }
            total += panel * &rad;
        }
        if let Some(prev) = &previous {
            let diff = Float::with_val(bits, &total - prev);
            let scale = Float::with_val(bits, &tol * &total);
            if *diff.as_abs() <= *scale.as_abs() {
                return Ok(Float::with_val(prec.bits(), &total));
            }
        }
        previous = Some(total);
        n *= 2;
    }
    Err(Error::PrecisionExhausted {
        at: "Ω(0,1,g) quadrature".into(),
        residual: f64::NAN,
        tolerance: tol.to_f64(),
    })
}

/// `Ω(m, n+1, g)` for `m ≤ max_m`, `n ≤ max_n`, accurate to the working
/// precision.
///
/// The `m = 0` column is the alternating sum
/// `Σ_{j=1}^{n} (−1)^{j+1}(n−j)!/(g^j n!) + (−1)^n Ω(0,1,g)/(gⁿ n!)`, and
/// higher `m` follow from
/// `Ω(m+1, n+1) = δ_{m0}/g + (m/g) Ω(m−1, n+1) + (m − n − 1/g) Ω(m, n+1)`.
/// Both lose digits to cancellation; a relative error estimate is propagated
/// through every step and the table is rebuilt at higher precision until the
/// estimate meets the target.
pub fn omega_table(g: &Real, max_m: usize, max_n: usize, prec: Precision) -> Result<OmegaTable> {
    let mut extra = GUARD_DIGITS;
    for _ in 0..6 {
        let work = prec.raised(extra);
        match omega_table_at(g, max_m, max_n, work, prec) {
            Ok(mut t) => {
                for row in t.values.iter_mut() {
                    for v in row.iter_mut() {
                        v.set_prec(prec.bits());
                    }
                }
                t.g = Float::with_val(prec.bits(), g);
                return Ok(t);
            }
            Err(Error::CancellationDetected { lost_digits, .. }) if lost_digits.is_finite() => {
                extra = GUARD_DIGITS + lost_digits.ceil() as u32 + 5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::CancellationDetected {
        lost_digits: f64::INFINITY,
        guard_digits: GUARD_DIGITS,
    })
}

/// Builds the Ω table with arithmetic at `work` and fails with
/// `CancellationDetected` unless every entry is accurate to `target`.
pub fn omega_table_at(g: &Real, max_m: usize, max_n: usize, work: Precision, target: Precision) -> Result<OmegaTable> {
    let bits = work.bits();
    let g = Float::with_val(bits, g);
    if g.is_sign_negative() || g.is_zero() {
        return Err(Error::InvalidParameter("Ω needs g > 0".into()));
    }
    let unit = -f64::from(work.digits());
    let om01 = omega_zero(&g, work)?;
    let inv_g = Float::with_val(bits, g.recip_ref());

    // log10 of relative error estimates, alongside the values
    let mut col0 = Vec::with_capacity(max_n + 1);
    let mut err0 = Vec::with_capacity(max_n + 1);
    col0.push(om01.clone());
    err0.push(unit);
    // term_j = (n−j)!/(g^j n!) built as a running product from j = 1
    for n in 1..=max_n {
        let mut sum = Float::new(bits);
        let mut biggest = f64::NEG_INFINITY;
        let mut term = Float::with_val(bits, &inv_g / n as u64);
        for j in 1..=n {
            if j > 1 {
                term *= &inv_g;
                term /= (n - j + 1) as u64;
            }
            biggest = biggest.max(log10_abs(&term));
            if j % 2 == 1 {
                sum += &term;
            } else {
                sum -= &term;
            }
        }
        // term is now 1/(gⁿ n!); add (−1)^n Ω(0,1)/(gⁿ n!)
        let mut last = Float::with_val(bits, &term * &om01);
        if n % 2 == 1 {
            last = -last;
        }
        let last_mag = log10_abs(&last);
        sum += &last;
        let r = log10_abs(&sum);
        let err = log_sum(&[biggest + unit, last_mag + err0[0]]) - r;
        col0.push(sum);
        err0.push(err.max(unit));
    }

    let mut values: Vec<Vec<Real>> = vec![col0];
    let mut errs: Vec<Vec<f64>> = vec![err0];
    for m in 0..max_m {
        let mut row = Vec::with_capacity(max_n + 1);
        let mut erow = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            let mut acc = if m == 0 { inv_g.clone() } else { Float::new(bits) };
            let mut parts: Vec<f64> = Vec::with_capacity(3);
            if m == 0 {
                parts.push(log10_abs(&inv_g) + unit);
            } else {
                let t = Float::with_val(bits, &values[m - 1][n] * &inv_g) * m as u64;
                parts.push(log10_abs(&t) + errs[m - 1][n]);
                acc += &t;
            }
            let mut c = Float::with_val(bits, m as i64 - n as i64);
            c -= &inv_g;
            let t = Float::with_val(bits, &c * &values[m][n]);
            parts.push(log10_abs(&t) + errs[m][n]);
            acc += &t;
            let e = (log_sum(&parts) - log10_abs(&acc)).max(unit);
            row.push(acc);
            erow.push(e);
        }
        values.push(row);
        errs.push(erow);
    }

    let worst = errs.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lost = worst - unit;
    for row in &values {
        for v in row {
            if !v.is_finite() || v.is_sign_negative() || v.is_zero() {
                return Err(Error::CancellationDetected {
                    lost_digits: f64::from(work.digits()),
                    guard_digits: GUARD_DIGITS,
                });
            }
        }
    }
    if worst > -f64::from(target.digits()) {
        return Err(Error::CancellationDetected {
            lost_digits: lost,
            guard_digits: work.digits() - target.digits(),
        });
    }
    Ok(OmegaTable {
        g,
        values,
        lost_digits: lost,
    })
}

/// `log10(Σ 10^{x_i})` without overflow.
fn log_sum(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + xs.iter().map(|x| 10f64.powf(x - top)).sum::<f64>().log10()
}

/// QZM weight moments `w(m, n)` for `m + n ≤ max_degree`.
#[derive(Clone, Debug)]
pub struct QzmMoments {
    values: Vec<Vec<Real>>,
}

impl QzmMoments {
    pub fn get(&self, m: usize, n: usize) -> &Real {
        &self.values[m][n]
    }
}

/// `w(m, n) = n!/α^{m+n+2} Ω(m, n+1, g)` with `α = √(ε₀/2)`, `g = B/ε₀`.
pub fn qzm_weight_moments(spec: &WeightSpec, max_degree: usize, prec: Precision) -> Result<QzmMoments> {
    let WeightSpec::Qzm { field, eps0 } = spec else {
        return Err(Error::InvalidParameter("not a QZM weight".into()));
    };
    spec.validate(prec)?;
    let bits = prec.bits();
    let b = field.to_real(prec);
    let e0 = eps0.to_real(prec);
    let g = Float::with_val(bits, &b / &e0);
    let alpha = (Float::with_val(bits, &e0 / 2u32)).sqrt();
    let inv_alpha = Float::with_val(bits, alpha.recip_ref());
    let omega = omega_table(&g, max_degree, max_degree, prec)?;
    let mut values = Vec::with_capacity(max_degree + 1);
    for m in 0..=max_degree {
        let mut row = Vec::with_capacity(max_degree + 1 - m);
        let mut scale = Float::with_val(bits, &inv_alpha).pow((m + 2) as u32);
        let mut fact = Float::with_val(bits, 1);
        for n in 0..=max_degree - m {
            if n > 0 {
                fact *= n as u64;
                scale *= &inv_alpha;
            }
            let mut w = Float::with_val(bits, &fact * &scale);
            w *= omega.get(m, n);
            if w.is_sign_negative() || w.is_zero() {
                return Err(Error::CancellationDetected {
                    lost_digits: omega.lost_digits(),
                    guard_digits: GUARD_DIGITS,
                });
            }
            row.push(w);
        }
        values.push(row);
    }
    Ok(QzmMoments { values })
}

/// Orthonormal polynomial coefficients: row `n` holds `Ξ_j^{(n)}`, `j ≤ n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTable {
    xi: Vec<Vec<Real>>,
    ordering: MonomialOrdering,
    gram: Option<Packed>,
}

impl BasisTable {
    pub fn from_parts(xi: Vec<Vec<Real>>, ordering: MonomialOrdering) -> Result<Self> {
        if xi.iter().enumerate().any(|(n, row)| row.len() != n + 1) {
            return Err(Error::InvalidParameter("basis rows must be lower triangular".into()));
        }
        Ok(BasisTable {
            xi,
            ordering,
            gram: None,
        })
    }

    pub fn n_max(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn ordering(&self) -> MonomialOrdering {
        self.ordering
    }

    /// `Ξ^{(n)}`.
    pub fn poly(&self, n: usize) -> &[Real] {
        &self.xi[n]
    }

    pub fn rows(&self) -> &[Vec<Real>] {
        &self.xi
    }

    pub fn gram(&self) -> Option<&Packed> {
        self.gram.as_ref()
    }

    /// Largest total degree among the monomials used.
    pub fn max_degree(&self) -> usize {
        self.ordering.degree(self.n_max())
    }
}

/// Gram matrix `W_ij = w(monomial_i + monomial_j)` over the first `size`
/// monomials.
pub fn gram_matrix(weight: &WeightSpec, size: usize, prec: Precision) -> Result<Packed> {
    let ordering = weight.ordering();
    match weight {
        WeightSpec::HermiteHalfline => {
            let w = weight_moments_1d(weight, 2 * size.saturating_sub(1), prec)?;
            Ok(Packed::from_fn(size, |i, j| w[i + j].clone()))
        }
        WeightSpec::Qzm { .. } => {
            let top = ordering.degree(size.saturating_sub(1));
            let w = qzm_weight_moments(weight, 2 * top, prec)?;
            Ok(Packed::from_fn(size, |i, j| {
                let (MomentIndex::Pair(a, b), MomentIndex::Pair(c, d)) = (ordering.monomial(i), ordering.monomial(j))
                else {
                    unreachable!("antidiagonal ordering yields pairs")
                };
                w.get(a + c, b + d).clone()
            }))
        }
    }
}

/// Builds `Ξ^{(n)}` for `n ≤ n_max`.
///
/// The half-line Hermite weight uses its closed form; the QZM weight goes
/// through [`build_basis_cholesky`].
pub fn build_basis(weight: &WeightSpec, n_max: usize, prec: Precision) -> Result<BasisTable> {
    weight.validate(prec)?;
    match weight {
        WeightSpec::HermiteHalfline => hermite_closed_form(n_max, prec),
        WeightSpec::Qzm { .. } => {
            // The Gram matrix is badly conditioned; the factorization is
            // redone with more digits until the basis is orthonormal to the
            // target tolerance. Ξ keeps the extra digits.
            let mut work = prec;
            for _ in 0..6 {
                let gram = gram_matrix(weight, n_max + 1, work)?;
                match cholesky_basis_at(gram, weight.ordering(), work, prec) {
                    Ok(t) => return Ok(t),
                    Err(Error::PrecisionExhausted { residual, .. }) if residual.is_finite() && residual > 0.0 => {
                        let lost = (residual.log10() + work.digits() as f64).max(0.0).ceil() as u32;
                        work = prec.raised(lost + GUARD_DIGITS + 5);
                    }
                    Err(Error::CholeskyNotPd { .. }) if work == prec => work = prec.raised(prec.digits()),
                    Err(e) => return Err(e),
                }
            }
            let gram = gram_matrix(weight, n_max + 1, work)?;
            cholesky_basis_at(gram, weight.ordering(), work, prec)
        }
    }
}

/// `Ξ^{(I)} = (Cᵀ)^{−1} ê_I` for `W = C Cᵀ`, i.e. the rows of `C^{−1}`.
///
/// A probe `Ξ W Ξᵀ v = v` with a fixed vector checks the result against the
/// residual tolerance.
pub fn build_basis_cholesky(gram: Packed, ordering: MonomialOrdering, prec: Precision) -> Result<BasisTable> {
    cholesky_basis_at(gram, ordering, prec, prec)
}

fn cholesky_basis_at(
    gram: Packed,
    ordering: MonomialOrdering,
    work: Precision,
    target: Precision,
) -> Result<BasisTable> {
    let mut c = gram.clone();
    c.cholesky_in_place().map_err(|pivot| Error::CholeskyNotPd { pivot })?;
    let inv = c.lower_inverse();
    let n = gram.dim();
    let xi: Vec<Vec<Real>> = (0..n).map(|i| inv.row(i).to_vec()).collect();
    let table = BasisTable {
        xi,
        ordering,
        gram: Some(gram),
    };
    let residual = orthonormality_probe(&table, work);
    let tol = target.tolerance().to_f64();
    if !(residual <= tol) {
        return Err(Error::PrecisionExhausted {
            at: "orthonormality of the Cholesky basis".into(),
            residual,
            tolerance: tol,
        });
    }
    Ok(table)
}

/// Relative residual of `Ξ W Ξᵀ v − v` for a fixed, nonsymmetric probe vector.
fn orthonormality_probe(table: &BasisTable, prec: Precision) -> f64 {
    let Some(gram) = &table.gram else { return 0.0 };
    let n = gram.dim();
    let bits = prec.bits();
    let v: Vec<Real> = (0..n)
        .map(|i| {
            let mut x = Float::with_val(bits, 1) / (i as u64 + 1);
            if i % 3 == 1 {
                x = -x;
            }
            x
        })
        .collect();
    // y = Ξᵀ v
    let mut y = vec![Float::new(bits); n];
    for (i, row) in table.xi.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            y[j] += Float::with_val(bits, x * &v[i]);
        }
    }
    let mut z = vec![Float::new(bits); n];
    for (i, zi) in z.iter_mut().enumerate() {
        for (j, yj) in y.iter().enumerate() {
            *zi += gram.sym(i, j) * yj;
        }
    }
    let mut worst = 0f64;
    let vnorm = crate::linalg::norm(&v);
    for (i, row) in table.xi.iter().enumerate() {
        let mut r = crate::linalg::dot(row, &z[..row.len()]);
        r -= &v[i];
        let rel = 10f64.powf(log10_abs(&r) - log10_abs(&vnorm));
        worst = worst.max(rel);
    }
    worst
}

/// `P_η(ξ) = (−½)^η √((2η)!)/(2π)^{¼} Σ_j (−2)^j ξ^j/((η−j)!(2j)!)`.
///
/// The overall factor makes the leading coefficient positive, matching the
/// Cholesky normalization.
pub fn hermite_closed_form(n_max: usize, prec: Precision) -> Result<BasisTable> {
    let bits = prec.bits();
    let two_pi = Float::with_val(bits, Constant::Pi) * 2u32;
    let quarter = Float::with_val(bits, two_pi.sqrt()).sqrt();
    let mut xi = Vec::with_capacity(n_max + 1);
    for eta in 0..=n_max {
        let f2eta = Float::with_val(bits, Integer::from(Integer::factorial(2 * eta as u32)));
        let front = Float::with_val(bits, f2eta.sqrt()) / &quarter;
        let mut row = Vec::with_capacity(eta + 1);
        for j in 0..=eta {
            let den =
                Integer::from(Integer::factorial((eta - j) as u32)) * Integer::from(Integer::factorial(2 * j as u32));
            let mut c = Float::with_val(bits, &front / Float::with_val(bits, &den));
            // (−½)^η (−2)^j = (−1)^{η+j} 2^{j−η}
            c <<= j as i32 - eta as i32;
            if (eta + j) % 2 == 1 {
                c = -c;
            }
            row.push(c);
        }
        xi.push(row);
    }
    BasisTable::from_parts(xi, MonomialOrdering::Powers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d: u32) -> Precision {
        Precision::new(d).unwrap()
    }

    #[test]
    fn first_hermite_moments() {
        let w = weight_moments_1d(&WeightSpec::HermiteHalfline, 3, p(40)).unwrap();
        let root = Float::with_val(p(40).bits(), Constant::Pi) * 2u32;
        assert_eq!(w[0], root.sqrt());
        assert_eq!(w[1], w[0]);
        assert_eq!(w[3], Float::with_val(p(40).bits(), &w[0] * 15u32));
    }

    #[test]
    fn constant_polynomial() {
        let b = hermite_closed_form(0, p(40)).unwrap();
        let bits = p(40).bits();
        let expect = Float::with_val(bits, Float::with_val(bits, Constant::Pi) * 2u32).pow(-0.25f64);
        let rel = Float::with_val(bits, &b.poly(0)[0] - &expect) / &expect;
        assert!(rel.to_f64().abs() < 1e-38);
    }

    #[test]
    fn antidiagonal_order() {
        let o = MonomialOrdering::Antidiagonal;
        let got: Vec<_> = (0..6).map(|j| o.monomial(j)).collect();
        use MomentIndex::Pair;
        assert_eq!(
            got,
            vec![Pair(0, 0), Pair(1, 0), Pair(0, 1), Pair(2, 0), Pair(1, 1), Pair(0, 2)]
        );
        for j in 0..500 {
            let d = antidiagonal_of(j);
            assert!(d * (d + 1) / 2 <= j && j < (d + 1) * (d + 2) / 2);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let bits = p(50).bits();
        let rule = gauss_legendre(7, bits);
        assert_eq!(rule.len(), 7);
        // ∫ x^12 over [−1, 1] = 2/13, exact for 7 nodes
        let mut s = Float::new(bits);
        for (x, w) in &rule {
            s += Float::with_val(bits, x.pow(12u32)) * w;
        }
        let expect = Float::with_val(bits, 2) / 13u32;
        assert!((s - expect).abs().to_f64() < 1e-45);
    }

    #[test]
    fn omega_zero_at_one() {
        let prec = p(40);
        let v = omega_zero(&prec.int(1), prec).unwrap();
        assert_eq!(&crate::precision::format_sig(&v, 9), "0.596347362");
    }

    #[test]
    fn omega_rejects_nonpositive_g() {
        assert!(omega_zero(&p(30).zero(), p(30)).is_err());
        assert!(omega_table(&p(30).int(-1), 2, 2, p(30)).is_err());
    }
}
