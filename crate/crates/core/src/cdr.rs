//! Projection of the moment tables onto the orthonormal polynomials.
//!
//! `Λ^{(n)}_ℓ(E) = Σ_j Ξ_j^{(n)} M_E(j, ℓ)` gives the expansion coefficient
//! `c_n = Λ^{(n)} · u` of the wavefunction, and the partial sums
//! `S_I(E, u) = Σ_{n ≤ I} c_n² = ⟨u|P_I(E)|u⟩` with `P_I = Σ Λ^{(n)}Λ^{(n)ᵀ}`.
//! The energy functionals are the smallest eigenvalue `λ_I` of `P_I` (unit
//! norm constraint) and the constrained minimum `L_I` over `u₀ = 1`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rug::Float;

use crate::error::{Error, Result};
use crate::linalg::{dot, normalize, Matrix};
use crate::mer::{build_coeff_table, build_derivative_table, CoeffTable, Constraint, IndexSpace, ProblemSpec};
use crate::precision::{format_exact, log10_abs, Precision, Real};
use crate::weight::{build_basis, BasisTable, MonomialOrdering, WeightSpec};

/// Missing-moment order needed by polynomial index `n` of a 2D basis:
/// monomials up to antidiagonal `2 m_s + 1` depend on `u_0 … u_{m_s}` only.
pub fn qzm_m_s_of_order(n: usize) -> usize {
    crate::weight::antidiagonal_of(n) / 2
}

/// Largest polynomial index served by `1 + m_s` missing moments in 2D:
/// `(m_s + 1)(2 m_s + 3) − 1`.
pub fn qzm_top_order(m_s: usize) -> usize {
    (m_s + 1) * (2 * m_s + 3) - 1
}

/// `Λ^{(n)}` for `n ≤ order`, and optionally `∂_E Λ^{(n)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaTable {
    energy: Real,
    vectors: Vec<Vec<Real>>,
    derivatives: Option<Vec<Vec<Real>>>,
}

impl LambdaTable {
    pub fn order(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn energy(&self) -> &Real {
        &self.energy
    }

    /// `Λ^{(n)}`, of length `1 + m_s(n)`.
    pub fn vector(&self, n: usize) -> &[Real] {
        &self.vectors[n]
    }

    pub fn derivative(&self, n: usize) -> Option<&[Real]> {
        self.derivatives.as_ref().map(|d| d[n].as_slice())
    }

    /// Largest vector length, `1 + m_s(order)`.
    pub fn dim(&self) -> usize {
        self.vectors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Expansion coefficient `c_n = Λ^{(n)} · u`.
    pub fn coefficient(&self, n: usize, u: &[Real]) -> Real {
        let v = &self.vectors[n];
        dot(v, &u[..v.len()])
    }
}

fn vector_dim(basis: &BasisTable, coeffs: &CoeffTable, n: usize) -> usize {
    match (basis.ordering(), coeffs.index_space()) {
        (MonomialOrdering::Antidiagonal, IndexSpace::TwoDSymmetric) => 1 + qzm_m_s_of_order(n),
        _ => 1 + coeffs.m_s(),
    }
}

/// `Λ^{(n)}_ℓ = Σ_j Ξ_j^{(n)} M_E(j, ℓ)` for `n ≤ order`.
pub fn lambda_vectors(basis: &BasisTable, coeffs: &CoeffTable, order: usize) -> Result<LambdaTable> {
    if order > basis.n_max() {
        return Err(Error::InvalidParameter(format!(
            "basis has polynomials up to {}, order {order} requested",
            basis.n_max()
        )));
    }
    let bits = coeffs.energy().prec();
    let with_d = coeffs.has_derivatives();
    // rows of the coefficient table in monomial order
    let mut rows = Vec::with_capacity(order + 1);
    let mut drows = Vec::with_capacity(order + 1);
    for j in 0..=order {
        let idx = basis.ordering().monomial(j);
        rows.push(coeffs.row(idx)?);
        if with_d {
            drows.push(coeffs.derivative_row(idx)?.expect("derivative table present"));
        }
    }
    let mut vectors = Vec::with_capacity(order + 1);
    let mut derivatives = Vec::with_capacity(if with_d { order + 1 } else { 0 });
    for n in 0..=order {
        let dim = vector_dim(basis, coeffs, n);
        let xi = basis.poly(n);
        let mut v = vec![Float::new(bits); dim];
        let mut dv = vec![Float::new(bits); if with_d { dim } else { 0 }];
        for (j, x) in xi.iter().enumerate() {
            for (acc, m) in v.iter_mut().zip(&rows[j][..dim]) {
                *acc += x * m;
            }
            if with_d {
                for (acc, m) in dv.iter_mut().zip(&drows[j][..dim]) {
                    *acc += x * m;
                }
            }
        }
        vectors.push(v);
        if with_d {
            derivatives.push(dv);
        }
    }
    Ok(LambdaTable {
        energy: coeffs.energy().clone(),
        vectors,
        derivatives: with_d.then_some(derivatives),
    })
}

/// `S_I(E, u) = Σ_{n ≤ I} (Λ^{(n)} · u)²`.
pub fn partial_sum(lam: &LambdaTable, u: &[Real]) -> Real {
    let bits = lam.energy.prec();
    let mut s = Float::new(bits);
    for n in 0..=lam.order() {
        let c = lam.coefficient(n, u);
        s += c.square();
    }
    s
}

/// `P_I(E)` and optionally `∂_E P_I(E)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PMatrix {
    pub order: usize,
    pub energy: Real,
    pub p: Matrix,
    pub dp: Option<Matrix>,
}

/// Running outer-product sums, snapshotted at selected orders.
struct Accumulator {
    p: Matrix,
    dp: Option<Matrix>,
}

impl Accumulator {
    fn new(dim: usize, prec: Precision, with_d: bool) -> Self {
        Accumulator {
            p: Matrix::zeros(dim, prec),
            dp: with_d.then(|| Matrix::zeros(dim, prec)),
        }
    }

    fn add(&mut self, v: &[Real], dv: Option<&[Real]>) {
        let k = v.len();
        for i in 0..k {
            for j in 0..=i {
                let t = Float::with_val(v[i].prec(), &v[i] * &v[j]);
                self.p[(i, j)] += &t;
                if i != j {
                    self.p[(j, i)] += &t;
                }
            }
        }
        if let (Some(dp), Some(dv)) = (self.dp.as_mut(), dv) {
            for i in 0..k {
                for j in 0..=i {
                    let mut t = Float::with_val(v[i].prec(), &dv[i] * &v[j]);
                    t += &v[i] * &dv[j];
                    dp[(i, j)] += &t;
                    if i != j {
                        dp[(j, i)] += &t;
                    }
                }
            }
        }
    }
}

/// `P_I = Σ_{n ≤ I} Λ^{(n)} Λ^{(n)ᵀ}` (shorter vectors are zero padded) and,
/// when requested, `∂_E P_I = Σ (∂Λ Λᵀ + Λ ∂Λᵀ)`.
pub fn p_matrix(lam: &LambdaTable, with_derivative: bool) -> Result<PMatrix> {
    Ok(p_matrices(lam, &[lam.order()], with_derivative)?.remove(0))
}

/// `P_I` for several orders `I ≤ lam.order()` from one pass over `Λ`.
pub fn p_matrices(lam: &LambdaTable, orders: &[usize], with_derivative: bool) -> Result<Vec<PMatrix>> {
    if with_derivative && lam.derivatives.is_none() {
        return Err(Error::InvalidParameter("Λ derivatives were not built".into()));
    }
    let bits = lam.energy.prec();
    let prec = precision_from_bits(bits)?;
    let mut wanted: Vec<usize> = orders.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if wanted.last().is_some_and(|&o| o > lam.order()) {
        return Err(Error::InvalidParameter("order beyond the Λ table".into()));
    }
    let mut out: Vec<PMatrix> = Vec::new();
    let mut acc: Option<Accumulator> = None;
    let mut next = 0;
    for n in 0..=lam.order() {
        if next == wanted.len() {
            break;
        }
        let v = &lam.vectors[n];
        let dim_here = lam.vectors[..=wanted[wanted.len() - 1]]
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(1);
        let a = acc.get_or_insert_with(|| Accumulator::new(dim_here, prec, with_derivative));
        a.add(v, lam.derivative(n).filter(|_| with_derivative));
        while next < wanted.len() && wanted[next] == n {
            let dim = lam.vectors[..=n].iter().map(Vec::len).max().unwrap_or(1);
            out.push(PMatrix {
                order: n,
                energy: lam.energy.clone(),
                p: a.p.submatrix_leading(dim),
                dp: a.dp.as_ref().map(|d| d.submatrix_leading(dim)),
            });
            next += 1;
        }
    }
    // requested order restored to caller's order
    Ok(orders
        .iter()
        .map(|o| out.iter().find(|p| p.order == *o).expect("computed").clone())
        .collect())
}

fn precision_from_bits(bits: u32) -> Result<Precision> {
    Precision::new((f64::from(bits.saturating_sub(4)) / std::f64::consts::LOG2_10).floor() as u32)
}

/// Value of an energy functional together with its optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalValue {
    pub order: usize,
    pub energy: Real,
    pub value: Real,
    /// Unit eigenvector `û` for `λ_I`; `(1, u_opt)` for `L_I`.
    pub optimizer: Vec<Real>,
    pub derivative: Option<Real>,
    /// Set when the two smallest eigenvalues are within `10⁻⁶ λ`.
    pub small_gap: bool,
}

/// Number of eigenvalues of `P` below `sigma`, from the signs of the `LDLᵀ`
/// pivots of `P − σ I` (Sylvester's law of inertia).
pub fn count_below(p: &Matrix, sigma: &Real) -> usize {
    let n = p.dim();
    let bits = p.precision_bits();
    let mut a: Vec<Vec<Real>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut x = p[(i, j)].clone();
                    if i == j {
                        x -= sigma;
                    }
                    x
                })
                .collect()
        })
        .collect();
    let mut negatives = 0;
    for k in 0..n {
        let d = a[k][k].clone();
        if d.is_sign_negative() || d.is_zero() {
            negatives += 1;
        }
        if d.is_zero() {
            continue;
        }
        for i in k + 1..n {
            let f = Float::with_val(bits, &a[i][k] / &d);
            for j in k + 1..=i {
                let t = Float::with_val(bits, &f * &a[k][j]);
                a[i][j] -= &t;
                if i != j {
                    a[j][i] = a[i][j].clone();
                }
            }
        }
    }
    negatives
}

fn canonical_sign(v: &mut [Real]) {
    if let Some(first) = v.iter().find(|x| !x.is_zero()) {
        if first.is_sign_negative() {
            for x in v.iter_mut() {
                *x = -x.clone();
            }
        }
    }
}

/// Smallest eigenvalue of `P_I` with a unit eigenvector (first nonzero
/// component positive).
///
/// Dimension ≤ 2 uses the closed form; larger matrices use inverse iteration
/// through the Cholesky factor followed by Rayleigh quotient iteration, and
/// the result is certified to be the smallest eigenvalue by an inertia count.
pub fn lambda_min(pm: &PMatrix) -> Result<FunctionalValue> {
    let p = &pm.p;
    let n = p.dim();
    let bits = p.precision_bits();
    let prec = precision_from_bits(bits)?;
    let chol = p.cholesky().map_err(|pivot| Error::NotPositiveDefinite { pivot })?;
    let (value, mut vector, small_gap) = match n {
        1 => (p[(0, 0)].clone(), vec![prec.int(1)], false),
        2 => {
            let (a, b, c) = (&p[(0, 0)], &p[(0, 1)], &p[(1, 1)]);
            let mean = Float::with_val(bits, a + c) / 2u32;
            let half = Float::with_val(bits, a - c) / 2u32;
            let mut disc = Float::with_val(bits, half.square_ref());
            disc += Float::with_val(bits, b.square_ref());
            let root = disc.sqrt();
            let lam = Float::with_val(bits, &mean - &root);
            // (b, λ − a) and (λ − c, b) both solve the system; take the better scaled
            let v1 = vec![b.clone(), Float::with_val(bits, &lam - a)];
            let v2 = vec![Float::with_val(bits, &lam - c), b.clone()];
            let mut v = if dot(&v1, &v1) >= dot(&v2, &v2) { v1 } else { v2 };
            if v.iter().all(|x| x.is_zero()) {
                v = vec![prec.int(1), prec.zero()];
                if a > c {
                    v = vec![prec.zero(), prec.int(1)];
                }
            }
            normalize(&mut v);
            let gap = Float::with_val(bits, &root * 2u32);
            let small = gap < Float::with_val(bits, &lam * 1e-6f64);
            (lam, v, small)
        }
        _ => {
            let (lam, v) = iterate_smallest(p, &chol, prec)?;
            let sigma = Float::with_val(bits, &lam * (1.0 + 1e-6));
            let small = count_below(p, &sigma) >= 2;
            (lam, v, small)
        }
    };
    canonical_sign(&mut vector);
    if !(value.is_sign_positive() && !value.is_zero()) {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let derivative = pm.dp.as_ref().map(|dp| dp.quad_form(&vector));
    Ok(FunctionalValue {
        order: pm.order,
        energy: pm.energy.clone(),
        value,
        optimizer: vector,
        derivative,
        small_gap,
    })
}

fn iterate_smallest(p: &Matrix, chol: &crate::linalg::Packed, prec: Precision) -> Result<(Real, Vec<Real>)> {
    let n = p.dim();
    let bits = prec.bits();
    let tol = prec.tolerance();
    let scale = p.frobenius();
    let mut x: Vec<Real> = (0..n).map(|i| Float::with_val(bits, 1) / (i as u64 + 2)).collect();
    normalize(&mut x);
    let mut rho = p.quad_form(&x);
    let max_iter = 60 + 4 * prec.digits() as usize;
    let mut certified_attempts = 0;
    for it in 0..max_iter {
        let y = if it < 8 || certified_attempts > 0 {
            let z = chol.forward_solve(&x);
            chol.backward_solve_transposed(&z)
        } else {
            let mut shifted = p.clone();
            for i in 0..n {
                shifted[(i, i)] -= &rho;
            }
            match shifted.lu_solve(&x) {
                Some(y) => y,
                None => return finish(p, x, rho, prec),
            }
        };
        x = y;
        normalize(&mut x);
        let next = p.quad_form(&x);
        let mut r = p.mul_vec(&x);
        for (ri, xi) in r.iter_mut().zip(&x) {
            *ri -= Float::with_val(bits, &next * xi);
        }
        let res = crate::linalg::norm(&r);
        rho = next;
        if res <= Float::with_val(bits, &tol * &scale) {
            // converged to some eigenpair; make sure it is the smallest
            let below = Float::with_val(bits, &rho * (1.0 - 1e-9));
            if count_below(p, &below) == 0 {
                return Ok((rho, x));
            }
            certified_attempts += 1;
            x = (0..n).map(|i| Float::with_val(bits, 1) / (i as u64 + 2)).collect();
            normalize(&mut x);
        }
    }
    Err(Error::EigenNotConverged { iterations: max_iter })
}

fn finish(p: &Matrix, x: Vec<Real>, rho: Real, prec: Precision) -> Result<(Real, Vec<Real>)> {
    // an exactly singular shift means rho is an eigenvalue to working precision
    let below = Float::with_val(prec.bits(), &rho * (1.0 - 1e-9));
    if count_below(p, &below) == 0 {
        Ok((rho, x))
    } else {
        Err(Error::EigenNotConverged { iterations: 0 })
    }
}

/// `L_I = C − Bᵀ A⁻¹ B` for `P = [[C, Bᵀ], [B, A]]`, minimizing `⟨u|P|u⟩` over
/// `u₀ = 1`; the minimizer is `(1, −A⁻¹B)`.
pub fn cqfm_value(pm: &PMatrix) -> Result<FunctionalValue> {
    let p = &pm.p;
    let n = p.dim();
    let bits = p.precision_bits();
    let prec = precision_from_bits(bits)?;
    let mut mu = vec![prec.int(1)];
    let value = if n == 1 {
        p[(0, 0)].clone()
    } else {
        let a = p.submatrix(1);
        let chol = a
            .cholesky()
            .map_err(|pivot| Error::SubmatrixNotPd { pivot: pivot + 1 })?;
        let b: Vec<Real> = (1..n).map(|i| p[(i, 0)].clone()).collect();
        let z = chol.forward_solve(&b);
        let sol = chol.backward_solve_transposed(&z);
        let mut v = p[(0, 0)].clone();
        v -= dot(&b, &sol);
        mu.extend(sol.into_iter().map(|x| -x));
        v
    };
    if value.is_sign_negative() || value.is_zero() {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    // envelope: the optimizer's own dependence on E drops out at the minimum
    let derivative = pm.dp.as_ref().map(|dp| dp.quad_form(&mu));
    Ok(FunctionalValue {
        order: pm.order,
        energy: pm.energy.clone(),
        value,
        optimizer: mu,
        derivative,
        small_gap: false,
    })
}

/// `∂_E λ_I = ⟨û|∂_E P_I|û⟩`.
pub fn d_lambda_min(pm: &PMatrix, u_hat: &[Real]) -> Result<Real> {
    let dp = pm
        .dp
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("P-matrix was built without its derivative".into()))?;
    Ok(dp.quad_form(u_hat))
}

/// The energy functional selected by a constraint.
pub fn functional(pm: &PMatrix, constraint: Constraint) -> Result<FunctionalValue> {
    match constraint {
        Constraint::UnitNorm => lambda_min(pm),
        Constraint::LeadingOne => cqfm_value(pm),
    }
}

/// Basis provider: fixed basis, or one rebuilt at every energy (QZM weight
/// carrying the binding energy itself).
#[derive(Clone, Debug)]
pub enum BasisSource {
    Fixed(Arc<BasisTable>),
    EnergyDependent { field: crate::precision::Decimal },
}

/// Evaluates `P_I(E)` and the functionals for one problem, basis and
/// precision, memoizing P-matrices by exact energy and order.
pub struct Engine {
    spec: ProblemSpec,
    basis: BasisSource,
    prec: Precision,
    max_order: usize,
    cache: Mutex<HashMap<(String, usize, bool), Arc<PMatrix>>>,
    diagnostics: Mutex<Diagnostics>,
}

/// Precision diagnostics gathered across evaluations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub max_recursion_residual: f64,
    pub evaluations: usize,
    pub small_gap_flags: usize,
}

impl Engine {
    pub fn new(spec: ProblemSpec, weight: &WeightSpec, max_order: usize, prec: Precision) -> Result<Self> {
        spec.validate()?;
        let basis = Arc::new(build_basis(weight, max_order, prec)?);
        Ok(Self::with_basis(spec, BasisSource::Fixed(basis), max_order, prec))
    }

    pub fn with_basis(spec: ProblemSpec, basis: BasisSource, max_order: usize, prec: Precision) -> Self {
        Engine {
            spec,
            basis,
            prec,
            max_order,
            cache: Mutex::new(HashMap::new()),
            diagnostics: Mutex::new(Diagnostics::default()),
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn basis(&self) -> Option<&Arc<BasisTable>> {
        match &self.basis {
            BasisSource::Fixed(b) => Some(b),
            BasisSource::EnergyDependent { .. } => None,
        }
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics.lock().expect("diagnostics lock").clone()
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Coefficient table covering every monomial of polynomials `≤ order`.
    pub fn coeff_table(&self, energy: &Real, order: usize, with_derivative: bool) -> Result<CoeffTable> {
        let (max_index, m_s) = match self.spec.index_space {
            IndexSpace::OneD => {
                let m_s = self.spec.fixed_m_s().unwrap_or(0);
                (order.max(m_s), m_s)
            }
            IndexSpace::TwoDSymmetric => {
                let m_s = qzm_m_s_of_order(order);
                (2 * m_s + 1, m_s)
            }
        };
        let table = build_coeff_table(&self.spec, energy, max_index, m_s)?;
        let table = if with_derivative {
            build_derivative_table(&self.spec, &table)?
        } else {
            table
        };
        let mut d = self.diagnostics.lock().expect("diagnostics lock");
        d.max_recursion_residual = d.max_recursion_residual.max(table.max_residual());
        Ok(table)
    }

    fn basis_at(&self, energy: &Real, order: usize) -> Result<Arc<BasisTable>> {
        match &self.basis {
            BasisSource::Fixed(b) => {
                if order > b.n_max() {
                    return Err(Error::InvalidParameter(format!(
                        "order {order} exceeds the basis size {}",
                        b.n_max()
                    )));
                }
                Ok(Arc::clone(b))
            }
            BasisSource::EnergyDependent { field } => {
                let eps0 = format_exact(energy).parse()?;
                let w = WeightSpec::qzm(field.clone(), eps0);
                Ok(Arc::new(build_basis(&w, order, self.prec)?))
            }
        }
    }

    /// `P_I(E)` for each requested order, sharing one coefficient and Λ pass.
    pub fn p_matrices(&self, energy: &Real, orders: &[usize], with_derivative: bool) -> Result<Vec<Arc<PMatrix>>> {
        let energy = self.prec.real(energy);
        let key_e = format_exact(&energy);
        let mut missing = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            for &o in orders {
                if !cache.contains_key(&(key_e.clone(), o, with_derivative)) {
                    missing.push(o);
                }
            }
        }
        if !missing.is_empty() {
            let top = *missing.iter().max().expect("nonempty");
            if top > self.max_order {
                return Err(Error::InvalidParameter(format!(
                    "order {top} exceeds the engine's maximum {}",
                    self.max_order
                )));
            }
            let basis = self.basis_at(&energy, top)?;
            let table = self.coeff_table(&energy, top, with_derivative)?;
            let lam = lambda_vectors(&basis, &table, top)?;
            let mats = p_matrices(&lam, &missing, with_derivative)?;
            let mut cache = self.cache.lock().expect("cache lock");
            for m in mats {
                cache
                    .entry((key_e.clone(), m.order, with_derivative))
                    .or_insert_with(|| Arc::new(m));
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(orders
            .iter()
            .map(|&o| Arc::clone(&cache[&(key_e.clone(), o, with_derivative)]))
            .collect())
    }

    /// The constraint's functional (`λ_I` or `L_I`) at one energy.
    pub fn evaluate(&self, energy: &Real, order: usize, with_derivative: bool) -> Result<FunctionalValue> {
        let pm = self.p_matrices(energy, &[order], with_derivative)?.remove(0);
        let fv = functional(&pm, self.spec.constraint)?;
        let mut d = self.diagnostics.lock().expect("diagnostics lock");
        d.evaluations += 1;
        if fv.small_gap {
            d.small_gap_flags += 1;
        }
        Ok(fv)
    }

    /// Drops memoized P-matrices.
    pub fn clear_cache(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    /// `log10` of the functional, for scans.
    pub fn log10_value(value: &Real) -> f64 {
        log10_abs(value)
    }
}
