//! Polynomials in the energy, used by the approximation-method root tracker.
//!
//! For a 1D problem every `M_E(p, ℓ)` is a polynomial in `E`, so the
//! projection coefficients `Λ^{(n)}_ℓ(E)` are too. Their roots are found
//! simultaneously with the Aberth–Ehrlich iteration; real roots are then
//! polished by bisection on the real axis.

use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::mer::{LinearRecurrence, ProblemSpec, Recurrence};
use crate::precision::{Precision, Real};
use crate::weight::BasisTable;

/// Coefficients in increasing powers of `E`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Real>,
}

impl Poly {
    pub fn zero(prec: Precision) -> Self {
        Poly {
            coeffs: vec![prec.zero()],
        }
    }

    pub fn constant(c: Real) -> Self {
        Poly { coeffs: vec![c] }
    }

    pub fn from_coeffs(coeffs: Vec<Real>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn coeffs(&self) -> &[Real] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn bits(&self) -> u32 {
        self.coeffs[0].prec()
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn eval(&self, e: &Real) -> Real {
        let mut acc = Float::new(self.bits());
        for c in self.coeffs.iter().rev() {
            acc *= e;
            acc += c;
        }
        acc
    }

    fn eval_complex(&self, z: &Complex) -> (Complex, Complex) {
        let bits = self.bits();
        let mut p = Complex::new(bits);
        let mut dp = Complex::new(bits);
        for c in self.coeffs.iter().rev() {
            dp *= z;
            dp += &p;
            p *= z;
            p += c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::constant(Float::new(self.bits()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| Float::with_val(self.bits(), c * k as u64))
            .collect();
        Poly::from_coeffs(coeffs)
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Poly, scale: &Real) {
        let bits = self.bits();
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), Float::new(bits));
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
        self.trim();
    }

    /// `self · (a + b E)`.
    pub fn mul_affine(&self, a: &Real, b: &Real) -> Poly {
        let bits = self.bits();
        let mut out = vec![Float::new(bits); self.coeffs.len() + 1];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k] += a * c;
            out[k + 1] += b * c;
        }
        Poly::from_coeffs(out)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let bits = self.bits();
        let mut out = vec![Float::new(bits); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::from_coeffs(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        let minus_one = Float::with_val(self.bits(), -1);
        out.add_scaled(other, &minus_one);
        out
    }

    /// All complex roots by the Aberth–Ehrlich iteration.
    pub fn roots(&self) -> Result<Vec<Complex>> {
        let n = self.degree();
        if n == 0 {
            return Ok(Vec::new());
        }
        let bits = self.bits();
        let lead = &self.coeffs[n];
        // Fujiwara-style radius for the starting circle
        let mut radius = 0f64;
        for k in 0..n {
            let ratio = Float::with_val(bits, &self.coeffs[k] / lead).to_f64().abs();
            if ratio > 0.0 {
                radius = radius.max(ratio.powf(1.0 / (n - k) as f64));
            }
        }
        let radius = if radius.is_finite() && radius > 0.0 {
            radius
        } else {
            1.0
        };
        let mut z: Vec<Complex> = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4;
                Complex::with_val(bits, (radius * theta.cos(), radius * theta.sin()))
            })
            .collect();
        let tol = Float::with_val(bits, Float::i_exp(1, 16 - bits as i32));
        for _ in 0..2000 {
            let mut done = true;
            for k in 0..n {
                let (p, dp) = self.eval_complex(&z[k]);
                if p.real().is_zero() && p.imag().is_zero() {
                    continue;
                }
                let ratio = Complex::with_val(bits, &p / &dp);
                let mut s = Complex::new(bits);
                for (j, zj) in z.iter().enumerate() {
                    if j != k {
                        let diff = Complex::with_val(bits, &z[k] - zj);
                        s += diff.recip();
                    }
                }
                let mut den = Complex::with_val(bits, &ratio * &s);
                den = Complex::with_val(bits, 1) - den;
                let w = Complex::with_val(bits, &ratio / &den);
                let size = Float::with_val(bits, w.abs_ref());
                let scale = Float::with_val(bits, z[k].abs_ref()).max(&Float::with_val(bits, 1));
                if size > Float::with_val(bits, &tol * &scale) {
                    done = false;
                }
                z[k] -= w;
            }
            if done {
                return Ok(z);
            }
        }
        Err(Error::EigenNotConverged { iterations: 2000 })
    }
}

/// `M_E(p, ℓ)` as polynomials in `E` for `p ≤ max_index`.
pub fn coefficient_polys(spec: &ProblemSpec, max_index: usize, prec: Precision) -> Result<Vec<Vec<Poly>>> {
    let Recurrence::Linear(rec) = &spec.recurrence else {
        return Err(Error::InvalidParameter(format!(
            "`{}`: approximation-method roots need a 1D recursion",
            spec.name
        )));
    };
    let m_s = spec
        .fixed_m_s()
        .ok_or_else(|| Error::InvalidParameter("missing-moment order must be fixed".into()))?;
    Ok(linear_polys(rec, max_index, m_s, prec))
}

fn linear_polys(rec: &LinearRecurrence, max_index: usize, m_s: usize, prec: Precision) -> Vec<Vec<Poly>> {
    let mut rows: Vec<Vec<Poly>> = (0..=m_s)
        .map(|a| {
            (0..=m_s)
                .map(|b| Poly::constant(if a == b { prec.int(1) } else { prec.zero() }))
                .collect()
        })
        .collect();
    let mut q = 0;
    while q + rec.lead <= max_index {
        let mut row: Vec<Poly> = vec![Poly::zero(prec); m_s + 1];
        for t in &rec.terms {
            let idx = q as isize + t.offset;
            if idx < 0 {
                continue;
            }
            let a = t.coefficient(q, &prec.zero());
            let b = prec.int(t.energy);
            for (acc, src) in row.iter_mut().zip(&rows[idx as usize]) {
                let term = src.mul_affine(&a, &b);
                acc.add_scaled(&term, &prec.int(1));
            }
        }
        rows.push(row);
        q += 1;
    }
    rows
}

/// `Λ^{(n)}_ℓ(E)` as polynomials, for `n ≤ order`.
pub fn lambda_polys(basis: &BasisTable, coeffs: &[Vec<Poly>], order: usize, prec: Precision) -> Vec<Vec<Poly>> {
    let m_s = coeffs[0].len() - 1;
    (0..=order)
        .map(|n| {
            let xi = basis.poly(n);
            (0..=m_s)
                .map(|l| {
                    let mut acc = Poly::zero(prec);
                    for (j, x) in xi.iter().enumerate() {
                        acc.add_scaled(&coeffs[j][l], x);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_a_cubic() {
        let p = Precision::new(40).unwrap();
        // (E − 1)(E − 5)(E² + 1)
        let q = Poly::constant(p.int(1))
            .mul_affine(&p.int(-1), &p.int(1))
            .mul_affine(&p.int(-5), &p.int(1))
            .mul(&Poly::from_coeffs(vec![p.int(1), p.zero(), p.int(1)]));
        let roots = q.roots().unwrap();
        let mut real: Vec<f64> = roots
            .iter()
            .filter(|z| z.imag().to_f64().abs() < 1e-20)
            .map(|z| z.real().to_f64())
            .collect();
        real.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(real.len(), 2);
        assert!((real[0] - 1.0).abs() < 1e-15 && (real[1] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn eval_matches_horner_by_hand() {
        let p = Precision::new(30).unwrap();
        let q = Poly::from_coeffs(vec![p.int(2), p.int(-3), p.int(1)]);
        assert_eq!(q.eval(&p.int(4)), 6);
        assert_eq!(q.degree(), 2);
    }
}
