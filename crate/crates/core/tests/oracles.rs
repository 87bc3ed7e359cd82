//! Cross-checks against independent routes: special functions, explicit
//! sums, alternative factorizations and finite differences.

use oppq_core::cdr::qzm_top_order;
use oppq_core::linalg::Packed;
use oppq_core::mer::{build_coeff_table, build_derivative_table, MomentIndex};
use oppq_core::problems::{
    quartic_spec, qzm_spec, register_problem, HarmonicSpec, ProblemConfig, QuarticSpec, QzmSpec,
};
use oppq_core::weight::{
    build_basis, build_basis_cholesky, gram_matrix, hermite_closed_form, omega_table, qzm_weight_moments,
    MonomialOrdering, WeightSpec,
};
use oppq_core::{Precision, Real};
use rug::ops::Pow;
use rug::{Float, Integer};

fn p(d: u32) -> Precision {
    Precision::new(d).unwrap()
}

fn rel(a: &Real, b: &Real) -> f64 {
    let bits = a.prec().max(b.prec());
    let d = Float::with_val(bits, a - b);
    if b.is_zero() {
        return d.to_f64().abs();
    }
    (d / b).to_f64().abs()
}

/// `∫₀^∞ e^{−t} (1 + g t)^{−k} dt` for any integer `k`, at `bits`.
/// For `k ≥ 1` this uses the explicit alternating sum over `E₁`; for `k ≤ 0`
/// the binomial expansion of the polynomial.
fn laplace_power(k: i64, g: &Real, bits: u32) -> Real {
    if k <= 0 {
        let n = (-k) as u32;
        let mut s = Float::new(bits);
        for i in 0..=n {
            let c = Integer::from(Integer::binomial_u(n, i)) * Integer::from(Integer::factorial(i));
            s += Float::with_val(bits, (g).pow(i)) * Float::with_val(bits, &c);
        }
        return s;
    }
    let inv_g = Float::with_val(bits, g.recip_ref());
    // Ω(0,1) = e^{1/g} E₁(1/g) / g with E₁(x) = −Ei(−x)
    let ei = Float::with_val(bits, Float::with_val(bits, -&inv_g).eint_ref());
    let omega01 = Float::with_val(bits, inv_g.exp_ref()) * Float::with_val(bits, -ei) * &inv_g;
    let n = (k - 1) as u32;
    let nfact = Float::with_val(bits, Integer::from(Integer::factorial(n)));
    let mut s = Float::new(bits);
    for j in 1..=n {
        let mut t = Float::with_val(bits, Integer::from(Integer::factorial(n - j)));
        t /= &nfact;
        t *= Float::with_val(bits, (&inv_g).pow(j));
        if j % 2 == 0 {
            t = -t;
        }
        s += t;
    }
    let mut last = Float::with_val(bits, (&inv_g).pow(n)) / &nfact * omega01;
    if n % 2 == 1 {
        last = -last;
    }
    s + last
}

/// `Ω(m, n+1, g) = ∫ t^m e^{−t} (1+gt)^{−(n+1)} dt` via
/// `t^m = g^{−m} Σ_i C(m,i) (−1)^{m−i} (1+gt)^i`.
fn omega_oracle(m: u32, n: u32, g: &Real, bits: u32) -> Real {
    let mut s = Float::new(bits);
    for i in 0..=m {
        let c = Float::with_val(bits, Integer::from(Integer::binomial_u(m, i)));
        let mut t = c * laplace_power(i64::from(n) + 1 - i64::from(i), g, bits);
        if (m - i) % 2 == 1 {
            t = -t;
        }
        s += t;
    }
    s / Float::with_val(bits, g.pow(m))
}

#[test]
fn omega_zero_matches_exponential_integral() {
    let prec = p(50);
    for g in ["0.04", "0.4", "1", "4", "40"] {
        let gv = prec.parse(g).unwrap();
        let table = omega_table(&gv, 0, 0, prec).unwrap();
        let want = omega_oracle(0, 0, &p(80).parse(g).unwrap(), p(80).bits());
        assert!(rel(table.get(0, 0), &want) < 1e-45, "g = {g}");
    }
}

#[test]
fn omega_table_matches_binomial_expansion() {
    let prec = p(50);
    let hi = p(300);
    for g in ["0.4", "4"] {
        let table = omega_table(&prec.parse(g).unwrap(), 8, 8, prec).unwrap();
        let gh = hi.parse(g).unwrap();
        for m in 0..=8u32 {
            for n in 0..=8u32 {
                let want = omega_oracle(m, n, &gh, hi.bits());
                let got = table.get(m as usize, n as usize);
                assert!(rel(got, &want) < 1e-38, "g={g} m={m} n={n}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn qzm_weight_moments_are_symmetric() {
    // the weight is symmetric under ξ ↔ η although the recursion is not
    let prec = p(50);
    for (b, e0) in [("0.02", "0.5"), ("2", "1.0"), ("20", "2.0")] {
        let w = WeightSpec::qzm(b.parse().unwrap(), e0.parse().unwrap());
        let mom = qzm_weight_moments(&w, 14, prec).unwrap();
        for m in 0..=14 {
            for n in 0..=14 - m {
                assert!(rel(mom.get(m, n), mom.get(n, m)) < 1e-38, "B={b} ({m},{n})");
            }
        }
    }
}

#[test]
fn hermite_closed_form_matches_cholesky_route() {
    let prec = p(60);
    let closed = hermite_closed_form(14, prec).unwrap();
    let gram = gram_matrix(&WeightSpec::HermiteHalfline, 15, prec).unwrap();
    let chol = build_basis_cholesky(gram, MonomialOrdering::Powers, prec).unwrap();
    for n in 0..=14 {
        assert!(closed.poly(n)[n].is_sign_positive());
        for j in 0..=n {
            assert!(rel(&closed.poly(n)[j], &chol.poly(n)[j]) < 1e-40, "({n},{j})");
        }
    }
}

/// Largest entry of `Ξ W Ξᵀ − 1`.
fn orthonormality_defect(xi: &[Vec<Real>], w: &Packed, bits: u32) -> f64 {
    let n = xi.len();
    let mut worst = 0f64;
    for a in 0..n {
        for b in 0..=a {
            let mut s = Float::new(bits);
            for (i, x) in xi[a].iter().enumerate() {
                for (j, y) in xi[b].iter().enumerate() {
                    s += Float::with_val(bits, x * y) * w.sym(i, j);
                }
            }
            if a == b {
                s -= 1u32;
            }
            worst = worst.max(s.to_f64().abs());
        }
    }
    worst
}

#[test]
fn qzm_basis_is_orthonormal() {
    let prec = p(50);
    let w = WeightSpec::qzm("0.2".parse().unwrap(), "0.5".parse().unwrap());
    let basis = build_basis(&w, qzm_top_order(2), prec).unwrap();
    let gram = gram_matrix(&w, qzm_top_order(2) + 1, p(120)).unwrap();
    assert!(orthonormality_defect(basis.rows(), &gram, p(120).bits()) < 1e-38);
    for n in 0..=basis.n_max() {
        assert!(basis.poly(n)[n].is_sign_positive());
    }
}

#[test]
fn synthetic_three_by_three_gram() {
    // Hankel moments of a positive discrete measure
    let prec = p(40);
    let bits = prec.bits();
    let nodes = [("0.3", "0.2"), ("1.7", "0.5"), ("4.1", "0.3"), ("6.0", "0.25")];
    let moment = |k: u32| {
        let mut s = Float::new(bits);
        for (x, wt) in nodes {
            s += Float::with_val(bits, prec.parse(x).unwrap().pow(k)) * prec.parse(wt).unwrap();
        }
        s
    };
    let gram = Packed::from_fn(3, |i, j| moment((i + j) as u32));
    let basis = build_basis_cholesky(gram.clone(), MonomialOrdering::Powers, prec).unwrap();
    assert!(orthonormality_defect(basis.rows(), &gram, bits) < 1e-30);
}

/// Central difference errors at `h` and `h/2` against an analytic value; their
/// ratio approaches 4 for a second-order scheme. Differences that are exact to
/// working precision (polynomials of degree two or less) also pass.
fn assert_second_order(f: impl Fn(&Real) -> Real, x: &Real, exact: &Real, h: &str, prec: Precision) {
    let bits = prec.bits();
    let h = prec.parse(h).unwrap();
    let cd = |h: &Real| {
        let up = f(&Float::with_val(bits, x + h));
        let down = f(&Float::with_val(bits, x - h));
        Float::with_val(bits, &up - &down) / Float::with_val(bits, h * 2u32)
    };
    let scale = Float::with_val(bits, exact.abs_ref()).max(&Float::with_val(bits, 1e-300));
    let e1 = (Float::with_val(bits, cd(&h) - exact).abs() / &scale).to_f64();
    let half = Float::with_val(bits, &h / 2u32);
    let e2 = (Float::with_val(bits, cd(&half) - exact).abs() / &scale).to_f64();
    if e1 < 1e-40 {
        assert!(e2 < 1e-40, "exact at h but not h/2: {e2}");
        return;
    }
    let ratio = e1 / e2;
    assert!(e2 < 1e-4, "relative difference error {e2}");
    assert!((3.6..4.4).contains(&ratio), "error ratio {ratio} (errors {e1}, {e2})");
}

#[test]
fn coefficient_derivatives_match_finite_differences() {
    let prec = p(60);
    let spec = quartic_spec();
    let e0 = prec.parse("3.7").unwrap();
    let table = build_derivative_table(&spec, &build_coeff_table(&spec, &e0, 12, 1).unwrap()).unwrap();
    for (row, l) in [(5usize, 0usize), (8, 1), (12, 0), (12, 1)] {
        let exact = table.derivative_row(MomentIndex::Single(row)).unwrap().unwrap()[l].clone();
        let f = |e: &Real| {
            build_coeff_table(&spec, e, 12, 1)
                .unwrap()
                .row(MomentIndex::Single(row))
                .unwrap()[l]
                .clone()
        };
        assert_second_order(f, &e0, &exact, "0.001", prec);
    }
    // 2D table in the binding energy
    let qspec = qzm_spec("0.2".parse().unwrap());
    let eps = prec.parse("0.59").unwrap();
    let t = build_derivative_table(&qspec, &build_coeff_table(&qspec, &eps, 5, 2).unwrap()).unwrap();
    for (m, n, l) in [(1usize, 0usize, 0usize), (3, 2, 1), (0, 5, 2), (4, 1, 0)] {
        let idx = MomentIndex::Pair(m, n);
        let exact = t.derivative_row(idx).unwrap().unwrap()[l].clone();
        let f = |e: &Real| build_coeff_table(&qspec, e, 5, 2).unwrap().row(idx).unwrap()[l].clone();
        assert_second_order(f, &eps, &exact, "0.0001", prec);
    }
}

#[test]
fn functional_derivatives_match_finite_differences() {
    let prec = p(60);
    let quartic = register_problem(&ProblemConfig::Quartic(QuarticSpec), prec).unwrap();
    let engine = quartic.engine(30, prec).unwrap();
    for e in ["22.3", "-3.2", "10.05"] {
        let e = prec.parse(e).unwrap();
        let exact = engine.evaluate(&e, 30, true).unwrap().derivative.unwrap();
        assert_second_order(
            |x| engine.evaluate(x, 30, false).unwrap().value,
            &e,
            &exact,
            "0.001",
            prec,
        );
    }
    let harmonic = register_problem(&ProblemConfig::Harmonic(HarmonicSpec), prec).unwrap();
    let engine = harmonic.engine(12, prec).unwrap();
    let e = prec.parse("4.6").unwrap();
    let exact = engine.evaluate(&e, 12, true).unwrap().derivative.unwrap();
    assert_second_order(
        |x| engine.evaluate(x, 12, false).unwrap().value,
        &e,
        &exact,
        "0.001",
        prec,
    );

    let qzm = register_problem(
        &ProblemConfig::Qzm(QzmSpec {
            field: "0.2".parse().unwrap(),
            eps0: Some("0.5".parse().unwrap()),
        }),
        prec,
    )
    .unwrap();
    let order = qzm_top_order(3);
    let engine = qzm.engine(order, prec).unwrap();
    for eps in ["0.585", "0.6"] {
        let eps = prec.parse(eps).unwrap();
        let exact = engine.evaluate(&eps, order, true).unwrap().derivative.unwrap();
        assert_second_order(
            |x| engine.evaluate(x, order, false).unwrap().value,
            &eps,
            &exact,
            "0.0001",
            prec,
        );
    }
}
