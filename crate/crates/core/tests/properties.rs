//! Invariants of the moment tables, the projection matrices, the energy
//! functionals and the bound search.

use std::sync::Arc;

use oppq_core::bounds::{bracket_bounds, minima_sequence, OrderFunctional, SequenceOptions};
use oppq_core::cdr::{cqfm_value, lambda_min, lambda_vectors, p_matrices, partial_sum, qzm_top_order, Engine, PMatrix};
use oppq_core::linalg::{dot, Matrix};
use oppq_core::mer::{build_coeff_table, MomentIndex};
use oppq_core::problems::{
    harmonic_spec, quartic_spec, qzm_spec, register_problem, HarmonicSpec, ProblemConfig, QuarticSpec, QzmSpec,
};
use oppq_core::{Precision, Real};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;

fn p(d: u32) -> Precision {
    Precision::new(d).unwrap()
}

fn dec(x: f64) -> String {
    format!("{x:.6}")
}

fn rel_diff(a: &Real, b: &Real) -> f64 {
    let bits = a.prec();
    let d = Float::with_val(bits, a - b).abs();
    let s = Float::with_val(bits, a.abs_ref()).max(&Float::with_val(bits, b.abs_ref()));
    if s.is_zero() {
        return 0.0;
    }
    (d / s).to_f64()
}

fn quartic_engine(prec: Precision, max_order: usize) -> Engine {
    register_problem(&ProblemConfig::Quartic(QuarticSpec), prec)
        .unwrap()
        .engine(max_order, prec)
        .unwrap()
}

fn qzm_engine(field: &str, eps0: &str, max_m_s: usize, prec: Precision) -> Engine {
    register_problem(
        &ProblemConfig::Qzm(QzmSpec {
            field: field.parse().unwrap(),
            eps0: Some(eps0.parse().unwrap()),
        }),
        prec,
    )
    .unwrap()
    .engine(qzm_top_order(max_m_s), prec)
    .unwrap()
}

/// `P_I(E)` straight from the engine's coefficient table and basis.
fn p_at(engine: &Engine, e: &Real, orders: &[usize]) -> Vec<PMatrix> {
    let top = *orders.iter().max().unwrap();
    let coeffs = engine.coeff_table(e, top, false).unwrap();
    let lam = lambda_vectors(engine.basis().unwrap(), &coeffs, top).unwrap();
    p_matrices(&lam, orders, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_tables_reproduce_direct_iteration(
        e in -10.0f64..30.0,
        u0 in -3.0f64..3.0,
        u1 in -3.0f64..3.0,
        quartic in any::<bool>(),
    ) {
        let prec = p(50);
        let e = prec.parse(&dec(e)).unwrap();
        let u = [prec.parse(&dec(u0)).unwrap(), prec.parse(&dec(u1)).unwrap()];
        let (spec, m_s) = if quartic { (quartic_spec(), 1) } else { (harmonic_spec(), 0) };
        let table = build_coeff_table(&spec, &e, 30, m_s).unwrap();
        prop_assert!(table.max_residual() < 1e-40);
        let generated = table.apply(&u[..=m_s]);

        // raw recursion, seeded with the missing moments
        let bits = prec.bits();
        let mut direct: Vec<Real> = u[..=m_s].to_vec();
        for q in m_s + 1..=30 {
            // q = p + 1 + m_s
            let pp = q - 1 - m_s;
            let kin = Float::with_val(bits, (2 * pp * (2 * pp).saturating_sub(1)) as u64);
            let mut next = Float::with_val(bits, &e * &direct[pp]);
            if pp >= 1 {
                next += kin * &direct[pp - 1];
            }
            if quartic {
                next += Float::with_val(bits, &direct[pp + 1] * 5u32);
            }
            direct.push(next);
        }
        for (a, b) in generated.iter().zip(&direct) {
            prop_assert!(rel_diff(a, b) < 1e-40, "{a} vs {b}");
        }
    }

    #[test]
    fn qzm_tables_satisfy_the_moment_equation(
        field in 0.01f64..20.0,
        eps in 0.1f64..3.0,
        m_s in 1usize..5,
        seed in any::<u64>(),
    ) {
        let prec = p(50);
        let bits = prec.bits();
        let b = prec.parse(&dec(field)).unwrap();
        let eps = prec.parse(&dec(eps)).unwrap();
        let spec = qzm_spec(dec(field).parse().unwrap());
        let table = build_coeff_table(&spec, &eps, 2 * m_s + 1, m_s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Real> = (0..=m_s).map(|_| prec.parse(&dec(rng.random_range(-2.0..2.0))).unwrap()).collect();
        let moment = |m: usize, n: usize| dot(table.row(MomentIndex::Pair(m, n)).unwrap(), &u);
        for d in 0..=2 * m_s {
            for m in 0..=d {
                let n = d - m;
                prop_assert_eq!(table.row(MomentIndex::Pair(m, n)).unwrap(), table.row(MomentIndex::Pair(n, m)).unwrap());
                let mut s = moment(m, n);
                let mut scale = Float::with_val(bits, s.abs_ref());
                let mut add = |t: Float| {
                    scale = Float::with_val(bits, t.abs_ref()).max(&scale);
                    s += t;
                };
                if m > 0 {
                    add(Float::with_val(bits, (m * m) as u64) * moment(m - 1, n));
                }
                if n > 0 {
                    add(Float::with_val(bits, (n * n) as u64) * moment(m, n - 1));
                }
                let bm = Float::with_val(bits, &b * m as u64) + &eps;
                let bn = Float::with_val(bits, &b * n as u64) + &eps;
                add(-(bm * moment(m, n + 1)) / 2u32);
                add(-(bn * moment(m + 1, n)) / 2u32);
                prop_assert!((s / scale).to_f64().abs() < 1e-40, "({m},{n})");
            }
        }
        for l in 0..=m_s {
            for k in 0..=m_s {
                let want = if l == k { 1 } else { 0 };
                prop_assert_eq!(table.row(MomentIndex::Pair(l, l)).unwrap()[k].clone(), prec.int(want));
            }
        }
    }

    #[test]
    fn qzm_tables_nest_across_missing_moment_orders(
        field in 0.01f64..20.0,
        eps in 0.1f64..3.0,
        m_s in 1usize..5,
    ) {
        let prec = p(50);
        let eps = prec.parse(&dec(eps)).unwrap();
        let spec = qzm_spec(dec(field).parse().unwrap());
        let small = build_coeff_table(&spec, &eps, 2 * m_s + 1, m_s).unwrap();
        let big = build_coeff_table(&spec, &eps, 2 * m_s + 3, m_s + 1).unwrap();
        for d in 0..=2 * m_s + 1 {
            for m in 0..=d {
                let idx = MomentIndex::Pair(m, d - m);
                let (a, b) = (small.row(idx).unwrap(), big.row(idx).unwrap());
                prop_assert!(b[m_s + 1].is_zero());
                for (x, y) in a.iter().zip(b) {
                    prop_assert!(rel_diff(x, y) < 1e-44, "{idx}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn projection_matrix_grows_by_rank_one_terms() {
    let prec = p(50);
    let engine = quartic_engine(prec, 40);
    let bits = prec.bits();
    for e in ["-3.41", "7.5", "22.63"] {
        let e = prec.parse(e).unwrap();
        let coeffs = engine.coeff_table(&e, 40, false).unwrap();
        let lam = lambda_vectors(engine.basis().unwrap(), &coeffs, 40).unwrap();
        let ps = p_matrices(&lam, &(10..=40).collect::<Vec<_>>(), false).unwrap();
        for w in ps.windows(2) {
            let v = lam.vector(w[1].order);
            for i in 0..2 {
                for j in 0..2 {
                    let mut want = Float::with_val(bits, &v[i] * &v[j]);
                    want += &w[0].p[(i, j)];
                    assert!(rel_diff(&w[1].p[(i, j)], &want) < 1e-45);
                }
            }
        }
    }
}

#[test]
fn partial_sums_increase_with_order() {
    let prec = p(50);
    let engine = quartic_engine(prec, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let e = prec.parse(&dec(rng.random_range(-5.0..30.0))).unwrap();
        let u = [prec.int(1), prec.parse(&dec(rng.random_range(-3.0..3.0))).unwrap()];
        let coeffs = engine.coeff_table(&e, 60, false).unwrap();
        let lam = lambda_vectors(engine.basis().unwrap(), &coeffs, 60).unwrap();
        let mut s = Vec::new();
        let mut acc = prec.zero();
        for n in 0..=60 {
            let c = lam.coefficient(n, &u);
            acc += Float::with_val(prec.bits(), c.square_ref());
            s.push((acc.clone(), c.is_zero()));
        }
        for w in s.windows(2) {
            if !w[1].1 {
                assert!(w[1].0 > w[0].0);
            }
        }
        assert_eq!(s[60].0, partial_sum(&lam, &u));
    }
}

#[test]
fn unit_norm_minimum_is_monotone_in_order() {
    let prec = p(50);
    let engine = quartic_engine(prec, 40);
    let orders: Vec<usize> = (10..=40).collect();
    let (mut pairs, mut strict) = (0usize, 0usize);
    for k in 0..=40 {
        let e = prec.parse(&dec(-5.0 + 0.875 * k as f64)).unwrap();
        let vals: Vec<Real> = p_at(&engine, &e, &orders)
            .iter()
            .map(|pm| lambda_min(pm).unwrap().value)
            .collect();
        for w in vals.windows(2) {
            let slack = Float::with_val(prec.bits(), &w[0] * prec.pow10(-40));
            assert!(w[1] >= Float::with_val(prec.bits(), &w[0] - &slack), "E index {k}");
            pairs += 1;
            if w[1] > w[0] {
                strict += 1;
            }
        }
    }
    assert!(strict * 100 >= pairs * 95, "{strict}/{pairs} strict");
}

#[test]
fn constrained_minimum_is_monotone_at_transition_orders() {
    let prec = p(50);
    let engine = qzm_engine("0.2", "0.5", 5, prec);
    for k in 0..=8 {
        let eps = prec.parse(&dec(0.52 + 0.02 * k as f64)).unwrap();
        let vals: Vec<Real> = (1..=5)
            .map(|m| engine.evaluate(&eps, qzm_top_order(m), false).unwrap().value)
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0], "eps index {k}");
        }
    }
    let engine = quartic_engine(prec, 40);
    for k in 0..=20 {
        let e = prec.parse(&dec(-5.0 + 1.75 * k as f64)).unwrap();
        let vals: Vec<Real> = p_at(&engine, &e, &[10, 20, 30, 40])
            .iter()
            .map(|pm| cqfm_value(pm).unwrap().value)
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}

#[test]
fn constrained_minimum_beats_random_probes() {
    let prec = p(50);
    let bits = prec.bits();
    let engine = qzm_engine("0.2", "0.5", 3, prec);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for eps in ["0.57", "0.59", "0.62"] {
        let eps = prec.parse(eps).unwrap();
        let pm = &engine.p_matrices(&eps, &[qzm_top_order(3)], false).unwrap()[0];
        let l = cqfm_value(pm).unwrap();
        assert!(rel_diff(&pm.p.quad_form(&l.optimizer), &l.value) < 1e-40);
        for _ in 0..20 {
            let mu: Vec<Real> = l
                .optimizer
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    if i == 0 {
                        prec.int(1)
                    } else {
                        Float::with_val(bits, x + prec.parse(&dec(rng.random_range(-0.5..0.5))).unwrap())
                    }
                })
                .collect();
            assert!(pm.p.quad_form(&mu) >= l.value);
        }
    }
}

#[test]
fn unit_norm_minimum_is_below_the_normalized_constrained_optimizer() {
    let prec = p(50);
    let bits = prec.bits();
    let engine = quartic_engine(prec, 30);
    for k in 0..=12 {
        let e = prec.parse(&dec(-4.0 + 2.5 * k as f64)).unwrap();
        let pm = &p_at(&engine, &e, &[30])[0];
        let lam = lambda_min(pm).unwrap().value;
        let opt = cqfm_value(pm).unwrap().optimizer;
        let ratio = pm.p.quad_form(&opt) / Float::with_val(bits, dot(&opt, &opt));
        let slack = Float::with_val(bits, &ratio * prec.pow10(-40));
        assert!(lam <= ratio + slack);
    }
}

fn harmonic_minima(prec: Precision) -> (Engine, Vec<oppq_core::bounds::MinimaRecord>) {
    let engine = register_problem(&ProblemConfig::Harmonic(HarmonicSpec), prec)
        .unwrap()
        .engine(10, prec)
        .unwrap();
    let lo = prec.int(4);
    let hi = prec.int(6);
    let seq = minima_sequence(
        |order| Ok(OrderFunctional { engine: &engine, order }),
        &lo,
        &hi,
        &[6, 7, 8, 9, 10],
        &SequenceOptions::default(),
    )
    .unwrap();
    assert!(seq.violations.is_empty());
    (engine, seq.records)
}

#[test]
fn brackets_separate_the_level_set_and_nest() {
    let prec = p(40);
    let bits = prec.bits();
    let (engine, records) = harmonic_minima(prec);
    let cap = prec.parse("3.6").unwrap();
    let limits = Some((prec.int(4), prec.int(6)));
    let mut previous: Option<(Real, Real)> = None;
    for r in &records {
        let f = OrderFunctional {
            engine: &engine,
            order: r.order,
        };
        let b = bracket_bounds(&f, r, &cap, limits.clone()).unwrap();
        assert!(b.lower < r.energy && r.energy < b.upper);
        let value = |x: Real| engine.evaluate(&x, r.order, false).unwrap().value;
        // beyond the bounds, out to the window edges
        for k in 0..=8u32 {
            let t = prec.parse(&dec(f64::from(k) / 8.0)).unwrap();
            let below = Float::with_val(bits, &b.lower - Float::with_val(bits, &b.lower - 4u32) * &t);
            let above = Float::with_val(bits, &b.upper + Float::with_val(bits, 6u32 - &b.upper) * &t);
            assert!(value(below) > cap, "order {} below", r.order);
            assert!(value(above) > cap, "order {} above", r.order);
        }
        // inside, around the minimum
        let width = Float::with_val(bits, &b.upper - &b.lower);
        for k in -4i32..=4 {
            let x = Float::with_val(bits, &width * k) / 20u32 + &r.energy;
            assert!(value(x) < cap, "order {} inside", r.order);
        }
        if let Some((lo, hi)) = &previous {
            assert!(*lo <= b.lower && b.upper <= *hi, "order {} not nested", r.order);
        }
        previous = Some((b.lower, b.upper));
    }
}

/// Smallest eigenvalue of a symmetric matrix given by rows.
fn smallest(rows: Vec<Vec<Real>>, prec: Precision) -> Real {
    let pm = PMatrix {
        order: 0,
        energy: prec.zero(),
        p: Matrix::from_rows(rows),
        dp: None,
    };
    lambda_min(&pm).unwrap().value
}

#[test]
fn eigenvalues_need_not_interlace_when_dimension_grows() {
    // D₁ = [[D₀, 0], [0, 0]] + S with S ⪰ 0 can have a smaller minimum than D₀
    let prec = p(40);
    let bits = prec.bits();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut found = None;
    for attempt in 0..500 {
        let mut r = |lo: f64, hi: f64| prec.parse(&dec(rng.random_range(lo..hi))).unwrap();
        let (a, c, b) = (r(0.5, 3.0), r(0.5, 3.0), r(-0.4, 0.4));
        let d0 = vec![vec![a.clone(), b.clone()], vec![b.clone(), c.clone()]];
        let v = [r(-1.0, 1.0), r(-1.0, 1.0), r(-1.0, 1.0)];
        let mut d1 = vec![vec![prec.zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut x = Float::with_val(bits, &v[i] * &v[j]);
                if i < 2 && j < 2 {
                    x += &d0[i][j];
                }
                d1[i][j] = x;
            }
        }
        let (l0, l1) = (smallest(d0, prec), smallest(d1, prec));
        if l1 < l0 {
            found = Some((attempt, l0, l1));
            break;
        }
    }
    let (attempt, l0, l1) = found.expect("a witness within 500 draws");
    assert!(l1.is_sign_positive() && l1 < l0, "attempt {attempt}: {l1} vs {l0}");
}

#[test]
fn evaluations_are_identical_across_threads_and_orderings() {
    let prec = p(40);
    let energies: Vec<Real> = (0..12)
        .map(|k| prec.parse(&dec(0.55 + 0.01 * f64::from(k))).unwrap())
        .collect();
    let order = qzm_top_order(3);
    let reference: Vec<Real> = {
        let engine = qzm_engine("0.2", "0.5", 3, prec);
        energies
            .iter()
            .map(|e| engine.evaluate(e, order, true).unwrap().value)
            .collect()
    };
    let shared = Arc::new(qzm_engine("0.2", "0.5", 3, prec));
    let results: Vec<Vec<(usize, Real)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let engine = Arc::clone(&shared);
                let energies = &energies;
                s.spawn(move || {
                    // each thread walks the grid from a different start, in reverse for odd threads
                    let mut idx: Vec<usize> = (0..energies.len()).map(|k| (k + 3 * t) % energies.len()).collect();
                    if t % 2 == 1 {
                        idx.reverse();
                    }
                    idx.into_iter()
                        .map(|k| (k, engine.evaluate(&energies[k], order, t % 2 == 0).unwrap().value))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for per_thread in results {
        for (k, v) in per_thread {
            assert_eq!(v, reference[k], "energy index {k}");
        }
    }
}
