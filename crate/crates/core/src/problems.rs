//! The built-in systems.
//!
//! * `harmonic`: `−ψ'' + x²ψ = Eψ`, even states. With `ξ = x²` the Stieltjes
//!   moments obey `u(p+1) = E u(p) + 2p(2p−1) u(p−1)` (one missing moment).
//! * `quartic`: `x⁴ − 5x²`, even states:
//!   `u(p+2) = 5 u(p+1) + E u(p) + 2p(2p−1) u(p−1)` (two missing moments).
//! * `qzm`: hydrogen in a magnetic field `B`, even parity, `L_z = 0`, in
//!   parabolic coordinates, parametrized by the binding energy `ε = B/2 − E`.
//!
//! Both oscillators use the half-line Hermite weight and the unit-norm
//! constraint; the Zeeman problem uses its own weight with a frozen `ε₀` and
//! the `u₀ = 1` constraint.

use rug::Float;

use crate::bounds::{find_local_minima, OrderFunctional, Refine};
use crate::cdr::{qzm_top_order, BasisSource, Engine};
use crate::error::{Error, Result};
use crate::mer::{
    Constraint, EnergyParam, IndexSpace, LinearRecurrence, MissingMomentOrder, ProblemSpec, Recurrence, Term,
};
use crate::precision::{format_sig, Decimal, Precision, Real};
use crate::weight::WeightSpec;

/// `2p(2p−1) = 4p² − 2p`.
const STIELTJES_KINETIC: [i64; 3] = [0, -2, 4];

pub fn harmonic_spec() -> ProblemSpec {
    ProblemSpec {
        name: "harmonic".into(),
        missing_moment_order: MissingMomentOrder::Fixed(0),
        recurrence: Recurrence::Linear(LinearRecurrence {
            lead: 1,
            terms: vec![Term::new(0, 1, &[]), Term::new(-1, 0, &STIELTJES_KINETIC)],
        }),
        energy_param: EnergyParam::Energy,
        index_space: IndexSpace::OneD,
        constraint: Constraint::UnitNorm,
    }
}

pub fn quartic_spec() -> ProblemSpec {
    ProblemSpec {
        name: "quartic".into(),
        missing_moment_order: MissingMomentOrder::Fixed(1),
        recurrence: Recurrence::Linear(LinearRecurrence {
            lead: 2,
            terms: vec![
                Term::new(1, 0, &[5]),
                Term::new(0, 1, &[]),
                Term::new(-1, 0, &STIELTJES_KINETIC),
            ],
        }),
        energy_param: EnergyParam::Energy,
        index_space: IndexSpace::OneD,
        constraint: Constraint::UnitNorm,
    }
}

pub fn qzm_spec(field: Decimal) -> ProblemSpec {
    ProblemSpec {
        name: "qzm".into(),
        missing_moment_order: MissingMomentOrder::Hierarchical,
        recurrence: Recurrence::Qzm { field },
        energy_param: EnergyParam::BindingEnergy,
        index_space: IndexSpace::TwoDSymmetric,
        constraint: Constraint::LeadingOne,
    }
}

/// Harmonic oscillator, even sector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HarmonicSpec;

/// `x⁴ − 5x²` oscillator, even sector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QuarticSpec;

/// Quadratic Zeeman problem, 0⁺ sector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QzmSpec {
    pub field: Decimal,
    /// Frozen weight parameter; `None` asks for auto-detection.
    pub eps0: Option<Decimal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProblemConfig {
    Harmonic(HarmonicSpec),
    Quartic(QuarticSpec),
    Qzm(QzmSpec),
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Harmonic(_) => "harmonic",
            ProblemConfig::Quartic(_) => "quartic",
            ProblemConfig::Qzm(_) => "qzm",
        }
    }
}

/// A registered problem: moment recursion plus reference weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub weight: WeightSpec,
}

impl Problem {
    /// Engine evaluating the problem's functional up to `max_order`.
    pub fn engine(&self, max_order: usize, prec: Precision) -> Result<Engine> {
        Engine::new(self.spec.clone(), &self.weight, max_order, prec)
    }
}

pub fn register_problem(cfg: &ProblemConfig, prec: Precision) -> Result<Problem> {
    let problem = match cfg {
        ProblemConfig::Harmonic(_) => Problem {
            spec: harmonic_spec(),
            weight: WeightSpec::HermiteHalfline,
        },
        ProblemConfig::Quartic(_) => Problem {
            spec: quartic_spec(),
            weight: WeightSpec::HermiteHalfline,
        },
        ProblemConfig::Qzm(q) => {
            let eps0 = q
                .eps0
                .clone()
                .ok_or_else(|| Error::InvalidParameter("qzm needs eps0 (give it, or detect it first)".into()))?;
            let weight = WeightSpec::qzm(q.field.clone(), eps0);
            weight.validate(prec)?;
            Problem {
                spec: qzm_spec(q.field.clone()),
                weight,
            }
        }
    };
    problem.spec.validate()?;
    Ok(problem)
}

/// `E = B/2 − ε`.
pub fn qzm_energy_from_binding(eps: &Real, field: &Real) -> Real {
    let mut e = Float::with_val(eps.prec().max(field.prec()), field / 2u32);
    e -= eps;
    e
}

/// `ε = B/2 − E`.
pub fn qzm_binding_from_energy(energy: &Real, field: &Real) -> Real {
    qzm_energy_from_binding(energy, field)
}

/// Freezes a binding-energy estimate to the weight parameter: the integer part
/// for estimates ≥ 1, otherwise the leading significant digit (truncated).
pub fn truncate_eps0(eps: &Real) -> Result<Decimal> {
    if eps.is_sign_negative() || eps.is_zero() {
        return Err(Error::InvalidParameter(
            "binding energy estimate must be positive".into(),
        ));
    }
    let v = eps.to_f64();
    let text = if v >= 1.0 {
        format!("{:.1}", v.floor())
    } else {
        let exp = v.log10().floor() as i32;
        let lead = (v / 10f64.powi(exp)).floor();
        format_sig(&Float::with_val(64, lead * 10f64.powi(exp)), 1)
    };
    text.parse()
}

/// Estimates `ε₀` from a low-order run whose weight carries the binding
/// energy itself, then freezes it with [`truncate_eps0`].
pub fn detect_eps0(field: &Decimal, lo: &Real, hi: &Real, m_s: usize, prec: Precision) -> Result<(Decimal, Real)> {
    let order = qzm_top_order(m_s);
    let engine = Engine::with_basis(
        qzm_spec(field.clone()),
        BasisSource::EnergyDependent { field: field.clone() },
        order,
        prec,
    );
    let f = OrderFunctional { engine: &engine, order };
    let step = Float::with_val(prec.bits(), hi - lo) / 100u32;
    let found = find_local_minima(&f, lo, hi, &step, Refine::Golden, &prec.pow10(-10))?;
    let centre = Float::with_val(prec.bits(), lo + hi) / 2u32;
    let best = found
        .into_iter()
        .min_by(|a, b| {
            let da = Float::with_val(prec.bits(), &a.energy - &centre).abs();
            let db = Float::with_val(prec.bits(), &b.energy - &centre).abs();
            da.partial_cmp(&db).expect("finite")
        })
        .expect("nonempty");
    Ok((truncate_eps0(&best.energy)?, best.energy))
}
