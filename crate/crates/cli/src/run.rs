//! The `scan`, `minima` and `bound` commands.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use oppq_core::bounds::{
    bracket_bounds, choose_cap, minima_sequence_resume, MinimaRecord, OrderFunctional, SequenceOptions,
};
use oppq_core::cdr::{qzm_m_s_of_order, qzm_top_order, BasisSource, Engine};
use oppq_core::mer::IndexSpace;
use oppq_core::precision::format_exact;
use oppq_core::problems::{detect_eps0, register_problem, Problem, ProblemConfig};
use oppq_core::weight::build_basis;
use oppq_core::{Precision, Real};
use rug::Float;

use crate::cache::{basis_key, BasisCache};
use crate::config::{CapRule, RunConfig, Schedule};
use crate::record::{
    bound_row, cell, minima_from_row, minima_row, sidecar, write_atomic, Csv, OrderTiming, RunRecord, Timings,
    ViolationRow,
};
use crate::CliError;

/// Missing-moment order used to pick the weight parameter when none is given.
const DETECT_M_S: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Scan,
    Minima,
    Bound,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Minima => "minima",
            Command::Bound => "bound",
        }
    }
}

/// Everything a command produced.
pub struct Outcome {
    pub csv: String,
    pub record: RunRecord,
    pub timings: Timings,
}

struct Setup {
    prec: Precision,
    problem: Problem,
    engine: Engine,
    orders: Vec<usize>,
    lo: Real,
    hi: Real,
    record: RunRecord,
}

fn setup(cmd: Command, cfg: &RunConfig) -> Result<Setup, CliError> {
    let prec = Precision::new(cfg.digits)?;
    let lo = cfg.window.0.to_real(prec);
    let hi = cfg.window.1.to_real(prec);
    let mut record = RunRecord::new(cmd.name(), cfg.snapshot());

    let mut problem_cfg = cfg.problem.clone();
    if let ProblemConfig::Qzm(q) = &mut problem_cfg {
        if q.eps0.is_none() {
            let (eps0, estimate) = detect_eps0(&q.field, &lo, &hi, DETECT_M_S, prec)?;
            eprintln!(
                "eps0 = {eps0} (low-order estimate {})",
                oppq_core::precision::format_sig(&estimate, 12)
            );
            record.detected_eps0 = Some(eps0.to_string());
            q.eps0 = Some(eps0);
        }
    }
    let problem = register_problem(&problem_cfg, prec)?;

    let orders = match &cfg.schedule {
        Schedule::Orders(o) => o.clone(),
        Schedule::MissingMoments(m) => m.iter().map(|&m| qzm_top_order(m)).collect(),
    };
    let max_order = *orders.last().expect("nonempty schedule");

    let basis = match &cfg.cache_dir {
        Some(dir) => {
            let cache = BasisCache::new(dir);
            let key = basis_key(&problem.weight, cfg.digits, max_order);
            match cache.load(&key)? {
                Some(b) => b,
                None => {
                    let b = build_basis(&problem.weight, max_order, prec)?;
                    cache.store(&key, &b)?;
                    b
                }
            }
        }
        None => build_basis(&problem.weight, max_order, prec)?,
    };
    let engine = Engine::with_basis(
        problem.spec.clone(),
        BasisSource::Fixed(Arc::new(basis)),
        max_order,
        prec,
    );
    Ok(Setup {
        prec,
        problem,
        engine,
        orders,
        lo,
        hi,
        record,
    })
}

fn m_s_of(problem: &Problem, order: usize) -> usize {
    match problem.spec.index_space {
        IndexSpace::OneD => problem.spec.fixed_m_s().unwrap_or(0),
        IndexSpace::TwoDSymmetric => qzm_m_s_of_order(order),
    }
}

fn state_label(problem: &Problem, cfg: &RunConfig) -> String {
    let sector = match problem.spec.index_space {
        IndexSpace::OneD => "even",
        IndexSpace::TwoDSymmetric => "0+",
    };
    format!("{sector}@{}:{}", cfg.window.0, cfg.window.1)
}

fn checkpoint_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.out.as_deref().map(|o| sidecar(o, ".record.json"))
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut s = setup(cmd, cfg)?;
    let mut timings = Timings {
        command: cmd.name().to_string(),
        setup_seconds: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let csv = match cmd {
        Command::Scan => scan(&mut s, cfg, &mut timings)?,
        Command::Minima | Command::Bound => minima_and_bounds(cmd, &mut s, cfg, &mut timings)?,
    };
    s.record.precision = s.engine.diagnostics().into();
    s.record.complete = true;
    timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(Outcome {
        csv,
        record: s.record,
        timings,
    })
}

fn scan(s: &mut Setup, cfg: &RunConfig, timings: &mut Timings) -> Result<String, CliError> {
    let bits = s.prec.bits();
    let mut csv = Csv::new(&["energy", "order", "value", "log10_value"]);
    let width = Float::with_val(bits, &s.hi - &s.lo);
    for &order in &s.orders {
        let t = Instant::now();
        for k in 0..=cfg.grid_points {
            let e = if k == cfg.grid_points {
                s.hi.clone()
            } else {
                let mut e = Float::with_val(bits, &width * k as u64) / cfg.grid_points as u64;
                e += &s.lo;
                e
            };
            let v = s.engine.evaluate(&e, order, false)?.value;
            let log = Float::with_val(bits, v.log10_ref());
            csv.row(&[
                cell(&e, cfg.digits),
                order.to_string(),
                cell(&v, cfg.digits),
                cell(&log, cfg.digits),
            ]);
        }
        // evaluations at this order are not revisited
        s.engine.clear_cache();
        timings.orders.push(OrderTiming {
            order,
            stage: "scan",
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(csv.into_string())
}

fn minima_and_bounds(cmd: Command, s: &mut Setup, cfg: &RunConfig, timings: &mut Timings) -> Result<String, CliError> {
    let ckpt = checkpoint_path(cfg);
    // resume from an unfinished run of the same configuration
    let mut prior: Vec<MinimaRecord> = Vec::new();
    if let Some(path) = &ckpt {
        if let Some(old) = RunRecord::load(path)? {
            let same_prefix = old.minima.iter().zip(&s.orders).all(|(r, &o)| r.order == o);
            if s.record.resumable_from(&old) && same_prefix && old.minima.len() <= s.orders.len() {
                prior = old
                    .minima
                    .iter()
                    .map(|r| minima_from_row(r, s.prec))
                    .collect::<Result<_, _>>()?;
                eprintln!("resuming after order {}", prior.last().map_or(0, |r| r.order));
                s.record = old;
            }
        }
    }
    let remaining: Vec<usize> = s.orders[prior.len()..].to_vec();
    let opts = SequenceOptions {
        grid_points: cfg.grid_points,
        tracked_grid_points: cfg.tracked_grid_points,
        refine: cfg.refine,
        refine_tol: None,
    };
    let engine = &s.engine;
    let problem = &s.problem;
    let record = &mut s.record;
    let mut last = Instant::now();
    let mut save_error = None;
    let seq = minima_sequence_resume(
        |order| Ok(OrderFunctional { engine, order }),
        &s.lo,
        &s.hi,
        &remaining,
        &opts,
        prior,
        |r| {
            record.minima.push(minima_row(r, Some(m_s_of(problem, r.order))));
            timings.orders.push(OrderTiming {
                order: r.order,
                stage: "minimum",
                seconds: last.elapsed().as_secs_f64(),
            });
            last = Instant::now();
            if let (Some(path), None) = (&ckpt, &save_error) {
                record.precision = engine.diagnostics().into();
                save_error = record.save(path).err();
            }
            Ok(())
        },
    )?;
    if let Some(e) = save_error {
        return Err(e);
    }
    for v in &seq.violations {
        eprintln!(
            "warning: minimum value decreased at order {} ({} -> {})",
            v.order,
            cell(&v.previous, 20),
            cell(&v.current, 20)
        );
    }
    s.record.violations = seq
        .violations
        .iter()
        .map(|v| ViolationRow {
            order: v.order,
            previous: format_exact(&v.previous),
            current: format_exact(&v.current),
        })
        .collect();

    if cmd == Command::Minima {
        let mut csv = Csv::new(&["order", "m_s", "energy", "value", "functional"]);
        for r in &seq.records {
            csv.row(&[
                r.order.to_string(),
                m_s_of(&s.problem, r.order).to_string(),
                cell(&r.energy, cfg.digits),
                cell(&r.value, cfg.digits),
                r.kind.label().to_string(),
            ]);
        }
        return Ok(csv.into_string());
    }

    let cap = match &cfg.cap {
        CapRule::Explicit(c) => c.to_real(s.prec),
        CapRule::Margin(m) => choose_cap(&seq.records, &m.to_real(s.prec))?,
    };
    let cap_text = format_exact(&cap);
    if s.record.cap.as_deref() != Some(cap_text.as_str()) {
        s.record.bounds.clear();
    }
    s.record.cap = Some(cap_text);
    let state = state_label(&s.problem, cfg);
    let mut csv = Csv::new(&["order", "m_s", "state", "minimum", "value", "cap", "lower", "upper"]);
    for r in &seq.records {
        let t = Instant::now();
        let m_s = m_s_of(&s.problem, r.order);
        if !s.record.bounds.iter().any(|b| b.order == r.order) {
            let f = OrderFunctional {
                engine: &s.engine,
                order: r.order,
            };
            let mut b = bracket_bounds(&f, r, &cap, Some((s.lo.clone(), s.hi.clone())))?;
            b.state = state.clone();
            s.record.bounds.push(bound_row(&b, Some(m_s)));
            timings.orders.push(OrderTiming {
                order: r.order,
                stage: "bound",
                seconds: t.elapsed().as_secs_f64(),
            });
            if let Some(path) = &ckpt {
                s.record.precision = s.engine.diagnostics().into();
                s.record.save(path)?;
            }
        }
        let row = s
            .record
            .bounds
            .iter()
            .find(|b| b.order == r.order)
            .expect("bound present");
        let lower = s.prec.parse(&row.lower)?;
        let upper = s.prec.parse(&row.upper)?;
        csv.row(&[
            r.order.to_string(),
            m_s.to_string(),
            row.state.clone(),
            cell(&r.energy, cfg.digits),
            cell(&r.value, cfg.digits),
            cell(&cap, cfg.digits),
            cell(&lower, cfg.digits),
            cell(&upper, cfg.digits),
        ]);
    }
    Ok(csv.into_string())
}

/// Runs a command and writes its outputs: the table to `out` (or stdout), the
/// run record to `<out>.record.json` and wall-clock times to
/// `<out>.timings.json`.
pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    let outcome = run(cmd, cfg)?;
    match &cfg.out {
        Some(out) => {
            write_atomic(out, &outcome.csv)?;
            outcome.record.save(&sidecar(out, ".record.json"))?;
            let mut timings = serde_json::to_string_pretty(&outcome.timings).expect("timings serialize");
            timings.push('\n');
            write_atomic(&sidecar(out, ".timings.json"), &timings)?;
        }
        None => print!("{}", outcome.csv),
    }
    Ok(())
}
