//! Run configuration: a TOML file merged with command-line overrides.
//!
//! Every real-valued setting is written as a string and kept as a decimal
//! literal until it is materialized at the working precision.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oppq_core::bounds::Refine;
use oppq_core::problems::{HarmonicSpec, ProblemConfig, QuarticSpec, QzmSpec};
use oppq_core::Decimal;
use serde::{Deserialize, Serialize};

use crate::orders::parse_orders;
use crate::CliError;

pub const MIN_DIGITS: u32 = 30;

/// Raw contents of a configuration file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub digits: Option<u32>,
    pub orders: Option<String>,
    pub m_s: Option<String>,
    pub window: Option<String>,
    pub grid_points: Option<usize>,
    pub tracked_grid_points: Option<usize>,
    pub cap: Option<String>,
    pub cap_margin: Option<String>,
    pub refine: Option<String>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Settings given on the command line; `Some` values win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub digits: Option<u32>,
    pub params: Vec<String>,
    pub orders: Option<String>,
    pub m_s: Option<String>,
    pub window: Option<String>,
    pub grid_points: Option<usize>,
    pub cap: Option<String>,
    pub cap_margin: Option<String>,
    pub refine: Option<String>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Expansion orders `I`.
    Orders(Vec<usize>),
    /// Missing-moment orders `m_s`; each maps to its top expansion order.
    MissingMoments(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CapRule {
    Explicit(Decimal),
    /// `(1 + margin) ·` largest minimum value of the sequence.
    Margin(Decimal),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub digits: u32,
    pub schedule: Schedule,
    pub window: (Decimal, Decimal),
    pub grid_points: usize,
    pub tracked_grid_points: usize,
    pub cap: CapRule,
    pub refine: Refine,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// What goes into the run record: everything that determines the numbers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub problem: String,
    pub params: BTreeMap<String, String>,
    pub digits: u32,
    pub schedule: Schedule,
    pub window: (String, String),
    pub grid_points: usize,
    pub tracked_grid_points: usize,
    /// `explicit:<value>` or `margin:<value>`.
    pub cap: String,
    pub refine: String,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, over: Overrides) -> Result<RunConfig, CliError> {
        let problem = over
            .problem
            .or(file.problem)
            .ok_or_else(|| CliError::Config("no problem given (--problem or `problem =`)".into()))?;
        let mut params = BTreeMap::new();
        for (k, v) in file.params {
            let toml::Value::String(s) = v else {
                return Err(CliError::Config(format!(
                    "parameter `{k}` must be a quoted decimal string, not a TOML number"
                )));
            };
            params.insert(k, s);
        }
        for kv in &over.params {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--param expects KEY=VALUE, got `{kv}`")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let problem = problem_config(&problem, &params)?;

        let digits = over.digits.or(file.digits).unwrap_or(60);
        if digits < MIN_DIGITS {
            return Err(CliError::Config(format!("digits must be at least {MIN_DIGITS}")));
        }

        let orders = over.orders.or(file.orders);
        let m_s = over.m_s.or(file.m_s);
        let schedule = match (orders, m_s) {
            (Some(o), None) => Schedule::Orders(parse_orders(&o)?),
            (None, Some(m)) => {
                if !matches!(problem, ProblemConfig::Qzm(_)) {
                    return Err(CliError::Config("an m_s schedule only applies to qzm".into()));
                }
                Schedule::MissingMoments(parse_orders(&m)?)
            }
            (Some(_), Some(_)) => return Err(CliError::Config("give either orders or m_s, not both".into())),
            (None, None) => return Err(CliError::Config("no order schedule (--orders or --m-s)".into())),
        };

        let window = over
            .window
            .or(file.window)
            .ok_or_else(|| CliError::Config("no energy window (--window LO:HI)".into()))?;
        let window = parse_window(&window)?;

        let grid_points = over.grid_points.or(file.grid_points).unwrap_or(200);
        let tracked_grid_points = file.tracked_grid_points.unwrap_or(24);
        if grid_points < 4 || tracked_grid_points < 4 {
            return Err(CliError::Config("grid point counts must be at least 4".into()));
        }

        let cap = match (over.cap, over.cap_margin) {
            (Some(c), _) => CapRule::Explicit(decimal("cap", &c)?),
            (None, Some(m)) => CapRule::Margin(decimal("cap margin", &m)?),
            (None, None) => match (file.cap, file.cap_margin) {
                (Some(_), Some(_)) => return Err(CliError::Config("give either cap or cap_margin, not both".into())),
                (Some(c), None) => CapRule::Explicit(decimal("cap", &c)?),
                (None, Some(m)) => CapRule::Margin(decimal("cap margin", &m)?),
                (None, None) => CapRule::Margin(decimal("cap margin", "0.1")?),
            },
        };
        if let CapRule::Margin(m) = &cap {
            if m.as_str().starts_with('-') || m.to_real(oppq_core::Precision::new(30).expect("30 digits")).is_zero() {
                return Err(CliError::Config("cap margin must be positive".into()));
            }
        }

        let refine = match over.refine.or(file.refine).as_deref() {
            None | Some("golden") => Refine::Golden,
            Some("derivative") => Refine::Derivative,
            Some(other) => return Err(CliError::Config(format!("unknown refine mode `{other}`"))),
        };

        Ok(RunConfig {
            problem,
            digits,
            schedule,
            window,
            grid_points,
            tracked_grid_points,
            cap,
            refine,
            out: over.out.or(file.out),
            cache_dir: over.cache_dir.or(file.cache_dir),
        })
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        let mut params = BTreeMap::new();
        if let ProblemConfig::Qzm(q) = &self.problem {
            params.insert("field".to_string(), q.field.to_string());
            if let Some(e) = &q.eps0 {
                params.insert("eps0".to_string(), e.to_string());
            }
        }
        ConfigSnapshot {
            problem: self.problem.name().to_string(),
            params,
            digits: self.digits,
            schedule: self.schedule.clone(),
            window: (self.window.0.to_string(), self.window.1.to_string()),
            grid_points: self.grid_points,
            tracked_grid_points: self.tracked_grid_points,
            cap: match &self.cap {
                CapRule::Explicit(c) => format!("explicit:{c}"),
                CapRule::Margin(m) => format!("margin:{m}"),
            },
            refine: match self.refine {
                Refine::Golden => "golden".into(),
                Refine::Derivative => "derivative".into(),
            },
        }
    }
}

fn decimal(what: &str, s: &str) -> Result<Decimal, CliError> {
    s.parse()
        .map_err(|_| CliError::Config(format!("{what} `{s}` is not a decimal number")))
}

fn parse_window(s: &str) -> Result<(Decimal, Decimal), CliError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("window `{s}` must look like LO:HI")))?;
    let lo = decimal("window start", lo)?;
    let hi = decimal("window end", hi)?;
    let p = oppq_core::Precision::new(60).expect("60 digits");
    if lo.to_real(p) >= hi.to_real(p) {
        return Err(CliError::Config(format!("window `{s}` is empty")));
    }
    Ok((lo, hi))
}

fn problem_config(name: &str, params: &BTreeMap<String, String>) -> Result<ProblemConfig, CliError> {
    let allow = |keys: &[&str]| -> Result<(), CliError> {
        match params.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!("problem `{name}` has no parameter `{k}`"))),
            None => Ok(()),
        }
    };
    match name {
        "harmonic" => {
            allow(&[])?;
            Ok(ProblemConfig::Harmonic(HarmonicSpec))
        }
        "quartic" => {
            allow(&[])?;
            Ok(ProblemConfig::Quartic(QuarticSpec))
        }
        "qzm" => {
            allow(&["field", "eps0"])?;
            let field = params
                .get("field")
                .ok_or_else(|| CliError::Config("qzm needs --param field=B".into()))?;
            let eps0 = params.get("eps0").map(|e| decimal("eps0", e)).transpose()?;
            Ok(ProblemConfig::Qzm(QzmSpec {
                field: decimal("field", field)?,
                eps0,
            }))
        }
        other => Err(CliError::Config(format!(
            "unknown problem `{other}` (harmonic, quartic, qzm)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn over(problem: &str) -> Overrides {
        Overrides {
            problem: Some(problem.into()),
            orders: Some("6..8".into()),
            window: Some("4:6".into()),
            ..Default::default()
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "problem = \"quartic\"\ndigits = 80\norders = \"30,40\"\nwindow = \"20:25\"\ncap = \"0.7\"\n",
        )
        .unwrap();
        let mut o = Overrides::default();
        o.digits = Some(100);
        let cfg = RunConfig::resolve(file, o).unwrap();
        assert_eq!(cfg.digits, 100);
        assert_eq!(cfg.schedule, Schedule::Orders(vec![30, 40]));
        assert_eq!(cfg.cap, CapRule::Explicit("0.7".parse().unwrap()));
    }

    #[test]
    fn numeric_params_must_be_strings() {
        let file: FileConfig = toml::from_str("problem = \"qzm\"\n[params]\nfield = 0.02\n").unwrap();
        let err = RunConfig::resolve(
            file,
            Overrides {
                orders: Some("2".into()),
                window: Some("0.4:0.6".into()),
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(CliError::Config(_))));
    }

    #[test]
    fn validation() {
        let ok = RunConfig::resolve(FileConfig::default(), over("harmonic")).unwrap();
        assert_eq!(ok.digits, 60);
        let mut o = over("harmonic");
        o.window = Some("6:4".into());
        assert!(RunConfig::resolve(FileConfig::default(), o).is_err());
        let mut o = over("harmonic");
        o.digits = Some(20);
        assert!(RunConfig::resolve(FileConfig::default(), o).is_err());
        let mut o = over("qzm");
        assert!(RunConfig::resolve(FileConfig::default(), o.clone()).is_err());
        o.params = vec!["field=0.2".into(), "eps0=0.5".into()];
        assert!(RunConfig::resolve(FileConfig::default(), o).is_ok());
        assert!(RunConfig::resolve(FileConfig::default(), over("sextic")).is_err());
    }
}
