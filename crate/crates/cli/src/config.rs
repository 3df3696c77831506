//! Scenario configuration: sectioned key/value files with flag overrides.
//!
//! The native encoding is TOML-style sections (`potential`, `packet`,
//! `grid`, `series`, `output`, `units`, plus the optional `hartman` and
//! `sweep` sections); the same structure is accepted as JSON. Parsing
//! resolves every default, applies command-line overrides, and validates
//! command-specific preconditions, so the resolved configuration echoes
//! every value the run will actually use.

use serde::{Deserialize, Serialize};
use toml::value::Table;
use toml::Value;

use wavetransit::dispersion::{PotentialKind, ScatterRegion};
use wavetransit::experiments::{
    default_condition_multipliers, DataFormat, PartialSelection, Scenario,
};
use wavetransit::scattering::default_diff_step;
use wavetransit::synthesis::PacketSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax error: {0}")]
    Syntax(String),

    #[error("unknown section [{section}]; expected one of: potential, packet, grid, series, output, units, hartman, sweep")]
    UnknownSection { section: String },

    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: &'static str, key: String },

    #[error("missing required key `{key}` in section [{section}]; expected:\n{schema}")]
    MissingKey {
        section: &'static str,
        key: &'static str,
        schema: &'static str,
    },

    #[error("key `{key}` in section [{section}] must be {expected}")]
    BadValue {
        section: &'static str,
        key: String,
        expected: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Validation(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

const POTENTIAL_SCHEMA: &str = "  [potential]\n  kind = \"well\" | \"barrier\"\n  v0 = <energy, >= 0>      # default 1\n  a = <thickness, > 0>";
const PACKET_SCHEMA: &str = "  [packet]\n  omega0 = <carrier frequency, > 0>\n  tau = <half-width, > 0>";

/// The subcommand being executed; validation is command-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Coef,
    Packet,
    Constituents,
    Partial,
    Hartman,
    Figures,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Coef => "coef",
            Command::Packet => "packet",
            Command::Constituents => "constituents",
            Command::Partial => "partial",
            Command::Hartman => "hartman",
            Command::Figures => "figures",
            Command::Sweep => "sweep",
        }
    }

    fn default_label(self) -> &'static str {
        match self {
            Command::Coef => "coefficient",
            Command::Packet => "packet",
            Command::Constituents => "constituents",
            Command::Partial => "partials",
            Command::Hartman => "hartman",
            Command::Figures => "figures",
            Command::Sweep => "condition-study",
        }
    }
}

/// Command-line overrides applied on top of the file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<String>,
    pub format: Option<String>,
    pub n_omega: Option<usize>,
    pub n_t: Option<usize>,
    pub terms: Option<u32>,
    pub diff_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    pub v0: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSection {
    pub omega0: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub n_omega: usize,
    pub window_sigmas: f64,
    pub n_t: usize,
    pub span_sigmas: f64,
    pub diff_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSection {
    pub terms: u32,
    pub constituents: Vec<u32>,
    pub partials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    pub format: DataFormat,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitsSection {
    pub hbar: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HartmanSection {
    pub kappa_a_min: f64,
    pub kappa_a_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub multipliers: Vec<f64>,
}

/// Every value a run uses, with all defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub potential: PotentialSection,
    pub packet: PacketSection,
    pub grid: GridSection,
    pub series: SeriesSection,
    pub output: OutputSection,
    pub units: UnitsSection,
    pub hartman: HartmanSection,
    pub sweep: SweepSection,
}

/// A validated configuration bound to its subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub resolved: ResolvedConfig,
}

impl CliConfig {
    /// Builds the core scenario this configuration describes.
    pub fn scenario(&self) -> Result<Scenario> {
        let r = &self.resolved;
        let region = ScatterRegion::new(
            r.potential.kind,
            r.potential.v0,
            r.potential.a,
            r.units.mu,
            r.units.hbar,
        )
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let packet = PacketSpec::with_sampling(
            r.packet.omega0,
            r.packet.tau,
            r.grid.window_sigmas,
            r.grid.n_omega,
        )
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let mut scenario = Scenario::new(r.output.label.clone(), region, packet)
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        scenario.n_time = r.grid.n_t;
        scenario.span_sigmas = r.grid.span_sigmas;
        scenario.series_terms = r.series.terms;
        scenario.constituents = r.series.constituents.clone();
        scenario.partials = r
            .series
            .partials
            .iter()
            .map(|p| {
                p.parse::<PartialSelection>()
                    .map_err(|e| ConfigError::Validation(e.to_string()))
            })
            .collect::<Result<_>>()?;
        scenario.diff_step = r.grid.diff_step;
        Ok(scenario)
    }

    /// Serializes the resolved configuration; parsing the dump back under
    /// the same command yields an identical `CliConfig`.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.resolved).expect("resolved config serializes")
    }
}

fn float_in(section: &'static str, table: &Table, key: &'static str) -> Result<Option<f64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Float(f)) => Ok(Some(*f)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(_) => Err(ConfigError::BadValue {
            section,
            key: key.into(),
            expected: "a number",
        }),
    }
}

fn integer_in(section: &'static str, table: &Table, key: &'static str) -> Result<Option<i64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) => Ok(Some(*i)),
        Some(_) => Err(ConfigError::BadValue {
            section,
            key: key.into(),
            expected: "an integer",
        }),
    }
}

fn string_in(section: &'static str, table: &Table, key: &'static str) -> Result<Option<String>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ConfigError::BadValue {
            section,
            key: key.into(),
            expected: "a string",
        }),
    }
}

fn check_keys(section: &'static str, table: &Table, known: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                section,
                key: key.clone(),
            });
        }
    }
    Ok(())
}

fn positive(section: &'static str, key: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value <= 0.0 {
        return Err(ConfigError::BadValue {
            section,
            key: key.into(),
            expected: "a positive finite number",
        });
    }
    Ok(value)
}

/// Parses the configuration text (TOML sections, or JSON when the content
/// starts with `{`), applies defaults and overrides, and validates the
/// result for `command`.
pub fn parse_config(text: &str, command: Command, overrides: &Overrides) -> Result<CliConfig> {
    let root: Value = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?
    };
    let root = root
        .as_table()
        .ok_or_else(|| ConfigError::Syntax("top level must be a table of sections".into()))?;

    const SECTIONS: &[&str] = &[
        "potential", "packet", "grid", "series", "output", "units", "hartman", "sweep",
    ];
    for name in root.keys() {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(ConfigError::UnknownSection {
                section: name.clone(),
            });
        }
    }
    let section = |name: &'static str| -> Result<Table> {
        match root.get(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t.clone()),
            Some(_) => Err(ConfigError::Syntax(format!("[{name}] must be a section"))),
        }
    };

    // [potential]
    let potential_table = section("potential")?;
    check_keys("potential", &potential_table, &["kind", "v0", "a"])?;
    let kind = match string_in("potential", &potential_table, "kind")? {
        Some(s) if s == "well" => PotentialKind::Well,
        Some(s) if s == "barrier" => PotentialKind::Barrier,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "potential",
                key: "kind".into(),
                expected: "\"well\" or \"barrier\"",
            })
        }
        None => {
            return Err(ConfigError::MissingKey {
                section: "potential",
                key: "kind",
                schema: POTENTIAL_SCHEMA,
            })
        }
    };
    let v0 = match float_in("potential", &potential_table, "v0")? {
        Some(v) if v >= 0.0 && v.is_finite() => v,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "potential",
                key: "v0".into(),
                expected: "a nonnegative finite number",
            })
        }
        None => 1.0,
    };
    let a = match float_in("potential", &potential_table, "a")? {
        Some(v) => positive("potential", "a", v)?,
        None => {
            return Err(ConfigError::MissingKey {
                section: "potential",
                key: "a",
                schema: POTENTIAL_SCHEMA,
            })
        }
    };

    // [packet]
    let packet_table = section("packet")?;
    check_keys("packet", &packet_table, &["omega0", "tau"])?;
    let omega0 = match float_in("packet", &packet_table, "omega0")? {
        Some(v) => positive("packet", "omega0", v)?,
        None => {
            return Err(ConfigError::MissingKey {
                section: "packet",
                key: "omega0",
                schema: PACKET_SCHEMA,
            })
        }
    };
    let tau = match float_in("packet", &packet_table, "tau")? {
        Some(v) => positive("packet", "tau", v)?,
        None => {
            return Err(ConfigError::MissingKey {
                section: "packet",
                key: "tau",
                schema: PACKET_SCHEMA,
            })
        }
    };

    // [grid]
    let grid_table = section("grid")?;
    check_keys(
        "grid",
        &grid_table,
        &["n_omega", "window_sigmas", "n_t", "span_sigmas", "diff_step"],
    )?;
    let mut n_omega = match integer_in("grid", &grid_table, "n_omega")? {
        Some(v) if v > 0 => v as usize,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "grid",
                key: "n_omega".into(),
                expected: "a positive integer",
            })
        }
        None => 2049,
    };
    let window_sigmas = match float_in("grid", &grid_table, "window_sigmas")? {
        Some(v) => positive("grid", "window_sigmas", v)?,
        None => 5.0,
    };
    let mut n_t = match integer_in("grid", &grid_table, "n_t")? {
        Some(v) if v > 2 => v as usize,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "grid",
                key: "n_t".into(),
                expected: "an integer greater than 2",
            })
        }
        None => 4096,
    };
    let span_sigmas = match float_in("grid", &grid_table, "span_sigmas")? {
        Some(v) => positive("grid", "span_sigmas", v)?,
        None => 6.0,
    };
    let mut diff_step = match float_in("grid", &grid_table, "diff_step")? {
        Some(v) => positive("grid", "diff_step", v)?,
        None => default_diff_step(omega0, tau),
    };

    // [series]
    let series_table = section("series")?;
    check_keys("series", &series_table, &["terms", "constituents", "partials"])?;
    let mut terms = match integer_in("series", &series_table, "terms")? {
        Some(v) if v >= 1 => v as u32,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "series",
                key: "terms".into(),
                expected: "an integer of at least 1",
            })
        }
        None => 100,
    };
    let constituents = match series_table.get("constituents") {
        None => vec![1, 2, 3],
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Integer(i) if *i >= 1 => out.push(*i as u32),
                    _ => {
                        return Err(ConfigError::BadValue {
                            section: "series",
                            key: "constituents".into(),
                            expected: "an array of integers of at least 1",
                        })
                    }
                }
            }
            out
        }
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "series",
                key: "constituents".into(),
                expected: "an array of integers of at least 1",
            })
        }
    };
    let partials = match series_table.get("partials") {
        None => vec!["1".into(), "2".into(), "3".into(), "all".into()],
        Some(Value::Array(items)) => {
            let mut out: Vec<String> = Vec::with_capacity(items.len());
            for item in items {
                let text = match item {
                    Value::Integer(i) => i.to_string(),
                    Value::String(s) => s.clone(),
                    _ => {
                        return Err(ConfigError::BadValue {
                            section: "series",
                            key: "partials".into(),
                            expected: "an array of term counts or \"all\"",
                        })
                    }
                };
                text.parse::<PartialSelection>().map_err(|_| ConfigError::BadValue {
                    section: "series",
                    key: "partials".into(),
                    expected: "an array of term counts or \"all\"",
                })?;
                out.push(text);
            }
            out
        }
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "series",
                key: "partials".into(),
                expected: "an array of term counts or \"all\"",
            })
        }
    };

    // [output]
    let output_table = section("output")?;
    check_keys("output", &output_table, &["dir", "format", "label"])?;
    let mut dir = string_in("output", &output_table, "dir")?.unwrap_or_else(|| "out".into());
    let mut format = match string_in("output", &output_table, "format")? {
        None => DataFormat::Csv,
        Some(s) if s == "csv" => DataFormat::Csv,
        Some(s) if s == "json" => DataFormat::Json,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "output",
                key: "format".into(),
                expected: "\"csv\" or \"json\"",
            })
        }
    };
    let label = string_in("output", &output_table, "label")?
        .unwrap_or_else(|| command.default_label().into());
    if label.is_empty() {
        return Err(ConfigError::BadValue {
            section: "output",
            key: "label".into(),
            expected: "a nonempty directory name",
        });
    }

    // [units]
    let units_table = section("units")?;
    check_keys("units", &units_table, &["hbar", "mu"])?;
    let hbar = match float_in("units", &units_table, "hbar")? {
        Some(v) => positive("units", "hbar", v)?,
        None => 1.0,
    };
    let mu = match float_in("units", &units_table, "mu")? {
        Some(v) => positive("units", "mu", v)?,
        None => 1.0,
    };

    // [hartman]
    let hartman_table = section("hartman")?;
    check_keys("hartman", &hartman_table, &["kappa_a_min", "kappa_a_max", "count"])?;
    let kappa_a_min = match float_in("hartman", &hartman_table, "kappa_a_min")? {
        Some(v) => positive("hartman", "kappa_a_min", v)?,
        None => 0.1,
    };
    let kappa_a_max = match float_in("hartman", &hartman_table, "kappa_a_max")? {
        Some(v) => positive("hartman", "kappa_a_max", v)?,
        None => 10.0,
    };
    let count = match integer_in("hartman", &hartman_table, "count")? {
        Some(v) if v >= 2 => v as usize,
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "hartman",
                key: "count".into(),
                expected: "an integer of at least 2",
            })
        }
        None => 30,
    };
    if kappa_a_max <= kappa_a_min {
        return Err(ConfigError::Validation(format!(
            "[hartman] kappa_a_max ({kappa_a_max}) must exceed kappa_a_min ({kappa_a_min})"
        )));
    }

    // [sweep]
    let sweep_table = section("sweep")?;
    check_keys("sweep", &sweep_table, &["multipliers"])?;
    let explicit_multipliers = match sweep_table.get("multipliers") {
        None => None,
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Float(f) if *f > 0.0 => out.push(*f),
                    Value::Integer(i) if *i > 0 => out.push(*i as f64),
                    _ => {
                        return Err(ConfigError::BadValue {
                            section: "sweep",
                            key: "multipliers".into(),
                            expected: "an array of positive numbers",
                        })
                    }
                }
            }
            Some(out)
        }
        Some(_) => {
            return Err(ConfigError::BadValue {
                section: "sweep",
                key: "multipliers".into(),
                expected: "an array of positive numbers",
            })
        }
    };

    // Flag overrides beat file values.
    if let Some(v) = overrides.n_omega {
        if v == 0 {
            return Err(ConfigError::Validation("--n-omega must be positive".into()));
        }
        n_omega = v;
    }
    if let Some(v) = overrides.n_t {
        if v <= 2 {
            return Err(ConfigError::Validation("--n-t must exceed 2".into()));
        }
        n_t = v;
    }
    if let Some(v) = overrides.terms {
        if v == 0 {
            return Err(ConfigError::Validation("--terms must be at least 1".into()));
        }
        terms = v;
    }
    if let Some(v) = overrides.diff_step {
        if !v.is_finite() || v <= 0.0 {
            return Err(ConfigError::Validation("--diff-step must be positive".into()));
        }
        diff_step = v;
    }
    if let Some(v) = &overrides.out {
        dir = v.clone();
    }
    if let Some(v) = &overrides.format {
        format = match v.as_str() {
            "csv" => DataFormat::Csv,
            "json" => DataFormat::Json,
            other => {
                return Err(ConfigError::Validation(format!(
                    "--format must be csv or json, got `{other}`"
                )))
            }
        };
    }

    let mut resolved = ResolvedConfig {
        potential: PotentialSection { kind, v0, a },
        packet: PacketSection { omega0, tau },
        grid: GridSection {
            n_omega,
            window_sigmas,
            n_t,
            span_sigmas,
            diff_step,
        },
        series: SeriesSection {
            terms,
            constituents,
            partials,
        },
        output: OutputSection { dir, format, label },
        units: UnitsSection { hbar, mu },
        hartman: HartmanSection {
            kappa_a_min,
            kappa_a_max,
            count,
        },
        sweep: SweepSection {
            multipliers: explicit_multipliers.unwrap_or_default(),
        },
    };

    let config = CliConfig {
        command,
        resolved: resolved.clone(),
    };
    let scenario = config.scenario()?; // validates region, packet and grids

    // Command-specific preconditions.
    match command {
        Command::Hartman => {
            if kind != PotentialKind::Barrier {
                return Err(ConfigError::Validation(
                    "command `hartman` requires [potential] kind = \"barrier\"".into(),
                ));
            }
            if hbar * omega0 >= v0 {
                return Err(ConfigError::Validation(format!(
                    "command `hartman` requires an evanescent carrier, hbar * omega0 < v0; \
                     got hbar * omega0 = {} against v0 = {v0}",
                    hbar * omega0
                )));
            }
        }
        Command::Figures | Command::Sweep if kind != PotentialKind::Well => {
            return Err(ConfigError::Validation(format!(
                "command `{}` requires [potential] kind = \"well\"",
                command.name()
            )));
        }
        _ => {}
    }

    if resolved.sweep.multipliers.is_empty() && kind == PotentialKind::Well {
        resolved.sweep.multipliers = default_condition_multipliers(&scenario)
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
    }

    Ok(CliConfig { command, resolved })
}
