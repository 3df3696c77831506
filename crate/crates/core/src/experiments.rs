//! Persisted scenario runs: plot-ready datasets plus a manifest that pins
//! every input, derived scale, numeric setting and output digest.
//!
//! Each run owns one output directory, writes its datasets first and the
//! manifest last. Identical scenarios and numeric settings produce
//! byte-identical files, and a manifest alone is enough to regenerate its
//! datasets (see [`rerun`]).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispersion::{characteristic_scales, inside_wavenumber, outside_wavenumber, PotentialKind, ScatterRegion};
use crate::numfmt::f64_repr;
use crate::scattering::{
    default_diff_step, group_delay, series_partial_sum, series_tail_bound, series_term,
    transmission_closed, CoefficientTable, DelayReport,
};
use crate::synthesis::{
    constituent_packet, fidelity, incident_packet, partial_packet, peak_time, time_grid,
    transmitted_packet, FieldSamples, PacketSpec,
};
use crate::{Error, Result};

/// Envelope-fidelity threshold below which a transmitted packet no longer
/// counts as shape-preserving.
pub const SHAPE_FIDELITY_THRESHOLD: f64 = 0.99;

/// Partial sums computed for the reshaping convergence table.
pub const RESHAPING_CONVERGENCE_TERMS: u32 = 20;

/// On-disk dataset encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Json,
}

impl DataFormat {
    fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Json => "json",
        }
    }
}

/// Which partial sums a run synthesizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialSelection {
    /// Sum of the first `m` constituents.
    Terms(u32),
    /// The whole transmitted packet (closed-form coefficient).
    Full,
}

impl std::fmt::Display for PartialSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartialSelection::Terms(m) => write!(f, "{m}"),
            PartialSelection::Full => write!(f, "all"),
        }
    }
}

impl std::str::FromStr for PartialSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(PartialSelection::Full);
        }
        let m: u32 = s
            .parse()
            .map_err(|_| Error::InvalidGrid(format!("bad partial-sum selector `{s}`")))?;
        if m < 1 {
            return Err(Error::SeriesIndex);
        }
        Ok(PartialSelection::Terms(m))
    }
}

/// A fully specified run: structure, packet, and numeric settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Directory name of the run; free text, nonempty.
    pub label: String,
    pub region: ScatterRegion,
    pub packet: PacketSpec,
    /// Time samples across the synthesis grid.
    pub n_time: usize,
    /// Half-span of the time grid in units of `tau`.
    pub span_sigmas: f64,
    /// Series truncation for full-sum cross-checks.
    pub series_terms: u32,
    /// Constituent indices synthesized by decomposition runs.
    pub constituents: Vec<u32>,
    /// Partial sums synthesized by reshaping runs.
    pub partials: Vec<PartialSelection>,
    /// Finite-difference step for delay extraction.
    pub diff_step: f64,
}

impl Scenario {
    pub fn new(label: impl Into<String>, region: ScatterRegion, packet: PacketSpec) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidGrid("scenario label must be nonempty".into()));
        }
        if label.contains(['/', '\\']) || label == "." || label == ".." {
            return Err(Error::InvalidGrid(format!(
                "scenario label `{label}` is not a plain directory name"
            )));
        }
        Ok(Self {
            label,
            region,
            packet,
            n_time: 4096,
            span_sigmas: 6.0,
            series_terms: 100,
            constituents: vec![1, 2, 3],
            partials: vec![
                PartialSelection::Terms(1),
                PartialSelection::Terms(2),
                PartialSelection::Terms(3),
                PartialSelection::Full,
            ],
            diff_step: default_diff_step(packet.omega0, packet.tau),
        })
    }

    /// The shipped shallow-well scenario: carrier at `0.01 v0`, thickness
    /// `3.4 / k'0`, packet width `80` characteristic time units. Its
    /// transmitted packet peaks at a negative time.
    pub fn reference_well() -> Self {
        let omega0: f64 = 0.01;
        let kp0 = (2.0 * (omega0 + 1.0)).sqrt();
        let k0 = (2.0 * omega0).sqrt();
        let region = ScatterRegion::well(1.0, 3.4 / kp0).expect("static parameters");
        let tau = 80.0 / (k0 * kp0);
        let packet = PacketSpec::new(omega0, tau).expect("static parameters");
        Self::new("well-reference", region, packet).expect("static parameters")
    }

    /// The shipped barrier scenario at the symmetric point `k0 = kappa0`
    /// (carrier at half the barrier height), thickness `1 / kappa0`.
    pub fn symmetric_barrier() -> Self {
        let region = ScatterRegion::barrier(1.0, 1.0).expect("static parameters");
        let packet = PacketSpec::new(0.5, 80.0).expect("static parameters");
        Self::new("barrier-symmetric", region, packet).expect("static parameters")
    }

    /// `a / (v_g tau)`: the shape-preservation ratio. Absent for an
    /// evanescent barrier carrier.
    pub fn condition_ratio(&self) -> Option<f64> {
        let scales = characteristic_scales(self.packet.omega0, &self.region).ok()?;
        scales
            .group_velocity
            .map(|v_g| self.region.a / (v_g * self.packet.tau))
    }

    /// Time grid centered on the expected delay.
    pub fn times(&self, center: f64) -> Vec<f64> {
        time_grid(center, self.packet.tau, self.span_sigmas, self.n_time)
    }

    /// Rebuilds the scenario a manifest was produced from.
    pub fn from_manifest(manifest: &RunManifest) -> Result<Self> {
        let s = &manifest.scenario;
        let n = &manifest.numerics;
        let region = ScatterRegion::new(s.kind, s.v0, s.a, s.mu, s.hbar)?;
        let packet = PacketSpec::with_sampling(s.omega0, s.tau, n.window_sigmas, n.n_omega)?;
        let mut scenario = Scenario::new(s.label.clone(), region, packet)?;
        scenario.n_time = n.n_time;
        scenario.span_sigmas = n.span_sigmas;
        scenario.series_terms = n.series_terms;
        scenario.constituents = n.constituents.clone();
        scenario.partials = n
            .partials
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_>>()?;
        scenario.diff_step = n.diff_step;
        Ok(scenario)
    }
}

/// Scenario fields echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub label: String,
    pub kind: PotentialKind,
    pub v0: f64,
    pub a: f64,
    pub mu: f64,
    pub hbar: f64,
    pub omega0: f64,
    pub tau: f64,
}

/// Numeric settings echoed into the manifest; enough to regenerate the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSettings {
    pub n_omega: usize,
    pub window_sigmas: f64,
    pub n_time: usize,
    pub span_sigmas: f64,
    pub series_terms: u32,
    pub constituents: Vec<u32>,
    pub partials: Vec<String>,
    pub diff_step: f64,
    /// Center of the synthesis time grid (the expected delay).
    pub time_center: f64,
    /// Thickness list of a saturation sweep, when the run is one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub thicknesses: Option<Vec<f64>>,
    /// Thickness multipliers of a condition study, when the run is one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub multipliers: Option<Vec<f64>>,
}

/// Scales derived from the scenario, recorded for the reader and re-checked
/// on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub k0: f64,
    pub k_inside0_re: f64,
    pub k_inside0_im: f64,
    pub group_velocity: Option<f64>,
    pub transit_time: Option<f64>,
    pub tau_unit: f64,
    pub condition_ratio: Option<f64>,
}

/// One persisted dataset with its content digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the run directory.
    pub path: String,
    /// SHA-256 of the file bytes, lowercase hex.
    pub sha256: String,
}

/// Everything a reader needs to interpret or regenerate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Which runner produced the directory.
    pub run: String,
    pub format: DataFormat,
    pub scenario: ScenarioEcho,
    pub numerics: NumericSettings,
    pub derived: DerivedScales,
    /// Relative spectral amplitude discarded below the lower window edge.
    pub discarded_spectral_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delay: Option<DelayReport>,
    /// Scalar results keyed by name (peak times, fidelities, limits).
    pub results: BTreeMap<String, f64>,
    /// Numeric-quality problems encountered; empty on a clean run.
    pub quality_flags: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Checks that every listed output exists under `dir` and matches its
    /// digest, and that the recorded condition ratio is consistent with the
    /// recorded scales.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let path = dir.join(&out.path);
            let bytes = fs::read(&path)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
            let digest = sha256_hex(&bytes);
            if digest != out.sha256 {
                return Err(Error::Manifest(format!(
                    "digest mismatch for {}: manifest {} vs file {digest}",
                    out.path, out.sha256
                )));
            }
        }
        if let (Some(ratio), Some(v_g)) = (self.derived.condition_ratio, self.derived.group_velocity) {
            let recomputed = self.scenario.a / (v_g * self.scenario.tau);
            if (recomputed - ratio).abs() > 1e-12 * ratio.abs().max(1e-300) {
                return Err(Error::Manifest(format!(
                    "condition ratio {ratio} inconsistent with recomputed {recomputed}"
                )));
            }
        }
        Ok(())
    }
}

/// A finished run: its directory and manifest.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// `true` when no numeric-quality flags were raised.
    pub fn is_clean(&self) -> bool {
        self.manifest.quality_flags.is_empty()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Serialize)]
struct JsonTable<'a> {
    meta: &'a BTreeMap<String, String>,
    columns: &'a [&'a str],
    rows: &'a [Vec<f64>],
}

/// Accumulates datasets and manifest fields for one run directory.
struct RunBuilder<'a> {
    scenario: &'a Scenario,
    run: &'static str,
    dir: PathBuf,
    format: DataFormat,
    comments: Vec<(String, String)>,
    results: BTreeMap<String, f64>,
    flags: Vec<String>,
    outputs: Vec<OutputFile>,
    delay: Option<DelayReport>,
    thicknesses: Option<Vec<f64>>,
    multipliers: Option<Vec<f64>>,
}

impl<'a> RunBuilder<'a> {
    fn create(
        scenario: &'a Scenario,
        run: &'static str,
        out_root: &Path,
        format: DataFormat,
    ) -> Result<Self> {
        let dir = out_root.join(&scenario.label);
        fs::create_dir_all(&dir)?;
        let region = &scenario.region;
        let packet = &scenario.packet;
        let comments = vec![
            ("kind".into(), region.kind.to_string()),
            ("v0".into(), f64_repr(region.v0)),
            ("a".into(), f64_repr(region.a)),
            ("mu".into(), f64_repr(region.mu)),
            ("hbar".into(), f64_repr(region.hbar)),
            ("omega0".into(), f64_repr(packet.omega0)),
            ("tau".into(), f64_repr(packet.tau)),
            ("window_sigmas".into(), f64_repr(packet.window_sigmas)),
            ("n_omega".into(), packet.n_omega.to_string()),
            (
                "discarded_spectral_weight".into(),
                f64_repr(packet.discarded_weight()),
            ),
        ];
        Ok(Self {
            scenario,
            run,
            dir,
            format,
            comments,
            results: BTreeMap::new(),
            flags: Vec::new(),
            outputs: Vec::new(),
            delay: None,
            thicknesses: None,
            multipliers: None,
        })
    }

    /// Delay report at the scenario carrier, computed once per run.
    fn delay(&mut self) -> Result<DelayReport> {
        if self.delay.is_none() {
            let report = group_delay(
                self.scenario.packet.omega0,
                &self.scenario.region,
                self.scenario.diff_step,
            )?;
            if !report.step_converged() {
                self.flags.push(format!(
                    "differentiation step {} fails the step-halving check (relative change {:.3e})",
                    report.step, report.richardson_rel
                ));
            }
            self.delay = Some(report);
        }
        Ok(self.delay.clone().expect("just set"))
    }

    fn record(&mut self, key: &str, value: f64) {
        self.results.insert(key.to_string(), value);
    }

    fn flag(&mut self, message: impl Into<String>) {
        self.flags.push(message.into());
    }

    /// Peak time, converted to a quality flag instead of an error when the
    /// peak sits on the grid boundary.
    fn peak_or_flag(&mut self, name: &str, field: &FieldSamples) -> Option<f64> {
        match peak_time(field) {
            Ok(t) => Some(t),
            Err(Error::BoundaryPeak { index }) => {
                self.flag(format!(
                    "{name}: envelope peak on the time-grid boundary (index {index}); widen the grid"
                ));
                None
            }
            Err(e) => {
                self.flag(format!("{name}: peak extraction failed: {e}"));
                None
            }
        }
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_field(&mut self, stem: &str, field: &FieldSamples) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        let bytes = match self.format {
            DataFormat::Csv => {
                let mut buf = Vec::new();
                field.write_csv(&self.comments, &mut buf)?;
                buf
            }
            DataFormat::Json => {
                let mut meta: BTreeMap<String, String> =
                    self.comments.iter().cloned().collect();
                meta.insert("label".into(), field.label.to_string());
                let rows: Vec<Vec<f64>> = field
                    .times
                    .iter()
                    .zip(&field.values)
                    .map(|(t, v)| vec![*t, v.re, v.im, v.norm()])
                    .collect();
                let table = JsonTable {
                    meta: &meta,
                    columns: &["t", "re_psi", "im_psi", "abs_psi"],
                    rows: &rows,
                };
                let mut buf = serde_json::to_vec_pretty(&table)
                    .map_err(|e| Error::Manifest(e.to_string()))?;
                buf.push(b'\n');
                buf
            }
        };
        self.write_bytes(&name, &bytes)
    }

    fn write_coefficient_table(&mut self, stem: &str, table: &CoefficientTable) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        let bytes = match self.format {
            DataFormat::Csv => {
                let mut buf = Vec::new();
                table.write_csv(&mut buf)?;
                buf
            }
            DataFormat::Json => {
                let meta: BTreeMap<String, String> = self.comments.iter().cloned().collect();
                let rows: Vec<Vec<f64>> = (0..table.len())
                    .map(|i| {
                        vec![
                            table.omegas()[i],
                            table.values()[i].re,
                            table.values()[i].im,
                            table.magnitude()[i],
                            table.phase_unwrapped()[i],
                        ]
                    })
                    .collect();
                let table = JsonTable {
                    meta: &meta,
                    columns: &["omega", "re_T", "im_T", "abs_T", "phase_unwrapped"],
                    rows: &rows,
                };
                let mut buf = serde_json::to_vec_pretty(&table)
                    .map_err(|e| Error::Manifest(e.to_string()))?;
                buf.push(b'\n');
                buf
            }
        };
        self.write_bytes(&name, &bytes)
    }

    fn write_rows(&mut self, stem: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        let bytes = match self.format {
            DataFormat::Csv => {
                let mut buf = Vec::new();
                for (key, value) in &self.comments {
                    use std::io::Write as _;
                    writeln!(buf, "# {key} = {value}")?;
                }
                {
                    use std::io::Write as _;
                    writeln!(buf, "{}", columns.join(","))?;
                    for row in rows {
                        let cells: Vec<String> = row.iter().map(|v| f64_repr(*v)).collect();
                        writeln!(buf, "{}", cells.join(","))?;
                    }
                }
                buf
            }
            DataFormat::Json => {
                let meta: BTreeMap<String, String> = self.comments.iter().cloned().collect();
                let table = JsonTable {
                    meta: &meta,
                    columns,
                    rows,
                };
                let mut buf = serde_json::to_vec_pretty(&table)
                    .map_err(|e| Error::Manifest(e.to_string()))?;
                buf.push(b'\n');
                buf
            }
        };
        self.write_bytes(&name, &bytes)
    }

    fn finish(mut self, time_center: f64) -> Result<RunOutcome> {
        let scenario = self.scenario;
        let region = &scenario.region;
        let packet = &scenario.packet;

        // Built-in oracle cross-check at the carrier: the truncated series
        // must sit within its analytic tail bound of the closed form.
        let truncated = series_partial_sum(scenario.series_terms, packet.omega0, region)?;
        let closed = transmission_closed(packet.omega0, region)?;
        let bound = series_tail_bound(scenario.series_terms, packet.omega0, region)?;
        let residual = (closed - truncated).norm();
        self.record("series_tail_bound_at_carrier", bound);
        self.record("series_vs_closed_at_carrier", residual);
        if residual > bound + 1e-13 {
            self.flag(format!(
                "series/closed-form cross-check failed at the carrier: residual {residual} exceeds bound {bound}"
            ));
        }

        let k0 = outside_wavenumber(packet.omega0, region)?;
        let ki = inside_wavenumber(packet.omega0, region)?;
        let scales = characteristic_scales(packet.omega0, region)?;
        let manifest = RunManifest {
            run: self.run.to_string(),
            format: self.format,
            scenario: ScenarioEcho {
                label: scenario.label.clone(),
                kind: region.kind,
                v0: region.v0,
                a: region.a,
                mu: region.mu,
                hbar: region.hbar,
                omega0: packet.omega0,
                tau: packet.tau,
            },
            numerics: NumericSettings {
                n_omega: packet.n_omega,
                window_sigmas: packet.window_sigmas,
                n_time: scenario.n_time,
                span_sigmas: scenario.span_sigmas,
                series_terms: scenario.series_terms,
                constituents: scenario.constituents.clone(),
                partials: scenario.partials.iter().map(|p| p.to_string()).collect(),
                diff_step: scenario.diff_step,
                time_center,
                thicknesses: self.thicknesses.take(),
                multipliers: self.multipliers.take(),
            },
            derived: DerivedScales {
                k0,
                k_inside0_re: ki.re,
                k_inside0_im: ki.im,
                group_velocity: scales.group_velocity,
                transit_time: scales.transit_time,
                tau_unit: scales.tau_unit,
                condition_ratio: scenario.condition_ratio(),
            },
            discarded_spectral_weight: packet.discarded_weight(),
            delay: self.delay.take(),
            results: std::mem::take(&mut self.results),
            quality_flags: std::mem::take(&mut self.flags),
            outputs: std::mem::take(&mut self.outputs),
        };
        let mut bytes =
            serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), &bytes)?;
        Ok(RunOutcome {
            dir: self.dir,
            manifest,
        })
    }
}

fn require_well(scenario: &Scenario, what: &str) -> Result<()> {
    if scenario.region.kind != PotentialKind::Well {
        return Err(Error::InvalidRegion(format!(
            "{what} requires a well scenario, got a barrier"
        )));
    }
    Ok(())
}

/// Transmitted packet alongside its leading constituents.
///
/// Writes the full packet and one dataset per requested constituent, records
/// every peak time, and checks that successive constituent peaks are spaced
/// by twice the single-pass transit time.
fn decomposition_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    require_well(scenario, "the decomposition run")?;
    let mut report = ctx.delay()?;
    let center = report.tau_phi;
    let times = scenario.times(center);

    let transmitted = transmitted_packet(&scenario.packet, &scenario.region, &times)?;
    let peak = ctx.peak_or_flag("transmitted", &transmitted);
    ctx.write_field("transmitted", &transmitted)?;
    if let Some(peak) = peak {
        ctx.record("peak_transmitted", peak);
        report.peak_delay = Some(peak);
        ctx.delay = Some(report.clone());
        let scales = characteristic_scales(scenario.packet.omega0, &scenario.region)?;
        let tolerance = (0.05 * report.tau_phi.abs()).max(0.5 * scales.tau_unit);
        if (peak - report.tau_phi).abs() > tolerance {
            ctx.flag(format!(
                "peak-tracked delay {peak} disagrees with phase derivative {} beyond {tolerance}",
                report.tau_phi
            ));
        }
    }

    let t1 = characteristic_scales(scenario.packet.omega0, &scenario.region)?
        .transit_time
        .expect("well carrier propagates");
    let mut previous: Option<(u32, f64)> = None;
    for &j in &scenario.constituents {
        let field = constituent_packet(j, &scenario.packet, &scenario.region, &times)?;
        let peak = ctx.peak_or_flag(&format!("constituent_{j}"), &field);
        ctx.write_field(&format!("constituent_{j}"), &field)?;
        if let Some(peak) = peak {
            ctx.record(&format!("peak_constituent_{j}"), peak);
            if let Some((pj, pt)) = previous {
                let expected = 2.0 * (j - pj) as f64 * t1;
                let spacing = peak - pt;
                if (spacing - expected).abs() > 0.01 * expected {
                    ctx.flag(format!(
                        "constituent {pj}->{j} peak spacing {spacing} deviates from {expected} by more than 1%"
                    ));
                }
            }
            previous = Some((j, peak));
        }
    }
    ctx.record("transit_time", t1);
    Ok(center)
}

/// Normalized incident profile against the normalized transmitted profile,
/// with their envelope fidelity.
fn profile_comparison_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    require_well(scenario, "the profile comparison run")?;
    let report = ctx.delay()?;
    let center = report.tau_phi;
    let times = scenario.times(center);

    let incident = incident_packet(&scenario.packet, &times)?;
    let transmitted = transmitted_packet(&scenario.packet, &scenario.region, &times)?;
    let score = fidelity(&incident, &transmitted)?;
    ctx.record("fidelity", score);
    if score < SHAPE_FIDELITY_THRESHOLD {
        ctx.flag(format!(
            "envelope fidelity {score} below the shape-preservation threshold {SHAPE_FIDELITY_THRESHOLD}"
        ));
    }
    ctx.write_field("incident_normalized", &incident.normalized()?)?;
    ctx.write_field("transmitted_normalized", &transmitted.normalized()?)?;
    Ok(center)
}

/// Partial reshaping sums and their peak-time convergence toward the full
/// packet.
fn reshaping_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    require_well(scenario, "the reshaping run")?;
    let report = ctx.delay()?;
    let center = report.tau_phi;
    let times = scenario.times(center);

    let full = transmitted_packet(&scenario.packet, &scenario.region, &times)?;
    let full_peak = ctx.peak_or_flag("full sum", &full);
    if let Some(p) = full_peak {
        ctx.record("peak_full", p);
    }

    for selection in &scenario.partials {
        match selection {
            PartialSelection::Terms(m) => {
                let field = partial_packet(*m, &scenario.packet, &scenario.region, &times)?;
                if let Some(p) = ctx.peak_or_flag(&format!("partial_{m}"), &field) {
                    ctx.record(&format!("peak_partial_{m}"), p);
                }
                ctx.write_field(&format!("partial_{m}"), &field)?;
            }
            PartialSelection::Full => ctx.write_field("partial_full", &full)?,
        }
    }

    // Convergence table: peak time per truncation order.
    let mut rows = Vec::new();
    let mut peak_at_convergence_order = None;
    for m in 1..=RESHAPING_CONVERGENCE_TERMS {
        let field = partial_packet(m, &scenario.packet, &scenario.region, &times)?;
        if let Some(p) = ctx.peak_or_flag(&format!("convergence partial_{m}"), &field) {
            rows.push(vec![m as f64, p]);
            if m == RESHAPING_CONVERGENCE_TERMS {
                peak_at_convergence_order = Some(p);
            }
        }
    }
    ctx.write_rows("peak_convergence", &["m", "peak_time"], &rows)?;

    if let (Some(pm), Some(pf)) = (peak_at_convergence_order, full_peak) {
        let gap = (pm - pf).abs();
        ctx.record("peak_gap_at_convergence_order", gap);
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if gap >= dt {
            ctx.flag(format!(
                "partial-sum peak at m = {RESHAPING_CONVERGENCE_TERMS} still {gap} away from the full-sum peak (grid step {dt})"
            ));
        }
    }
    Ok(center)
}

/// Group delay against barrier thickness, with the analytic saturation limit.
fn hartman_sweep_into(ctx: &mut RunBuilder<'_>, thicknesses: &[f64]) -> Result<f64> {
    let scenario = ctx.scenario;
    if !scenario.region.is_evanescent_at(scenario.packet.omega0) {
        return Err(Error::InvalidRegion(
            "the saturation sweep requires a barrier with the carrier below the top".into(),
        ));
    }
    if thicknesses.is_empty() {
        return Err(Error::InvalidGrid("thickness list is empty".into()));
    }
    let omega0 = scenario.packet.omega0;
    let kappa0 = inside_wavenumber(omega0, &scenario.region)?.im;
    let base = group_delay(omega0, &scenario.region, scenario.diff_step)?;
    let limit = base.hartman_limit.expect("evanescent carrier");

    let mut rows = Vec::new();
    let mut max_phase_dev: f64 = 0.0;
    let reference_phases: Vec<f64> = scenario
        .constituents
        .iter()
        .map(|&j| {
            series_term(j, omega0, &scenario.region).map(|t| t.value.arg())
        })
        .collect::<Result<_>>()?;
    for &a in thicknesses {
        let region = scenario.region.with_thickness(a)?;
        let report = group_delay(omega0, &region, scenario.diff_step)?;
        if !report.step_converged() {
            ctx.flag(format!(
                "step-halving check fails at thickness {a} (relative change {:.3e})",
                report.richardson_rel
            ));
        }
        rows.push(vec![a, kappa0 * a, report.tau_phi, limit]);
        // Constituent phases must not move with thickness.
        for (&j, &reference) in scenario.constituents.iter().zip(&reference_phases) {
            let phase = series_term(j, omega0, &region)?.value.arg();
            let diff = (phase - reference).rem_euclid(2.0 * std::f64::consts::PI);
            let dev = diff.min(2.0 * std::f64::consts::PI - diff);
            max_phase_dev = max_phase_dev.max(dev);
        }
    }
    ctx.write_rows("hartman", &["a", "kappa0_a", "tau_phi", "hartman_limit"], &rows)?;
    ctx.record("hartman_limit", limit);
    ctx.record("max_constituent_phase_deviation", max_phase_dev);
    if max_phase_dev > 1e-12 {
        ctx.flag(format!(
            "constituent phases drift {max_phase_dev} rad across the thickness sweep"
        ));
    }
    ctx.delay = Some(base);
    ctx.thicknesses = Some(thicknesses.to_vec());
    Ok(0.0)
}

/// Shape degradation as the thickness grows toward `a = v_g tau`.
fn condition_study_into(ctx: &mut RunBuilder<'_>, multipliers: &[f64]) -> Result<f64> {
    let scenario = ctx.scenario;
    require_well(scenario, "the condition study")?;
    if multipliers.is_empty() {
        return Err(Error::InvalidGrid("multiplier list is empty".into()));
    }
    if multipliers.iter().any(|m| !m.is_finite() || *m <= 0.0) {
        return Err(Error::InvalidGrid(
            "thickness multipliers must be positive and finite".into(),
        ));
    }
    let mut ordered = multipliers.to_vec();
    ordered.sort_by(|x, y| x.partial_cmp(y).expect("finite multipliers"));

    let mut rows = Vec::new();
    for &m in &ordered {
        let region = scenario.region.with_thickness(scenario.region.a * m)?;
        let scales = characteristic_scales(scenario.packet.omega0, &region)?;
        let ratio = region.a / (scales.group_velocity.expect("well") * scenario.packet.tau);
        let report = group_delay(scenario.packet.omega0, &region, scenario.diff_step)?;
        let times = scenario.times(report.tau_phi);
        let incident = incident_packet(&scenario.packet, &times)?;
        let transmitted = transmitted_packet(&scenario.packet, &region, &times)?;
        let score = fidelity(&incident, &transmitted)?;
        let peak_err = match ctx.peak_or_flag(&format!("transmitted at ratio {ratio:.4e}"), &transmitted)
        {
            Some(peak) => (peak - report.tau_phi).abs(),
            None => f64::NAN,
        };
        if score < SHAPE_FIDELITY_THRESHOLD {
            ctx.flag(format!(
                "group delay not applicable at condition ratio {ratio:.6e}: fidelity {score:.6}, peak offset {peak_err:.6}"
            ));
        }
        rows.push(vec![ratio, region.a, score, peak_err]);
    }
    ctx.write_rows(
        "condition_study",
        &["condition_ratio", "a", "fidelity", "abs_peak_minus_tau_phi"],
        &rows,
    )?;
    ctx.delay()?;
    ctx.multipliers = Some(ordered);
    Ok(0.0)
}

/// Sampled transmission coefficient over the packet window.
fn coefficient_table_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    let grid = scenario.packet.table_grid(&scenario.region);
    let table = CoefficientTable::sample(&scenario.region, &grid)?;
    ctx.write_coefficient_table("coefficient", &table)?;
    ctx.record("n_samples", table.len() as f64);
    ctx.delay()?;
    Ok(0.0)
}

/// Incident and transmitted packets with the delay report.
fn packet_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    let mut report = ctx.delay()?;
    let center = report.tau_phi;
    let times = scenario.times(center);
    let incident = incident_packet(&scenario.packet, &times)?;
    let transmitted = transmitted_packet(&scenario.packet, &scenario.region, &times)?;
    if let Some(p) = ctx.peak_or_flag("incident", &incident) {
        ctx.record("peak_incident", p);
    }
    if let Some(p) = ctx.peak_or_flag("transmitted", &transmitted) {
        ctx.record("peak_transmitted", p);
        report.peak_delay = Some(p);
        ctx.delay = Some(report);
    }
    ctx.write_field("incident", &incident)?;
    ctx.write_field("transmitted", &transmitted)?;
    Ok(center)
}

/// Constituent packets only.
fn constituents_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    let report = ctx.delay()?;
    let center = match scenario.region.kind {
        PotentialKind::Well => report.tau_phi,
        PotentialKind::Barrier => report.tau_phi.max(0.0),
    };
    let times = scenario.times(center);
    for &j in &scenario.constituents {
        let field = constituent_packet(j, &scenario.packet, &scenario.region, &times)?;
        if let Some(p) = ctx.peak_or_flag(&format!("constituent_{j}"), &field) {
            ctx.record(&format!("peak_constituent_{j}"), p);
        }
        ctx.write_field(&format!("constituent_{j}"), &field)?;
    }
    Ok(center)
}

/// Partial sums as selected by the scenario.
fn partials_into(ctx: &mut RunBuilder<'_>) -> Result<f64> {
    let scenario = ctx.scenario;
    let report = ctx.delay()?;
    let center = report.tau_phi;
    let times = scenario.times(center);
    for selection in &scenario.partials {
        match selection {
            PartialSelection::Terms(m) => {
                let field = partial_packet(*m, &scenario.packet, &scenario.region, &times)?;
                if let Some(p) = ctx.peak_or_flag(&format!("partial_{m}"), &field) {
                    ctx.record(&format!("peak_partial_{m}"), p);
                }
                ctx.write_field(&format!("partial_{m}"), &field)?;
            }
            PartialSelection::Full => {
                let field = transmitted_packet(&scenario.packet, &scenario.region, &times)?;
                if let Some(p) = ctx.peak_or_flag("partial_full", &field) {
                    ctx.record("peak_full", p);
                }
                ctx.write_field("partial_full", &field)?;
            }
        }
    }
    Ok(center)
}

macro_rules! runner {
    ($(#[$doc:meta])* $name:ident, $tag:literal, $body:ident) => {
        $(#[$doc])*
        pub fn $name(
            scenario: &Scenario,
            out_root: &Path,
            format: DataFormat,
        ) -> Result<RunOutcome> {
            let mut ctx = RunBuilder::create(scenario, $tag, out_root, format)?;
            let center = $body(&mut ctx)?;
            ctx.finish(center)
        }
    };
}

runner!(
    /// Writes the transmitted packet and its leading constituents.
    run_decomposition,
    "decomposition",
    decomposition_into
);
runner!(
    /// Writes normalized incident/transmitted profiles and their fidelity.
    run_profile_comparison,
    "profile-comparison",
    profile_comparison_into
);
runner!(
    /// Writes partial reshaping sums and the peak-convergence table.
    run_reshaping,
    "reshaping",
    reshaping_into
);
runner!(
    /// Writes the sampled transmission coefficient.
    run_coefficient_table,
    "coefficient-table",
    coefficient_table_into
);
runner!(
    /// Writes incident and transmitted packets.
    run_packet,
    "packet",
    packet_into
);
runner!(
    /// Writes the selected constituents.
    run_constituents,
    "constituents",
    constituents_into
);
runner!(
    /// Writes the selected partial sums.
    run_partials,
    "partials",
    partials_into
);

/// All three well datasets (decomposition, profile comparison, reshaping)
/// in one directory under one manifest.
pub fn run_figures(scenario: &Scenario, out_root: &Path, format: DataFormat) -> Result<RunOutcome> {
    let mut ctx = RunBuilder::create(scenario, "figures", out_root, format)?;
    let center = decomposition_into(&mut ctx)?;
    profile_comparison_into(&mut ctx)?;
    reshaping_into(&mut ctx)?;
    ctx.finish(center)
}

/// Group delay across barrier thicknesses.
pub fn run_hartman_sweep(
    scenario: &Scenario,
    thicknesses: &[f64],
    out_root: &Path,
    format: DataFormat,
) -> Result<RunOutcome> {
    let mut ctx = RunBuilder::create(scenario, "hartman-sweep", out_root, format)?;
    let center = hartman_sweep_into(&mut ctx, thicknesses)?;
    ctx.finish(center)
}

/// Shape degradation across thickness multipliers.
pub fn run_condition_study(
    scenario: &Scenario,
    multipliers: &[f64],
    out_root: &Path,
    format: DataFormat,
) -> Result<RunOutcome> {
    let mut ctx = RunBuilder::create(scenario, "condition-study", out_root, format)?;
    let center = condition_study_into(&mut ctx, multipliers)?;
    ctx.finish(center)
}

/// Default saturation-sweep grid: `n` log-spaced thicknesses covering
/// `kappa0 a` from `lo` to `hi`.
pub fn log_spaced_thicknesses(
    scenario: &Scenario,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !lo.is_finite() || lo <= 0.0 || !hi.is_finite() || hi <= lo || n < 2 {
        return Err(Error::InvalidGrid(format!(
            "need 0 < lo < hi and n >= 2, got lo = {lo}, hi = {hi}, n = {n}"
        )));
    }
    let kappa0 = inside_wavenumber(scenario.packet.omega0, &scenario.region)?.im;
    if kappa0 <= 0.0 {
        return Err(Error::InvalidRegion(
            "thickness grid in kappa0 units needs an evanescent carrier".into(),
        ));
    }
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    Ok((0..n)
        .map(|i| (log_lo + (log_hi - log_lo) * i as f64 / (n - 1) as f64).exp() / kappa0)
        .collect())
}

/// Default condition-study multipliers: the base thickness plus steps toward
/// and slightly past `a = v_g tau`.
pub fn default_condition_multipliers(scenario: &Scenario) -> Result<Vec<f64>> {
    let base = scenario.condition_ratio().ok_or_else(|| {
        Error::InvalidRegion("condition ratio needs a propagating carrier".into())
    })?;
    let targets = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    let mut out = vec![1.0];
    for t in targets {
        if t > base {
            out.push(t / base);
        }
    }
    Ok(out)
}

/// Regenerates a run from its manifest alone.
pub fn rerun(manifest: &RunManifest, out_root: &Path) -> Result<RunOutcome> {
    let scenario = Scenario::from_manifest(manifest)?;
    let format = manifest.format;
    match manifest.run.as_str() {
        "decomposition" => run_decomposition(&scenario, out_root, format),
        "profile-comparison" => run_profile_comparison(&scenario, out_root, format),
        "reshaping" => run_reshaping(&scenario, out_root, format),
        "figures" => run_figures(&scenario, out_root, format),
        "coefficient-table" => run_coefficient_table(&scenario, out_root, format),
        "packet" => run_packet(&scenario, out_root, format),
        "constituents" => run_constituents(&scenario, out_root, format),
        "partials" => run_partials(&scenario, out_root, format),
        "hartman-sweep" => {
            let thicknesses = manifest.numerics.thicknesses.clone().ok_or_else(|| {
                Error::Manifest("saturation-sweep manifest lacks its thickness list".into())
            })?;
            run_hartman_sweep(&scenario, &thicknesses, out_root, format)
        }
        "condition-study" => {
            let multipliers = manifest.numerics.multipliers.clone().ok_or_else(|| {
                Error::Manifest("condition-study manifest lacks its multiplier list".into())
            })?;
            run_condition_study(&scenario, &multipliers, out_root, format)
        }
        other => Err(Error::Manifest(format!("unknown run kind `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    /// Reference well with reduced grids; keeps unit runs fast while the
    /// acceptance suite exercises the full-resolution defaults.
    fn quick_well() -> Scenario {
        let mut scenario = Scenario::reference_well();
        scenario.packet = PacketSpec::with_sampling(
            scenario.packet.omega0,
            scenario.packet.tau,
            scenario.packet.window_sigmas,
            513,
        )
        .unwrap();
        scenario.n_time = 512;
        scenario
    }

    #[test]
    fn scenario_labels_are_validated() {
        let region = ScatterRegion::well(1.0, 1.0).unwrap();
        let packet = PacketSpec::new(0.5, 50.0).unwrap();
        assert!(Scenario::new("", region, packet).is_err());
        assert!(Scenario::new("a/b", region, packet).is_err());
        assert!(Scenario::new("fine-label", region, packet).is_ok());
    }

    #[test]
    fn partial_selection_round_trips() {
        for text in ["1", "17", "all"] {
            let sel: PartialSelection = text.parse().unwrap();
            assert_eq!(sel.to_string(), text);
        }
        assert!("x".parse::<PartialSelection>().is_err());
        assert!("0".parse::<PartialSelection>().is_err());
    }

    #[test]
    fn decomposition_writes_datasets_and_manifest() {
        let tmp = TempDir::new().unwrap();
        let scenario = quick_well();
        let outcome = run_decomposition(&scenario, tmp.path(), DataFormat::Csv).unwrap();
        assert!(outcome.is_clean(), "flags: {:?}", outcome.manifest.quality_flags);
        assert_eq!(outcome.manifest.outputs.len(), 4);
        outcome.manifest.verify(&outcome.dir).unwrap();

        // Negative transmitted peak, positive constituent peaks.
        let peak = outcome.manifest.results["peak_transmitted"];
        assert!(peak < 0.0, "peak = {peak}");
        for j in 1..=3 {
            assert!(outcome.manifest.results[&format!("peak_constituent_{j}")] > 0.0);
        }

        // Every manifest carries the carrier-level series cross-check.
        let residual = outcome.manifest.results["series_vs_closed_at_carrier"];
        let bound = outcome.manifest.results["series_tail_bound_at_carrier"];
        assert!(residual <= bound + 1e-13, "residual {residual} vs bound {bound}");
        assert!(bound < 1e-12, "bound at the carrier should be tiny, got {bound}");
        let loaded = RunManifest::load(&outcome.dir.join("manifest.json")).unwrap();
        assert_eq!(loaded, outcome.manifest);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let tmp_a = TempDir::new().unwrap();
        let tmp_b = TempDir::new().unwrap();
        let scenario = quick_well();
        let first = run_decomposition(&scenario, tmp_a.path(), DataFormat::Csv).unwrap();
        let second = rerun(&first.manifest, tmp_b.path()).unwrap();
        assert_eq!(first.manifest, second.manifest);
        for out in &first.manifest.outputs {
            let a = fs::read(first.dir.join(&out.path)).unwrap();
            let b = fs::read(second.dir.join(&out.path)).unwrap();
            assert_eq!(a, b, "{} differs between reruns", out.path);
        }
    }

    #[test]
    fn profile_comparison_records_fidelity() {
        let tmp = TempDir::new().unwrap();
        let scenario = quick_well();
        let outcome = run_profile_comparison(&scenario, tmp.path(), DataFormat::Csv).unwrap();
        let fidelity = outcome.manifest.results["fidelity"];
        assert!(fidelity >= SHAPE_FIDELITY_THRESHOLD, "fidelity = {fidelity}");
        assert!(outcome.is_clean());
        outcome.manifest.verify(&outcome.dir).unwrap();
    }

    #[test]
    fn figures_run_bundles_everything_under_one_manifest() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = quick_well();
        scenario.n_time = 256;
        let outcome = run_figures(&scenario, tmp.path(), DataFormat::Csv).unwrap();
        let names: Vec<&str> = outcome
            .manifest
            .outputs
            .iter()
            .map(|o| o.path.as_str())
            .collect();
        for expected in [
            "transmitted.csv",
            "constituent_1.csv",
            "incident_normalized.csv",
            "transmitted_normalized.csv",
            "partial_1.csv",
            "partial_full.csv",
            "peak_convergence.csv",
        ] {
            assert!(names.contains(&expected), "missing {expected} in {names:?}");
        }
        outcome.manifest.verify(&outcome.dir).unwrap();

        // The bundle regenerates from its manifest alone, digest for digest.
        let tmp2 = TempDir::new().unwrap();
        let again = rerun(&outcome.manifest, tmp2.path()).unwrap();
        assert_eq!(outcome.manifest.outputs, again.manifest.outputs);
    }

    #[test]
    fn scenarios_run_concurrently_into_a_shared_root() {
        // Distinct labels, one output root, parallel execution: each run
        // owns its directory and manifest.
        let tmp = TempDir::new().unwrap();
        let root = tmp.path().to_path_buf();
        let mut well = quick_well();
        well.label = "parallel-well".into();
        well.n_time = 256;
        let barrier = {
            let mut s = Scenario::symmetric_barrier();
            s.label = "parallel-barrier".into();
            s
        };
        let root_a = root.clone();
        let a = std::thread::spawn(move || run_packet(&well, &root_a, DataFormat::Csv).unwrap());
        let root_b = root.clone();
        let b = std::thread::spawn(move || {
            let thicknesses = log_spaced_thicknesses(&barrier, 0.1, 10.0, 8).unwrap();
            run_hartman_sweep(&barrier, &thicknesses, &root_b, DataFormat::Csv).unwrap()
        });
        let outcome_a = a.join().unwrap();
        let outcome_b = b.join().unwrap();
        outcome_a.manifest.verify(&outcome_a.dir).unwrap();
        outcome_b.manifest.verify(&outcome_b.dir).unwrap();
        assert_ne!(outcome_a.dir, outcome_b.dir);
    }

    #[test]
    fn hartman_sweep_covers_thin_and_saturated_regimes() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = Scenario::symmetric_barrier();
        scenario.label = "sweep-test".into();
        let thicknesses = log_spaced_thicknesses(&scenario, 0.1, 10.0, 12).unwrap();
        let outcome =
            run_hartman_sweep(&scenario, &thicknesses, tmp.path(), DataFormat::Csv).unwrap();
        assert!(outcome.is_clean(), "flags: {:?}", outcome.manifest.quality_flags);
        assert_eq!(outcome.manifest.results["hartman_limit"], 2.0);
        assert!(outcome.manifest.results["max_constituent_phase_deviation"] <= 1e-12);
        assert_eq!(
            outcome.manifest.numerics.thicknesses.as_ref().unwrap().len(),
            12
        );
        outcome.manifest.verify(&outcome.dir).unwrap();

        // Regeneration from the manifest alone reproduces the digests.
        let tmp2 = TempDir::new().unwrap();
        let again = rerun(&outcome.manifest, tmp2.path()).unwrap();
        assert_eq!(outcome.manifest.outputs, again.manifest.outputs);
    }

    #[test]
    fn condition_study_flags_the_distorted_regime() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = quick_well();
        scenario.label = "condition-test".into();
        // Vanishing thickness, the base ratio (~0.004), and the
        // shape-breaking point a = v_g tau.
        let ratio = scenario.condition_ratio().unwrap();
        let outcome = run_condition_study(
            &scenario,
            &[1e-3, 1.0, 1.0 / ratio],
            tmp.path(),
            DataFormat::Csv,
        )
        .unwrap();
        assert!(
            !outcome.is_clean(),
            "the ratio = 1 row must be flagged as not shape-preserving"
        );
        assert!(outcome
            .manifest
            .quality_flags
            .iter()
            .any(|f| f.contains("group delay not applicable")));
        outcome.manifest.verify(&outcome.dir).unwrap();

        // Rows are ordered by condition ratio, the vanishing-thickness end
        // is shape-preserving with a vanishing delay, and the ratio = 1 end
        // is not.
        let table = fs::read_to_string(outcome.dir.join("condition_study.csv")).unwrap();
        let rows: Vec<Vec<f64>> = table
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("condition_ratio"))
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
        assert!(rows[0][2] > 0.999, "tiny-thickness fidelity = {}", rows[0][2]);
        assert!(rows[2][2] < 0.9, "ratio-1 fidelity = {}", rows[2][2]);

        // The delay itself shrinks with the structure (proportionally to a
        // at fixed carrier).
        let base = crate::scattering::group_delay(
            scenario.packet.omega0,
            &scenario.region,
            scenario.diff_step,
        )
        .unwrap();
        let thin_region = scenario.region.with_thickness(scenario.region.a * 1e-3).unwrap();
        let thin = crate::scattering::group_delay(
            scenario.packet.omega0,
            &thin_region,
            scenario.diff_step,
        )
        .unwrap();
        assert!(
            thin.tau_phi.abs() < 0.05 * base.tau_phi.abs(),
            "thin-well delay = {} vs base {}",
            thin.tau_phi,
            base.tau_phi
        );
    }

    #[test]
    fn peak_tracking_agrees_with_phase_delay_across_well_scenarios() {
        // Two independent delay definitions: the phase derivative and the
        // synthesized envelope peak. In the shape-preserving regime
        // (condition ratio <= 0.05) they must agree within
        // max(5% |tau_phi|, 0.5 tau_u), whatever the carrier or thickness.
        let cases = [
            (0.05, 1.0, 2.0, 80.0),
            (0.2, 1.0, 1.5, 40.0),
            (0.5, 2.0, 3.0, 60.0),
        ];
        for (omega0, v0, a, tau_units) in cases {
            let region = ScatterRegion::well(v0, a).unwrap();
            let scales = characteristic_scales(omega0, &region).unwrap();
            let tau = tau_units * scales.tau_unit;
            let packet = PacketSpec::with_sampling(omega0, tau, 5.0, 513).unwrap();
            let mut scenario =
                Scenario::new(format!("well-{omega0}"), region, packet).unwrap();
            scenario.n_time = 1024;
            let ratio = scenario.condition_ratio().unwrap();
            assert!(ratio <= 0.05, "case not in the agreement regime: {ratio}");

            let tmp = TempDir::new().unwrap();
            let outcome = run_decomposition(&scenario, tmp.path(), DataFormat::Csv).unwrap();
            let delay = outcome.manifest.delay.as_ref().unwrap();
            let peak = delay.peak_delay.unwrap();
            let tolerance = (0.05 * delay.tau_phi.abs()).max(0.5 * scales.tau_unit);
            assert!(
                (peak - delay.tau_phi).abs() <= tolerance,
                "omega0 = {omega0}: peak {peak} vs tau_phi {} (tolerance {tolerance})",
                delay.tau_phi
            );
            assert!(outcome.is_clean(), "flags: {:?}", outcome.manifest.quality_flags);
        }
    }

    #[test]
    fn json_format_writes_parseable_tables() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = quick_well();
        scenario.n_time = 128;
        let outcome = run_packet(&scenario, tmp.path(), DataFormat::Json).unwrap();
        let path = outcome.dir.join("transmitted.json");
        let value: serde_json::Value =
            serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(value["columns"][0], "t");
        assert_eq!(value["rows"].as_array().unwrap().len(), 128);
        outcome.manifest.verify(&outcome.dir).unwrap();
    }

    #[test]
    fn coefficient_run_samples_the_window() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = quick_well();
        scenario.label = "coef-test".into();
        let outcome = run_coefficient_table(&scenario, tmp.path(), DataFormat::Csv).unwrap();
        assert_eq!(outcome.manifest.results["n_samples"], 513.0);
        let text = fs::read_to_string(outcome.dir.join("coefficient.csv")).unwrap();
        assert!(text.starts_with("omega,re_T,im_T,abs_T,phase_unwrapped\n"));
        assert_eq!(text.lines().count(), 514);
    }

    #[test]
    fn manifest_verification_catches_tampering() {
        let tmp = TempDir::new().unwrap();
        let mut scenario = quick_well();
        scenario.label = "tamper-test".into();
        scenario.n_time = 128;
        let outcome = run_packet(&scenario, tmp.path(), DataFormat::Csv).unwrap();
        let victim = outcome.dir.join(&outcome.manifest.outputs[0].path);
        fs::write(&victim, b"not the data\n").unwrap();
        assert!(matches!(
            outcome.manifest.verify(&outcome.dir),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let tmp = TempDir::new().unwrap();
        let barrier = Scenario::symmetric_barrier();
        assert!(run_decomposition(&barrier, tmp.path(), DataFormat::Csv).is_err());
        let well = quick_well();
        assert!(run_hartman_sweep(&well, &[1.0], tmp.path(), DataFormat::Csv).is_err());
    }
}
