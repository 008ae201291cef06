//! Batch front end: TOML run configuration, CRLB sweeps, feasibility tables
//! and the oracle validation suite.
//!
//! Sweep draw `d` uses stream `d` of the run seed for every sweep point, and
//! geometry draws do not depend on `N_U` or `f_c`, so every point of a sweep
//! sees the same satellites. Work runs on a rayon pool of `jobs` threads and
//! results are collected in input order, so output does not depend on `jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_fim::assemble_channel_fim;
use crate::efim_engine::{block_of, efim_6d_closed, efim_9d_closed, location_fim, Block, OffsetConfig, Scenario};
use crate::error::{Error, Result};
use crate::feasibility::{
    explain, scan, scan_reference, CellKey, FeasibilityReport, Mode, ReferenceRow, ScenarioGrid, Verdict,
};
use crate::linalg::select;
use crate::location_transform::{build_jacobian, nuisance_row, Jacobian};
use crate::oracle::{congruence_fim, numeric_jacobian, schur_loss};
use crate::reduction::{efim_6d_with, efim_9d_with, Condition, InformationFactor};
use crate::scenario::{draw_geometry, random_scenario, stream_rng, GeometryModel, RandomLimits};
use crate::signal_model::SignalSpec;

/// Signal section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Effective baseband bandwidth, Hz.
    pub alpha1: f64,
    /// Baseband-carrier correlation.
    pub alpha2: f64,
    /// SNR per link, dB.
    pub snr_db: f64,
    /// Slot duration, s.
    pub t_slot: f64,
    /// Effective temporal second moment, s^2; `T^2 / 3` when absent.
    pub t2_eff: Option<f64>,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            f_c: 1e9,
            alpha1: 1e6,
            alpha2: 0.0,
            snr_db: -20.0,
            t_slot: 0.01,
            t2_eff: None,
        }
    }
}

impl SignalConfig {
    /// Spec with optional carrier and SNR overrides.
    pub fn spec(&self, f_c: Option<f64>, snr_db: Option<f64>) -> Result<SignalSpec> {
        let mut s = SignalSpec::new(
            f_c.unwrap_or(self.f_c),
            self.alpha1,
            self.alpha2,
            snr_db.unwrap_or(self.snr_db),
            self.t_slot,
        )
        .map_err(cfg_err)?;
        if let Some(t2) = self.t2_eff {
            s.t2_eff = t2;
            s.validate().map_err(cfg_err)?;
        }
        Ok(s)
    }
}

/// Swept axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NU,
    DeltaT,
    FC,
    SnrDb,
}

impl Axis {
    pub fn label(&self) -> &'static str {
        match self {
            Axis::NU => "n_u",
            Axis::DeltaT => "delta_t",
            Axis::FC => "f_c",
            Axis::SnrDb => "snr_db",
        }
    }
}

/// Reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Position RMS bound, m.
    Position,
    /// Orientation RMS bound, rad.
    Orientation,
    /// Velocity RMS bound, m/s.
    Velocity,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Position, Metric::Orientation, Metric::Velocity];

    pub fn block(&self) -> Block {
        match self {
            Metric::Position => Block::Position,
            Metric::Orientation => Block::Orientation,
            Metric::Velocity => Block::Velocity,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::Position => "position",
            Metric::Orientation => "orientation",
            Metric::Velocity => "velocity",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Position => "m",
            Metric::Orientation => "rad",
            Metric::Velocity => "m/s",
        }
    }
}

/// A scalar or a list in the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// A `[[sweep]]` section. List-valued fixed parameters expand into one
/// [`SweepSpec`] per combination; all of them land in one CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub metric: OneOrMany<Metric>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub n_b: usize,
    pub n_k: usize,
    #[serde(default = "default_n_u")]
    pub n_u: OneOrMany<usize>,
    #[serde(default = "default_delta_t")]
    pub delta_t: OneOrMany<f64>,
    /// Defaults to the signal section.
    pub f_c: Option<OneOrMany<f64>>,
    /// Defaults to the signal section.
    pub snr_db: Option<OneOrMany<f64>>,
    #[serde(default = "default_offsets")]
    pub offsets: OneOrMany<OffsetConfig>,
    #[serde(default = "default_sweep_draws")]
    pub draws: usize,
}

fn default_mode() -> Mode {
    Mode::Full
}
fn default_n_u() -> OneOrMany<usize> {
    OneOrMany::One(1)
}
fn default_delta_t() -> OneOrMany<f64> {
    OneOrMany::One(0.025)
}
fn default_offsets() -> OneOrMany<OffsetConfig> {
    OneOrMany::One(OffsetConfig::NONE)
}
fn default_sweep_draws() -> usize {
    1
}

/// One fully specified sweep: an axis and a fixed scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub metric: Metric,
    pub mode: Mode,
    pub n_b: usize,
    pub n_k: usize,
    pub n_u: usize,
    pub delta_t: f64,
    pub f_c: f64,
    pub snr_db: f64,
    pub offsets: OffsetConfig,
    pub draws: usize,
}

impl SweepSpec {
    /// Checks axis values and the fixed scenario.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("sweep '{}': {m}", self.name)));
        if self.values.is_empty() {
            return bad("no axis values".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) || self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("axis values must be finite and strictly increasing".into());
        }
        match self.axis {
            Axis::NU => {
                if self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                    return bad("n_u values must be positive integers".into());
                }
            }
            Axis::DeltaT | Axis::FC => {
                if self.values.iter().any(|v| *v <= 0.0) {
                    return bad(format!("{} values must be positive", self.axis.label()));
                }
            }
            Axis::SnrDb => {}
        }
        if self.n_b == 0 || self.n_k == 0 || self.n_u == 0 || self.draws == 0 {
            return bad("n_b, n_k, n_u and draws must be at least 1".into());
        }
        if !(self.delta_t > 0.0) || !(self.f_c > 0.0) || !self.snr_db.is_finite() {
            return bad("delta_t and f_c must be positive, snr_db finite".into());
        }
        if !self.mode.blocks().contains(&self.metric.block()) {
            return bad(format!(
                "metric {} is not estimated in mode {}",
                self.metric.label(),
                self.mode.label()
            ));
        }
        Ok(())
    }

    /// `(n_u, delta_t, f_c, snr_db)` at an axis value.
    fn point(&self, x: f64) -> (usize, f64, f64, f64) {
        let (mut n_u, mut dt, mut f_c, mut snr) = (self.n_u, self.delta_t, self.f_c, self.snr_db);
        match self.axis {
            Axis::NU => n_u = x as usize,
            Axis::DeltaT => dt = x,
            Axis::FC => f_c = x,
            Axis::SnrDb => snr = x,
        }
        (n_u, dt, f_c, snr)
    }
}

impl SweepConfig {
    /// Cartesian expansion of the list-valued fields.
    pub fn expand(&self, signal: &SignalConfig) -> Vec<SweepSpec> {
        let f_cs = self.f_c.as_ref().map_or(vec![signal.f_c], |v| v.to_vec());
        let snrs = self.snr_db.as_ref().map_or(vec![signal.snr_db], |v| v.to_vec());
        let mut out = Vec::new();
        for metric in self.metric.to_vec() {
            for offsets in self.offsets.to_vec() {
                for &n_u in &self.n_u.to_vec() {
                    for &delta_t in &self.delta_t.to_vec() {
                        for &f_c in &f_cs {
                            for &snr_db in &snrs {
                                out.push(SweepSpec {
                                    name: self.name.clone(),
                                    axis: self.axis,
                                    values: self.values.clone(),
                                    metric,
                                    mode: self.mode,
                                    n_b: self.n_b,
                                    n_k: self.n_k,
                                    n_u,
                                    delta_t,
                                    f_c,
                                    snr_db,
                                    offsets,
                                    draws: self.draws,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// `[tables]` section: a feasibility grid, or the reference rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablesConfig {
    /// Scan the published reference rows instead of the grid axes.
    pub reference: bool,
    pub n_b: Vec<usize>,
    pub n_k: Vec<usize>,
    pub n_u: Vec<usize>,
    pub offsets: Vec<OffsetConfig>,
    pub modes: Vec<Mode>,
    pub draws: usize,
    pub delta_t: f64,
}

impl Default for TablesConfig {
    fn default() -> Self {
        Self {
            reference: false,
            n_b: Vec::new(),
            n_k: Vec::new(),
            n_u: Vec::new(),
            offsets: OffsetConfig::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            draws: 16,
            delta_t: 0.025,
        }
    }
}

/// `[validate]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub scenarios: usize,
    pub max_n_b: usize,
    pub max_n_k: usize,
    pub max_n_u: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            scenarios: 100,
            max_n_b: 3,
            max_n_k: 3,
            max_n_u: 4,
        }
    }
}

/// Whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    pub signal: SignalConfig,
    pub geometry: GeometryModel,
    pub sweep: Vec<SweepConfig>,
    pub tables: TablesConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            jobs: 0,
            out: PathBuf::from("out"),
            signal: SignalConfig::default(),
            geometry: GeometryModel::default(),
            sweep: Vec::new(),
            tables: TablesConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    /// Parses and validates TOML text.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Schema checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<()> {
        self.signal.spec(None, None)?;
        self.geometry.validate().map_err(cfg_err)?;
        let mut names = Vec::new();
        for s in &self.sweep {
            if s.name.is_empty()
                || !s
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!(
                    "sweep name '{}' must be nonempty [A-Za-z0-9_-]",
                    s.name
                )));
            }
            if names.contains(&&s.name) {
                return Err(Error::Config(format!("duplicate sweep name '{}'", s.name)));
            }
            names.push(&s.name);
            for spec in s.expand(&self.signal) {
                spec.validate()?;
                self.signal.spec(Some(spec.f_c), Some(spec.snr_db))?;
            }
        }
        self.tables_grid().validate().map_err(cfg_err)?;
        let v = &self.validate;
        if v.max_n_b == 0 || v.max_n_k == 0 || v.max_n_u == 0 {
            return Err(Error::Config("validate limits must be at least 1".into()));
        }
        Ok(())
    }

    /// Feasibility grid described by the `[tables]` section.
    pub fn tables_grid(&self) -> ScenarioGrid {
        let t = &self.tables;
        ScenarioGrid {
            n_b: t.n_b.clone(),
            n_k: t.n_k.clone(),
            n_u: t.n_u.clone(),
            offsets: t.offsets.clone(),
            modes: t.modes.clone(),
            seed: self.seed,
            draws: t.draws,
            delta_t: t.delta_t,
            signal: self.signal.spec(None, None).expect("validated signal"),
            model: self.geometry.clone(),
        }
    }

    /// Every sweep, expanded.
    pub fn sweep_specs(&self) -> Vec<SweepSpec> {
        self.sweep.iter().flat_map(|s| s.expand(&self.signal)).collect()
    }
}

/// Runs `f` on a rayon pool with `jobs` threads (0 = all cores).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: String,
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub unit: String,
    pub mode: String,
    pub n_b: usize,
    pub n_k: usize,
    pub n_u: usize,
    pub delta_t: f64,
    pub f_c: f64,
    pub snr_db: f64,
    pub offsets: String,
    pub seed: u64,
    pub draws: usize,
    pub feasible_draws: usize,
    /// Median bound over feasible draws; empty when no draw is feasible.
    pub bound: Option<f64>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.feasible_draws == self.draws
    }
}

/// Scenario of draw `d` at a sweep point.
pub fn sweep_scenario(spec: &SweepSpec, cfg: &RunConfig, x: f64, d: usize) -> Result<Scenario> {
    let (n_u, dt, f_c, snr) = spec.point(x);
    let mut rng = stream_rng(cfg.seed, d as u64);
    let (rx, cs) = draw_geometry(&mut rng, &cfg.geometry, spec.n_b, n_u, spec.n_k, dt, f_c)?;
    Scenario::new(rx, cs, cfg.signal.spec(Some(f_c), Some(snr))?)
}

/// Bound of the spec's metric on one scenario; `None` when not positive definite.
pub fn point_bound(spec: &SweepSpec, sc: &Scenario) -> Result<Option<f64>> {
    let fac = match InformationFactor::new(sc, spec.offsets) {
        Ok(f) => f,
        Err(Error::SingularNuisance(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(spec.mode.assess(&fac, spec.metric.block())?.crlb())
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// One row per axis value, on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec, cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|i| (0..spec.draws).map(move |d| (i, d)))
        .collect();
    let bounds: Vec<Result<Option<f64>>> = jobs
        .par_iter()
        .map(|&(i, d)| point_bound(spec, &sweep_scenario(spec, cfg, spec.values[i], d)?))
        .collect();
    let mut rows = Vec::with_capacity(spec.values.len());
    for (i, &x) in spec.values.iter().enumerate() {
        let mut ok = Vec::new();
        for r in &bounds[i * spec.draws..(i + 1) * spec.draws] {
            if let Some(b) = r.clone()? {
                ok.push(b);
            }
        }
        let (n_u, delta_t, f_c, snr_db) = spec.point(x);
        rows.push(SweepRow {
            sweep: spec.name.clone(),
            axis: spec.axis.label().into(),
            value: x,
            metric: spec.metric.label().into(),
            unit: spec.metric.unit().into(),
            mode: spec.mode.label().into(),
            n_b: spec.n_b,
            n_k: spec.n_k,
            n_u,
            delta_t,
            f_c,
            snr_db,
            offsets: spec.offsets.label().into(),
            seed: cfg.seed,
            draws: spec.draws,
            feasible_draws: ok.len(),
            bound: median(&mut ok),
        });
    }
    Ok(rows)
}

/// Writes sweep rows as CSV with a header.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_sweep_csv`].
pub fn read_sweep_csv<R: std::io::Read>(r: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Runs every configured sweep and writes `sweep_<name>.csv` files.
pub fn run_sweeps(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    create_out(&cfg.out)?;
    let mut written = Vec::new();
    with_pool(cfg.jobs, || -> Result<()> {
        for s in &cfg.sweep {
            let mut rows = Vec::new();
            for spec in s.expand(&cfg.signal) {
                rows.extend(run_sweep(&spec, cfg)?);
            }
            let path = cfg.out.join(format!("sweep_{}.csv", s.name));
            write_sweep_csv(&rows, fs::File::create(&path)?)?;
            written.push(path);
        }
        Ok(())
    })??;
    Ok(written)
}

/// One reference row under one offset setting, compared with the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub mode: Mode,
    pub n_k: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub offsets: OffsetConfig,
    pub expected: bool,
    pub verdict: Verdict,
    pub pd_draws: usize,
    pub draws: usize,
    pub min_log10_ratio: f64,
    pub max_log10_ratio: f64,
    pub failure: String,
}

impl ReferenceCheck {
    pub fn matches(&self) -> bool {
        match self.verdict {
            Verdict::Feasible => self.expected,
            Verdict::Infeasible => !self.expected,
            Verdict::Mixed => false,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            mode: self.mode,
            n_b: self.n_b,
            n_k: self.n_k,
            n_u: self.n_u,
            offsets: self.offsets,
        }
    }
}

/// Flattens reference scan results into per-offset checks.
pub fn reference_checks(results: &[(ReferenceRow, FeasibilityReport)]) -> Vec<ReferenceCheck> {
    let mut out = Vec::new();
    for (row, rep) in results {
        for (i, off) in OffsetConfig::ALL.iter().enumerate() {
            let key = CellKey {
                mode: row.mode,
                n_b: row.n_b,
                n_k: row.n_k,
                n_u: row.n_u,
                offsets: *off,
            };
            let c = rep.get(&key).expect("reference scan covers every offset");
            out.push(ReferenceCheck {
                mode: row.mode,
                n_k: row.n_k,
                n_b: row.n_b,
                n_u: row.n_u,
                offsets: *off,
                expected: row.expected[i],
                verdict: c.verdict,
                pd_draws: c.pd_draws,
                draws: c.draws,
                min_log10_ratio: c.min_log10_ratio,
                max_log10_ratio: c.max_log10_ratio,
                failure: c.failure.clone().unwrap_or_default(),
            });
        }
    }
    out
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Feasible => "yes",
        Verdict::Infeasible => "no",
        Verdict::Mixed => "mixed",
    }
}

fn trace_text(trace: &[Condition]) -> String {
    let mut s = String::new();
    for c in trace {
        let _ = writeln!(
            s,
            "    [{}] {} (log10 ratio {:.2})",
            if c.held { "held" } else { "FAILED" },
            c.label,
            c.log10_ratio
        );
    }
    s
}

/// Human-readable comparison with an explain trace under every mismatch.
pub fn reference_text(results: &[(ReferenceRow, FeasibilityReport)]) -> Result<String> {
    let checks = reference_checks(results);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<5} {:>3} {:>3} {:>3}  {:<7} {:>8} {:>8}  match",
        "mode", "N_K", "N_B", "N_U", "offsets", "expected", "scan"
    );
    for c in &checks {
        let _ = writeln!(
            s,
            "{:<5} {:>3} {:>3} {:>3}  {:<7} {:>8} {:>8}  {}",
            c.mode.label(),
            c.n_k,
            c.n_b,
            c.n_u,
            c.offsets.label(),
            yes_no(c.expected),
            verdict_label(c.verdict),
            if c.matches() { "ok" } else { "MISMATCH" }
        );
        if !c.matches() {
            let rep = &results
                .iter()
                .find(|(r, _)| (r.mode, r.n_k, r.n_b, r.n_u) == (c.mode, c.n_k, c.n_b, c.n_u))
                .expect("row present")
                .1;
            s.push_str(&trace_text(&explain(rep, &c.key())?));
        }
    }
    let n_ok = checks.iter().filter(|c| c.matches()).count();
    let _ = writeln!(s, "{n_ok}/{} cells match", checks.len());
    Ok(s)
}

/// Runs the `[tables]` section and writes `tables.csv` and `tables.txt`.
pub fn run_tables(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    create_out(&cfg.out)?;
    let grid = cfg.tables_grid();
    let csv_path = cfg.out.join("tables.csv");
    let txt_path = cfg.out.join("tables.txt");
    with_pool(cfg.jobs, || -> Result<()> {
        if cfg.tables.reference {
            let res = scan_reference(&grid)?;
            let mut wr = csv::Writer::from_writer(fs::File::create(&csv_path)?);
            for c in reference_checks(&res) {
                wr.serialize(ReferenceCsvRow::from(&c))?;
            }
            wr.flush()?;
            fs::write(&txt_path, reference_text(&res)?)?;
        } else {
            let rep = scan(&grid)?;
            rep.write_csv(fs::File::create(&csv_path)?)?;
            fs::write(&txt_path, rep.to_text())?;
        }
        Ok(())
    })??;
    Ok(vec![csv_path, txt_path])
}

/// Flat CSV form of a [`ReferenceCheck`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCsvRow {
    pub mode: String,
    pub n_k: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub offsets: String,
    pub expected: bool,
    pub verdict: Verdict,
    pub matches: bool,
    pub pd_draws: usize,
    pub draws: usize,
    pub min_log10_ratio: f64,
    pub max_log10_ratio: f64,
    pub failure: String,
}

impl From<&ReferenceCheck> for ReferenceCsvRow {
    fn from(c: &ReferenceCheck) -> Self {
        Self {
            mode: c.mode.label().into(),
            n_k: c.n_k,
            n_b: c.n_b,
            n_u: c.n_u,
            offsets: c.offsets.label().into(),
            expected: c.expected,
            verdict: c.verdict,
            matches: c.matches(),
            pd_draws: c.pd_draws,
            draws: c.draws,
            min_log10_ratio: c.min_log10_ratio,
            max_log10_ratio: c.max_log10_ratio,
            failure: c.failure.clone(),
        }
    }
}

/// Scans one cell with the `[tables]` settings and returns its trace as text.
pub fn explain_cell(cfg: &RunConfig, key: CellKey) -> Result<String> {
    let grid = ScenarioGrid {
        n_b: vec![key.n_b],
        n_k: vec![key.n_k],
        n_u: vec![key.n_u],
        offsets: vec![key.offsets],
        modes: vec![key.mode],
        ..cfg.tables_grid()
    };
    let rep = with_pool(cfg.jobs, || scan(&grid))??;
    let cell = rep.get(&key).expect("single cell scanned");
    let mut s = format!(
        "{} N_K={} N_B={} N_U={} offsets={}: {} ({}/{} draws PD, witness draw {})\n",
        key.mode.label(),
        key.n_k,
        key.n_b,
        key.n_u,
        key.offsets.label(),
        verdict_label(cell.verdict),
        cell.pd_draws,
        cell.draws,
        cell.witness_draw
    );
    s.push_str(&trace_text(&explain(&rep, &key)?));
    Ok(s)
}

/// Worst relative errors of the oracle suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub scenarios: usize,
    /// Closed-form FIM blocks vs congruence product.
    pub fim_block_err: f64,
    /// Closed-form losses vs numeric Schur complements.
    pub loss_err: f64,
    /// Analytic vs finite-difference gradients.
    pub jacobian_err: f64,
    /// Closed-form 6D and 9D EFIMs vs the square-root reduction, on PD cases.
    pub reduction_err: f64,
}

impl ValidationReport {
    /// Every error within the stated tolerances.
    pub fn passed(&self) -> bool {
        self.fim_block_err <= FIM_TOL
            && self.loss_err <= FIM_TOL
            && self.jacobian_err <= JACOBIAN_TOL
            && self.reduction_err <= REDUCTION_TOL
    }
}

/// Tolerance of closed-form FIM and loss blocks.
pub const FIM_TOL: f64 = 1e-8;
/// Tolerance of closed-form 6D/9D EFIMs against the factor path.
pub const REDUCTION_TOL: f64 = 1e-6;

/// Smallest log10 eigenvalue ratio, at every step of a reduction, for which
/// the closed-form path through `F - G` is compared with the factor path.
pub const WELL_POSED_LOG10: f64 = -6.0;

/// Tolerance of analytic derivatives.
pub const JACOBIAN_TOL: f64 = 1e-5;

/// Relative error of the 3x3 `(a, b)` blocks of two 9x9 matrices, scaled by
/// `sqrt(|X_aa| |X_bb|)` of the reference so tiny cross blocks are judged
/// against the information they couple.
pub fn block_errors(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in Block::ALL.iter().enumerate() {
        for b in &Block::ALL[i..] {
            let scale = (block_of(want, *a, *a).norm() * block_of(want, *b, *b).norm()).sqrt();
            let diff = (block_of(got, *a, *b) - block_of(want, *a, *b)).norm();
            if diff > 0.0 {
                worst = worst.max(if scale > 0.0 { diff / scale } else { f64::INFINITY });
            }
        }
    }
    worst
}

/// Indices of the full FIM kept when the configured offsets are unknown:
/// `kappa_1`, every gain, and the unknown offsets.
pub fn unknown_indices(n_b: usize, offsets: OffsetConfig) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..9).collect();
    for b in 0..n_b {
        idx.push(nuisance_row(b, 0));
        if offsets.time {
            idx.push(nuisance_row(b, 1));
        }
        if offsets.freq {
            idx.push(nuisance_row(b, 2));
        }
    }
    idx
}

/// Closed-form 9x9 location FIM assembled from the six closed-form blocks.
pub fn closed_fim(sc: &Scenario) -> Result<DMatrix<f64>> {
    Ok(location_fim(sc, OffsetConfig::NONE)?.f)
}

/// Worst per-gradient relative error between two Jacobians: each delay or
/// Doppler gradient with respect to one block is compared as a 3-vector.
pub fn jacobian_error(analytic: &Jacobian, numeric: &Jacobian) -> f64 {
    let mut worst: f64 = 0.0;
    for col in 0..analytic.matrix.ncols() {
        for blk in Block::ALL {
            let r = blk.rows();
            let a = nalgebra::Vector3::new(
                analytic.matrix[(r[0], col)],
                analytic.matrix[(r[1], col)],
                analytic.matrix[(r[2], col)],
            );
            let n = nalgebra::Vector3::new(
                numeric.matrix[(r[0], col)],
                numeric.matrix[(r[1], col)],
                numeric.matrix[(r[2], col)],
            );
            let d = (a - n).norm();
            if d > 0.0 {
                worst = worst.max(d / a.norm().max(n.norm()));
            }
        }
    }
    worst
}

fn validate_one(seed: u64, i: usize, lim: RandomLimits) -> Result<ValidationReport> {
    let sc = random_scenario(&mut stream_rng(seed, i as u64), lim)?;
    let jac = build_jacobian(&sc.rx, &sc.cs, &sc.snap)?;
    let num = numeric_jacobian(&sc.rx, &sc.cs)?;
    let full = congruence_fim(&jac, &assemble_channel_fim(&sc.snap, &sc.cs, &sc.spec)?)?;
    let loc: Vec<usize> = (0..9).collect();
    let f = closed_fim(&sc)?;
    let mut rep = ValidationReport {
        scenarios: 1,
        fim_block_err: block_errors(&f, &select(&full, &loc, &loc)),
        jacobian_err: jacobian_error(&jac, &num),
        ..Default::default()
    };
    for off in OffsetConfig::ALL {
        let g = match location_fim(&sc, off) {
            Ok(l) => l.g,
            Err(Error::SingularNuisance(_)) => continue,
            Err(e) => return Err(e),
        };
        let idx = unknown_indices(sc.cs.n_b(), off);
        let want = schur_loss(&select(&full, &idx, &idx), &loc)?;
        rep.loss_err = rep.loss_err.max(block_errors(&g, &want));
        let je = &f - &g;
        let fac = InformationFactor::new(&sc, off)?;
        for a in Block::ALL {
            let mut cases = vec![(efim_9d_with(&fac, a), efim_9d_closed(&je, a))];
            for b in Block::ALL.into_iter().filter(|b| *b != a) {
                cases.push((efim_6d_with(&fac, a, b), efim_6d_closed(&je, a, b)));
            }
            for (asm, closed) in cases {
                let well_posed = asm.conditions.iter().all(|c| c.log10_ratio > WELL_POSED_LOG10);
                if let (true, Some(e), Ok(c)) = (well_posed, asm.efim, closed) {
                    let want = DMatrix::from_fn(3, 3, |r, s| c[(r, s)]);
                    rep.reduction_err = rep.reduction_err.max((&e.matrix - &want).norm() / e.matrix.norm());
                }
            }
        }
    }
    Ok(rep)
}

/// Oracle suite on `n` random scenarios (stream `i` of `seed` for scenario `i`).
pub fn run_validation(seed: u64, cfg: &ValidateConfig) -> Result<ValidationReport> {
    let lim = RandomLimits {
        max_n_b: cfg.max_n_b,
        max_n_k: cfg.max_n_k,
        max_n_u: cfg.max_n_u,
    };
    let parts: Vec<Result<ValidationReport>> = (0..cfg.scenarios)
        .into_par_iter()
        .map(|i| validate_one(seed, i, lim))
        .collect();
    let mut out = ValidationReport::default();
    for p in parts {
        let p = p?;
        out.scenarios += 1;
        out.fim_block_err = out.fim_block_err.max(p.fim_block_err);
        out.loss_err = out.loss_err.max(p.loss_err);
        out.jacobian_err = out.jacobian_err.max(p.jacobian_err);
        out.reduction_err = out.reduction_err.max(p.reduction_err);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
jobs = 2
out = "results"

[signal]
f_c = 1e9
snr_db = -20

[[sweep]]
name = "p_vs_nu"
axis = "n_u"
values = [4, 9, 16]
metric = ["position", "velocity"]
n_b = 3
n_k = 3
delta_t = [0.025, 0.1]

[tables]
n_b = [1, 2]
n_k = [1]
n_u = [1]
modes = ["p"]
draws = 2
"#;

    #[test]
    fn sample_config_parses_and_expands() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sweep.len(), 1);
        let specs = cfg.sweep_specs();
        assert_eq!(specs.len(), 4);
        assert_eq!(specs[0].values, vec![4.0, 9.0, 16.0]);
        assert_eq!(specs[0].mode, Mode::Full);
        assert_eq!(cfg.tables.offsets, OffsetConfig::ALL.to_vec());
    }

    #[test]
    fn schema_violations_are_config_errors() {
        let bad = [
            "seed = 1\nbogus = 3\n",
            "[signal]\nf_c = -1.0\n",
            "[[sweep]]\nname = \"a\"\naxis = \"n_u\"\nvalues = [4, 2]\nmetric = \"position\"\nn_b = 3\nn_k = 3\n",
            "[[sweep]]\nname = \"a\"\naxis = \"n_u\"\nvalues = [1.5]\nmetric = \"position\"\nn_b = 3\nn_k = 3\n",
            "[[sweep]]\nname = \"a\"\naxis = \"f_c\"\nvalues = [1e9]\nmetric = \"position\"\nmode = \"v\"\nn_b = 3\nn_k = 3\n",
            "[[sweep]]\nname = \"a\"\naxis = \"speed\"\nvalues = [1]\nmetric = \"position\"\nn_b = 3\nn_k = 3\n",
            "[tables]\noffsets = [\"clock\"]\n",
            "[tables]\ndraws = 0\n",
        ];
        for b in bad {
            assert!(
                matches!(RunConfig::from_toml_str(b), Err(Error::Config(_))),
                "accepted: {b}"
            );
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn sweep_rows_round_trip_through_csv() {
        let mut cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        cfg.sweep[0].values = vec![1.0, 4.0];
        let spec = &cfg.sweep_specs()[0];
        let rows = run_sweep(spec, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn empty_grid_gives_empty_report() {
        let cfg = RunConfig::default();
        let rep = scan(&cfg.tables_grid()).unwrap();
        assert!(rep.cells.is_empty());
    }
}
