//! Identifiability scans over satellite/slot/antenna counts, offset
//! configurations and estimation modes.
//!
//! Geometry draws are shared by every mode and offset configuration of a
//! `(N_B, N_K, N_U)` cell; draw `d` of cell `c` comes from stream `c` of the
//! seed, so results do not depend on scheduling.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efim_engine::{Block, OffsetConfig, Scenario};
use crate::error::{Error, Result};
use crate::reduction::{efim_3d_with, efim_6d_with, efim_9d_with, Assessment, Condition, InformationFactor};
use crate::scenario::{draw_geometry, stream_rng, GeometryModel};
use crate::signal_model::SignalSpec;

/// Estimation mode: which location blocks are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Position only.
    #[serde(rename = "p")]
    Position,
    /// Orientation only.
    #[serde(rename = "phi")]
    Orientation,
    /// Velocity only.
    #[serde(rename = "v")]
    Velocity,
    /// Position and velocity, orientation known.
    #[serde(rename = "pv")]
    PosVel,
    /// Position and orientation, velocity known.
    #[serde(rename = "pphi")]
    PosOri,
    /// Velocity and orientation, position known.
    #[serde(rename = "vphi")]
    VelOri,
    /// All nine parameters.
    #[serde(rename = "9d")]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Position,
        Mode::Orientation,
        Mode::Velocity,
        Mode::PosVel,
        Mode::PosOri,
        Mode::VelOri,
        Mode::Full,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Mode::Position => "p",
            Mode::Orientation => "phi",
            Mode::Velocity => "v",
            Mode::PosVel => "pv",
            Mode::PosOri => "pphi",
            Mode::VelOri => "vphi",
            Mode::Full => "9d",
        }
    }

    /// Unknown blocks.
    pub fn blocks(&self) -> Vec<Block> {
        use Block::*;
        match self {
            Mode::Position => vec![Position],
            Mode::Orientation => vec![Orientation],
            Mode::Velocity => vec![Velocity],
            Mode::PosVel => vec![Position, Velocity],
            Mode::PosOri => vec![Position, Orientation],
            Mode::VelOri => vec![Velocity, Orientation],
            Mode::Full => vec![Position, Orientation, Velocity],
        }
    }

    /// Assessment of `target` (one of [`Mode::blocks`]) in this mode.
    pub fn assess(&self, fac: &InformationFactor, target: Block) -> Result<Assessment> {
        let blocks = self.blocks();
        if !blocks.contains(&target) {
            return Err(Error::InvalidInput(format!(
                "{} is not estimated in mode {}",
                target.label(),
                self.label()
            )));
        }
        Ok(match blocks.len() {
            1 => efim_3d_with(fac, target),
            2 => {
                let other = *blocks.iter().find(|b| **b != target).expect("pair has two blocks");
                efim_6d_with(fac, target, other)
            }
            _ => efim_9d_with(fac, target),
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mode '{s}'")))
    }
}

/// Outcome of one mode on one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOutcome {
    pub feasible: bool,
    /// Every assessed condition, prefixed by its target block.
    pub conditions: Vec<Condition>,
    pub failure: Option<String>,
    /// Smallest deciding log10 eigenvalue ratio over the targets.
    pub margin: f64,
}

/// Evaluates every target of `mode`. Errors from the scenario (for example a
/// nuisance with no information) become infeasible outcomes.
pub fn evaluate_mode(mode: Mode, sc: &Scenario, offsets: OffsetConfig) -> ModeOutcome {
    let fac = match InformationFactor::new(sc, offsets) {
        Ok(f) => f,
        Err(e) => {
            return ModeOutcome {
                feasible: false,
                conditions: Vec::new(),
                failure: Some(e.to_string()),
                margin: -300.0,
            }
        }
    };
    let mut out = ModeOutcome {
        feasible: true,
        conditions: Vec::new(),
        failure: None,
        margin: f64::INFINITY,
    };
    for target in mode.blocks() {
        let a = mode.assess(&fac, target).expect("target belongs to mode");
        out.margin = out.margin.min(a.margin());
        if !a.feasible() {
            out.feasible = false;
            if out.failure.is_none() {
                out.failure = a.failure();
            }
        }
        out.conditions.extend(a.conditions);
    }
    out
}

/// Axes of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGrid {
    pub n_b: Vec<usize>,
    pub n_k: Vec<usize>,
    pub n_u: Vec<usize>,
    pub offsets: Vec<OffsetConfig>,
    pub modes: Vec<Mode>,
    pub seed: u64,
    pub draws: usize,
    pub delta_t: f64,
    pub signal: SignalSpec,
    pub model: GeometryModel,
}

impl ScenarioGrid {
    /// Checks that the axes are usable.
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidInput("draws must be at least 1".into()));
        }
        if self.n_b.contains(&0) || self.n_k.contains(&0) || self.n_u.contains(&0) {
            return Err(Error::InvalidInput("counts must be at least 1".into()));
        }
        if !(self.delta_t > 0.0) {
            return Err(Error::InvalidInput("delta_t must be positive".into()));
        }
        self.signal.validate()?;
        self.model.validate()
    }

    /// Geometry cells `(n_b, n_k, n_u)` in scan order.
    pub fn geometry_cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &b in &self.n_b {
            for &k in &self.n_k {
                for &u in &self.n_u {
                    out.push((b, k, u));
                }
            }
        }
        out
    }

    /// Scenario of draw `d` in geometry cell `cell`.
    pub fn draw(&self, cell: usize, n_b: usize, n_k: usize, n_u: usize, d: usize) -> Result<Scenario> {
        let mut rng = stream_rng(self.seed, cell as u64);
        let mut last = None;
        for _ in 0..=d {
            last = Some(draw_geometry(
                &mut rng,
                &self.model,
                n_b,
                n_u,
                n_k,
                self.delta_t,
                self.signal.f_c,
            )?);
        }
        let (rx, cs) = last.expect("at least one draw");
        Scenario::new(rx, cs, self.signal.clone())
    }
}

/// Identifies one scanned cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub mode: Mode,
    pub n_b: usize,
    pub n_k: usize,
    pub n_u: usize,
    pub offsets: OffsetConfig,
}

/// Verdict over all draws of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Mixed,
}

/// One scanned cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    pub verdict: Verdict,
    pub pd_draws: usize,
    pub draws: usize,
    /// Most frequent failure tag among failing draws.
    pub failure: Option<String>,
    pub min_log10_ratio: f64,
    pub max_log10_ratio: f64,
    /// Index of the first failing draw, or of the first draw if none failed.
    pub witness_draw: usize,
}

/// Every scanned cell plus the grid that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub grid: ScenarioGrid,
    pub cells: Vec<CellResult>,
}

/// Scans the grid on the current rayon pool.
pub fn scan(grid: &ScenarioGrid) -> Result<FeasibilityReport> {
    grid.validate()?;
    let cells = grid.geometry_cells();
    let per_cell: Vec<Result<Vec<CellResult>>> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, &(n_b, n_k, n_u))| scan_cell(grid, ci, n_b, n_k, n_u))
        .collect();
    let mut out = Vec::new();
    for r in per_cell {
        out.extend(r?);
    }
    Ok(FeasibilityReport {
        grid: grid.clone(),
        cells: out,
    })
}

fn scan_cell(grid: &ScenarioGrid, ci: usize, n_b: usize, n_k: usize, n_u: usize) -> Result<Vec<CellResult>> {
    let mut rng = stream_rng(grid.seed, ci as u64);
    let mut scenarios = Vec::with_capacity(grid.draws);
    for _ in 0..grid.draws {
        let (rx, cs) = draw_geometry(&mut rng, &grid.model, n_b, n_u, n_k, grid.delta_t, grid.signal.f_c)?;
        scenarios.push(Scenario::new(rx, cs, grid.signal.clone())?);
    }
    let mut out = Vec::new();
    for &mode in &grid.modes {
        for &offsets in &grid.offsets {
            let outcomes: Vec<ModeOutcome> = scenarios.iter().map(|sc| evaluate_mode(mode, sc, offsets)).collect();
            out.push(summarize(
                CellKey {
                    mode,
                    n_b,
                    n_k,
                    n_u,
                    offsets,
                },
                &outcomes,
            ));
        }
    }
    Ok(out)
}

fn summarize(key: CellKey, outcomes: &[ModeOutcome]) -> CellResult {
    let pd = outcomes.iter().filter(|o| o.feasible).count();
    let verdict = if pd == outcomes.len() {
        Verdict::Feasible
    } else if pd == 0 {
        Verdict::Infeasible
    } else {
        Verdict::Mixed
    };
    let mut tags: Vec<(String, usize)> = Vec::new();
    for t in outcomes.iter().filter_map(|o| o.failure.clone()) {
        match tags.iter_mut().find(|(s, _)| *s == t) {
            Some(e) => e.1 += 1,
            None => tags.push((t, 1)),
        }
    }
    let failure = tags.iter().max_by_key(|(_, n)| *n).map(|(s, _)| s.clone());
    let margins = outcomes.iter().map(|o| o.margin);
    CellResult {
        key,
        verdict,
        pd_draws: pd,
        draws: outcomes.len(),
        failure,
        min_log10_ratio: margins.clone().fold(f64::INFINITY, f64::min),
        max_log10_ratio: margins.fold(f64::NEG_INFINITY, f64::max),
        witness_draw: outcomes.iter().position(|o| !o.feasible).unwrap_or(0),
    }
}

impl FeasibilityReport {
    /// Cell lookup.
    pub fn get(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.key == *key)
    }

    /// Writes the report as CSV with a fixed column order.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for c in &self.cells {
            wr.serialize(CellRow::from(c))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Human-readable grid: one line per `(mode, N_K, N_B, N_U)`, one column per offset setting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let offs = &self.grid.offsets;
        let _ = writeln!(
            s,
            "{:<5} {:>3} {:>3} {:>3}  {}",
            "mode",
            "N_K",
            "N_B",
            "N_U",
            offs.iter().map(|o| format!("{:>10}", o.label())).collect::<String>()
        );
        let mut seen = Vec::new();
        for c in &self.cells {
            let k = (c.key.mode, c.key.n_k, c.key.n_b, c.key.n_u);
            if seen.contains(&k) {
                continue;
            }
            seen.push(k);
            let cols: String = offs
                .iter()
                .map(|o| {
                    let key = CellKey { offsets: *o, ..c.key };
                    let v = self.get(&key).map_or("?", |r| match r.verdict {
                        Verdict::Feasible => "yes",
                        Verdict::Infeasible => "no",
                        Verdict::Mixed => "mixed",
                    });
                    format!("{v:>10}")
                })
                .collect();
            let _ = writeln!(s, "{:<5} {:>3} {:>3} {:>3}  {}", k.0.label(), k.1, k.2, k.3, cols);
        }
        s
    }
}

/// CSV row of a scanned cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub mode: String,
    pub n_b: usize,
    pub n_k: usize,
    pub n_u: usize,
    pub offsets: String,
    pub verdict: Verdict,
    pub pd_draws: usize,
    pub draws: usize,
    pub min_log10_ratio: f64,
    pub max_log10_ratio: f64,
    pub failure: String,
}

impl From<&CellResult> for CellRow {
    fn from(c: &CellResult) -> Self {
        Self {
            mode: c.key.mode.label().into(),
            n_b: c.key.n_b,
            n_k: c.key.n_k,
            n_u: c.key.n_u,
            offsets: c.key.offsets.label().into(),
            verdict: c.verdict,
            pd_draws: c.pd_draws,
            draws: c.draws,
            min_log10_ratio: c.min_log10_ratio,
            max_log10_ratio: c.max_log10_ratio,
            failure: c.failure.clone().unwrap_or_default(),
        }
    }
}

/// Ordered condition trace of a scanned cell, evaluated on its witness draw.
pub fn explain(report: &FeasibilityReport, key: &CellKey) -> Result<Vec<Condition>> {
    let cell = report
        .get(key)
        .ok_or_else(|| Error::InvalidInput(format!("cell {key:?} was not scanned")))?;
    let grid = &report.grid;
    let ci = grid
        .geometry_cells()
        .iter()
        .position(|&c| c == (key.n_b, key.n_k, key.n_u))
        .ok_or_else(|| Error::InvalidInput("geometry cell missing from grid".into()))?;
    let sc = grid.draw(ci, key.n_b, key.n_k, key.n_u, cell.witness_draw)?;
    let out = evaluate_mode(key.mode, &sc, key.offsets);
    if out.conditions.is_empty() {
        return Ok(vec![Condition {
            label: out.failure.unwrap_or_else(|| "scenario evaluation".into()),
            held: false,
            log10_ratio: -300.0,
        }]);
    }
    Ok(out.conditions)
}

/// Failed conditions of a trace, as tags.
pub fn failures(trace: &[Condition]) -> Vec<String> {
    trace
        .iter()
        .filter(|c| !c.held)
        .map(|c| format!("{} singular", c.label))
        .collect()
}

/// A row of the reference estimability tables: expected feasibility under
/// `[none, time, freq, both]` offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceRow {
    pub mode: Mode,
    pub n_k: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub expected: [bool; 4],
}

const fn row(mode: Mode, n_k: usize, n_b: usize, n_u: usize, e: [bool; 4]) -> ReferenceRow {
    ReferenceRow {
        mode,
        n_k,
        n_b,
        n_u,
        expected: e,
    }
}

const T: bool = true;
const F: bool = false;

/// Published estimability pattern at representative array sizes (1 or 4 antennas).
pub const REFERENCE_ROWS: [ReferenceRow; 30] = [
    row(Mode::Position, 1, 1, 4, [T, F, T, F]),
    row(Mode::Position, 1, 2, 1, [T, F, F, F]),
    row(Mode::Position, 1, 2, 4, [T, F, T, F]),
    row(Mode::Position, 1, 3, 1, [T, T, T, F]),
    row(Mode::Position, 1, 3, 4, [T, T, T, F]),
    row(Mode::Position, 2, 1, 1, [T, F, F, F]),
    row(Mode::Position, 2, 1, 4, [T, F, T, F]),
    row(Mode::Position, 3, 1, 1, [T, T, T, F]),
    row(Mode::Position, 3, 1, 4, [T, T, T, F]),
    row(Mode::Position, 4, 1, 1, [T, T, T, T]),
    row(Mode::Position, 4, 1, 4, [T, T, T, T]),
    row(Mode::Orientation, 1, 2, 4, [T, T, T, T]),
    row(Mode::Orientation, 2, 1, 4, [T, T, T, T]),
    row(Mode::Velocity, 1, 3, 1, [T, T, F, F]),
    row(Mode::Velocity, 2, 2, 1, [T, T, T, T]),
    row(Mode::Velocity, 4, 1, 1, [T, T, T, T]),
    row(Mode::PosVel, 1, 3, 1, [T, F, F, F]),
    row(Mode::PosVel, 1, 6, 1, [T, T, F, F]),
    row(Mode::PosVel, 4, 1, 1, [T, T, T, T]),
    row(Mode::PosVel, 3, 2, 1, [T, T, T, T]),
    row(Mode::PosVel, 2, 3, 1, [T, T, T, T]),
    row(Mode::PosVel, 3, 3, 1, [T, T, T, T]),
    row(Mode::PosOri, 1, 2, 4, [T, F, T, F]),
    row(Mode::PosOri, 2, 1, 4, [T, F, T, F]),
    row(Mode::PosOri, 2, 2, 4, [T, T, T, T]),
    row(Mode::PosOri, 3, 2, 4, [T, T, T, T]),
    row(Mode::PosOri, 2, 3, 4, [T, T, T, T]),
    row(Mode::VelOri, 3, 2, 4, [T, T, T, T]),
    row(Mode::VelOri, 2, 3, 4, [T, T, T, T]),
    row(Mode::Full, 3, 3, 4, [T, T, T, T]),
];

/// Scans exactly the reference rows, one single-cell grid per row, and
/// returns `(row, report)` pairs in row order.
pub fn scan_reference(base: &ScenarioGrid) -> Result<Vec<(ReferenceRow, FeasibilityReport)>> {
    REFERENCE_ROWS
        .par_iter()
        .map(|r| {
            let grid = ScenarioGrid {
                n_b: vec![r.n_b],
                n_k: vec![r.n_k],
                n_u: vec![r.n_u],
                offsets: OffsetConfig::ALL.to_vec(),
                modes: vec![r.mode],
                ..base.clone()
            };
            Ok((*r, scan(&grid)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ScenarioGrid {
        ScenarioGrid {
            n_b: vec![1, 3],
            n_k: vec![1, 2],
            n_u: vec![1, 4],
            offsets: OffsetConfig::ALL.to_vec(),
            modes: vec![Mode::Position, Mode::Orientation],
            seed: 5,
            draws: 3,
            delta_t: 0.025,
            signal: SignalSpec::new(1e9, 1e6, 0.0, -20.0, 0.01).unwrap(),
            model: GeometryModel::default(),
        }
    }

    #[test]
    fn mode_labels_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.label().parse::<Mode>().unwrap(), m);
        }
        assert!("xyz".parse::<Mode>().is_err());
    }

    #[test]
    fn scan_is_deterministic_and_complete() {
        let g = grid();
        let a = scan(&g).unwrap();
        let b = scan(&g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2 * 2 * 2 * 2 * 4);
    }

    #[test]
    fn single_antenna_has_no_orientation() {
        let r = scan(&grid()).unwrap();
        for c in r
            .cells
            .iter()
            .filter(|c| c.key.mode == Mode::Orientation && c.key.n_u == 1)
        {
            assert_eq!(c.verdict, Verdict::Infeasible);
            assert_eq!(c.failure.as_deref(), Some("orientation EFIM singular"));
        }
    }

    #[test]
    fn explain_requires_scanned_cell() {
        let r = scan(&grid()).unwrap();
        let key = CellKey {
            mode: Mode::Velocity,
            n_b: 1,
            n_k: 1,
            n_u: 1,
            offsets: OffsetConfig::NONE,
        };
        assert!(explain(&r, &key).is_err());
        let key = CellKey {
            mode: Mode::Position,
            ..key
        };
        let trace = explain(&r, &key).unwrap();
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn draw_reproduces_scan_geometry() {
        let g = grid();
        let a = g.draw(2, 1, 2, 1, 1).unwrap();
        let b = g.draw(2, 1, 2, 1, 1).unwrap();
        assert_eq!(a, b);
    }
}
