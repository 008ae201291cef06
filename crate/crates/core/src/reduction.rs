//! Square-root evaluation of the EFIMs used for feasibility and bounds.
//!
//! Every delay and Doppler is a scalar observation of a linear function of
//! `kappa_1` (plus its satellite's offset), so the location FIM is `M M^T`
//! with one column `sqrt(w) g` per observation. An unknown offset is removed
//! exactly by weighted centering of its satellite's gradients, which gives the
//! factor of `J^e`. Eliminating further location blocks is a projection of the
//! target rows off the row space of the eliminated rows. Working with the
//! factor keeps information that is far below the round-off level of `F - G`.
//!
//! Positive definiteness is judged against the uncentered information of the
//! same rows: `lambda_min(EFIM) > PD_REL_TOL * lambda_max(F_AA)`.

use nalgebra::{DMatrix, Matrix3, SVector};

use crate::efim_engine::{Block, OffsetConfig, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{rotation_partials, SPEED_OF_LIGHT};
use crate::linalg::{select, spd_inverse, symmetrize};
use crate::location_transform::{dnu_dp, dnu_dv, dtau_dphi_with};

/// Relative eigenvalue floor for positive definiteness.
pub const PD_REL_TOL: f64 = 1e-28;

/// Measurement type of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsKind {
    Delay,
    Doppler,
}

/// One scalar observation with its information weight and 9-gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub satellite: usize,
    pub kind: ObsKind,
    pub weight: f64,
    pub gradient: SVector<f64, 9>,
}

/// Delay observations per `(b, u, k)` and one Doppler observation per `(b, k)`
/// carrying the information of all antennas.
pub fn observations(sc: &Scenario) -> Result<Vec<Observation>> {
    let snap = &sc.snap;
    let parts = rotation_partials(&sc.rx.phi_u);
    let spec = &sc.spec;
    let mut out = Vec::with_capacity(snap.n_b * snap.n_k * (snap.n_u + 1));
    for b in 0..snap.n_b {
        for k in 0..snap.n_k {
            let om = crate::channel_fim::link_omega(spec, snap, &sc.cs, b, k);
            let t = k as f64 * sc.cs.delta_t;
            let mut snr_sum = 0.0;
            for u in 0..snap.n_u {
                let i = snap.buk(b, u, k);
                let snr = spec.snr_at(i);
                snr_sum += snr;
                let d = snap.delta_buk[i] / SPEED_OF_LIGHT;
                let go = dtau_dphi_with(&parts, snap.delta_buk[i], &sc.rx.s_tilde[u]);
                let mut g = SVector::<f64, 9>::zeros();
                g.fixed_rows_mut::<3>(0).copy_from(&d);
                g.fixed_rows_mut::<3>(3).copy_from(&go);
                g.fixed_rows_mut::<3>(6).copy_from(&(d * t));
                out.push(Observation {
                    satellite: b,
                    kind: ObsKind::Delay,
                    weight: snr * om,
                    gradient: g,
                });
            }
            let mut g = SVector::<f64, 9>::zeros();
            g.fixed_rows_mut::<3>(0).copy_from(&dnu_dp(snap, b, k)?);
            g.fixed_rows_mut::<3>(6).copy_from(&dnu_dv(snap, b, k));
            out.push(Observation {
                satellite: b,
                kind: ObsKind::Doppler,
                weight: snr_sum * 0.5 * spec.f_c * spec.f_c * spec.t2_eff,
                gradient: g,
            });
        }
    }
    Ok(out)
}

/// Square-root factors of the location FIM with and without offset elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationFactor {
    /// `9 x m`, uncentered: `raw raw^T = F`.
    pub raw: DMatrix<f64>,
    /// `9 x m`, centered over unknown offsets: `centered centered^T = J^e`.
    pub centered: DMatrix<f64>,
}

impl InformationFactor {
    /// Builds both factors for the scenario.
    pub fn new(sc: &Scenario, offsets: OffsetConfig) -> Result<Self> {
        let obs = observations(sc)?;
        let m = obs.len();
        let mut raw = DMatrix::zeros(9, m);
        let mut centered = DMatrix::zeros(9, m);
        for (j, o) in obs.iter().enumerate() {
            let s = o.weight.sqrt();
            raw.column_mut(j).copy_from(&(o.gradient * s));
        }
        for b in 0..sc.snap.n_b {
            for (kind, unknown) in [(ObsKind::Delay, offsets.time), (ObsKind::Doppler, offsets.freq)] {
                let idx: Vec<usize> = (0..m)
                    .filter(|&j| obs[j].satellite == b && obs[j].kind == kind)
                    .collect();
                let mean = if unknown {
                    let total: f64 = idx.iter().map(|&j| obs[j].weight).sum();
                    if !(total > 0.0) {
                        return Err(Error::SingularNuisance(format!(
                            "no {kind:?} information for the offset of satellite {b}"
                        )));
                    }
                    idx.iter()
                        .map(|&j| obs[j].gradient * obs[j].weight)
                        .sum::<SVector<f64, 9>>()
                        / total
                } else {
                    SVector::zeros()
                };
                for &j in &idx {
                    let s = obs[j].weight.sqrt();
                    centered.column_mut(j).copy_from(&((obs[j].gradient - mean) * s));
                }
            }
        }
        Ok(Self { raw, centered })
    }

    /// Location FIM `F`.
    pub fn fim(&self) -> DMatrix<f64> {
        symmetrize(&(&self.raw * self.raw.transpose()))
    }

    /// `J^e` over `kappa_1`.
    pub fn efim(&self) -> DMatrix<f64> {
        symmetrize(&(&self.centered * self.centered.transpose()))
    }

    fn rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
    }

    /// `lambda_max` of the uncentered FIM restricted to `rows`.
    pub fn reference(&self, rows: &[usize]) -> f64 {
        let a = Self::rows(&self.raw, rows);
        let sv = a.svd(false, false).singular_values;
        let s = sv.max();
        s * s
    }

    /// Target rows of the centered factor with the row space of the
    /// eliminated rows projected out.
    pub fn residual(&self, target: &[usize], eliminate: &[usize]) -> DMatrix<f64> {
        let a = Self::rows(&self.centered, target);
        if eliminate.is_empty() {
            return a;
        }
        let mut bt = Self::rows(&self.centered, eliminate).transpose();
        for mut c in bt.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        let q = bt.qr().q();
        let mut r = &a - (&a * &q) * q.transpose();
        r = &r - (&r * &q) * q.transpose();
        r
    }

    /// Reduced EFIM of `target` after eliminating `eliminate`.
    pub fn reduce(&self, target: &[usize], eliminate: &[usize]) -> Efim {
        let r = self.residual(target, eliminate);
        let mut ev: Vec<f64> = r
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .map(|s| s * s)
            .collect();
        ev.resize(target.len(), 0.0);
        ev.sort_by(f64::total_cmp);
        let reference = self.reference(target);
        let pd = reference > 0.0 && ev[0] > PD_REL_TOL * reference;
        Efim {
            matrix: symmetrize(&(&r * r.transpose())),
            eigenvalues: ev,
            reference,
            pd,
        }
    }
}

/// A reduced EFIM with its definiteness verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Efim {
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_max` of the uncentered FIM of the same rows.
    pub reference: f64,
    pub pd: bool,
}

impl Efim {
    /// `log10(lambda_min / reference)`, floored at -300.
    pub fn log10_ratio(&self) -> f64 {
        if self.reference > 0.0 && self.eigenvalues[0] > 0.0 {
            (self.eigenvalues[0] / self.reference).log10().max(-300.0)
        } else {
            -300.0
        }
    }

    /// `sqrt(trace(J^{-1}))` when positive definite.
    pub fn crlb(&self) -> Option<f64> {
        self.pd
            .then(|| self.eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>().sqrt())
    }
}

/// `sqrt(trace(J^{-1}))` of a positive definite 3x3 EFIM.
pub fn crlb(j: &Matrix3<f64>) -> Result<f64> {
    let d = DMatrix::from_fn(3, 3, |r, c| j[(r, c)]);
    let inv = spd_inverse(&d)?;
    let t = inv.trace();
    if t > 0.0 {
        Ok(t.sqrt())
    } else {
        Err(Error::Singular("EFIM is not positive definite".into()))
    }
}

/// One necessary condition checked on the way to an EFIM.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub held: bool,
    pub log10_ratio: f64,
}

/// Result of reducing to one target block.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub target: Block,
    /// Conditions in evaluation order; evaluation stops at the first failure.
    pub conditions: Vec<Condition>,
    /// Final EFIM, present when every inner condition held.
    pub efim: Option<Efim>,
}

impl Assessment {
    pub fn feasible(&self) -> bool {
        self.conditions.iter().all(|c| c.held) && self.efim.as_ref().is_some_and(|e| e.pd)
    }

    /// Tag of the first failed condition.
    pub fn failure(&self) -> Option<String> {
        self.conditions
            .iter()
            .find(|c| !c.held)
            .map(|c| format!("{} singular", c.label))
    }

    /// Margin of the deciding condition: the first failure, or the final EFIM.
    pub fn margin(&self) -> f64 {
        self.conditions
            .iter()
            .find(|c| !c.held)
            .or(self.conditions.last())
            .map_or(-300.0, |c| c.log10_ratio)
    }

    pub fn crlb(&self) -> Option<f64> {
        self.efim
            .as_ref()
            .and_then(|e| if self.feasible() { e.crlb() } else { None })
    }
}

fn rows_of(blocks: &[Block]) -> Vec<usize> {
    blocks.iter().flat_map(|b| b.rows()).collect()
}

/// Runs the chain `(label, target, eliminated)`; the last entry is the target.
fn chain(fac: &InformationFactor, target: Block, steps: &[(String, Vec<Block>, Vec<Block>)]) -> Assessment {
    let mut out = Assessment {
        target,
        conditions: Vec::new(),
        efim: None,
    };
    for (i, (label, t, e)) in steps.iter().enumerate() {
        let efim = fac.reduce(&rows_of(t), &rows_of(e));
        out.conditions.push(Condition {
            label: label.clone(),
            held: efim.pd,
            log10_ratio: efim.log10_ratio(),
        });
        if i + 1 == steps.len() {
            out.efim = Some(efim);
        } else if !efim.pd {
            break;
        }
    }
    out
}

/// EFIM of one block with the other two known.
pub fn efim_3d_with(fac: &InformationFactor, which: Block) -> Assessment {
    chain(fac, which, &[(format!("{} EFIM", which.label()), vec![which], vec![])])
}

/// EFIM of `a` with `b` unknown and the third block known.
pub fn efim_6d_with(fac: &InformationFactor, a: Block, b: Block) -> Assessment {
    chain(
        fac,
        a,
        &[
            (format!("inner {} EFIM", b.label()), vec![b], vec![]),
            (
                format!("{} EFIM given unknown {}", a.label(), b.label()),
                vec![a],
                vec![b],
            ),
        ],
    )
}

/// EFIM of `which` with the other two blocks unknown.
pub fn efim_9d_with(fac: &InformationFactor, which: Block) -> Assessment {
    let (one, two) = which.nine_d_order();
    chain(
        fac,
        which,
        &[
            (format!("inner {} EFIM", one.label()), vec![one], vec![]),
            (
                format!("inner Schur complement S ({} after {})", two.label(), one.label()),
                vec![two],
                vec![one],
            ),
            (
                format!(
                    "{} EFIM given unknown {} and {}",
                    which.label(),
                    one.label(),
                    two.label()
                ),
                vec![which],
                vec![one, two],
            ),
        ],
    )
}

/// 3D reduction from a scenario.
pub fn efim_3d(which: Block, sc: &Scenario, offsets: OffsetConfig) -> Result<Assessment> {
    Ok(efim_3d_with(&InformationFactor::new(sc, offsets)?, which))
}

/// Both halves of a 6D pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAssessment {
    pub first: Assessment,
    pub second: Assessment,
    /// Joint 6x6 EFIM over `[first, second]`.
    pub joint: DMatrix<f64>,
}

impl PairAssessment {
    pub fn feasible(&self) -> bool {
        self.first.feasible() && self.second.feasible()
    }
}

/// 6D reduction for the pair `(a, b)`; the remaining block is known.
pub fn efim_6d(a: Block, b: Block, sc: &Scenario, offsets: OffsetConfig) -> Result<PairAssessment> {
    if a == b {
        return Err(Error::InvalidInput("6D pair needs two distinct blocks".into()));
    }
    let fac = InformationFactor::new(sc, offsets)?;
    let rows = rows_of(&[a, b]);
    Ok(PairAssessment {
        first: efim_6d_with(&fac, a, b),
        second: efim_6d_with(&fac, b, a),
        joint: select(&fac.efim(), &rows, &rows),
    })
}

/// 9D reduction for one block.
pub fn efim_9d(which: Block, sc: &Scenario, offsets: OffsetConfig) -> Result<Assessment> {
    Ok(efim_9d_with(&InformationFactor::new(sc, offsets)?, which))
}
