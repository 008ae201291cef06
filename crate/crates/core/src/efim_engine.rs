//! Closed-form location FIM blocks, nuisance information losses and the
//! Schur-complement reductions built on them.
//!
//! Blocks are indexed by [`Block`]. The nuisance losses follow from the
//! delay/time-offset and Doppler/frequency-offset couplings of the channel
//! FIM: an unknown `delta_b` removes `v v^T / s` with
//! `v = sum SNR omega grad(tau)` and `s = sum SNR omega`; an unknown
//! `epsilon_b` removes `w w^T / s'` with `w = sum SNR (f_c t2 / 2) grad(nu)` and
//! `s' = sum SNR t2 / 2`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel_fim::link_omega;
use crate::error::{Error, Result};
use crate::geometry::{
    rotation_partials, snapshot, ConstellationState, GeometrySnapshot, ReceiverState, SPEED_OF_LIGHT,
};
use crate::linalg::{select, spd_inverse, symmetrize};
use crate::location_transform::{dnu_dp, dnu_dv, dtau_dphi_with, ORI, POS, VEL};
use crate::signal_model::SignalSpec;

/// Receiver, constellation and signal with the derived geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rx: ReceiverState,
    pub cs: ConstellationState,
    pub spec: SignalSpec,
    pub snap: GeometrySnapshot,
}

impl Scenario {
    /// Validates the inputs and evaluates the geometry.
    pub fn new(rx: ReceiverState, cs: ConstellationState, spec: SignalSpec) -> Result<Self> {
        spec.validate()?;
        let snap = snapshot(&rx, &cs)?;
        if let Some(v) = &spec.snr_per_link {
            if v.len() != snap.n_b * snap.n_u * snap.n_k {
                return Err(Error::DimensionMismatch(format!(
                    "{} per-link snr values for {} links",
                    v.len(),
                    snap.n_b * snap.n_u * snap.n_k
                )));
            }
        }
        Ok(Self { rx, cs, spec, snap })
    }

    /// Same geometry with a different signal spec.
    pub fn with_spec(&self, spec: SignalSpec) -> Result<Self> {
        Self::new(self.rx.clone(), self.cs.clone(), spec)
    }

    fn snr(&self, b: usize, u: usize, k: usize) -> f64 {
        self.spec.snr_at(self.snap.buk(b, u, k))
    }

    fn omega(&self, b: usize, k: usize) -> f64 {
        link_omega(&self.spec, &self.snap, &self.cs, b, k)
    }

    fn doppler_weight(&self) -> f64 {
        0.5 * self.spec.f_c * self.spec.f_c * self.spec.t2_eff
    }
}

/// Which per-satellite clock offsets are unknown nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OffsetConfig {
    /// Time offsets `delta_b` unknown.
    pub time: bool,
    /// Frequency offsets `epsilon_b` unknown.
    pub freq: bool,
}

impl OffsetConfig {
    pub const NONE: Self = Self {
        time: false,
        freq: false,
    };
    pub const TIME: Self = Self {
        time: true,
        freq: false,
    };
    pub const FREQ: Self = Self {
        time: false,
        freq: true,
    };
    pub const BOTH: Self = Self { time: true, freq: true };
    /// The four configurations in column order.
    pub const ALL: [Self; 4] = [Self::NONE, Self::TIME, Self::FREQ, Self::BOTH];

    /// Short label: `none`, `time`, `freq` or `both`.
    pub fn label(&self) -> &'static str {
        match (self.time, self.freq) {
            (false, false) => "none",
            (true, false) => "time",
            (false, true) => "freq",
            (true, true) => "both",
        }
    }

    /// Parses a label produced by [`OffsetConfig::label`].
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::NONE),
            "time" => Ok(Self::TIME),
            "freq" | "frequency" => Ok(Self::FREQ),
            "both" => Ok(Self::BOTH),
            other => Err(Error::InvalidInput(format!("unknown offset configuration '{other}'"))),
        }
    }
}

impl TryFrom<String> for OffsetConfig {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<OffsetConfig> for String {
    fn from(o: OffsetConfig) -> Self {
        o.label().into()
    }
}

/// A 3-parameter block of `kappa_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Position,
    Orientation,
    Velocity,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Position, Block::Orientation, Block::Velocity];

    /// Row indices within the 9x9 location FIM.
    pub fn rows(&self) -> [usize; 3] {
        match self {
            Block::Position => POS,
            Block::Orientation => ORI,
            Block::Velocity => VEL,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Block::Position => "position",
            Block::Orientation => "orientation",
            Block::Velocity => "velocity",
        }
    }

    /// Inner elimination order for the 9D reduction of this block.
    pub fn nine_d_order(&self) -> (Block, Block) {
        match self {
            Block::Position => (Block::Orientation, Block::Velocity),
            Block::Orientation => (Block::Position, Block::Velocity),
            Block::Velocity => (Block::Position, Block::Orientation),
        }
    }
}

fn outer(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    a * b.transpose()
}

/// Delay part of the position FIM at slot `k`: `sum_{b,u} SNR omega / c^2 Delta Delta^T`.
pub fn fim_pp_delay_slot(sc: &Scenario, k: usize) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for b in 0..sc.snap.n_b {
        let om = sc.omega(b, k);
        for u in 0..sc.snap.n_u {
            let d = sc.snap.delta_buk[sc.snap.buk(b, u, k)];
            m += outer(&d, &d) * (sc.snr(b, u, k) * om / (SPEED_OF_LIGHT * SPEED_OF_LIGHT));
        }
    }
    m
}

/// Delay part of the velocity FIM at slot `k`:
/// `sum_{b,u} SNR k^2 dt^2 omega / c^2 Delta Delta^T`.
pub fn fim_vv_delay_slot(sc: &Scenario, k: usize) -> Matrix3<f64> {
    let t = k as f64 * sc.cs.delta_t;
    let mut m = Matrix3::zeros();
    for b in 0..sc.snap.n_b {
        let om = sc.omega(b, k);
        for u in 0..sc.snap.n_u {
            let d = sc.snap.delta_buk[sc.snap.buk(b, u, k)];
            m += outer(&d, &d) * (sc.snr(b, u, k) * t * t * om / (SPEED_OF_LIGHT * SPEED_OF_LIGHT));
        }
    }
    m
}

/// Sum over `(b, k)` of `f(b, k, doppler weight summed over antennas)`.
fn doppler_sum(sc: &Scenario, f: impl Fn(usize, usize) -> Result<Matrix3<f64>>) -> Result<Matrix3<f64>> {
    let mut m = Matrix3::zeros();
    for b in 0..sc.snap.n_b {
        for k in 0..sc.snap.n_k {
            let w: f64 = (0..sc.snap.n_u).map(|u| sc.snr(b, u, k)).sum::<f64>() * sc.doppler_weight();
            if w != 0.0 {
                m += f(b, k)? * w;
            }
        }
    }
    Ok(m)
}

/// Sum over `(b, k, u)` of `SNR omega * f(b, u, k)`.
fn delay_sum(sc: &Scenario, f: impl Fn(usize, usize, usize) -> Matrix3<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for b in 0..sc.snap.n_b {
        for k in 0..sc.snap.n_k {
            let om = sc.omega(b, k);
            for u in 0..sc.snap.n_u {
                m += f(b, u, k) * (sc.snr(b, u, k) * om);
            }
        }
    }
    m
}

fn orientation_gradients(sc: &Scenario) -> Vec<Vector3<f64>> {
    let parts = rotation_partials(&sc.rx.phi_u);
    let mut out = vec![Vector3::zeros(); sc.snap.delta_buk.len()];
    for b in 0..sc.snap.n_b {
        for u in 0..sc.snap.n_u {
            for k in 0..sc.snap.n_k {
                let i = sc.snap.buk(b, u, k);
                out[i] = dtau_dphi_with(&parts, sc.snap.delta_buk[i], &sc.rx.s_tilde[u]);
            }
        }
    }
    out
}

/// Position FIM.
pub fn fim_pp(sc: &Scenario) -> Result<Matrix3<f64>> {
    let delay: Matrix3<f64> = (0..sc.snap.n_k).map(|k| fim_pp_delay_slot(sc, k)).sum();
    let doppler = doppler_sum(sc, |b, k| {
        let g = dnu_dp(&sc.snap, b, k)?;
        Ok(outer(&g, &g))
    })?;
    Ok(delay + doppler)
}

/// Position-orientation FIM: `sum SNR omega (Delta / c) grad_Phi(tau)^T`.
pub fn fim_pphi(sc: &Scenario) -> Matrix3<f64> {
    let go = orientation_gradients(sc);
    delay_sum(sc, |b, u, k| {
        let i = sc.snap.buk(b, u, k);
        outer(&(sc.snap.delta_buk[i] / SPEED_OF_LIGHT), &go[i])
    })
}

/// Position-velocity FIM.
pub fn fim_pv(sc: &Scenario) -> Result<Matrix3<f64>> {
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let delay = delay_sum(sc, |b, u, k| {
        let d = sc.snap.delta_buk[sc.snap.buk(b, u, k)];
        outer(&d, &d) * (k as f64 * sc.cs.delta_t / c2)
    });
    let doppler = doppler_sum(sc, |b, k| Ok(outer(&dnu_dp(&sc.snap, b, k)?, &dnu_dv(&sc.snap, b, k))))?;
    Ok(delay + doppler)
}

/// Orientation FIM: `sum SNR omega grad_Phi(tau) grad_Phi(tau)^T`.
pub fn fim_phiphi(sc: &Scenario) -> Matrix3<f64> {
    let go = orientation_gradients(sc);
    delay_sum(sc, |b, u, k| {
        let g = go[sc.snap.buk(b, u, k)];
        outer(&g, &g)
    })
}

/// Orientation-velocity FIM: `sum SNR k dt omega grad_Phi(tau) Delta^T / c`.
pub fn fim_phiv(sc: &Scenario) -> Matrix3<f64> {
    let go = orientation_gradients(sc);
    delay_sum(sc, |b, u, k| {
        let i = sc.snap.buk(b, u, k);
        outer(&go[i], &sc.snap.delta_buk[i]) * (k as f64 * sc.cs.delta_t / SPEED_OF_LIGHT)
    })
}

/// Velocity FIM.
pub fn fim_vv(sc: &Scenario) -> Result<Matrix3<f64>> {
    let delay: Matrix3<f64> = (0..sc.snap.n_k).map(|k| fim_vv_delay_slot(sc, k)).sum();
    let doppler = doppler_sum(sc, |b, k| {
        let g = dnu_dv(&sc.snap, b, k);
        Ok(outer(&g, &g))
    })?;
    Ok(delay + doppler)
}

/// Per-satellite vectors that define the nuisance losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVectors {
    /// `sum SNR omega`.
    pub s_time: f64,
    /// `sum SNR omega grad(tau)` for position, orientation, velocity.
    pub v: [Vector3<f64>; 3],
    /// `sum SNR t2 / 2`.
    pub s_freq: f64,
    /// `sum SNR (f_c t2 / 2) grad(nu)` for position, orientation (zero), velocity.
    pub w: [Vector3<f64>; 3],
}

/// Loss vectors of satellite `b`.
pub fn loss_vectors(sc: &Scenario, b: usize) -> Result<LossVectors> {
    let parts = rotation_partials(&sc.rx.phi_u);
    let mut lv = LossVectors {
        s_time: 0.0,
        v: [Vector3::zeros(); 3],
        s_freq: 0.0,
        w: [Vector3::zeros(); 3],
    };
    for k in 0..sc.snap.n_k {
        let om = sc.omega(b, k);
        let gp_nu = dnu_dp(&sc.snap, b, k)?;
        let gv_nu = dnu_dv(&sc.snap, b, k);
        for u in 0..sc.snap.n_u {
            let snr = sc.snr(b, u, k);
            let i = sc.snap.buk(b, u, k);
            let d = sc.snap.delta_buk[i] / SPEED_OF_LIGHT;
            let wt = snr * om;
            lv.s_time += wt;
            lv.v[0] += d * wt;
            lv.v[1] += dtau_dphi_with(&parts, sc.snap.delta_buk[i], &sc.rx.s_tilde[u]) * wt;
            lv.v[2] += d * (k as f64 * sc.cs.delta_t * wt);
            let half = 0.5 * snr * sc.spec.t2_eff;
            lv.s_freq += half;
            lv.w[0] += gp_nu * (sc.spec.f_c * half);
            lv.w[2] += gv_nu * (sc.spec.f_c * half);
        }
    }
    Ok(lv)
}

fn block_index(a: Block) -> usize {
    match a {
        Block::Position => 0,
        Block::Orientation => 1,
        Block::Velocity => 2,
    }
}

/// Information lost on the `(a, b)` block to the unknown offsets.
pub fn loss(sc: &Scenario, offsets: OffsetConfig, a: Block, b: Block) -> Result<Matrix3<f64>> {
    let (ia, ib) = (block_index(a), block_index(b));
    let mut m = Matrix3::zeros();
    for sat in 0..sc.snap.n_b {
        if !offsets.time && !offsets.freq {
            break;
        }
        let lv = loss_vectors(sc, sat)?;
        if offsets.time {
            if !(lv.s_time > 0.0) {
                return Err(Error::SingularNuisance(format!(
                    "no delay information for time offset of satellite {sat}"
                )));
            }
            m += outer(&lv.v[ia], &lv.v[ib]) / lv.s_time;
        }
        if offsets.freq {
            if !(lv.s_freq > 0.0) {
                return Err(Error::SingularNuisance(format!(
                    "no Doppler information for frequency offset of satellite {sat}"
                )));
            }
            m += outer(&lv.w[ia], &lv.w[ib]) / lv.s_freq;
        }
    }
    Ok(m)
}

pub fn loss_pp(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Position, Block::Position)
}

pub fn loss_pphi(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Position, Block::Orientation)
}

pub fn loss_pv(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Position, Block::Velocity)
}

pub fn loss_phiphi(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Orientation, Block::Orientation)
}

pub fn loss_phiv(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Orientation, Block::Velocity)
}

pub fn loss_vv(sc: &Scenario, offsets: OffsetConfig) -> Result<Matrix3<f64>> {
    loss(sc, offsets, Block::Velocity, Block::Velocity)
}

/// The 9x9 location FIM `F` and the nuisance loss `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFim {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl LocationFim {
    /// `J^e = F - G`.
    pub fn efim(&self) -> DMatrix<f64> {
        &self.f - &self.g
    }

    /// FIM block `F(a, b)`.
    pub fn f_block(&self, a: Block, b: Block) -> Matrix3<f64> {
        block_of(&self.f, a, b)
    }

    /// Loss block `G(a, b)`.
    pub fn g_block(&self, a: Block, b: Block) -> Matrix3<f64> {
        block_of(&self.g, a, b)
    }
}

/// 3x3 block `(a, b)` of a 9x9 matrix.
pub fn block_of(m: &DMatrix<f64>, a: Block, b: Block) -> Matrix3<f64> {
    let (ra, rb) = (a.rows(), b.rows());
    Matrix3::from_fn(|i, j| m[(ra[i], rb[j])])
}

fn place(m: &mut DMatrix<f64>, a: Block, b: Block, blk: &Matrix3<f64>) {
    let (ra, rb) = (a.rows(), b.rows());
    for i in 0..3 {
        for j in 0..3 {
            m[(ra[i], rb[j])] = blk[(i, j)];
            m[(rb[j], ra[i])] = blk[(i, j)];
        }
    }
}

/// Assembles `F` from the six FIM blocks and `G` from the six loss blocks.
pub fn location_fim(sc: &Scenario, offsets: OffsetConfig) -> Result<LocationFim> {
    use Block::*;
    let mut f = DMatrix::zeros(9, 9);
    place(&mut f, Position, Position, &fim_pp(sc)?);
    place(&mut f, Position, Orientation, &fim_pphi(sc));
    place(&mut f, Position, Velocity, &fim_pv(sc)?);
    place(&mut f, Orientation, Orientation, &fim_phiphi(sc));
    place(&mut f, Orientation, Velocity, &fim_phiv(sc));
    place(&mut f, Velocity, Velocity, &fim_vv(sc)?);
    let mut g = DMatrix::zeros(9, 9);
    for (i, a) in Block::ALL.iter().enumerate() {
        for b in &Block::ALL[i..] {
            place(&mut g, *a, *b, &loss(sc, offsets, *a, *b)?);
        }
    }
    Ok(LocationFim { f, g })
}

/// `J^e` over `kappa_1` with the configured offsets eliminated.
pub fn efim_kappa1(sc: &Scenario, offsets: OffsetConfig) -> Result<DMatrix<f64>> {
    Ok(location_fim(sc, offsets)?.efim())
}

fn sub(m: &DMatrix<f64>, a: Block, b: Block) -> DMatrix<f64> {
    select(m, &a.rows(), &b.rows())
}

fn inverse_of(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(&symmetrize(m)).map_err(|_| Error::Singular(format!("{what} singular")))
}

/// `J^e_A - J^e_AB (J^e_B)^{-1} J^e_BA` on a 9x9 `J^e`.
pub fn efim_6d_closed(je: &DMatrix<f64>, a: Block, b: Block) -> Result<Matrix3<f64>> {
    let jb_inv = inverse_of(&sub(je, b, b), &format!("inner {} EFIM", b.label()))?;
    let jab = sub(je, a, b);
    let r = sub(je, a, a) - &jab * jb_inv * jab.transpose();
    Ok(Matrix3::from_fn(|i, j| 0.5 * (r[(i, j)] + r[(j, i)])))
}

/// Five-term expansion of the information lost by `target` to the other two
/// blocks, with inner order from [`Block::nine_d_order`].
pub fn nine_d_loss_closed(je: &DMatrix<f64>, target: Block) -> Result<Matrix3<f64>> {
    let (one, two) = target.nine_d_order();
    let j1_inv = inverse_of(&sub(je, one, one), &format!("inner {} EFIM", one.label()))?;
    let j12 = sub(je, one, two);
    let s = sub(je, two, two) - j12.transpose() * &j1_inv * &j12;
    let s_inv = inverse_of(
        &s,
        &format!("inner Schur complement of {} after {}", two.label(), one.label()),
    )?;
    let jt1 = sub(je, target, one);
    let jt2 = sub(je, target, two);
    let a = &jt1 * &j1_inv;
    let nu = &a * jt1.transpose() + &a * &j12 * &s_inv * j12.transpose() * a.transpose()
        - &a * &j12 * &s_inv * jt2.transpose()
        - &jt2 * &s_inv * j12.transpose() * a.transpose()
        + &jt2 * &s_inv * jt2.transpose();
    Ok(Matrix3::from_fn(|i, j| 0.5 * (nu[(i, j)] + nu[(j, i)])))
}

/// `J^e_T` minus the five-term loss.
pub fn efim_9d_closed(je: &DMatrix<f64>, target: Block) -> Result<Matrix3<f64>> {
    Ok(block_of(je, target, target) - nine_d_loss_closed(je, target)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Satellite;

    fn scenario(n_b: usize, n_u: usize, n_k: usize, zero_array: bool) -> Scenario {
        let s = (0..n_u)
            .map(|u| {
                if zero_array {
                    Vector3::zeros()
                } else {
                    Vector3::new(0.15 * (u % 2) as f64 - 0.075, 0.15 * (u / 2) as f64 - 0.075, 0.0)
                }
            })
            .collect();
        let rx = ReceiverState::new(
            Vector3::new(3.0, -1.0, 2.0),
            Vector3::new(0.7, -0.3, 2.1),
            Vector3::new(5.0, 8.0, 0.0),
            s,
        )
        .unwrap();
        let sats = (0..n_b)
            .map(|b| {
                let a = b as f64 * 2.1;
                Satellite::new(
                    Vector3::new(3e5 * a.cos(), 3e5 * a.sin(), 5.2e5),
                    Vector3::new(-7000.0 * a.sin(), 7000.0 * a.cos(), 1000.0),
                )
            })
            .collect();
        let cs = ConstellationState::new(sats, n_k, 0.05).unwrap();
        let spec = SignalSpec::new(1e9, 1e6, 0.1, 0.0, 1e-2).unwrap();
        Scenario::new(rx, cs, spec).unwrap()
    }

    #[test]
    fn zero_relative_velocity_kills_doppler_terms() {
        let mut sc = scenario(2, 1, 2, true);
        let v = sc.rx.v_u;
        for s in &mut sc.cs.satellites {
            s.velocity = v;
        }
        let sc = Scenario::new(sc.rx, sc.cs, sc.spec).unwrap();
        let delay: Matrix3<f64> = (0..2).map(|k| fim_pp_delay_slot(&sc, k)).sum();
        assert!((fim_pp(&sc).unwrap() - delay).norm() <= 1e-15 * delay.norm());
    }

    #[test]
    fn single_link_position_fim_is_rank_deficient() {
        let sc = scenario(1, 1, 1, true);
        let ev = fim_pp(&sc).unwrap().symmetric_eigenvalues();
        assert!(ev.min().abs() <= 1e-10 * ev.max());
    }

    #[test]
    fn centroid_array_has_no_orientation_information() {
        let sc = scenario(2, 3, 2, true);
        assert_eq!(fim_pphi(&sc), Matrix3::zeros());
        assert_eq!(fim_phiphi(&sc), Matrix3::zeros());
        assert_eq!(fim_phiv(&sc), Matrix3::zeros());
        for off in OffsetConfig::ALL {
            assert_eq!(loss_pphi(&sc, off).unwrap(), Matrix3::zeros());
            assert_eq!(loss_phiphi(&sc, off).unwrap(), Matrix3::zeros());
            assert_eq!(loss_phiv(&sc, off).unwrap(), Matrix3::zeros());
        }
    }

    #[test]
    fn one_slot_velocity_delay_terms_vanish() {
        let sc = scenario(2, 4, 1, false);
        assert_eq!(fim_vv_delay_slot(&sc, 0), Matrix3::zeros());
        let doppler = doppler_sum(&sc, |b, k| {
            let g = dnu_dv(&sc.snap, b, k);
            Ok(outer(&g, &g))
        })
        .unwrap();
        assert_eq!(fim_vv(&sc).unwrap(), doppler);
    }

    #[test]
    fn known_offsets_lose_nothing() {
        let sc = scenario(3, 4, 3, false);
        let lf = location_fim(&sc, OffsetConfig::NONE).unwrap();
        assert_eq!(lf.g, DMatrix::zeros(9, 9));
        assert_eq!(lf.efim(), lf.f);
    }

    #[test]
    fn single_measurement_time_offset_absorbs_delay_information() {
        let mut sc = scenario(1, 1, 1, true);
        sc.spec.t2_eff = 0.0;
        let sc = sc.with_spec(sc.spec.clone()).unwrap();
        let je = efim_kappa1(&sc, OffsetConfig::TIME).unwrap();
        let f = fim_pp(&sc).unwrap();
        assert!(block_of(&je, Block::Position, Block::Position).norm() <= 1e-14 * f.norm());
    }

    #[test]
    fn missing_doppler_with_unknown_frequency_offset_is_error() {
        let mut spec = scenario(1, 1, 1, true).spec;
        spec.t2_eff = 0.0;
        let sc = scenario(1, 1, 1, true).with_spec(spec).unwrap();
        assert!(matches!(
            loss_pp(&sc, OffsetConfig::FREQ),
            Err(Error::SingularNuisance(_))
        ));
        assert!(loss_pp(&sc, OffsetConfig::TIME).is_ok());
    }

    #[test]
    fn matrices_are_symmetric_and_loewner_ordered() {
        let sc = scenario(3, 4, 3, false);
        for off in OffsetConfig::ALL {
            let lf = location_fim(&sc, off).unwrap();
            let je = lf.efim();
            assert!((&je - je.transpose()).norm() <= 1e-12 * je.norm());
            let ev = symmetrize(&lf.g).symmetric_eigenvalues();
            assert!(ev.min() >= -1e-12 * ev.max().abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn offset_labels_round_trip() {
        for off in OffsetConfig::ALL {
            assert_eq!(OffsetConfig::parse(off.label()).unwrap(), off);
        }
        assert!(OffsetConfig::parse("clock").is_err());
    }
}
