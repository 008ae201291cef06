//! Receiver and constellation geometry.
//!
//! Positions, rotations, line-of-sight directions, delays and Dopplers for
//! every (satellite `b`, antenna `u`, slot `k`) triple. Slots are indexed from
//! zero, so slot `k` is propagated by `k * delta_t` from the reference epoch.
//!
//! Conventions:
//! - `Q = R_z(alpha) * R_y(psi) * R_x(phi)` (yaw, pitch, roll).
//! - Direction vectors point from the satellite to the receiver.
//! - The Doppler `nu_{b,k} = Delta_{bU,k}^T (v_b - v_U) / c` is dimensionless.
//!   Its line of sight runs from the satellite at slot `k` to the receiver
//!   centroid at the reference epoch, so `d nu / d v_U = -Delta_{bU,k} / c`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Unknown receiver state plus the array layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverState {
    /// Centroid position at the reference epoch, meters.
    pub p_u: Vector3<f64>,
    /// Orientation angles `[alpha, psi, phi]`, radians.
    pub phi_u: Vector3<f64>,
    /// Velocity, m/s.
    pub v_u: Vector3<f64>,
    /// Antenna offsets in the body frame, meters.
    pub s_tilde: Vec<Vector3<f64>>,
}

impl ReceiverState {
    /// Validated constructor.
    pub fn new(p_u: Vector3<f64>, phi_u: Vector3<f64>, v_u: Vector3<f64>, s_tilde: Vec<Vector3<f64>>) -> Result<Self> {
        let rx = Self {
            p_u,
            phi_u,
            v_u,
            s_tilde,
        };
        rx.validate()?;
        Ok(rx)
    }

    /// Checks the documented invariants.
    pub fn validate(&self) -> Result<()> {
        if self.s_tilde.is_empty() {
            return Err(Error::InvalidInput("receiver needs at least one antenna".into()));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.p_u) || !finite(&self.phi_u) || !finite(&self.v_u) {
            return Err(Error::InvalidInput("receiver state must be finite".into()));
        }
        if !self.s_tilde.iter().all(finite) {
            return Err(Error::InvalidInput("antenna offsets must be finite".into()));
        }
        Ok(())
    }

    /// Number of receive antennas `N_U`.
    pub fn n_u(&self) -> usize {
        self.s_tilde.len()
    }

    /// Position of antenna `u` at slot `k`:
    /// `p_U + k * delta_t * v_U + Q(Phi_U) * s_tilde_u`.
    pub fn antenna_position(&self, u: usize, k: usize, delta_t: f64) -> Result<Vector3<f64>> {
        let s = self
            .s_tilde
            .get(u)
            .ok_or_else(|| Error::IndexOutOfRange(format!("antenna {u} of {}", self.n_u())))?;
        Ok(self.centroid(k, delta_t) + rotation_matrix(&self.phi_u) * s)
    }

    /// Centroid position at slot `k`.
    pub fn centroid(&self, k: usize, delta_t: f64) -> Vector3<f64> {
        self.p_u + (k as f64 * delta_t) * self.v_u
    }
}

/// One transmitting satellite with its reference state and nuisance values.
#[derive(Debug, Clone, PartialEq)]
pub struct Satellite {
    /// Position at the reference epoch, meters.
    pub p_ref: Vector3<f64>,
    /// Velocity, m/s (held constant over the observation window).
    pub velocity: Vector3<f64>,
    /// Channel gain magnitude `|beta_b|`.
    pub gain_abs: f64,
    /// Time offset `delta_b`, seconds.
    pub time_offset: f64,
    /// Frequency offset `epsilon_b`, Hz.
    pub freq_offset: f64,
}

impl Satellite {
    /// Satellite with unit gain and zero clock offsets.
    pub fn new(p_ref: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self {
            p_ref,
            velocity,
            gain_abs: 1.0,
            time_offset: 0.0,
            freq_offset: 0.0,
        }
    }
}

/// Satellites plus the slot layout shared by all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationState {
    pub satellites: Vec<Satellite>,
    /// Number of transmission slots `N_K`.
    pub n_k: usize,
    /// Slot spacing, seconds.
    pub delta_t: f64,
}

impl ConstellationState {
    /// Validated constructor.
    pub fn new(satellites: Vec<Satellite>, n_k: usize, delta_t: f64) -> Result<Self> {
        let cs = Self {
            satellites,
            n_k,
            delta_t,
        };
        cs.validate()?;
        Ok(cs)
    }

    /// Checks the documented invariants.
    pub fn validate(&self) -> Result<()> {
        if self.satellites.is_empty() {
            return Err(Error::InvalidInput("constellation needs at least one satellite".into()));
        }
        if self.n_k == 0 {
            return Err(Error::InvalidInput("need at least one slot".into()));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::InvalidInput("slot spacing must be positive".into()));
        }
        for s in &self.satellites {
            let ok = s.p_ref.iter().chain(s.velocity.iter()).all(|x| x.is_finite())
                && s.gain_abs.is_finite()
                && s.time_offset.is_finite()
                && s.freq_offset.is_finite();
            if !ok {
                return Err(Error::InvalidInput("satellite state must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of satellites `N_B`.
    pub fn n_b(&self) -> usize {
        self.satellites.len()
    }
}

/// Position of satellite `b` at slot `k`: `p_b_ref + k * delta_t * v_b`.
pub fn satellite_position(cs: &ConstellationState, b: usize, k: usize) -> Result<Vector3<f64>> {
    let sat = cs
        .satellites
        .get(b)
        .ok_or_else(|| Error::IndexOutOfRange(format!("satellite {b} of {}", cs.n_b())))?;
    if k >= cs.n_k {
        return Err(Error::IndexOutOfRange(format!("slot {k} of {}", cs.n_k)));
    }
    Ok(sat.p_ref + (k as f64 * cs.delta_t) * sat.velocity)
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn drz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn dry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// Rotation matrix `Q = R_z(alpha) R_y(psi) R_x(phi)` for `phi_u = [alpha, psi, phi]`.
pub fn rotation_matrix(phi_u: &Vector3<f64>) -> Matrix3<f64> {
    rz(phi_u[0]) * ry(phi_u[1]) * rx(phi_u[2])
}

/// Partial derivatives `[dQ/dalpha, dQ/dpsi, dQ/dphi]`.
pub fn rotation_partials(phi_u: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (a, p, f) = (phi_u[0], phi_u[1], phi_u[2]);
    [drz(a) * ry(p) * rx(f), rz(a) * dry(p) * rx(f), rz(a) * ry(p) * drx(f)]
}

/// Ranges, directions, delays and Dopplers for a receiver/constellation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySnapshot {
    pub n_b: usize,
    pub n_u: usize,
    pub n_k: usize,
    /// Antenna ranges `d_{bu,k}`, indexed by [`GeometrySnapshot::buk`].
    pub d_buk: Vec<f64>,
    /// Unit directions satellite to antenna, indexed by [`GeometrySnapshot::buk`].
    pub delta_buk: Vec<Vector3<f64>>,
    /// Delays `tau_{bu,k}`, seconds, indexed by [`GeometrySnapshot::buk`].
    pub tau_buk: Vec<f64>,
    /// Doppler ranges `d_{bU,k}`, indexed by [`GeometrySnapshot::bk`].
    pub d_bk: Vec<f64>,
    /// Doppler line-of-sight directions `Delta_{bU,k}`, indexed by [`GeometrySnapshot::bk`].
    pub delta_bk: Vec<Vector3<f64>>,
    /// Normalized Dopplers `nu_{b,k}`, indexed by [`GeometrySnapshot::bk`].
    pub nu_bk: Vec<f64>,
    /// Relative velocities `v_b - v_U`, one per satellite.
    pub v_rel: Vec<Vector3<f64>>,
}

impl GeometrySnapshot {
    /// Flat index of `(b, u, k)`.
    pub fn buk(&self, b: usize, u: usize, k: usize) -> usize {
        (b * self.n_u + u) * self.n_k + k
    }

    /// Flat index of `(b, k)`.
    pub fn bk(&self, b: usize, k: usize) -> usize {
        b * self.n_k + k
    }
}

/// Evaluates every range, direction, delay and Doppler.
pub fn snapshot(rx: &ReceiverState, cs: &ConstellationState) -> Result<GeometrySnapshot> {
    rx.validate()?;
    cs.validate()?;
    let (n_b, n_u, n_k) = (cs.n_b(), rx.n_u(), cs.n_k);
    let q = rotation_matrix(&rx.phi_u);
    let body: Vec<Vector3<f64>> = rx.s_tilde.iter().map(|s| q * s).collect();
    let mut snap = GeometrySnapshot {
        n_b,
        n_u,
        n_k,
        d_buk: Vec::with_capacity(n_b * n_u * n_k),
        delta_buk: Vec::with_capacity(n_b * n_u * n_k),
        tau_buk: Vec::with_capacity(n_b * n_u * n_k),
        d_bk: Vec::with_capacity(n_b * n_k),
        delta_bk: Vec::with_capacity(n_b * n_k),
        nu_bk: Vec::with_capacity(n_b * n_k),
        v_rel: Vec::with_capacity(n_b),
    };
    for (b, sat) in cs.satellites.iter().enumerate() {
        for s in &body {
            for k in 0..n_k {
                let diff = rx.centroid(k, cs.delta_t) + s - satellite_position(cs, b, k)?;
                let d = diff.norm();
                if !(d > 0.0) {
                    return Err(Error::DegenerateGeometry(format!(
                        "antenna coincides with satellite {b} at slot {k}"
                    )));
                }
                snap.d_buk.push(d);
                snap.delta_buk.push(diff / d);
                snap.tau_buk.push(d / SPEED_OF_LIGHT);
            }
        }
        let v_rel = sat.velocity - rx.v_u;
        for k in 0..n_k {
            let diff = rx.p_u - satellite_position(cs, b, k)?;
            let d = diff.norm();
            if !(d > 0.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "centroid coincides with satellite {b} at slot {k}"
                )));
            }
            let dir = diff / d;
            snap.d_bk.push(d);
            snap.delta_bk.push(dir);
            snap.nu_bk.push(dir.dot(&v_rel) / SPEED_OF_LIGHT);
        }
        snap.v_rel.push(v_rel);
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn single(p_sat: Vector3<f64>, v_sat: Vector3<f64>) -> (ReceiverState, ConstellationState) {
        let rx = ReceiverState::new(
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
            vec![Vector3::zeros()],
        )
        .unwrap();
        let cs = ConstellationState::new(vec![Satellite::new(p_sat, v_sat)], 1, 1.0).unwrap();
        (rx, cs)
    }

    #[test]
    fn rotation_identity_and_quarter_turn() {
        assert_eq!(rotation_matrix(&Vector3::zeros()), Matrix3::identity());
        let q = rotation_matrix(&Vector3::new(FRAC_PI_2, 0.0, 0.0));
        let y = q * Vector3::x();
        assert!((y - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let q = rotation_matrix(&Vector3::new(0.3, -0.2, 0.7));
        assert!((q.transpose() * q - Matrix3::identity()).norm() < 1e-12);
        assert!((q.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_partials_match_differences() {
        let phi = Vector3::new(0.4, -1.1, 2.3);
        let parts = rotation_partials(&phi);
        let h = 1e-6;
        for (i, part) in parts.iter().enumerate() {
            let mut hi = phi;
            let mut lo = phi;
            hi[i] += h;
            lo[i] -= h;
            let fd = (rotation_matrix(&hi) - rotation_matrix(&lo)) / (2.0 * h);
            assert!((fd - part).norm() < 1e-9);
        }
    }

    #[test]
    fn antenna_positions() {
        let mut rx = ReceiverState::new(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::zeros(),
            Vector3::new(10.0, 0.0, 0.0),
            vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(rx.antenna_position(0, 0, 0.1).unwrap(), rx.p_u);
        assert_eq!(
            rx.antenna_position(1, 0, 0.1).unwrap(),
            rx.p_u + Vector3::new(1.0, 0.0, 0.0)
        );
        let p = rx.antenna_position(0, 2, 0.1).unwrap();
        assert!((p - (rx.p_u + Vector3::new(2.0, 0.0, 0.0))).norm() < 1e-12);
        assert!(rx.antenna_position(2, 0, 0.1).is_err());
        rx.s_tilde.clear();
        assert!(rx.validate().is_err());
    }

    #[test]
    fn satellite_positions() {
        let v = Vector3::new(0.0, 7500.0, 0.0);
        let cs = ConstellationState::new(vec![Satellite::new(Vector3::zeros(), v)], 4, 1.0).unwrap();
        assert_eq!(satellite_position(&cs, 0, 0).unwrap(), Vector3::zeros());
        assert_eq!(satellite_position(&cs, 0, 1).unwrap(), v);
        let cs2 = ConstellationState::new(vec![Satellite::new(Vector3::zeros(), v)], 4, 0.025).unwrap();
        let p = satellite_position(&cs2, 0, 3).unwrap();
        assert!((p.norm() - 562.5).abs() < 1e-9);
        assert!(satellite_position(&cs2, 0, 4).is_err());
        assert!(satellite_position(&cs2, 1, 0).is_err());
    }

    #[test]
    fn zenith_delay_and_doppler_sign() {
        let c = SPEED_OF_LIGHT;
        let (rx, cs) = single(Vector3::new(0.0, 0.0, 550e3), Vector3::new(0.0, 0.0, -c / 1000.0));
        let snap = snapshot(&rx, &cs).unwrap();
        assert!((snap.tau_buk[0] - 550e3 / c).abs() < 1e-18);
        assert!((snap.tau_buk[0] - 1.834e-3).abs() < 1e-6);
        assert!((snap.nu_bk[0] - 1e-3).abs() < 1e-15);
        assert!((snap.delta_bk[0] - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn equal_velocities_give_zero_doppler() {
        let v = Vector3::new(3.0, -4.0, 5.0);
        let (mut rx, cs) = single(Vector3::new(1e5, 2e5, 5e5), v);
        rx.v_u = v;
        let snap = snapshot(&rx, &cs).unwrap();
        assert!(snap.nu_bk.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn coincident_antenna_is_degenerate() {
        let (rx, cs) = single(Vector3::zeros(), Vector3::zeros());
        assert!(matches!(snapshot(&rx, &cs), Err(Error::DegenerateGeometry(_))));
    }
}
