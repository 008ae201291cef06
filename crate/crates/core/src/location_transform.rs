//! Derivatives of the channel parameters with respect to the location
//! parameters `kappa = [p_U, Phi_U, v_U, zeta_1 .. zeta_{N_B}]`.
//!
//! The Doppler is referenced to the receiver centroid at the reference epoch,
//! so it carries no orientation dependence and `d nu / d v_U = -Delta_{bU,k} / c`.

use nalgebra::{DMatrix, Vector3};

use crate::channel_fim::block_len;
use crate::error::{Error, Result};
use crate::geometry::{rotation_partials, ConstellationState, GeometrySnapshot, ReceiverState, SPEED_OF_LIGHT};

/// Rows of the position block.
pub const POS: [usize; 3] = [0, 1, 2];
/// Rows of the orientation block.
pub const ORI: [usize; 3] = [3, 4, 5];
/// Rows of the velocity block.
pub const VEL: [usize; 3] = [6, 7, 8];

/// `d tau_{bu,k} / d p_U = Delta_{bu,k} / c`.
pub fn dtau_dp(snap: &GeometrySnapshot, b: usize, u: usize, k: usize) -> Vector3<f64> {
    snap.delta_buk[snap.buk(b, u, k)] / SPEED_OF_LIGHT
}

/// `d nu_{b,k} / d p_U`: the relative velocity projected off the line of
/// sight, divided by `c * d_{bU,k}`.
pub fn dnu_dp(snap: &GeometrySnapshot, b: usize, k: usize) -> Result<Vector3<f64>> {
    let i = snap.bk(b, k);
    let d = snap.d_bk[i];
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "zero range to satellite {b} at slot {k}"
        )));
    }
    let dir = snap.delta_bk[i];
    let vr = snap.v_rel[b];
    Ok((vr - dir * dir.dot(&vr)) / (SPEED_OF_LIGHT * d))
}

/// `d tau_{bu,k} / d Phi_U = [Delta^T dQ/dalpha s; Delta^T dQ/dpsi s; Delta^T dQ/dphi s] / c`.
pub fn dtau_dphi(snap: &GeometrySnapshot, rx: &ReceiverState, b: usize, u: usize, k: usize) -> Vector3<f64> {
    let parts = rotation_partials(&rx.phi_u);
    dtau_dphi_with(&parts, snap.delta_buk[snap.buk(b, u, k)], &rx.s_tilde[u])
}

pub(crate) fn dtau_dphi_with(parts: &[nalgebra::Matrix3<f64>; 3], dir: Vector3<f64>, s: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        dir.dot(&(parts[0] * s)),
        dir.dot(&(parts[1] * s)),
        dir.dot(&(parts[2] * s)),
    ) / SPEED_OF_LIGHT
}

/// `d tau_{bu,k} / d v_U = k * delta_t * Delta_{bu,k} / c` (slots from zero).
pub fn dtau_dv(snap: &GeometrySnapshot, b: usize, u: usize, k: usize, delta_t: f64) -> Vector3<f64> {
    (k as f64 * delta_t) * dtau_dp(snap, b, u, k)
}

/// `d nu_{b,k} / d v_U = -Delta_{bU,k} / c`.
pub fn dnu_dv(snap: &GeometrySnapshot, b: usize, k: usize) -> Vector3<f64> {
    -snap.delta_bk[snap.bk(b, k)] / SPEED_OF_LIGHT
}

/// Transformation matrix: rows are location parameters, columns channel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub n_b: usize,
    pub n_u: usize,
    pub n_k: usize,
    /// `(9 + 3 N_B) x (N_B * (N_U N_K + N_K + 3))`.
    pub matrix: DMatrix<f64>,
}

impl Jacobian {
    /// Zero matrix of the right shape with identity nuisance rows.
    pub fn with_nuisance_identity(n_b: usize, n_u: usize, n_k: usize) -> Self {
        let n = block_len(n_u, n_k);
        let mut matrix = DMatrix::zeros(9 + 3 * n_b, n * n_b);
        for b in 0..n_b {
            for j in 0..3 {
                matrix[(nuisance_row(b, j), b * n + n_u * n_k + n_k + j)] = 1.0;
            }
        }
        Self { n_b, n_u, n_k, matrix }
    }

    /// Column of `tau_{b,u,k}`.
    pub fn tau_col(&self, b: usize, u: usize, k: usize) -> usize {
        b * block_len(self.n_u, self.n_k) + u * self.n_k + k
    }

    /// Column of `nu_{b,k}`.
    pub fn nu_col(&self, b: usize, k: usize) -> usize {
        b * block_len(self.n_u, self.n_k) + self.n_u * self.n_k + k
    }
}

/// Row of nuisance `j` (0 = gain, 1 = time offset, 2 = frequency offset) of satellite `b`.
pub fn nuisance_row(b: usize, j: usize) -> usize {
    9 + 3 * b + j
}

/// Assembles the full transformation matrix from analytic derivatives.
pub fn build_jacobian(rx: &ReceiverState, cs: &ConstellationState, snap: &GeometrySnapshot) -> Result<Jacobian> {
    if snap.n_b != cs.n_b() || snap.n_k != cs.n_k || snap.n_u != rx.n_u() {
        return Err(Error::DimensionMismatch(
            "snapshot does not match receiver/constellation".into(),
        ));
    }
    let mut jac = Jacobian::with_nuisance_identity(snap.n_b, snap.n_u, snap.n_k);
    let parts = rotation_partials(&rx.phi_u);
    for b in 0..snap.n_b {
        for k in 0..snap.n_k {
            for u in 0..snap.n_u {
                let col = jac.tau_col(b, u, k);
                let gp = dtau_dp(snap, b, u, k);
                let go = dtau_dphi_with(&parts, snap.delta_buk[snap.buk(b, u, k)], &rx.s_tilde[u]);
                let gv = dtau_dv(snap, b, u, k, cs.delta_t);
                for i in 0..3 {
                    jac.matrix[(POS[i], col)] = gp[i];
                    jac.matrix[(ORI[i], col)] = go[i];
                    jac.matrix[(VEL[i], col)] = gv[i];
                }
            }
            let col = jac.nu_col(b, k);
            let gp = dnu_dp(snap, b, k)?;
            let gv = dnu_dv(snap, b, k);
            for i in 0..3 {
                jac.matrix[(POS[i], col)] = gp[i];
                jac.matrix[(VEL[i], col)] = gv[i];
            }
        }
    }
    Ok(jac)
}
