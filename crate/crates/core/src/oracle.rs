//! Independent numerical ground truth: finite-difference Jacobians,
//! congruence-product FIMs and Schur complements.
//!
//! Nothing here reuses the closed-form derivative or FIM-block code; only the
//! forward model (positions, rotation) is shared.

use nalgebra::{DMatrix, Vector3};

use crate::channel_fim::ChannelFim;
use crate::error::{Error, Result};
use crate::geometry::{rotation_matrix, satellite_position, ConstellationState, ReceiverState, SPEED_OF_LIGHT};
use crate::linalg::{select, spd_inverse};
use crate::location_transform::Jacobian;

/// Central-difference step `max(|x|, 1) * eps^(1/3)`.
pub fn step(x: f64) -> f64 {
    x.abs().max(1.0) * f64::EPSILON.cbrt()
}

fn kappa(rx: &ReceiverState) -> [f64; 9] {
    let mut x = [0.0; 9];
    for i in 0..3 {
        x[i] = rx.p_u[i];
        x[3 + i] = rx.phi_u[i];
        x[6 + i] = rx.v_u[i];
    }
    x
}

fn with_kappa(rx: &ReceiverState, x: &[f64; 9]) -> ReceiverState {
    let mut out = rx.clone();
    out.p_u = Vector3::new(x[0], x[1], x[2]);
    out.phi_u = Vector3::new(x[3], x[4], x[5]);
    out.v_u = Vector3::new(x[6], x[7], x[8]);
    out
}

/// Antenna position before subtracting the satellite (small magnitude).
fn antenna(rx: &ReceiverState, u: usize, k: usize, dt: f64) -> Vector3<f64> {
    rx.p_u + (k as f64 * dt) * rx.v_u + rotation_matrix(&rx.phi_u) * rx.s_tilde[u]
}

/// `|a| - |b|` without cancellation, given `a - b` formed from small vectors.
fn norm_diff(a: &Vector3<f64>, b: &Vector3<f64>, a_minus_b: &Vector3<f64>) -> f64 {
    a_minus_b.dot(&(a + b)) / (a.norm() + b.norm())
}

/// Central differences of every delay and Doppler with respect to the nine
/// receiver parameters. Nuisance rows are the identity, as in the analytic map.
pub fn numeric_jacobian(rx: &ReceiverState, cs: &ConstellationState) -> Result<Jacobian> {
    rx.validate()?;
    cs.validate()?;
    let (n_b, n_u, n_k) = (cs.n_b(), rx.n_u(), cs.n_k);
    let mut jac = Jacobian::with_nuisance_identity(n_b, n_u, n_k);
    let x0 = kappa(rx);
    for i in 0..9 {
        let h = step(x0[i]);
        let (mut xp, mut xm) = (x0, x0);
        xp[i] += h;
        xm[i] -= h;
        let width = xp[i] - xm[i];
        let (rp, rm) = (with_kappa(rx, &xp), with_kappa(rx, &xm));
        for b in 0..n_b {
            let sat_v = cs.satellites[b].velocity;
            for k in 0..n_k {
                let sat = satellite_position(cs, b, k)?;
                for u in 0..n_u {
                    let (ap, am) = (antenna(&rp, u, k, cs.delta_t), antenna(&rm, u, k, cs.delta_t));
                    let (a, bb) = (ap - sat, am - sat);
                    if a.norm() == 0.0 || bb.norm() == 0.0 {
                        return Err(Error::DegenerateGeometry(format!("satellite {b} slot {k}")));
                    }
                    let col = jac.tau_col(b, u, k);
                    jac.matrix[(i, col)] = norm_diff(&a, &bb, &(ap - am)) / SPEED_OF_LIGHT / width;
                }
                // nu = D . w / (c |D|) with D = p_U - p_b, w = v_b - v_U
                let (dp, dm) = (rp.p_u - sat, rm.p_u - sat);
                let (np, nm) = (dp.norm(), dm.norm());
                if np == 0.0 || nm == 0.0 {
                    return Err(Error::DegenerateGeometry(format!("satellite {b} slot {k}")));
                }
                let wp = sat_v - rp.v_u;
                let inv_diff = -norm_diff(&dp, &dm, &(rp.p_u - rm.p_u)) / (np * nm);
                let dnu = (rp.p_u - rm.p_u).dot(&wp) / np + dm.dot(&wp) * inv_diff + dm.dot(&(rm.v_u - rp.v_u)) / nm;
                let col = jac.nu_col(b, k);
                jac.matrix[(i, col)] = dnu / SPEED_OF_LIGHT / width;
            }
        }
    }
    Ok(jac)
}

/// `Upsilon * J_eta * Upsilon^T`.
pub fn congruence_fim(jac: &Jacobian, channel: &ChannelFim) -> Result<DMatrix<f64>> {
    let j_eta = channel.to_dense();
    if jac.matrix.ncols() != j_eta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "jacobian has {} columns, channel FIM has {} rows",
            jac.matrix.ncols(),
            j_eta.nrows()
        )));
    }
    Ok(&jac.matrix * j_eta * jac.matrix.transpose())
}

fn complement(n: usize, keep: &[usize]) -> Result<Vec<usize>> {
    if let Some(i) = keep.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange(format!("index {i} of {n}")));
    }
    Ok((0..n).filter(|i| !keep.contains(i)).collect())
}

/// Subtracted term `J_12 J_2^{-1} J_21` of the Schur complement onto `keep`.
pub fn schur_loss(matrix: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let drop = complement(matrix.nrows(), keep)?;
    if drop.is_empty() {
        return Ok(DMatrix::zeros(keep.len(), keep.len()));
    }
    let j12 = select(matrix, keep, &drop);
    let j2 = select(matrix, &drop, &drop);
    let inv = spd_inverse(&j2)?;
    Ok(&j12 * inv * j12.transpose())
}

/// Schur complement `J_1 - J_12 J_2^{-1} J_21` onto the `keep` indices.
pub fn schur(matrix: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let loss = schur_loss(matrix, keep)?;
    Ok(select(matrix, keep, keep) - loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_block_diagonal_unchanged() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 3.0, 0.0, 0.0, 0.0, 4.0]);
        let s = schur(&a, &[0, 1]).unwrap();
        assert_eq!(s, select(&a, &[0, 1], &[0, 1]));
    }

    #[test]
    fn schur_scalar_case() {
        let (a, b, d) = (5.0, 2.0, 4.0);
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
        let s = schur(&m, &[0]).unwrap();
        assert!((s[(0, 0)] - (a - b * b / d)).abs() < 1e-15);
    }

    #[test]
    fn schur_matches_inverse_block() {
        let g = DMatrix::from_fn(9, 12, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0 + 0.1 * i as f64);
        let a = &g * g.transpose() + DMatrix::identity(9, 9);
        let s = schur(&a, &[0, 1, 2]).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let want = select(&inv, &[0, 1, 2], &[0, 1, 2]).try_inverse().unwrap();
        assert!((s - &want).norm() / want.norm() < 1e-10);
    }

    #[test]
    fn schur_rejects_singular_trailing_block() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(schur(&m, &[0]).is_err());
        assert!(schur(&m, &[5]).is_err());
    }

    #[test]
    fn step_policy() {
        assert_eq!(step(0.0), f64::EPSILON.cbrt());
        assert_eq!(step(-100.0), 100.0 * f64::EPSILON.cbrt());
    }
}
