//! Closed-form FIM over the channel parameters.
//!
//! Per satellite the ordering is fixed:
//! `[tau_{b,1,1} .. tau_{b,N_U,N_K}, nu_{b,1} .. nu_{b,N_K}, beta_b, delta_b, epsilon_b]`
//! with delays antenna-major (antenna outer, slot inner). Satellites are
//! independent, so the full matrix is block diagonal.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{ConstellationState, GeometrySnapshot};
use crate::signal_model::{observed_frequency, omega, SignalSpec};

/// `F(tau, tau) = SNR * omega`.
pub fn fim_tau_tau(snr: f64, omega: f64) -> f64 {
    snr * omega
}

/// `F(tau, delta) = -SNR * omega`.
pub fn fim_tau_delta(snr: f64, omega: f64) -> f64 {
    -snr * omega
}

/// `F(nu, nu) = 0.5 * SNR * f_c^2 * t2`.
pub fn fim_nu_nu(spec: &SignalSpec, snr: f64) -> f64 {
    0.5 * snr * spec.f_c * spec.f_c * spec.t2_eff
}

/// `F(nu, eps) = -0.5 * SNR * f_c * t2`.
pub fn fim_nu_eps(spec: &SignalSpec, snr: f64) -> f64 {
    -0.5 * snr * spec.f_c * spec.t2_eff
}

/// `F(eps, eps) = 0.5 * SNR * t2`.
pub fn fim_eps_eps(spec: &SignalSpec, snr: f64) -> f64 {
    0.5 * snr * spec.t2_eff
}

/// `F(beta, beta) = SNR / (4 pi^2 |beta|^2)`.
pub fn fim_beta_beta(snr: f64, beta_abs: f64) -> Result<f64> {
    if beta_abs == 0.0 {
        return Err(Error::ZeroGain);
    }
    Ok(snr / (4.0 * PI * PI * beta_abs * beta_abs))
}

/// `omega_{b,k}` evaluated at the observed frequency of `(b, k)`.
pub fn link_omega(spec: &SignalSpec, snap: &GeometrySnapshot, cs: &ConstellationState, b: usize, k: usize) -> f64 {
    let f_ob = observed_frequency(spec, snap.nu_bk[snap.bk(b, k)], cs.satellites[b].freq_offset);
    omega(spec, f_ob)
}

/// Block-diagonal channel FIM.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFim {
    pub n_u: usize,
    pub n_k: usize,
    /// One symmetric block per satellite.
    pub blocks: Vec<DMatrix<f64>>,
}

impl ChannelFim {
    /// Size of one satellite block.
    pub fn block_len(&self) -> usize {
        block_len(self.n_u, self.n_k)
    }

    /// Row of `tau_{b,u,k}` within a satellite block.
    pub fn tau_index(&self, u: usize, k: usize) -> usize {
        u * self.n_k + k
    }

    /// Row of `nu_{b,k}` within a satellite block.
    pub fn nu_index(&self, k: usize) -> usize {
        self.n_u * self.n_k + k
    }

    /// Row of `beta_b` within a satellite block.
    pub fn beta_index(&self) -> usize {
        self.n_u * self.n_k + self.n_k
    }

    /// Row of `delta_b` within a satellite block.
    pub fn delta_index(&self) -> usize {
        self.beta_index() + 1
    }

    /// Row of `epsilon_b` within a satellite block.
    pub fn eps_index(&self) -> usize {
        self.beta_index() + 2
    }

    /// Dense block-diagonal matrix over all satellites.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.block_len();
        let mut out = DMatrix::zeros(n * self.blocks.len(), n * self.blocks.len());
        for (b, blk) in self.blocks.iter().enumerate() {
            out.view_mut((b * n, b * n), (n, n)).copy_from(blk);
        }
        out
    }
}

/// Length of one satellite block.
pub fn block_len(n_u: usize, n_k: usize) -> usize {
    n_u * n_k + n_k + 3
}

/// Assembles the channel FIM with the zero pattern of the delay, Doppler and
/// gain independence results.
pub fn assemble_channel_fim(snap: &GeometrySnapshot, cs: &ConstellationState, spec: &SignalSpec) -> Result<ChannelFim> {
    if snap.n_b != cs.n_b() || snap.n_k != cs.n_k {
        return Err(Error::DimensionMismatch("snapshot does not match constellation".into()));
    }
    if let Some(v) = &spec.snr_per_link {
        if v.len() != snap.n_b * snap.n_u * snap.n_k {
            return Err(Error::DimensionMismatch(format!(
                "{} per-link snr values for {} links",
                v.len(),
                snap.n_b * snap.n_u * snap.n_k
            )));
        }
    }
    let (n_u, n_k) = (snap.n_u, snap.n_k);
    let mut fim = ChannelFim {
        n_u,
        n_k,
        blocks: Vec::with_capacity(snap.n_b),
    };
    let n = block_len(n_u, n_k);
    for b in 0..snap.n_b {
        let mut blk = DMatrix::zeros(n, n);
        let (ib, id, ie) = (fim.beta_index(), fim.delta_index(), fim.eps_index());
        for u in 0..n_u {
            for k in 0..n_k {
                let snr = spec.snr_at(snap.buk(b, u, k));
                let om = link_omega(spec, snap, cs, b, k);
                let it = fim.tau_index(u, k);
                let iv = fim.nu_index(k);
                blk[(it, it)] = fim_tau_tau(snr, om);
                blk[(it, id)] = fim_tau_delta(snr, om);
                blk[(id, it)] = blk[(it, id)];
                blk[(id, id)] += fim_tau_tau(snr, om);
                blk[(iv, iv)] += fim_nu_nu(spec, snr);
                blk[(iv, ie)] += fim_nu_eps(spec, snr);
                blk[(ie, iv)] = blk[(iv, ie)];
                blk[(ie, ie)] += fim_eps_eps(spec, snr);
                blk[(ib, ib)] += fim_beta_beta(snr, cs.satellites[b].gain_abs)?;
            }
        }
        fim.blocks.push(blk);
    }
    Ok(fim)
}
