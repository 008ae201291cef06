//! Scalar signal descriptors feeding every FIM entry.

use crate::error::{Error, Result};

/// Signal parameters shared by all links.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Effective baseband bandwidth, Hz.
    pub alpha1: f64,
    /// Baseband-carrier correlation, in [-1, 1].
    pub alpha2: f64,
    /// Linear SNR applied to every `(b, u, k)` link unless `snr_per_link` is set.
    pub snr: f64,
    /// Optional per-link linear SNR, indexed like `GeometrySnapshot::buk`.
    pub snr_per_link: Option<Vec<f64>>,
    /// Slot duration, seconds.
    pub t_slot: f64,
    /// Effective temporal second moment, s^2.
    pub t2_eff: f64,
    /// Noise spectral density, W/Hz (documentation only).
    pub n0: f64,
}

impl SignalSpec {
    /// Spec with constant SNR (dB) and `t2_eff = T^2 / 3`.
    pub fn new(f_c: f64, alpha1: f64, alpha2: f64, snr_db: f64, t_slot: f64) -> Result<Self> {
        let spec = Self {
            f_c,
            alpha1,
            alpha2,
            snr: db_to_linear(snr_db),
            snr_per_link: None,
            t_slot,
            t2_eff: uniform_t2(t_slot),
            n0: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the documented invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::InvalidInput("carrier frequency must be positive".into()));
        }
        if !(self.alpha1 >= 0.0 && self.alpha1.is_finite()) {
            return Err(Error::InvalidInput("alpha1 must be nonnegative".into()));
        }
        if !(self.alpha2.abs() <= 1.0) {
            return Err(Error::InvalidInput("alpha2 must lie in [-1, 1]".into()));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidInput("snr must be nonnegative".into()));
        }
        if let Some(v) = &self.snr_per_link {
            if !v.iter().all(|s| *s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput("per-link snr must be nonnegative".into()));
            }
        }
        if !(self.t2_eff >= 0.0 && self.t2_eff.is_finite()) {
            return Err(Error::InvalidInput("t2_eff must be nonnegative".into()));
        }
        Ok(())
    }

    /// Linear SNR of link `idx` (flat `(b, u, k)` index).
    pub fn snr_at(&self, idx: usize) -> f64 {
        match &self.snr_per_link {
            Some(v) => v[idx],
            None => self.snr,
        }
    }

    /// Same spec with every SNR multiplied by `s`.
    pub fn scaled_snr(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.snr *= s;
        if let Some(v) = &mut out.snr_per_link {
            v.iter_mut().for_each(|x| *x *= s);
        }
        out
    }
}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Second temporal moment of uniform energy on `[0, T]`.
pub fn uniform_t2(t_slot: f64) -> f64 {
    t_slot * t_slot / 3.0
}

/// Observed carrier `f_c (1 - nu) + eps`.
pub fn observed_frequency(spec: &SignalSpec, nu: f64, eps: f64) -> f64 {
    spec.f_c * (1.0 - nu) + eps
}

/// `omega = alpha1^2 + 2 f_ob alpha1 alpha2 + f_ob^2`.
pub fn omega(spec: &SignalSpec, f_ob: f64) -> f64 {
    spec.alpha1 * spec.alpha1 + 2.0 * f_ob * spec.alpha1 * spec.alpha2 + f_ob * f_ob
}

fn trapezoid(x: &[f64], y: impl Fn(usize) -> f64) -> f64 {
    x.windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (y(i) + y(i + 1)))
        .sum()
}

/// `(alpha1, alpha2)` from a sampled spectral density by trapezoid quadrature.
///
/// `psd` holds samples of `|S(f)|^2` on the strictly increasing grid `freqs`.
pub fn bandwidth_from_psd(freqs: &[f64], psd: &[f64]) -> Result<(f64, f64)> {
    if freqs.len() != psd.len() || freqs.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} frequencies vs {} psd samples",
            freqs.len(),
            psd.len()
        )));
    }
    if freqs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
    }
    if psd.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput("psd must be finite and nonnegative".into()));
    }
    let e0 = trapezoid(freqs, |i| psd[i]);
    if !(e0 > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let e1 = trapezoid(freqs, |i| freqs[i] * psd[i]);
    let e2 = trapezoid(freqs, |i| freqs[i] * freqs[i] * psd[i]);
    let alpha1 = (e2 / e0).sqrt();
    let alpha2 = if e2 > 0.0 { e1 / (e2.sqrt() * e0.sqrt()) } else { 0.0 };
    Ok((alpha1, alpha2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha1: f64, alpha2: f64) -> SignalSpec {
        SignalSpec {
            f_c: 1e9,
            alpha1,
            alpha2,
            snr: 1.0,
            snr_per_link: None,
            t_slot: 1e-3,
            t2_eff: uniform_t2(1e-3),
            n0: 1.0,
        }
    }

    #[test]
    fn observed_frequency_examples() {
        let s = spec(0.0, 0.0);
        assert_eq!(observed_frequency(&s, 0.0, 0.0), 1e9);
        assert!((observed_frequency(&s, 1e-5, 0.0) - 999_990_000.0).abs() < 1e-6);
        assert_eq!(observed_frequency(&s, 0.0, 100.0), 1e9 + 100.0);
    }

    #[test]
    fn omega_examples() {
        assert_eq!(omega(&spec(0.0, 0.3), 2e9), 4e18);
        assert_eq!(omega(&spec(1e6, 0.0), 1e9), 1e12 + 1e18);
        let r = omega(&spec(1e9, -1.0), 1e9);
        assert!(r.abs() < 1e3);
    }

    #[test]
    fn symmetric_psd_has_zero_bcc() {
        let f: Vec<f64> = (-100..=100).map(|i| i as f64).collect();
        let p: Vec<f64> = f.iter().map(|x| (-x * x / 800.0).exp()).collect();
        let (_, a2) = bandwidth_from_psd(&f, &p).unwrap();
        assert!(a2.abs() < 1e-15);
    }

    #[test]
    fn flat_psd_bandwidth() {
        let b = 2e6;
        let n = 20_001;
        let f: Vec<f64> = (0..n).map(|i| -b / 2.0 + b * i as f64 / (n - 1) as f64).collect();
        let p = vec![1.0; n];
        let (a1, a2) = bandwidth_from_psd(&f, &p).unwrap();
        assert!((a1 - b / 12f64.sqrt()).abs() / a1 < 1e-7);
        assert!(a2.abs() < 1e-12);
    }

    #[test]
    fn narrow_psd_limits() {
        for f0 in [-3e5, 4e5] {
            let n = 4001;
            let f: Vec<f64> = (0..n).map(|i| f0 - 1e3 + 2e3 * i as f64 / (n - 1) as f64).collect();
            let p: Vec<f64> = f.iter().map(|x| (-((x - f0) / 20.0).powi(2)).exp()).collect();
            let (a1, a2) = bandwidth_from_psd(&f, &p).unwrap();
            assert!((a1 - f0.abs()).abs() / f0.abs() < 1e-6);
            assert!((a2 - f0.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_energy_is_error() {
        assert_eq!(bandwidth_from_psd(&[0.0, 1.0], &[0.0, 0.0]), Err(Error::ZeroEnergy));
    }

    #[test]
    fn psd_refinement_converges() {
        let run = |n: usize| {
            let f: Vec<f64> = (0..n).map(|i| -5.0 + 10.0 * i as f64 / (n - 1) as f64).collect();
            let p: Vec<f64> = f.iter().map(|x| (-(x - 0.7) * (x - 0.7)).exp()).collect();
            bandwidth_from_psd(&f, &p).unwrap()
        };
        let (a, b) = run(2001);
        let (c, d) = run(4001);
        assert!(((a - c) / a).abs() < 1e-6 && ((b - d) / b).abs() < 1e-6);
    }

    #[test]
    fn t2_default() {
        assert!((uniform_t2(1e-3) - 3.333_333e-7).abs() < 1e-12);
    }
}
