//! Generic random geometries for scans, sweeps and oracle checks.
//!
//! The receiver sits near the origin of a local frame with `+z` up and the
//! Earth centre at `(0, 0, -R)`. Satellites lie on a shell at altitude `H`,
//! inside a cone around the zenith, moving tangentially to the shell.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::efim_engine::Scenario;
use crate::error::{Error, Result};
use crate::geometry::{ConstellationState, ReceiverState, Satellite, SPEED_OF_LIGHT};
use crate::signal_model::{db_to_linear, uniform_t2, SignalSpec};

/// Parameters of the random geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryModel {
    pub earth_radius_m: f64,
    pub altitude_m: f64,
    /// Largest angle from zenith of a satellite, degrees.
    pub max_zenith_deg: f64,
    pub satellite_speed: f64,
    pub receiver_speed: f64,
    /// Half-width of the uniform box holding the receiver centroid, meters.
    pub receiver_position_spread: f64,
    /// Array pitch in carrier wavelengths.
    pub array_spacing_wavelengths: f64,
}

impl Default for GeometryModel {
    fn default() -> Self {
        Self {
            earth_radius_m: 6_371e3,
            altitude_m: 550e3,
            max_zenith_deg: 60.0,
            satellite_speed: 7_560.0,
            receiver_speed: 10.0,
            receiver_position_spread: 10.0,
            array_spacing_wavelengths: 0.5,
        }
    }
}

impl GeometryModel {
    /// Checks that every field is physical.
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("earth_radius_m", self.earth_radius_m),
            ("altitude_m", self.altitude_m),
            ("max_zenith_deg", self.max_zenith_deg),
            ("array_spacing_wavelengths", self.array_spacing_wavelengths),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        let nonneg = [
            ("satellite_speed", self.satellite_speed),
            ("receiver_speed", self.receiver_speed),
            ("receiver_position_spread", self.receiver_position_spread),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be nonnegative")));
            }
        }
        if self.max_zenith_deg >= 90.0 {
            return Err(Error::InvalidInput("max_zenith_deg must be below 90".into()));
        }
        Ok(())
    }
}

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Square grid filled row by row, centred on its mean. One antenna sits at the centroid.
pub fn square_array(n_u: usize, pitch: f64) -> Vec<Vector3<f64>> {
    if n_u == 0 {
        return Vec::new();
    }
    let n = (n_u as f64).sqrt().ceil() as usize;
    let pts: Vec<Vector3<f64>> = (0..n_u)
        .map(|i| Vector3::new((i % n) as f64 * pitch, (i / n) as f64 * pitch, 0.0))
        .collect();
    let mean = pts.iter().sum::<Vector3<f64>>() / n_u as f64;
    pts.into_iter().map(|p| p - mean).collect()
}

fn unit_from_angles(cos_polar: f64, azimuth: f64) -> Vector3<f64> {
    let s = (1.0 - cos_polar * cos_polar).max(0.0).sqrt();
    Vector3::new(s * azimuth.cos(), s * azimuth.sin(), cos_polar)
}

/// Draws one receiver/constellation pair. Random draws do not depend on
/// `n_u` or `f_c`, so sweeps over those axes see the same satellites.
pub fn draw_geometry<R: Rng>(
    rng: &mut R,
    model: &GeometryModel,
    n_b: usize,
    n_u: usize,
    n_k: usize,
    delta_t: f64,
    f_c: f64,
) -> Result<(ReceiverState, ConstellationState)> {
    model.validate()?;
    let centre = Vector3::new(0.0, 0.0, model.earth_radius_m);
    let shell = model.earth_radius_m + model.altitude_m;
    let cos_max = model.max_zenith_deg.to_radians().cos();
    let mut sats = Vec::with_capacity(n_b);
    for _ in 0..n_b {
        let z: f64 = rng.random_range(cos_max..=1.0);
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let u = unit_from_angles(z, az);
        // |r u + centre| = shell
        let bq = u.dot(&centre);
        let r = -bq + (bq * bq - (centre.norm_squared() - shell * shell)).sqrt();
        let p = u * r;
        let radial = (p + centre).normalize();
        let e1 = if radial.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let t1 = (e1 - radial * radial.dot(&e1)).normalize();
        let t2 = radial.cross(&t1);
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = t1 * heading.cos() + t2 * heading.sin();
        sats.push(Satellite::new(p, dir * model.satellite_speed));
    }
    let angle = |rng: &mut R| -> f64 {
        let x: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        if x == -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            x
        }
    };
    let phi = Vector3::new(angle(rng), angle(rng), angle(rng));
    let vz: f64 = rng.random_range(-1.0..=1.0);
    let vaz: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let v_u = unit_from_angles(vz, vaz) * model.receiver_speed;
    let w = model.receiver_position_spread;
    let p_u = if w > 0.0 {
        Vector3::new(
            rng.random_range(-w..=w),
            rng.random_range(-w..=w),
            rng.random_range(-w..=w),
        )
    } else {
        Vector3::zeros()
    };
    let pitch = model.array_spacing_wavelengths * SPEED_OF_LIGHT / f_c;
    let rx = ReceiverState::new(p_u, phi, v_u, square_array(n_u, pitch))?;
    let cs = ConstellationState::new(sats, n_k, delta_t)?;
    Ok((rx, cs))
}

/// Bounds for [`random_scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomLimits {
    pub max_n_b: usize,
    pub max_n_k: usize,
    pub max_n_u: usize,
}

/// A fully random scenario for cross-checks: random sizes, geometry, signal
/// parameters, per-link SNR, gains and clock offsets.
pub fn random_scenario<R: Rng>(rng: &mut R, lim: RandomLimits) -> Result<Scenario> {
    let n_b = rng.random_range(1..=lim.max_n_b);
    let n_k = rng.random_range(1..=lim.max_n_k);
    let n_u = rng.random_range(1..=lim.max_n_u);
    let f_c = 10f64.powf(rng.random_range(9.0..10.7));
    let delta_t = rng.random_range(0.01..0.2);
    let model = GeometryModel {
        array_spacing_wavelengths: rng.random_range(0.3..2.0),
        ..GeometryModel::default()
    };
    let (mut rx, mut cs) = draw_geometry(rng, &model, n_b, n_u, n_k, delta_t, f_c)?;
    // break the planar grid so orientation is generic
    for s in &mut rx.s_tilde {
        s.z += rng.random_range(-0.05..0.05) * SPEED_OF_LIGHT / f_c;
    }
    for s in &mut cs.satellites {
        s.gain_abs = rng.random_range(0.3..3.0);
        s.time_offset = rng.random_range(-1e-3..1e-3);
        s.freq_offset = rng.random_range(-5e3..5e3);
    }
    let t_slot = rng.random_range(1e-3..2e-2);
    let snr_per_link: Vec<f64> = (0..n_b * n_u * n_k)
        .map(|_| db_to_linear(rng.random_range(-20.0..20.0)))
        .collect();
    let spec = SignalSpec {
        f_c,
        alpha1: rng.random_range(0.0..2e7),
        alpha2: rng.random_range(-0.9..0.9),
        snr: 1.0,
        snr_per_link: Some(snr_per_link),
        t_slot,
        t2_eff: uniform_t2(t_slot),
        n0: 1.0,
    };
    Scenario::new(rx, cs, spec)
}
