//! Geometry, path loss, LoS-only Rician gains and RIS phase alignment.
//!
//! Everything here is a pure function over linear units. Decibel conversions
//! are provided for config ingestion and reporting only.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= 0.0
    }
}

/// Channel constants, all linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Power gain at the 1 m reference distance.
    pub gamma0: f64,
    /// Path-loss exponent.
    pub eta: f64,
    /// Rician factor, device to UAV.
    pub k1: f64,
    /// Rician factor, UAV to base station.
    pub k2: f64,
    /// Device transmit power in watts.
    pub tx_power: f64,
    /// Thermal noise power in watts.
    pub noise_power: f64,
    /// Number of RIS reflecting elements.
    pub num_elements: usize,
    pub snr_threshold: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma0", self.gamma0),
            ("eta", self.eta),
            ("k1", self.k1),
            ("k2", self.k2),
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
            ("snr_threshold", self.snr_threshold),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.num_elements == 0 {
            return Err(Error::config("num_elements", "must be >= 1"));
        }
        Ok(())
    }

    /// √(K₁/(K₁+1)) · √(K₂/(K₂+1)), the LoS share of both hops.
    pub fn rician_los_factor(&self) -> f64 {
        (self.k1 / (self.k1 + 1.0) * self.k2 / (self.k2 + 1.0)).sqrt()
    }
}

/// RIS phases and the fixed LoS angle vectors of both hops for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub phases: Vec<f64>,
    pub los_angles_device: Vec<f64>,
    pub los_angles_bs: Vec<f64>,
}

impl PhaseProfile {
    pub fn new(phases: Vec<f64>, los_angles_device: Vec<f64>, los_angles_bs: Vec<f64>) -> Result<Self> {
        let f = phases.len();
        for len in [los_angles_device.len(), los_angles_bs.len()] {
            if len != f {
                return Err(Error::LengthMismatch { expected: f, got: len });
            }
        }
        let in_range = |a: &f64| (0.0..TAU).contains(a);
        if !(phases.iter().all(in_range)
            && los_angles_device.iter().all(in_range)
            && los_angles_bs.iter().all(in_range))
        {
            return Err(Error::Domain("angles must lie in [0, 2π)".into()));
        }
        Ok(Self {
            phases,
            los_angles_device,
            los_angles_bs,
        })
    }

    /// Profile with phases set by [`optimal_phases`].
    pub fn aligned(los_angles_device: Vec<f64>, los_angles_bs: Vec<f64>) -> Result<Self> {
        let phases = optimal_phases(&los_angles_device, &los_angles_bs)?;
        Self::new(phases, los_angles_device, los_angles_bs)
    }

    pub fn num_elements(&self) -> usize {
        self.phases.len()
    }
}

/// Wraps an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn distance_device_to_uav(device: Position3, uav_xy: (f64, f64), altitude: f64) -> f64 {
    let dx = device.x - uav_xy.0;
    let dy = device.y - uav_xy.1;
    (dx * dx + dy * dy + altitude * altitude).sqrt()
}

pub fn distance_uav_to_bs(bs: Position3, uav_xy: (f64, f64), altitude: f64) -> f64 {
    let dx = bs.x - uav_xy.0;
    let dy = bs.y - uav_xy.1;
    let dz = bs.z - altitude;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Amplitude coefficient √(γ₀ d^(−η)).
pub fn path_loss_amplitude(distance: f64, params: &ChannelParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {distance}")));
    }
    Ok((params.gamma0 * distance.powf(-params.eta)).sqrt())
}

/// Phase of each element that co-phases the two hops: φ_f = (ψ_f + ω_f) mod 2π.
pub fn optimal_phases(los_device: &[f64], los_bs: &[f64]) -> Result<Vec<f64>> {
    if los_device.len() != los_bs.len() {
        return Err(Error::LengthMismatch {
            expected: los_device.len(),
            got: los_bs.len(),
        });
    }
    Ok(los_device
        .iter()
        .zip(los_bs)
        .map(|(psi, omega)| wrap_angle(psi + omega))
        .collect())
}

/// Sum over elements of e^{j(φ_f − ψ_f − ω_f)}.
pub fn phasor_sum(profile: &PhaseProfile) -> Complex64 {
    profile
        .phases
        .iter()
        .zip(&profile.los_angles_device)
        .zip(&profile.los_angles_bs)
        .map(|((phi, psi), omega)| Complex64::from_polar(1.0, phi - psi - omega))
        .sum()
}

/// End-to-end complex amplitude of the device → RIS → base station cascade:
/// the product of both per-hop LoS channels with the RIS phases applied.
pub fn cascaded_gain(profile: &PhaseProfile, d_device: f64, d_bs: f64, params: &ChannelParams) -> Result<Complex64> {
    let hop_device = path_loss_amplitude(d_device, params)?;
    let hop_bs = path_loss_amplitude(d_bs, params)?;
    Ok(phasor_sum(profile) * (params.rician_los_factor() * hop_device * hop_bs))
}

/// Gain magnitude reached by aligned phases; independent of the LoS angles.
pub fn aligned_gain_magnitude(num_elements: usize, d_device: f64, d_bs: f64, params: &ChannelParams) -> Result<f64> {
    let hop_device = path_loss_amplitude(d_device, params)?;
    let hop_bs = path_loss_amplitude(d_bs, params)?;
    Ok(num_elements as f64 * params.rician_los_factor() * hop_device * hop_bs)
}

/// Received SNR P·|g|²/σ².
pub fn snr(gain: Complex64, params: &ChannelParams) -> f64 {
    params.tx_power * gain.norm_sqr() / params.noise_power
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}
