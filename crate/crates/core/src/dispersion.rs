//! Unit system and dispersion relations for a rectangular scattering region.
//!
//! The region is a flat potential step of thickness `a`: a well lowers the
//! potential by `v0`, a barrier raises it. Outside the region a particle of
//! energy `E = hbar * omega` carries the wavenumber `k = sqrt(2 mu E) / hbar`;
//! inside, the wavenumber picks up the potential and may turn imaginary
//! (evanescent) under a barrier top.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether the region lowers or raises the potential by `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    /// Region potential is `-v0`: travel is classically allowed at any energy.
    Well,
    /// Region potential is `+v0`: below the top the inside wave is evanescent.
    Barrier,
}

impl std::fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PotentialKind::Well => f.write_str("well"),
            PotentialKind::Barrier => f.write_str("barrier"),
        }
    }
}

/// A rectangular well or barrier together with the particle constants.
///
/// `v0 = 0` is accepted as the free-particle control case; every derived
/// quantity then collapses to free flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterRegion {
    pub kind: PotentialKind,
    /// Potential magnitude (energy units). The sign is carried by `kind`.
    pub v0: f64,
    /// Thickness of the region (length units).
    pub a: f64,
    /// Particle mass.
    pub mu: f64,
    /// Action constant; 1 in the natural unit system used by the shipped scenarios.
    pub hbar: f64,
}

impl ScatterRegion {
    pub fn new(kind: PotentialKind, v0: f64, a: f64, mu: f64, hbar: f64) -> Result<Self> {
        if !v0.is_finite() || v0 < 0.0 {
            return Err(Error::InvalidRegion(format!(
                "v0 must be finite and nonnegative, got {v0}"
            )));
        }
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::InvalidRegion(format!(
                "thickness a must be finite and positive, got {a}"
            )));
        }
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::InvalidRegion(format!(
                "mass mu must be finite and positive, got {mu}"
            )));
        }
        if !hbar.is_finite() || hbar <= 0.0 {
            return Err(Error::InvalidRegion(format!(
                "hbar must be finite and positive, got {hbar}"
            )));
        }
        Ok(Self {
            kind,
            v0,
            a,
            mu,
            hbar,
        })
    }

    /// Well in natural units (`mu = hbar = 1`).
    pub fn well(v0: f64, a: f64) -> Result<Self> {
        Self::new(PotentialKind::Well, v0, a, 1.0, 1.0)
    }

    /// Barrier in natural units (`mu = hbar = 1`).
    pub fn barrier(v0: f64, a: f64) -> Result<Self> {
        Self::new(PotentialKind::Barrier, v0, a, 1.0, 1.0)
    }

    /// `true` when the carrier at `omega` is below the barrier top.
    pub fn is_evanescent_at(&self, omega: f64) -> bool {
        self.kind == PotentialKind::Barrier && self.hbar * omega < self.v0
    }

    /// Returns a copy with a different thickness; used by thickness sweeps.
    pub fn with_thickness(&self, a: f64) -> Result<Self> {
        Self::new(self.kind, self.v0, a, self.mu, self.hbar)
    }

    /// Evaluates both wavenumbers at `omega`.
    pub fn dispersion(&self, omega: f64) -> Result<DispersionSample> {
        Ok(DispersionSample {
            omega,
            k: outside_wavenumber(omega, self)?,
            k_inside: inside_wavenumber(omega, self)?,
        })
    }
}

/// Both wavenumbers at a single frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    pub omega: f64,
    /// Wavenumber outside the region; real and nonnegative.
    pub k: f64,
    /// Wavenumber inside the region; imaginary part is nonnegative
    /// (evanescent waves decay along +x).
    pub k_inside: Complex64,
}

/// Wavenumber outside the region: `sqrt(2 mu hbar omega) / hbar`.
pub fn outside_wavenumber(omega: f64, region: &ScatterRegion) -> Result<f64> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(Error::NegativeFrequency(omega));
    }
    Ok((2.0 * region.mu * region.hbar * omega).sqrt() / region.hbar)
}

/// Wavenumber inside the region.
///
/// For a well this is `sqrt(2 mu (hbar omega + v0)) / hbar`, always real and
/// at least the outside wavenumber. For a barrier it is the principal square
/// root of `2 mu (hbar omega - v0) / hbar^2`: purely imaginary `i kappa`
/// below the top, real above, with `Im >= 0` in all cases.
pub fn inside_wavenumber(omega: f64, region: &ScatterRegion) -> Result<Complex64> {
    if !omega.is_finite() || omega < 0.0 {
        return Err(Error::NegativeFrequency(omega));
    }
    let two_mu = 2.0 * region.mu;
    match region.kind {
        PotentialKind::Well => Ok(Complex64::new(
            (two_mu * (region.hbar * omega + region.v0)).sqrt() / region.hbar,
            0.0,
        )),
        PotentialKind::Barrier => {
            let q = two_mu * (region.hbar * omega - region.v0);
            if q >= 0.0 {
                Ok(Complex64::new(q.sqrt() / region.hbar, 0.0))
            } else {
                Ok(Complex64::new(0.0, (-q).sqrt() / region.hbar))
            }
        }
    }
}

/// Derived scales at a carrier frequency.
///
/// For an evanescent barrier carrier there is no classical velocity inside
/// the region, so `group_velocity` and `transit_time` are absent and the
/// characteristic time unit falls back to the decay constant `kappa0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Group velocity inside the region, `hbar * Re k'(omega0) / mu`.
    pub group_velocity: Option<f64>,
    /// Single-pass transit time `t1 = a / v_g`.
    pub transit_time: Option<f64>,
    /// Characteristic time unit `mu / (hbar k0 k'0)` (well / propagating
    /// barrier) or `mu / (hbar k0 kappa0)` (evanescent barrier).
    pub tau_unit: f64,
}

/// Computes group velocity, single-pass transit time and the characteristic
/// time unit at the carrier `omega0`.
pub fn characteristic_scales(omega0: f64, region: &ScatterRegion) -> Result<Scales> {
    if !omega0.is_finite() || omega0 <= 0.0 {
        return Err(Error::InvalidRegion(format!(
            "carrier frequency must be positive, got {omega0}"
        )));
    }
    let k0 = outside_wavenumber(omega0, region)?;
    let ki = inside_wavenumber(omega0, region)?;
    if ki.re > 0.0 {
        let v_g = region.hbar * ki.re / region.mu;
        Ok(Scales {
            group_velocity: Some(v_g),
            transit_time: Some(region.a / v_g),
            tau_unit: region.mu / (region.hbar * k0 * ki.re),
        })
    } else if ki.im > 0.0 {
        // Evanescent carrier: no classical transit, time unit from kappa0.
        Ok(Scales {
            group_velocity: None,
            transit_time: None,
            tau_unit: region.mu / (region.hbar * k0 * ki.im),
        })
    } else {
        Err(Error::InvalidRegion(
            "carrier sits exactly at the barrier top; inside wavenumber vanishes".into(),
        ))
    }
}
