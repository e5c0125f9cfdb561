//! Physical constants and the model's algebraic relations.
//!
//! The preacceleration time `tau = (2/3) q² / (m0 c³)` and the radiative
//! strength `gamma = 2 tau nu k T` are always derived, never stored
//! independently, so they cannot drift out of sync with the inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian-CGS constants for the electron check.
pub mod cgs {
    /// Elementary charge in esu.
    pub const ELECTRON_CHARGE: f64 = 4.803e-10;
    /// Electron mass in g.
    pub const ELECTRON_MASS: f64 = 9.109e-28;
    /// Speed of light in cm/s.
    pub const SPEED_OF_LIGHT: f64 = 2.998e10;
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

/// Preacceleration time `(2/3) q² / (m0 c³)`.
pub fn compute_tau(q: f64, m0: f64, c: f64) -> Result<f64> {
    let q = positive("charge", q)?;
    let m0 = positive("bare mass", m0)?;
    let c = positive("speed of light", c)?;
    Ok(2.0 / 3.0 * q * q / (m0 * c * c * c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    hbar: f64,
    mass: f64,
    bare_mass: f64,
    charge: f64,
    speed_of_light: f64,
    boltzmann: f64,
    temperature: f64,
    nu: f64,
    tau: f64,
    gamma: f64,
}

/// Inputs for [`PhysicalParams::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInputs {
    pub hbar: f64,
    pub mass: f64,
    pub bare_mass: f64,
    pub charge: f64,
    pub speed_of_light: f64,
    pub boltzmann: f64,
    pub temperature: f64,
    pub nu: f64,
}

impl PhysicalParams {
    pub fn new(p: ParamInputs) -> Result<Self> {
        let hbar = positive("hbar", p.hbar)?;
        let mass = positive("mass", p.mass)?;
        let boltzmann = positive("boltzmann", p.boltzmann)?;
        let nu = positive("nu", p.nu)?;
        if !(p.temperature >= 0.0 && p.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be nonnegative, got {}",
                p.temperature
            )));
        }
        let tau = compute_tau(p.charge, p.bare_mass, p.speed_of_light)?;
        let mut out = Self {
            hbar,
            mass,
            bare_mass: p.bare_mass,
            charge: p.charge,
            speed_of_light: p.speed_of_light,
            boltzmann,
            temperature: p.temperature,
            nu,
            tau,
            gamma: 0.0,
        };
        out.gamma = gamma_from_params(&out);
        Ok(out)
    }

    /// Dimensionless mode: `hbar = m = m0 = c = k = 1`, with the charge
    /// chosen so that the preacceleration time equals `tau`.
    pub fn dimensionless(tau: f64, nu: f64, kt: f64) -> Result<Self> {
        let tau = positive("tau", tau)?;
        Self::new(ParamInputs {
            hbar: 1.0,
            mass: 1.0,
            bare_mass: 1.0,
            charge: (1.5 * tau).sqrt(),
            speed_of_light: 1.0,
            boltzmann: 1.0,
            temperature: kt,
            nu,
        })
    }

    fn inputs(&self) -> ParamInputs {
        ParamInputs {
            hbar: self.hbar,
            mass: self.mass,
            bare_mass: self.bare_mass,
            charge: self.charge,
            speed_of_light: self.speed_of_light,
            boltzmann: self.boltzmann,
            temperature: self.temperature,
            nu: self.nu,
        }
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(ParamInputs { nu, ..self.inputs() })
    }

    pub fn with_charge(&self, charge: f64) -> Result<Self> {
        Self::new(ParamInputs { charge, ..self.inputs() })
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(ParamInputs { temperature, ..self.inputs() })
    }

    /// Same parameters with `nu` chosen so that `gamma = hbar² / 2m`.
    pub fn quantum_matched(&self) -> Result<Self> {
        self.with_nu(nu_for_quantum_match(self)?)
    }

    /// Same parameters with the charge (hence `tau`) chosen so that
    /// `gamma = hbar² / 2m` at the current `nu` and temperature.
    pub fn quantum_matched_by_charge(&self) -> Result<Self> {
        let kt = self.kt();
        if kt <= 0.0 {
            return Err(Error::ZeroTemperature);
        }
        let tau = self.quantum_gamma() / (2.0 * self.nu * kt);
        let c = self.speed_of_light;
        self.with_charge((1.5 * tau * self.bare_mass * c * c * c).sqrt())
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn bare_mass(&self) -> f64 {
        self.bare_mass
    }
    pub fn charge(&self) -> f64 {
        self.charge
    }
    pub fn speed_of_light(&self) -> f64 {
        self.speed_of_light
    }
    pub fn boltzmann(&self) -> f64 {
        self.boltzmann
    }
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Thermal energy `k T`.
    pub fn kt(&self) -> f64 {
        self.boltzmann * self.temperature
    }

    /// `hbar² / 2m`, the value `gamma` must take for the quantum match.
    pub fn quantum_gamma(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }
}

/// Radiative strength `2 tau nu k T`.
pub fn gamma_from_params(p: &PhysicalParams) -> f64 {
    2.0 * p.tau * p.nu * p.kt()
}

/// Diffusion constant making `2 tau nu k T = hbar² / 2m`.
pub fn nu_for_quantum_match(p: &PhysicalParams) -> Result<f64> {
    let kt = p.kt();
    if kt <= 0.0 {
        return Err(Error::ZeroTemperature);
    }
    Ok(p.hbar * p.hbar / (4.0 * p.mass * p.tau * kt))
}
