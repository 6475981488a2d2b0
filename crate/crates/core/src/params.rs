use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and numerical parameters of one monitored chain.
///
/// Energies are in units of the hopping amplitude when `hopping = 1`. In
/// measurement-only mode the Hamiltonian step is skipped, `hopping` is pinned
/// to zero and `gamma` to one (time is measured in units of `1/gamma`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of sites `L` (even).
    pub sites: usize,
    /// Number of particles `N`, `1 <= N <= L`.
    pub particles: usize,
    /// Hopping amplitude `J`.
    pub hopping: f64,
    /// Measurement strength `gamma`.
    pub gamma: f64,
    /// Misalignment angle `theta` in radians, `0 <= theta <= pi`.
    pub theta: f64,
    /// Time step.
    pub dt: f64,
    pub measurement_only: bool,
}

impl ModelParams {
    /// Half-filled chain with `J = 1` and the default time step for `gamma`.
    pub fn new(sites: usize, gamma: f64, theta: f64) -> Self {
        Self {
            sites,
            particles: sites / 2,
            hopping: 1.0,
            gamma,
            theta,
            dt: default_dt(gamma, false),
            measurement_only: false,
        }
    }

    /// Measurement-only chain: `J = 0`, `gamma = 1`.
    pub fn measurement_only(sites: usize, theta: f64) -> Self {
        Self {
            sites,
            particles: sites / 2,
            hopping: 0.0,
            gamma: 1.0,
            theta,
            dt: default_dt(1.0, true),
            measurement_only: true,
        }
    }

    pub fn with_particles(mut self, particles: usize) -> Self {
        self.particles = particles;
        self
    }

    pub fn with_hopping(mut self, hopping: f64) -> Self {
        self.hopping = hopping;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Pins `J = 0` and `gamma = 1` when in measurement-only mode.
    pub fn canonicalize(mut self) -> Self {
        if self.measurement_only {
            self.hopping = 0.0;
            self.gamma = 1.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.sites;
        if l < 2 || !l.is_multiple_of(2) {
            return Err(Error::param(format!("L must be even and >= 2, got {l}")));
        }
        if self.particles < 1 || self.particles > l {
            return Err(Error::param(format!(
                "N must satisfy 1 <= N <= L = {l}, got {}",
                self.particles
            )));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::param(format!(
                "theta must lie in [0, pi], got {}",
                self.theta
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !self.hopping.is_finite() {
            return Err(Error::param("J must be finite"));
        }
        if self.measurement_only && self.hopping != 0.0 {
            return Err(Error::param("measurement-only mode requires J = 0"));
        }
        Ok(())
    }

    /// `cos(theta/4)` and `sin(theta/4)`: the weights of sites `k` and `k+1`
    /// in the measured orbital of bond `k`.
    pub fn orbital_weights(&self) -> (f64, f64) {
        let quarter = self.theta / 4.0;
        (quarter.cos(), quarter.sin())
    }
}

/// Time step used unless overridden: 0.05 for weak monitoring, 0.02 for
/// `gamma >= 1` and for the measurement-only model.
pub fn default_dt(gamma: f64, measurement_only: bool) -> f64 {
    if measurement_only || gamma >= 1.0 {
        0.02
    } else {
        0.05
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn defaults_follow_gamma() {
        assert_eq!(ModelParams::new(8, 0.5, PI).dt, 0.05);
        assert_eq!(ModelParams::new(8, 1.0, PI).dt, 0.02);
        assert_eq!(ModelParams::new(8, 4.0, PI).dt, 0.02);
        assert_eq!(ModelParams::measurement_only(8, PI).dt, 0.02);
        assert_eq!(ModelParams::new(10, 1.0, 0.0).particles, 5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(7, 1.0, PI).validate().is_err());
        assert!(ModelParams::new(8, 1.0, PI)
            .with_particles(0)
            .validate()
            .is_err());
        assert!(ModelParams::new(8, 1.0, PI)
            .with_particles(9)
            .validate()
            .is_err());
        assert!(ModelParams::new(8, 1.0, 3.5).validate().is_err());
        assert!(ModelParams::new(8, -1.0, PI).validate().is_err());
        assert!(ModelParams::new(8, 1.0, PI)
            .with_dt(0.0)
            .validate()
            .is_err());
        let mut p = ModelParams::measurement_only(8, PI);
        p.hopping = 1.0;
        assert!(p.validate().is_err());
        assert!(p.canonicalize().validate().is_ok());
    }
}
