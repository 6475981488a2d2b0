use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::observables::ObservableSelection;
use crate::params::{default_dt, ModelParams};

/// One ensemble run. Field names in JSON are exactly
/// `L, N, J, gamma, theta_over_pi, dt, measurement_only, n_traj, master_seed,
/// t_equil_factor, t_avg_window, sample_stride, observables, output_path`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    /// Particle number; half filling when absent.
    #[serde(rename = "N", default)]
    pub particles: Option<usize>,
    #[serde(rename = "J", default = "default_hopping")]
    pub hopping: f64,
    pub gamma: f64,
    pub theta_over_pi: f64,
    /// Time step; chosen from `gamma` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub measurement_only: bool,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// `t_equil = t_equil_factor * L^2`.
    #[serde(default = "default_t_equil_factor")]
    pub t_equil_factor: f64,
    #[serde(default = "default_t_avg_window")]
    pub t_avg_window: f64,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: f64,
    /// Observable names (see [`ObservableSelection::from_names`]); empty
    /// means all.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_hopping() -> f64 {
    1.0
}
fn default_n_traj() -> usize {
    1
}
fn default_t_equil_factor() -> f64 {
    1.0
}
fn default_t_avg_window() -> f64 {
    200.0
}
fn default_sample_stride() -> f64 {
    1.0
}

impl RunConfig {
    /// Defaults for everything but the chain length, rate and angle.
    pub fn new(sites: usize, gamma: f64, theta_over_pi: f64) -> Self {
        Self {
            sites,
            particles: None,
            hopping: default_hopping(),
            gamma,
            theta_over_pi,
            dt: None,
            measurement_only: false,
            n_traj: default_n_traj(),
            master_seed: 0,
            t_equil_factor: default_t_equil_factor(),
            t_avg_window: default_t_avg_window(),
            sample_stride: default_sample_stride(),
            observables: Vec::new(),
            output_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Model parameters; measurement-only runs are canonicalized to
    /// `J = 0`, `gamma = 1`.
    pub fn model_params(&self) -> Result<ModelParams> {
        let gamma = if self.measurement_only {
            1.0
        } else {
            self.gamma
        };
        let params = ModelParams {
            sites: self.sites,
            particles: self.particles.unwrap_or(self.sites / 2),
            hopping: if self.measurement_only {
                0.0
            } else {
                self.hopping
            },
            gamma,
            theta: PI * self.theta_over_pi,
            dt: self
                .dt
                .unwrap_or_else(|| default_dt(gamma, self.measurement_only)),
            measurement_only: self.measurement_only,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn selection(&self) -> Result<ObservableSelection> {
        if self.observables.is_empty() {
            Ok(ObservableSelection::all())
        } else {
            ObservableSelection::from_names(&self.observables)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.model_params()?;
        if self.n_traj < 1 {
            return Err(Error::param("n_traj must be >= 1"));
        }
        if !(self.t_equil_factor >= 0.0 && self.t_equil_factor.is_finite()) {
            return Err(Error::param("t_equil_factor must be >= 0"));
        }
        if !(self.t_avg_window >= 0.0 && self.t_avg_window.is_finite()) {
            return Err(Error::param("t_avg_window must be >= 0"));
        }
        if !(self.sample_stride > 0.0 && self.sample_stride.is_finite()) {
            return Err(Error::param("sample_stride must be positive"));
        }
        if self.sample_stride < params.dt * (1.0 - 1e-9) {
            return Err(Error::param(format!(
                "sample_stride {} is shorter than dt {}",
                self.sample_stride, params.dt
            )));
        }
        self.selection()?;
        Ok(())
    }

    /// `t_equil_factor * L^2`.
    pub fn t_equil(&self) -> f64 {
        self.t_equil_factor * (self.sites * self.sites) as f64
    }

    /// Step indices of the samples `t_equil + m * sample_stride`,
    /// `m = 0 ..= floor(t_avg_window / sample_stride)`.
    pub fn sample_steps(&self) -> Result<Vec<usize>> {
        let dt = self.model_params()?.dt;
        let count = (self.t_avg_window / self.sample_stride + 1e-9).floor() as usize;
        let t0 = self.t_equil();
        Ok((0..=count)
            .map(|m| ((t0 + m as f64 * self.sample_stride) / dt).round() as usize)
            .collect())
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// A Cartesian grid over `L`, `gamma` and `theta/pi` around a base
/// configuration. In JSON each of the three keys may be a number or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub sites: Vec<usize>,
    pub gammas: Vec<f64>,
    pub thetas_over_pi: Vec<f64>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::param("sweep config must be a JSON object"))?;
        let mut take = |key: &str| -> Result<Vec<serde_json::Value>> {
            match obj.get(key) {
                Some(serde_json::Value::Array(items)) => {
                    let items = items.clone();
                    let first = items
                        .first()
                        .cloned()
                        .ok_or_else(|| Error::param(format!("'{key}' list is empty")))?;
                    obj.insert(key.to_string(), first);
                    Ok(items)
                }
                Some(v) => Ok(vec![v.clone()]),
                None => Err(Error::param(format!("missing key '{key}'"))),
            }
        };
        let sites = take("L")?;
        let gammas = take("gamma")?;
        let thetas = take("theta_over_pi")?;
        let base: RunConfig = serde_json::from_value(value)?;
        let sweep = Self {
            base,
            sites: sites
                .into_iter()
                .map(serde_json::from_value)
                .collect::<std::result::Result<_, _>>()?,
            gammas: gammas
                .into_iter()
                .map(serde_json::from_value)
                .collect::<std::result::Result<_, _>>()?,
            thetas_over_pi: thetas
                .into_iter()
                .map(serde_json::from_value)
                .collect::<std::result::Result<_, _>>()?,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    /// Grid points in lexicographic `(L, gamma, theta)` order; each is a full
    /// configuration with the base seed, so a grid point reproduces the
    /// corresponding single run exactly.
    pub fn points(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &l in &self.sites {
            for &g in &self.gammas {
                for &t in &self.thetas_over_pi {
                    let mut c = self.base.clone();
                    c.sites = l;
                    c.gamma = g;
                    c.theta_over_pi = t;
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() || self.gammas.is_empty() || self.thetas_over_pi.is_empty() {
            return Err(Error::param("sweep grid must be non-empty on every axis"));
        }
        self.points().iter().try_for_each(RunConfig::validate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_are_exact() {
        let c = RunConfig::new(16, 1.0, 1.0);
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        let mut expect = vec![
            "L",
            "N",
            "J",
            "gamma",
            "theta_over_pi",
            "dt",
            "measurement_only",
            "n_traj",
            "master_seed",
            "t_equil_factor",
            "t_avg_window",
            "sample_stride",
            "observables",
            "output_path",
        ];
        expect.sort_unstable();
        assert_eq!(keys, expect);
        assert!(
            RunConfig::from_json(r#"{"L": 8, "gamma": 1, "theta_over_pi": 1, "bogus": 2}"#)
                .is_err()
        );
    }

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::from_json(r#"{"L": 8, "gamma": 0.5, "theta_over_pi": 1}"#).unwrap();
        let p = c.model_params().unwrap();
        assert_eq!((p.particles, p.hopping, p.dt), (4, 1.0, 0.05));
        assert_eq!(c.t_avg_window, 200.0);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.hash(), RunConfig::from_json(&c.to_json()).unwrap().hash());
    }

    #[test]
    fn measurement_only_is_canonical() {
        let mut c = RunConfig::new(8, 3.0, 1.0);
        c.measurement_only = true;
        let p = c.model_params().unwrap();
        assert_eq!((p.hopping, p.gamma), (0.0, 1.0));
    }

    #[test]
    fn sampling_grid() {
        let mut c = RunConfig::new(4, 1.0, 1.0);
        c.t_avg_window = 0.0;
        assert_eq!(c.sample_steps().unwrap(), vec![800]);
        c.t_avg_window = 2.0;
        c.sample_stride = 0.5;
        assert_eq!(c.sample_steps().unwrap(), vec![800, 825, 850, 875, 900]);
        c.sample_stride = 0.001;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sweep_grid_from_lists() {
        let s = SweepConfig::from_json(
            r#"{"L": [8, 12], "gamma": 4, "theta_over_pi": [0, 0.5, 1], "n_traj": 3}"#,
        )
        .unwrap();
        let pts = s.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(
            (pts[4].sites, pts[4].theta_over_pi, pts[4].n_traj),
            (12, 0.5, 3)
        );
    }
}
