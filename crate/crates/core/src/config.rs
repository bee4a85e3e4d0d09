//! TOML run configuration and scenario overrides.
//!
//! ```toml
//! scenario = "exp4_2"
//! methods = ["cf", "fixed-quad"]
//! runs = 10
//! seed = 7
//! delta = 0.5
//! observation_var = 2.0
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{Scenario, ScenarioName, ScenarioParams};

/// Knobs that may replace a scenario's built-in values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub runs: Option<usize>,
    pub particles: Option<usize>,
    pub horizon: Option<usize>,
    pub delta: Option<f64>,
    pub window: Option<usize>,
    pub process_var: Option<f64>,
    pub observation_var: Option<f64>,
    pub initial_var: Option<f64>,
}

impl Overrides {
    /// Fields set in `higher` win over those in `self`.
    pub fn layered(&self, higher: &Overrides) -> Overrides {
        Overrides {
            runs: higher.runs.or(self.runs),
            particles: higher.particles.or(self.particles),
            horizon: higher.horizon.or(self.horizon),
            delta: higher.delta.or(self.delta),
            window: higher.window.or(self.window),
            process_var: higher.process_var.or(self.process_var),
            observation_var: higher.observation_var.or(self.observation_var),
            initial_var: higher.initial_var.or(self.initial_var),
        }
    }

    pub fn apply(&self, p: &mut ScenarioParams) {
        if let Some(v) = self.runs {
            p.runs = v;
        }
        if let Some(v) = self.particles {
            p.particles = v;
        }
        if let Some(v) = self.horizon {
            p.horizon = v;
            // Keep a change point inside a shortened horizon.
            if let Some(tau) = p.change_time {
                if tau >= v {
                    p.change_time = Some(v / 2);
                }
            }
        }
        if let Some(v) = self.delta {
            p.delta = v;
        }
        if let Some(v) = self.window {
            p.window = v;
        }
        if let Some(v) = self.process_var {
            p.noise.process_var = v;
        }
        if let Some(v) = self.observation_var {
            p.noise.observation_var = v;
        }
        if let Some(v) = self.initial_var {
            p.noise.initial_var = v;
        }
    }

    /// Built-in parameters of `name` with these overrides, validated.
    pub fn scenario(&self, name: ScenarioName) -> Result<Scenario> {
        let mut p = ScenarioParams::defaults(name);
        self.apply(&mut p);
        p.build()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub parallelism: Option<usize>,
    pub runs: Option<usize>,
    pub particles: Option<usize>,
    pub horizon: Option<usize>,
    pub delta: Option<f64>,
    pub window: Option<usize>,
    pub process_var: Option<f64>,
    pub observation_var: Option<f64>,
    pub initial_var: Option<f64>,
}

impl ConfigFile {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            runs: self.runs,
            particles: self.particles,
            horizon: self.horizon,
            delta: self.delta,
            window: self.window,
            process_var: self.process_var,
            observation_var: self.observation_var,
            initial_var: self.initial_var,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
