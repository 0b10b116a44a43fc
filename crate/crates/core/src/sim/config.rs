use serde::{Deserialize, Serialize};

use super::SimError;

/// Signal timing and actuation settings shared by every controller in a
/// corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub min_green_s: f64,
    pub max_green_s: f64,
    pub critical_gap_s: f64,
    pub amber_s: f64,
    pub all_red_s: f64,
    /// Upstream detector placement, in seconds of free-flow travel time
    /// from the stop line.
    pub upstream_setback_s: f64,
    pub saturation_headway_s: f64,
    /// Extra green added to the queue-clearance estimate of the dynamic
    /// minimum green.
    pub startup_allowance_s: f64,
    pub dynamic_min_green: bool,
    pub left_turn_skip: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            min_green_s: 12.0,
            max_green_s: 50.0,
            critical_gap_s: 3.0,
            amber_s: 3.0,
            all_red_s: 2.0,
            upstream_setback_s: 2.0,
            saturation_headway_s: 2.0,
            startup_allowance_s: 2.0,
            dynamic_min_green: true,
            left_turn_skip: false,
        }
    }
}

impl ControllerConfig {
    pub fn change_interval_s(&self) -> f64 {
        self.amber_s + self.all_red_s
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SimError::InvalidConfig(format!("{name} must be non-negative, got {v}")))
            }
        };
        positive("min_green_s", self.min_green_s)?;
        if !(self.max_green_s > self.min_green_s) {
            return Err(SimError::MaxGreenBelowMin {
                min_green_s: self.min_green_s,
                max_green_s: self.max_green_s,
            });
        }
        positive("critical_gap_s", self.critical_gap_s)?;
        non_negative("amber_s", self.amber_s)?;
        non_negative("all_red_s", self.all_red_s)?;
        positive("change interval", self.change_interval_s())?;
        positive("upstream_setback_s", self.upstream_setback_s)?;
        positive("saturation_headway_s", self.saturation_headway_s)?;
        non_negative("startup_allowance_s", self.startup_allowance_s)?;
        Ok(())
    }
}

/// How per-signal cycle sequences are joined into one panel row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelAlignment {
    /// Row `t` holds the `t`-th completed cycle of every signal; longer
    /// sequences are truncated at the end.
    #[default]
    CycleIndex,
    /// One row per cycle of the last signal; every other signal contributes
    /// its latest cycle completed by the time that cycle ends.
    Time,
}

/// Complete description of one corridor scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorConfig {
    pub n_signals: usize,
    pub spacing_m: f64,
    pub mainline_demand_vph: f64,
    /// Demand on each cross street.
    pub cross_demand_vph: f64,
    pub lanes_mainline: usize,
    pub lanes_cross: usize,
    /// When set, every signal gets a protected mainline left-turn phase
    /// fed by this demand.
    pub left_turn_demand_vph: Option<f64>,
    pub free_speed_mps: f64,
    /// Total simulated time, warm-up included.
    pub sim_duration_s: f64,
    pub warmup_s: f64,
    pub time_step_s: f64,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub alignment: PanelAlignment,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            n_signals: 5,
            spacing_m: 500.0,
            mainline_demand_vph: 1200.0,
            cross_demand_vph: 600.0,
            lanes_mainline: 2,
            lanes_cross: 1,
            left_turn_demand_vph: None,
            free_speed_mps: 14.0,
            sim_duration_s: 5.0 * 3600.0 + 900.0,
            warmup_s: 900.0,
            time_step_s: 0.1,
            seed: 1,
            controller: ControllerConfig::default(),
            alignment: PanelAlignment::default(),
        }
    }
}

impl CorridorConfig {
    /// Corridor with the given geometry and demand and default everything
    /// else.
    pub fn scenario(spacing_m: f64, mainline_demand_vph: f64, seed: u64) -> Self {
        Self {
            spacing_m,
            mainline_demand_vph,
            seed,
            ..Self::default()
        }
    }

    /// Sets the post-warm-up duration in hours.
    pub fn with_hours(mut self, hours: f64) -> Self {
        self.sim_duration_s = self.warmup_s + hours * 3600.0;
        self
    }

    pub fn upstream_detector_m(&self) -> f64 {
        self.controller.upstream_setback_s * self.free_speed_mps
    }

    pub fn ticks_per_second(&self) -> u32 {
        (1.0 / self.time_step_s).round() as u32
    }

    pub fn total_ticks(&self) -> u64 {
        (self.sim_duration_s / self.time_step_s).round() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.controller.validate()?;
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(1..=16).contains(&self.n_signals) {
            return invalid(format!("n_signals must be in 1..=16, got {}", self.n_signals));
        }
        if !(self.spacing_m.is_finite() && self.spacing_m > 0.0) {
            return invalid(format!("spacing_m must be positive, got {}", self.spacing_m));
        }
        let demands = [
            self.mainline_demand_vph,
            self.cross_demand_vph,
            self.left_turn_demand_vph.unwrap_or(0.0),
        ];
        if demands.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return invalid("demands must be non-negative".into());
        }
        if self.lanes_mainline == 0 || self.lanes_cross == 0 {
            return invalid("every approach needs at least one lane".into());
        }
        if !(self.free_speed_mps.is_finite() && self.free_speed_mps > 0.0) {
            return invalid(format!("free_speed_mps must be positive, got {}", self.free_speed_mps));
        }
        if !(self.time_step_s == 1.0 || self.time_step_s == 0.1) {
            return invalid(format!("time_step_s must be 1.0 or 0.1, got {}", self.time_step_s));
        }
        if !(self.warmup_s >= 0.0 && self.sim_duration_s.is_finite()) {
            return invalid("warmup_s must be non-negative".into());
        }
        if self.total_ticks() == 0 {
            return Err(SimError::ZeroSteps);
        }
        if !(self.warmup_s < self.sim_duration_s) {
            return invalid(format!(
                "warmup_s ({}) must be shorter than sim_duration_s ({})",
                self.warmup_s, self.sim_duration_s
            ));
        }
        if self.spacing_m <= self.upstream_detector_m() {
            return invalid(format!(
                "spacing_m ({}) must exceed the upstream detector setback ({} m)",
                self.spacing_m,
                self.upstream_detector_m()
            ));
        }
        Ok(())
    }
}
