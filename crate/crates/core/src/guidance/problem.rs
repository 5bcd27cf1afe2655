use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Decision variables per node: position 3, velocity 3, thrust acceleration 3,
/// thrust slack 1.
pub const VARS_PER_NODE: usize = 10;

/// Scenario description as read from JSON. Validated into a
/// [`GuidanceProblem`] by [`build_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Initial position, m.
    pub r0: Vec3,
    /// Initial velocity, m/s.
    pub v0: Vec3,
    /// Landing site position, m.
    pub r_target: Vec3,
    /// Touchdown velocity, m/s.
    pub v_target: Vec3,
    /// Gravity acceleration, m/s^2.
    pub g: Vec3,
    /// Minimum thrust-acceleration magnitude, m/s^2.
    pub rho1: f64,
    /// Maximum thrust-acceleration magnitude, m/s^2.
    pub rho2: f64,
    /// Node count.
    #[serde(rename = "N")]
    pub n: usize,
    /// Step duration, s.
    pub dt: f64,
    /// Minimum elevation of the trajectory above the landing site, rad.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glide_slope_angle: Option<f64>,
}

fn schema_version() -> u32 {
    crate::SCHEMA_VERSION
}

/// A validated, discretized minimum-fuel powered-descent instance.
///
/// Dynamics are a constant-mass double integrator with zero-order-hold thrust:
///
/// ```text
/// r[k+1] = r[k] + v[k] dt + dt^2/2 (u[k] + g)
/// v[k+1] = v[k] + dt (u[k] + g)
/// ||u[k]|| <= sigma[k],   rho1 <= sigma[k] <= rho2
/// ```
///
/// and the objective is `sum(sigma[k]) * dt` over all `N` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioConfig", into = "ScenarioConfig")]
pub struct GuidanceProblem {
    config: ScenarioConfig,
}

/// Validates a scenario. Each violated invariant has its own error variant.
pub fn build_problem(config: ScenarioConfig) -> Result<GuidanceProblem> {
    let vectors = [
        ("r0", config.r0),
        ("v0", config.v0),
        ("r_target", config.r_target),
        ("v_target", config.v_target),
        ("g", config.g),
    ];
    for (name, v) in vectors {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name));
        }
    }
    if !config.rho1.is_finite() {
        return Err(Error::NonFinite("rho1"));
    }
    if !config.rho2.is_finite() {
        return Err(Error::NonFinite("rho2"));
    }
    if !(config.rho1 >= 0.0 && config.rho1 < config.rho2) {
        return Err(Error::ThrustBoundOrder {
            rho1: config.rho1,
            rho2: config.rho2,
        });
    }
    if config.n < 2 {
        return Err(Error::TooFewNodes(config.n));
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(Error::NonPositiveStep(config.dt));
    }
    if let Some(angle) = config.glide_slope_angle {
        if !(angle > 0.0 && angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::GlideSlopeAngle(angle));
        }
    }
    Ok(GuidanceProblem { config })
}

impl TryFrom<ScenarioConfig> for GuidanceProblem {
    type Error = Error;

    fn try_from(config: ScenarioConfig) -> Result<Self> {
        build_problem(config)
    }
}

impl From<GuidanceProblem> for ScenarioConfig {
    fn from(p: GuidanceProblem) -> Self {
        p.config
    }
}

impl GuidanceProblem {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }
    pub fn r0(&self) -> Vec3 {
        self.config.r0
    }
    pub fn v0(&self) -> Vec3 {
        self.config.v0
    }
    pub fn r_target(&self) -> Vec3 {
        self.config.r_target
    }
    pub fn v_target(&self) -> Vec3 {
        self.config.v_target
    }
    pub fn g(&self) -> Vec3 {
        self.config.g
    }
    pub fn rho1(&self) -> f64 {
        self.config.rho1
    }
    pub fn rho2(&self) -> f64 {
        self.config.rho2
    }
    pub fn nodes(&self) -> usize {
        self.config.n
    }
    pub fn dt(&self) -> f64 {
        self.config.dt
    }
    pub fn glide_slope_angle(&self) -> Option<f64> {
        self.config.glide_slope_angle
    }

    /// Number of decision variables, always `10 * N`.
    pub fn variable_count(&self) -> usize {
        VARS_PER_NODE * self.config.n
    }

    pub fn layout(&self) -> Layout {
        Layout { n: self.config.n }
    }

    /// Same instance with a different node count and the horizon held fixed.
    pub fn with_nodes(&self, n: usize) -> Result<GuidanceProblem> {
        let horizon = self.config.dt * (self.config.n - 1) as f64;
        let mut config = self.config.clone();
        config.n = n;
        config.dt = horizon / (n.max(2) - 1) as f64;
        build_problem(config)
    }
}

/// Index map of the iterate vector: all positions, then all velocities, then
/// all thrust accelerations, then all slacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        VARS_PER_NODE * self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn r(&self, k: usize) -> usize {
        3 * k
    }
    pub fn v(&self, k: usize) -> usize {
        3 * self.n + 3 * k
    }
    pub fn u(&self, k: usize) -> usize {
        6 * self.n + 3 * k
    }
    pub fn sigma(&self, k: usize) -> usize {
        9 * self.n + k
    }
    pub fn get3(&self, x: &[f64], start: usize) -> Vec3 {
        [x[start], x[start + 1], x[start + 2]]
    }
    pub fn set3(&self, x: &mut [f64], start: usize, v: Vec3) {
        x[start..start + 3].copy_from_slice(&v);
    }
}

pub(crate) fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// The 1-D vertical descent instance used throughout the tests and the
/// fault campaign: drop 100 m to rest under Mars gravity in 11.4 s.
pub fn reference_vertical() -> GuidanceProblem {
    build_problem(ScenarioConfig {
        schema_version: crate::SCHEMA_VERSION,
        r0: [0.0, 0.0, 100.0],
        v0: [0.0; 3],
        r_target: [0.0; 3],
        v_target: [0.0; 3],
        g: [0.0, 0.0, -3.71],
        rho1: 2.0,
        rho2: 8.0,
        n: 20,
        dt: 0.6,
        glide_slope_angle: None,
    })
    .expect("reference instance is valid")
}

/// A 3-D divert over a fixed 45 s horizon, used for the runtime-scaling
/// ladder. `n` sets the node count.
pub fn reference_divert(n: usize) -> Result<GuidanceProblem> {
    build_problem(ScenarioConfig {
        schema_version: crate::SCHEMA_VERSION,
        r0: [600.0, 200.0, 1500.0],
        v0: [-20.0, 0.0, -75.0],
        r_target: [0.0; 3],
        v_target: [0.0; 3],
        g: [0.0, 0.0, -3.71],
        rho1: 2.0,
        rho2: 8.0,
        n,
        dt: 45.0 / (n.max(2) - 1) as f64,
        glide_slope_angle: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        reference_vertical().config().clone()
    }

    #[test]
    fn variable_count_matches_node_count() {
        for (n, vars) in [(40, 400), (220, 2200)] {
            let p = build_problem(ScenarioConfig { n, ..base() }).unwrap();
            assert_eq!(p.variable_count(), vars);
        }
    }

    #[test]
    fn rejects_each_invariant_with_its_own_error() {
        let e = build_problem(ScenarioConfig {
            rho1: 8.0,
            ..base()
        })
        .unwrap_err();
        assert!(matches!(e, Error::ThrustBoundOrder { .. }), "{e}");
        let e = build_problem(ScenarioConfig { n: 1, ..base() }).unwrap_err();
        assert!(matches!(e, Error::TooFewNodes(1)));
        let e = build_problem(ScenarioConfig { dt: 0.0, ..base() }).unwrap_err();
        assert!(matches!(e, Error::NonPositiveStep(_)));
        let e = build_problem(ScenarioConfig {
            rho1: -1.0,
            ..base()
        })
        .unwrap_err();
        assert!(matches!(e, Error::ThrustBoundOrder { .. }));
        let e = build_problem(ScenarioConfig {
            glide_slope_angle: Some(2.0),
            ..base()
        })
        .unwrap_err();
        assert!(matches!(e, Error::GlideSlopeAngle(_)));
    }

    #[test]
    fn json_round_trip_revalidates() {
        let p = reference_vertical();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"N\":20"));
        let back: GuidanceProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let bad = text.replace("\"rho1\":2.0", "\"rho1\":9.0");
        assert!(serde_json::from_str::<GuidanceProblem>(&bad).is_err());
    }
}
