use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use super::SearchError;

/// How the connectivity and extruder slope limits are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleCombinator {
    /// The more restrictive of the two limits.
    Min,
    /// The larger of the two limits, taken literally.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Largest polar angle of sampled cut normals (rad).
    pub phi_sample_max: f64,
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Spacing between parallel candidate planes (m).
    pub delta: f64,
    pub w_inner: usize,
    pub w_outer: usize,
    pub g_disp: f64,
    pub g_part: f64,
    pub g_faces: f64,
    pub max_iterations: usize,
    /// Material each UAV carries (m^3).
    pub capacities: Vec<f64>,
    /// Slope limit that keeps enough overlap between neighbouring chunks (rad).
    pub phi_conn_max: f64,
    /// Extruder bounding rectangle height and length (m).
    pub extruder_h: f64,
    pub extruder_l: f64,
    pub phi_combinator: AngleCombinator,
    /// Use the standard deviation instead of the variance in the dispersion.
    pub dispersion_sqrt: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            phi_sample_max: FRAC_PI_4,
            n_polar: 2,
            n_azimuth: 8,
            delta: 0.1,
            w_inner: 3,
            w_outer: 4,
            g_disp: 200.0,
            g_part: 10.0,
            g_faces: 20.0,
            max_iterations: 10,
            capacities: vec![0.04, 0.04],
            phi_conn_max: FRAC_PI_4,
            extruder_h: 0.1,
            extruder_l: 0.1,
            phi_combinator: AngleCombinator::Min,
            dispersion_sqrt: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: &str| Err(SearchError::InvalidConfig(msg.to_string()));
        let angle_ok = |a: f64| a.is_finite() && a > 0.0 && a <= FRAC_PI_2;
        if !angle_ok(self.phi_sample_max) {
            return bad("search.phi_sample_max must lie in (0, pi/2]");
        }
        if !angle_ok(self.phi_conn_max) {
            return bad("search.phi_conn_max must lie in (0, pi/2]");
        }
        if self.w_inner == 0 || self.w_outer == 0 {
            return bad("search.w_inner and search.w_outer must be at least 1");
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad("search.delta must be positive");
        }
        if self.capacities.is_empty() || self.capacities.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return bad("search.capacities must be non-empty and positive");
        }
        if ![self.g_disp, self.g_part, self.g_faces].iter().all(|g| g.is_finite()) {
            return bad("search gains must be finite");
        }
        if !(self.extruder_h > 0.0 && self.extruder_l > 0.0 && self.extruder_h.is_finite() && self.extruder_l.is_finite()) {
            return bad("search.extruder_h and search.extruder_l must be positive");
        }
        if self.n_polar > 0 && self.n_azimuth == 0 {
            return bad("search.n_azimuth must be at least 1");
        }
        Ok(())
    }
}

/// Polar-angle bound for cut normals from the connectivity and extruder
/// collision limits, never above the sampling limit.
pub fn max_polar_angle(config: &SearchConfig) -> f64 {
    let extruder = (config.extruder_h / config.extruder_l).atan();
    let combined = match config.phi_combinator {
        AngleCombinator::Min => config.phi_conn_max.min(extruder),
        AngleCombinator::Max => config.phi_conn_max.max(extruder),
    };
    combined.min(config.phi_sample_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn extruder_limit_at_equal_sides() {
        let c = SearchConfig { extruder_h: 0.3, extruder_l: 0.3, phi_conn_max: deg(90.0), phi_sample_max: deg(90.0), ..Default::default() };
        assert!((max_polar_angle(&c) - deg(45.0)).abs() < 1e-12);
    }

    #[test]
    fn min_and_max_combinators() {
        let mut c = SearchConfig { phi_conn_max: deg(30.0), phi_sample_max: deg(90.0), ..Default::default() };
        assert!((max_polar_angle(&c) - deg(30.0)).abs() < 1e-12);
        c.phi_combinator = AngleCombinator::Max;
        assert!((max_polar_angle(&c) - deg(45.0)).abs() < 1e-12);
    }

    #[test]
    fn clamped_by_sampling_limit() {
        let c = SearchConfig {
            phi_conn_max: deg(80.0),
            extruder_h: 10.0,
            extruder_l: 1.0,
            phi_sample_max: deg(20.0),
            phi_combinator: AngleCombinator::Max,
            ..Default::default()
        };
        assert!((max_polar_angle(&c) - deg(20.0)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(SearchConfig::default().validate().is_ok());
        for broken in [
            SearchConfig { w_inner: 0, ..Default::default() },
            SearchConfig { delta: 0.0, ..Default::default() },
            SearchConfig { capacities: vec![], ..Default::default() },
            SearchConfig { capacities: vec![0.1, -1.0], ..Default::default() },
            SearchConfig { g_disp: f64::NAN, ..Default::default() },
        ] {
            assert!(broken.validate().is_err());
        }
    }
}
