//! Kinematic bicycle stepping under a normalized steering command.
//!
//! Steering is normalized to `[-1, 1]`, with `+1` a 25° right turn. Heading
//! is counter-clockwise, so a positive command decreases heading.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Front-wheel angle reached at a normalized command of 1.
pub const MAX_STEERING_DEG: f64 = 25.0;

pub fn max_steering_rad() -> f64 {
    MAX_STEERING_DEG.to_radians()
}

/// Normalized command to front-wheel angle, right-positive. Inputs outside
/// `[-1, 1]` saturate.
pub fn steering_to_angle(theta_norm: f64) -> f64 {
    theta_norm.clamp(-1.0, 1.0) * max_steering_rad()
}

/// Inverse of [`steering_to_angle`], saturating at ±25°.
pub fn angle_to_steering(angle: f64) -> f64 {
    (angle / max_steering_rad()).clamp(-1.0, 1.0)
}

/// Wraps an angle into `(-PI, PI]`; values already in range are returned untouched.
pub fn wrap_angle(mut a: f64) -> f64 {
    while a > PI {
        a -= 2.0 * PI;
    }
    while a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn at_origin(speed: f64) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Seconds per step; one camera frame per step.
    pub t_delta: f64,
    #[serde(rename = "duration_T")]
    pub duration_t: f64,
    pub wheelbase: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_delta: 0.05,
            duration_t: 25.0,
            wheelbase: 2.6,
            image_width: 32,
            image_height: 32,
        }
    }
}

impl SimConfig {
    /// `m = floor(T / t_delta)`, robust to the representation error of `t_delta`.
    pub fn steps_m(&self) -> usize {
        (self.duration_t / self.t_delta + 1e-9).floor() as usize
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.t_delta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_delta > 0.0 && self.t_delta.is_finite()) {
            return Err(Error::InvalidArgument("t_delta must be positive".into()));
        }
        if !(self.duration_t >= 0.0 && self.duration_t.is_finite()) {
            return Err(Error::InvalidArgument("duration_T must be non-negative".into()));
        }
        if !(self.wheelbase > 0.0) {
            return Err(Error::InvalidArgument("wheelbase must be positive".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        Ok(())
    }
}

/// One explicit-Euler step. Position advances along the current heading,
/// then heading turns; speed is unchanged.
pub fn step(st: &VehicleState, theta_norm: f64, cfg: &SimConfig) -> VehicleState {
    let delta = steering_to_angle(theta_norm);
    let v = st.speed;
    let dt = cfg.t_delta;
    let (sin_h, cos_h) = st.heading.sin_cos();
    VehicleState {
        x: st.x + v * cos_h * dt,
        y: st.y + v * sin_h * dt,
        heading: wrap_angle(st.heading - v / cfg.wheelbase * delta.tan() * dt),
        speed: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn steering_map() {
        assert_eq!(steering_to_angle(0.0), 0.0);
        assert!((steering_to_angle(1.0) - 0.43633).abs() < 1e-5);
        assert_eq!(steering_to_angle(1.7), steering_to_angle(1.0));
        assert_eq!(steering_to_angle(-3.0), -steering_to_angle(1.0));
        assert_eq!(angle_to_steering(steering_to_angle(0.3)), 0.3);
    }

    #[test]
    fn straight_step() {
        let cfg = SimConfig::default();
        let next = step(&VehicleState::at_origin(10.0), 0.0, &cfg);
        assert_eq!((next.x, next.y, next.heading, next.speed), (0.5, 0.0, 0.0, 10.0));
    }

    #[test]
    fn full_right_lock_for_one_step() {
        let cfg = SimConfig::default();
        let next = step(&VehicleState::at_origin(10.0), 1.0, &cfg);
        let expected = (10.0 / 2.6) * 0.43633f64.tan() * 0.05;
        // Right turn: heading decreases.
        assert!((next.heading + expected).abs() < 1e-4);
        assert!(next.heading < 0.0);
    }

    /// Kasa algebraic circle fit; returns the radius.
    fn fit_radius(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let (mx, my) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in points {
            let (u, v) = (x - mx, y - my);
            suu += u * u;
            svv += v * v;
            suv += u * v;
            suuu += u * u * u;
            svvv += v * v * v;
            suvv += u * v * v;
            svuu += v * u * u;
        }
        let (b1, b2) = (0.5 * (suuu + suvv), 0.5 * (svvv + svuu));
        let det = suu * svv - suv * suv;
        let uc = (b1 * svv - b2 * suv) / det;
        let vc = (suu * b2 - suv * b1) / det;
        (uc * uc + vc * vc + (suu + svv) / n).sqrt()
    }

    #[test]
    fn constant_steering_traces_the_bicycle_circle() {
        let cfg = SimConfig::default();
        for theta in [0.2, -0.5, 1.0] {
            let mut st = VehicleState::at_origin(8.0);
            let mut pts = vec![(st.x, st.y)];
            for _ in 0..100 {
                st = step(&st, theta, &cfg);
                pts.push((st.x, st.y));
            }
            let expected = cfg.wheelbase / steering_to_angle(theta).abs().tan();
            let r = fit_radius(&pts);
            assert!((r - expected).abs() / expected < 0.01, "{r} vs {expected}");
        }
    }

    #[test]
    fn steps_m_is_floor() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.steps_m(), 500);
        assert_eq!(SimConfig { duration_t: 1.07, t_delta: 0.1, ..cfg }.steps_m(), 10);
    }

    proptest! {
        #[test]
        fn mirror_symmetry(thetas in prop::collection::vec(-1.0f64..1.0, 1..80), v in 1.0f64..20.0) {
            let cfg = SimConfig::default();
            let mut a = VehicleState::at_origin(v);
            let mut b = a;
            for &t in &thetas {
                a = step(&a, t, &cfg);
                b = step(&b, -t, &cfg);
                prop_assert_eq!(a.x, b.x);
                prop_assert_eq!(a.y, -b.y);
                prop_assert_eq!(a.heading, -b.heading);
            }
        }

        #[test]
        fn step_length_is_bounded(
            x in -100.0f64..100.0, y in -100.0f64..100.0, h in -3.14f64..3.14,
            v in 0.0f64..30.0, t in -2.0f64..2.0,
        ) {
            let cfg = SimConfig::default();
            let st = VehicleState { x, y, heading: h, speed: v };
            let next = step(&st, t, &cfg);
            prop_assert!((next.x - x).hypot(next.y - y) <= v * cfg.t_delta + 1e-12);
            prop_assert!(next.heading > -PI && next.heading <= PI);
        }

        #[test]
        fn steering_is_odd(a in -5.0f64..5.0) {
            prop_assert_eq!(steering_to_angle(-a), -steering_to_angle(a));
        }
    }
}
