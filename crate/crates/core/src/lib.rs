//! Continuous-time radar-inertial odometry.
//!
//! The vehicle trajectory is a uniform cumulative cubic B-spline on SE(3).
//! Radar Doppler returns and IMU samples are asynchronous; each is compared
//! against the spline at its own timestamp and the control poses of a
//! sliding window are refined by robust Levenberg-Marquardt.

pub mod estimator;
pub mod eval;
pub mod geometry;
pub mod sensors;
pub mod simulator;
pub mod spline;
