//! Per-tracklet constant-velocity 3D Kalman filter.
//!
//! The state is a 10-vector [x, y, z, yaw, l, w, h, vx, vy, vz] with
//! velocities in meters per frame (the time step is one frame). The first 7
//! components form the observation vector, which is exactly a [`Box3D`].
//!
//! Operations are pure: each takes a state by reference and returns a new
//! one, so distinct tracklets can be filtered in parallel while one
//! tracklet's filter advances sequentially.

use crate::geometry::{normalize_angle, Box3D};
use nalgebra::{SMatrix, SVector};

pub const STATE_DIM: usize = 10;
pub const OBS_DIM: usize = 7;

type StateVec = SVector<f64, STATE_DIM>;
type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
type ObsVec = SVector<f64, OBS_DIM>;
type ObsMat = SMatrix<f64, OBS_DIM, OBS_DIM>;
type ObsModel = SMatrix<f64, OBS_DIM, STATE_DIM>;

/// Noise configuration: initial covariance, process noise, and measurement
/// noise diagonals. All entries must be finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct KfConfig {
    pub p0_diag: [f64; STATE_DIM],
    pub q_diag: [f64; STATE_DIM],
    pub r_diag: [f64; OBS_DIM],
}

impl Default for KfConfig {
    fn default() -> Self {
        // Large initial velocity uncertainty, small size noise.
        Self {
            p0_diag: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0],
            q_diag: [1.0, 1.0, 1.0, 0.1, 0.01, 0.01, 0.01, 1.0, 1.0, 1.0],
            r_diag: [1.0, 1.0, 1.0, 0.3, 0.1, 0.1, 0.1],
        }
    }
}

/// Filter state: mean vector and covariance. The covariance stays symmetric
/// with a strictly positive diagonal across any predict/update/coast
/// sequence; yaw stays normalized to (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    mean: StateVec,
    cov: StateMat,
}

fn transition() -> StateMat {
    let mut f = StateMat::identity();
    f[(0, 7)] = 1.0;
    f[(1, 8)] = 1.0;
    f[(2, 9)] = 1.0;
    f
}

fn observation() -> ObsModel {
    let mut h = ObsModel::zeros();
    for i in 0..OBS_DIM {
        h[(i, i)] = 1.0;
    }
    h
}

fn obs_vec(b: &Box3D) -> ObsVec {
    ObsVec::from([b.x(), b.y(), b.z(), b.yaw(), b.l(), b.w(), b.h()])
}

impl KfState {
    /// Initialize from a detection: pose and size copied, velocities zero,
    /// covariance set to the configured initial diagonal.
    pub fn init(detection: &Box3D, cfg: &KfConfig) -> Self {
        let mut mean = StateVec::zeros();
        mean.fixed_rows_mut::<OBS_DIM>(0).copy_from(&obs_vec(detection));
        Self {
            mean,
            cov: StateMat::from_diagonal(&SVector::from(cfg.p0_diag)),
        }
    }

    /// Constant-velocity prediction one frame forward: positions advance by
    /// the velocities; yaw, size, and velocities are unchanged; the
    /// covariance grows by the process noise.
    pub fn predict(&self, cfg: &KfConfig) -> Self {
        let f = transition();
        let mut mean = f * self.mean;
        mean[3] = normalize_angle(mean[3]);
        let q = StateMat::from_diagonal(&SVector::from(cfg.q_diag));
        let cov = f * self.cov * f.transpose() + q;
        Self {
            mean,
            cov: symmetrize(cov),
        }
    }

    /// Standard linear update from an associated detection.
    ///
    /// The yaw innovation is wrapped to (-pi, pi]; if its magnitude still
    /// exceeds pi/2 the detection heading is treated as flipped by pi, which
    /// keeps 180-degree detector flips from corrupting the velocity.
    pub fn update(&self, detection: &Box3D, cfg: &KfConfig) -> Self {
        let h = observation();
        let mut innovation = obs_vec(detection) - h * self.mean;
        innovation[3] = normalize_angle(innovation[3]);
        if innovation[3].abs() > std::f64::consts::FRAC_PI_2 {
            innovation[3] = normalize_angle(innovation[3] + std::f64::consts::PI);
        }

        let r = ObsMat::from_diagonal(&SVector::from(cfg.r_diag));
        let s = h * self.cov * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance invertible");
        let gain = self.cov * h.transpose() * s_inv;

        let mut mean = self.mean + gain * innovation;
        mean[3] = normalize_angle(mean[3]);

        // Joseph form keeps the posterior covariance symmetric
        // positive-definite under roundoff.
        let ikh = StateMat::identity() - gain * h;
        let cov = ikh * self.cov * ikh.transpose() + gain * r * gain.transpose();
        Self {
            mean,
            cov: symmetrize(cov),
        }
    }

    /// Coast on the prediction: no measurement is applied, so the mean keeps
    /// the predicted state and the covariance keeps growing through predict
    /// steps alone.
    pub fn coast(&self) -> Self {
        self.clone()
    }

    /// The observable part of the state as a box.
    pub fn pose(&self) -> Box3D {
        Box3D::new(
            self.mean[0],
            self.mean[1],
            self.mean[2],
            self.mean[3],
            self.mean[4],
            self.mean[5],
            self.mean[6],
        )
        .expect("filter keeps dimensions positive")
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.mean[7], self.mean[8], self.mean[9]]
    }

    pub fn mean(&self) -> &SVector<f64, STATE_DIM> {
        &self.mean
    }

    pub fn covariance(&self) -> &SMatrix<f64, STATE_DIM, STATE_DIM> {
        &self.cov
    }
}

fn symmetrize(m: StateMat) -> StateMat {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn bx(x: f64, y: f64, z: f64, yaw: f64, l: f64, w: f64, h: f64) -> Box3D {
        Box3D::new(x, y, z, yaw, l, w, h).unwrap()
    }

    fn cfg() -> KfConfig {
        KfConfig::default()
    }

    #[test]
    fn init_copies_pose_and_zeroes_velocity() {
        let s = KfState::init(&bx(1.0, 2.0, 3.0, 0.0, 4.0, 2.0, 1.5), &cfg());
        let expect = [1.0, 2.0, 3.0, 0.0, 4.0, 2.0, 1.5, 0.0, 0.0, 0.0];
        for (i, want) in expect.iter().enumerate() {
            assert_eq!(s.mean()[i], *want, "component {i}");
        }
        for i in 0..STATE_DIM {
            assert_eq!(s.covariance()[(i, i)], cfg().p0_diag[i]);
        }
    }

    #[test]
    fn init_normalizes_yaw() {
        let s = KfState::init(&bx(0.0, 0.0, 0.0, 3.0 * FRAC_PI_2, 1.0, 1.0, 1.0), &cfg());
        assert!((s.mean()[3] - (-FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn predict_with_zero_velocity_keeps_pose() {
        let s = KfState::init(&bx(5.0, -1.0, 0.5, 0.3, 4.0, 2.0, 1.5), &cfg());
        let p = s.predict(&cfg());
        for i in 0..OBS_DIM {
            assert!((p.mean()[i] - s.mean()[i]).abs() < 1e-12);
        }
        // Covariance grows everywhere: velocity uncertainty feeds the
        // position rows and process noise feeds every diagonal.
        for i in 0..STATE_DIM {
            assert!(p.covariance()[(i, i)] > s.covariance()[(i, i)]);
        }
        // Size and yaw rows gain exactly their process noise.
        for i in 3..7 {
            let grown = p.covariance()[(i, i)] - s.covariance()[(i, i)];
            assert!((grown - cfg().q_diag[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_advances_position_by_velocity() {
        let mut s = KfState::init(&bx(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0), &cfg());
        s.mean[7] = 2.0;
        let p = s.predict(&cfg());
        assert!((p.mean()[0] - 2.0).abs() < 1e-12);
        assert!((p.mean()[1]).abs() < 1e-12);
        assert!((p.mean()[7] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ten_predicts_advance_ten_meters() {
        let mut s = KfState::init(&bx(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0), &cfg());
        s.mean[7] = 1.0;
        for _ in 0..10 {
            s = s.predict(&cfg());
        }
        assert!((s.mean()[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn update_with_exact_pose_is_fixed_point() {
        let s = KfState::init(&bx(1.0, 2.0, 0.0, 0.4, 4.0, 2.0, 1.5), &cfg());
        let p = s.predict(&cfg());
        let u = p.update(&p.pose(), &cfg());
        for i in 0..STATE_DIM {
            assert!(
                (u.mean()[i] - p.mean()[i]).abs() < 1e-12,
                "component {i} moved"
            );
        }
    }

    #[test]
    fn yaw_innovation_wraps_across_pi() {
        // State yaw +3.10 observed as -3.10: the short way around is
        // +(2*pi - 6.20), not -6.20.
        let s = KfState::init(&bx(0.0, 0.0, 0.0, 3.10, 1.0, 1.0, 1.0), &cfg());
        let u = s.update(&bx(0.0, 0.0, 0.0, -3.10, 1.0, 1.0, 1.0), &cfg());
        let innovation = std::f64::consts::TAU - 6.20;
        assert!((innovation - 0.083185307).abs() < 1e-6);
        // Independent gain arithmetic: k = p0 / (p0 + r) for the yaw row.
        let k = cfg().p0_diag[3] / (cfg().p0_diag[3] + cfg().r_diag[3]);
        let expected = normalize_angle(3.10 + k * innovation);
        assert!((u.mean()[3] - expected).abs() < 1e-9);
        assert!(u.mean()[3] <= PI && u.mean()[3] > -PI);
    }

    #[test]
    fn yaw_flip_beyond_half_pi() {
        // Innovation of 2.0 rad exceeds pi/2, so the detection heading is
        // flipped by pi and the state moves the other way.
        let s = KfState::init(&bx(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0), &cfg());
        let u = s.update(&bx(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 1.0), &cfg());
        let k = cfg().p0_diag[3] / (cfg().p0_diag[3] + cfg().r_diag[3]);
        let expected = k * (2.0 - PI);
        assert!((u.mean()[3] - expected).abs() < 1e-9);
        assert!(u.mean()[3] < 0.0);
    }

    #[test]
    fn coast_is_identity_on_state() {
        let mut s = KfState::init(&bx(5.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0), &cfg());
        s.mean[7] = 1.0;
        let p = s.predict(&cfg());
        let c = p.coast();
        assert_eq!(c, p);
        assert!((c.mean()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn thirty_coasts_travel_in_a_straight_line() {
        let mut s = KfState::init(&bx(0.0, 0.0, 0.0, 0.2, 4.0, 2.0, 1.5), &cfg());
        s.mean[7] = 1.0;
        for _ in 0..30 {
            s = s.predict(&cfg()).coast();
        }
        assert!((s.mean()[0] - 30.0).abs() < 1e-9);
        assert!(s.mean()[1].abs() < 1e-12);
        assert!((s.mean()[3] - 0.2).abs() < 1e-12);
        assert!((s.mean()[4] - 4.0).abs() < 1e-12);
        assert!((s.mean()[5] - 2.0).abs() < 1e-12);
        assert!((s.mean()[6] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn huge_measurement_noise_approximates_coasting() {
        let huge = KfConfig {
            r_diag: [1e12; OBS_DIM],
            ..cfg()
        };
        let s = KfState::init(&bx(3.0, 1.0, 0.0, 0.5, 4.0, 2.0, 1.5), &huge).predict(&huge);
        let u = s.update(&bx(5.0, 2.0, 0.5, 0.9, 4.5, 2.2, 1.6), &huge);
        for i in 0..STATE_DIM {
            assert!(
                (u.mean()[i] - s.mean()[i]).abs() <= 1e-6,
                "component {i} moved by {}",
                (u.mean()[i] - s.mean()[i]).abs()
            );
        }
    }

    fn one_step_errors(frames: usize) -> Vec<f64> {
        // Noiseless track advancing 1 m/frame along x.
        let truth = |t: usize| bx(t as f64, 0.0, 0.0, 0.0, 4.0, 2.0, 1.5);
        let mut s = KfState::init(&truth(0), &cfg());
        let mut errs = Vec::new();
        for t in 1..=frames {
            let p = s.predict(&cfg());
            errs.push((p.pose().x() - t as f64).abs());
            s = p.update(&truth(t), &cfg());
        }
        errs
    }

    #[test]
    fn converges_on_noiseless_constant_velocity() {
        let errs = one_step_errors(11);
        assert!(
            errs[10] < 0.01,
            "one-step error at frame 11 was {}",
            errs[10]
        );
    }

    #[test]
    fn one_step_error_decays_after_first_three_updates() {
        // The closed-loop error poles are complex at the default noise
        // settings, so the signed error rings: each zero crossing makes the
        // absolute error tick up once while already deep in convergence
        // (observed: 6.9e-4 -> 8.4e-4 at step 7). Decay must be strict until
        // the error falls under 1e-3; past that only sub-1e-3 ringing is
        // allowed, never a real divergence.
        let errs = one_step_errors(20);
        for k in 3..errs.len() - 1 {
            assert!(
                errs[k + 1] <= errs[k] + 1e-9 || errs[k + 1] < 1e-3,
                "error rose at step {}: {} -> {}",
                k,
                errs[k],
                errs[k + 1]
            );
        }
        assert!(errs[19] < 1e-6, "tail error {}", errs[19]);
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_obs() -> impl Strategy<Value = Box3D> {
        (
            -50.0f64..50.0,
            -50.0f64..50.0,
            -2.0f64..2.0,
            -std::f64::consts::PI..std::f64::consts::PI,
            0.5f64..6.0,
            0.5f64..3.0,
            0.5f64..3.0,
        )
            .prop_map(|(x, y, z, yaw, l, w, h)| Box3D::new(x, y, z, yaw, l, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn covariance_stays_symmetric_with_positive_diagonal(
            first in arb_obs(),
            steps in proptest::collection::vec((arb_obs(), 0u8..3), 1..30),
        ) {
            let cfg = KfConfig::default();
            let mut s = KfState::init(&first, &cfg);
            for (obs, op) in steps {
                s = match op {
                    0 => s.predict(&cfg),
                    1 => s.predict(&cfg).update(&obs, &cfg),
                    _ => s.predict(&cfg).coast(),
                };
                let c = s.covariance();
                for i in 0..STATE_DIM {
                    prop_assert!(c[(i, i)] > 0.0);
                    for j in 0..STATE_DIM {
                        prop_assert!((c[(i, j)] - c[(j, i)]).abs() <= 1e-9);
                    }
                }
                prop_assert!(s.mean()[3] > -std::f64::consts::PI);
                prop_assert!(s.mean()[3] <= std::f64::consts::PI);
            }
        }
    }
}
