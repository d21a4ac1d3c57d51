//! Fixtures shared by the benchmarks.

use psnat_core::barycenter::VisualKernelProfile;
use psnat_core::group_orbit::{enumerate_ball, presets, BallOptions, GroupBall};

pub fn sanov_ball(r_max: f64) -> GroupBall {
    enumerate_ball(&presets::sanov(), &BallOptions::new(r_max).with_slack(0.0)).expect("sanov ball")
}

pub fn profile(n: usize) -> VisualKernelProfile {
    VisualKernelProfile::build(n, 20_000).expect("kernel profile")
}
