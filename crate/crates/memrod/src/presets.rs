//! Parameter sets of the standard experiments.

use std::f64::consts::PI;

use crate::config::{ExperimentConfig, RodPreset};

/// Bare vesicle relaxing to a sphere.
pub fn sphere() -> ExperimentConfig {
    ExperimentConfig { mesh_level: 4, ..Default::default() }
}

/// Ring of length `π` on a pressurized vesicle, used for mesh refinement.
pub fn convergence(level: u32) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: level,
        rod_preset: RodPreset::Circular,
        rod_length: PI,
        rod_nodes: 31,
        c: 5.0,
        p: 10.0,
        stretch: 100.0,
        bend: 1.0,
        ..Default::default()
    }
}

/// Elastic band pinned to the equator of a strongly pressurized vesicle;
/// `ratio` is `L / 2π`.
///
/// The stiff area and gauge weights keep the membrane from redistributing
/// material between rod quadrature points, which otherwise lets the band
/// under-report its own stretch.
pub fn line_tension(ratio: f64) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: 4,
        rod_preset: RodPreset::Circular,
        rod_length: 2.0 * PI * ratio,
        rod_nodes: 31,
        c: 1.0,
        p: 1000.0,
        stretch: 100.0,
        bend: 0.0,
        lambda_g: 5000.0,
        mu1: 1e5,
        max_iter: 60_000,
        init_noise: 0.0,
        fix_theta1: Some(PI / 2.0),
        ..Default::default()
    }
}

/// Open rod of length `π`; sweep over the membrane stiffness.
pub fn straight_rod(c: f64) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: 4,
        rod_preset: RodPreset::Straight,
        rod_length: PI,
        rod_nodes: 31,
        c,
        p: 0.0,
        stretch: 20.0,
        bend: 2.0,
        ..Default::default()
    }
}

/// Closed ring longer than the equator; sweep over the membrane stiffness.
pub fn ring_buckling(c: f64) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: 4,
        rod_preset: RodPreset::Circular,
        rod_length: 2.6 * PI,
        rod_nodes: 31,
        c,
        p: 0.0,
        stretch: 20.0,
        bend: 1.0,
        ..Default::default()
    }
}

/// Short ring with curvature normal to the membrane; sweep over the rod's
/// bending and twisting modulus.
pub fn bend_twist(bend: f64) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: 4,
        rod_preset: RodPreset::Circular,
        rod_length: PI,
        rod_nodes: 31,
        c: 1.0,
        p: 0.0,
        stretch: 10.0,
        bend,
        ..Default::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Application {
    StraightRod,
    RingBuckling,
    BendTwist,
}

impl Application {
    pub fn parse(name: &str) -> Option<Application> {
        match name {
            "straight_rod" => Some(Application::StraightRod),
            "ring_buckling" => Some(Application::RingBuckling),
            "bend_twist" => Some(Application::BendTwist),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Application::StraightRod => "straight_rod",
            Application::RingBuckling => "ring_buckling",
            Application::BendTwist => "bend_twist",
        }
    }

    /// Config for one sweep value (`c` or `E` depending on the preset).
    pub fn config(self, value: f64) -> ExperimentConfig {
        match self {
            Application::StraightRod => straight_rod(value),
            Application::RingBuckling => ring_buckling(value),
            Application::BendTwist => bend_twist(value),
        }
    }

    /// The swept parameter's config key.
    pub fn sweep_key(self) -> &'static str {
        match self {
            Application::BendTwist => "material.E",
            _ => "material.c",
        }
    }

    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            Application::StraightRod => vec![10.0, 3.0, 1.0, 0.3],
            Application::RingBuckling => vec![3.0, 0.1975, 0.1925],
            Application::BendTwist => vec![0.25, 1.0, 4.0, 16.0],
        }
    }
}
