//! Jump-kernel and potential families together with the analytic
//! functionals the rest of the crate is built on: truncated moments of the
//! kernel, and the level functions `Φ_K`, `Θ_K` of the potential.

mod kernel;
mod potential;

pub use kernel::{KernelFamily, KernelSpec, Moments};
pub use potential::{
    valley_tail_bound_check, PotentialShape, PotentialSpec, RadiusLaw, TailBoundReport,
    TailBoundRow, ValleyGeometry,
};

/// Closed interval `[center - radius, center + radius]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ball {
    pub center: f64,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: f64, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.radius + 1e-12
    }
}

/// Surface area of the unit sphere in `d` dimensions.
pub fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h)
}

/// Volume of the unit ball in `d` dimensions.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_dimensional_spheres() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-13);
    }
}
