//! One-sided truncated univariate normal draws.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Z ~ N(0, 1) conditioned on Z > a.
///
/// Plain rejection for a ≤ 0 (acceptance ≥ 1/2), otherwise the translated
/// exponential proposal with the optimal rate (a + √(a² + 4))/2.
pub fn standard_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / rate;
        let u: f64 = rng.random();
        let d = x - rate;
        if u < (-0.5 * d * d).exp() {
            return x;
        }
    }
}

/// X ~ N(mean, sd²) conditioned on X > lower.
pub fn sample_above<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, rng: &mut R) -> f64 {
    let x = mean + sd * standard_above((lower - mean) / sd, rng);
    // Guards against rounding placing the draw on the boundary.
    if x > lower {
        x
    } else {
        lower + f64::EPSILON * lower.abs().max(1.0)
    }
}

/// X ~ N(mean, sd²) conditioned on X < upper.
pub fn sample_below<R: Rng + ?Sized>(mean: f64, sd: f64, upper: f64, rng: &mut R) -> f64 {
    let x = mean - sd * standard_above((mean - upper) / sd, rng);
    if x < upper {
        x
    } else {
        upper - f64::EPSILON * upper.abs().max(1.0)
    }
}
