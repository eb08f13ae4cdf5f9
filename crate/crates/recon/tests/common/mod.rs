#![allow(dead_code)]

use recon::discretization::{Potential, PotentialDescriptor};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;

pub fn lab(level: usize) -> Lab {
    Lab::new(&DomainSpec::new(3.0, 1.0, level), 0.15, 0.07).expect("lab")
}

pub fn gaussian(lab: &Lab) -> Potential {
    Potential::from_descriptor(&PotentialDescriptor::default(), &lab.mesh, std::path::Path::new(".")).unwrap()
}

/// Midpoint rule on an `n³` grid over the bounding cube of the ball.
pub fn ball_quadrature(center: [f64; 3], radius: f64, n: usize, f: impl Fn([f64; 3]) -> f64) -> f64 {
    let h = 2.0 * radius / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = [
                    center[0] - radius + (i as f64 + 0.5) * h,
                    center[1] - radius + (j as f64 + 0.5) * h,
                    center[2] - radius + (k as f64 + 0.5) * h,
                ];
                let d2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
                if d2 <= radius * radius {
                    s += f(p);
                }
            }
        }
    }
    s * h * h * h
}

pub fn rel(a: &[recon::linalg::c64], b: &[recon::linalg::c64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let s: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    d / s.max(f64::MIN_POSITIVE)
}
