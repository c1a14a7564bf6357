//! Unit-variance innovation densities and samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    StudentT,
    Ged,
}

impl Innovation {
    pub fn label(self) -> &'static str {
        match self {
            Innovation::StudentT => "std",
            Innovation::Ged => "ged",
        }
    }

    pub fn validate_shape(self, shape: f64) -> Result<()> {
        let ok = match self {
            Innovation::StudentT => shape > 2.0 && shape.is_finite(),
            Innovation::Ged => shape > 0.0 && shape.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "shape {shape} outside the {self:?} domain"
            )))
        }
    }

    /// Per-observation log density of a unit-variance variate, split into a
    /// constant part (depends on the shape only) and a kernel in `z`.
    pub fn log_density_parts(self, shape: f64) -> LogDensity {
        match self {
            Innovation::StudentT => {
                let nu = shape;
                let c = ln_gamma((nu + 1.0) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
                LogDensity {
                    kind: self,
                    shape,
                    constant: c,
                    scale: nu - 2.0,
                }
            }
            Innovation::Ged => {
                let nu = shape;
                let lambda = ged_lambda(nu);
                let c = nu.ln()
                    - lambda.ln()
                    - (1.0 + 1.0 / nu) * std::f64::consts::LN_2
                    - ln_gamma(1.0 / nu);
                LogDensity {
                    kind: self,
                    shape,
                    constant: c,
                    scale: lambda,
                }
            }
        }
    }

    pub fn log_density(self, shape: f64, z: f64) -> f64 {
        self.log_density_parts(shape).eval(z)
    }

    pub fn sample<R: Rng + ?Sized>(self, shape: f64, rng: &mut R) -> f64 {
        match self {
            Innovation::StudentT => {
                let t: f64 = StudentT::new(shape).expect("valid df").sample(rng);
                t * ((shape - 2.0) / shape).sqrt()
            }
            Innovation::Ged => {
                // |z/lambda|^nu / 2 ~ Gamma(1/nu, 1)
                let g: f64 = Gamma::new(1.0 / shape, 1.0)
                    .expect("valid shape")
                    .sample(rng);
                let mag = ged_lambda(shape) * (2.0 * g).powf(1.0 / shape);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }
}

/// Scale making the GED variance one.
pub fn ged_lambda(nu: f64) -> f64 {
    ((-2.0 / nu) * std::f64::consts::LN_2 + ln_gamma(1.0 / nu) - ln_gamma(3.0 / nu))
        .exp()
        .sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct LogDensity {
    kind: Innovation,
    shape: f64,
    constant: f64,
    scale: f64,
}

impl LogDensity {
    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            Innovation::StudentT => {
                self.constant - 0.5 * (self.shape + 1.0) * (1.0 + z * z / self.scale).ln()
            }
            Innovation::Ged => self.constant - 0.5 * (z.abs() / self.scale).powf(self.shape),
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn integrate(f: impl Fn(f64) -> f64) -> f64 {
        // composite Simpson on [-60, 60]
        let n = 240_000;
        let (a, b) = (-60.0, 60.0);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_are_normalized_with_unit_variance() {
        for (kind, shape) in [
            (Innovation::StudentT, 6.4),
            (Innovation::StudentT, 30.0),
            (Innovation::Ged, 1.35),
            (Innovation::Ged, 2.0),
        ] {
            let mass = integrate(|z| kind.log_density(shape, z).exp());
            let var = integrate(|z| z * z * kind.log_density(shape, z).exp());
            assert!((mass - 1.0).abs() < 1e-6, "{kind:?} {shape} mass {mass}");
            assert!((var - 1.0).abs() < 2e-3, "{kind:?} {shape} var {var}");
        }
    }

    #[test]
    fn ged_two_is_normal() {
        let z: f64 = 0.7;
        let normal = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z;
        assert!((Innovation::Ged.log_density(2.0, z) - normal).abs() < 1e-12);
    }

    #[test]
    fn samplers_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        for (kind, shape) in [(Innovation::StudentT, 8.0), (Innovation::Ged, 1.4)] {
            let draws: Vec<f64> = (0..n).map(|_| kind.sample(shape, &mut rng)).collect();
            let var = draws.iter().map(|z| z * z).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.03, "{kind:?} var {var}");
        }
    }

    #[test]
    fn shape_domains() {
        assert!(Innovation::StudentT.validate_shape(2.0).is_err());
        assert!(Innovation::StudentT.validate_shape(2.5).is_ok());
        assert!(Innovation::Ged.validate_shape(0.0).is_err());
    }
}
