use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shifted Gaussian frequency filter
/// `g(nu) = exp(-(beta*sigma*nu + 1/sigma)^2 / 8)`.
///
/// Satisfies `g(nu) = g(-nu) * exp(-beta*nu/2)` for every `nu`, and its
/// inverse Fourier transform has unit L1 norm, so filtering an operator never
/// increases its norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFilter {
    beta: f64,
    sigma: f64,
}

impl GaussianFilter {
    pub fn new(beta: f64, sigma: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::input(format!("filter beta must be finite and >= 0, got {beta}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::input(format!("filter sigma must be finite and > 0, got {sigma}")));
        }
        Ok(Self { beta, sigma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weight(&self, nu: f64) -> f64 {
        let t = self.beta * self.sigma * nu + 1.0 / self.sigma;
        (-t * t / 8.0).exp()
    }

    /// `g(0) = exp(-1/(8 sigma^2))`, always in `(0, 1]`.
    pub fn weight_at_zero(&self) -> f64 {
        self.weight(0.0)
    }
}

/// Free-function form of [`GaussianFilter::weight`].
pub fn filter_weight(filter: &GaussianFilter, nu: f64) -> f64 {
    filter.weight(nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn printed_values() {
        let f = GaussianFilter::new(1.0, 1.0).unwrap();
        assert_relative_eq!(f.weight(0.0), (-0.125f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(f.weight(0.0), 0.8825, max_relative = 1e-4);
        let f2 = GaussianFilter::new(2.0, 1.0).unwrap();
        assert_relative_eq!(f2.weight(1.0), (-9.0f64 / 8.0).exp(), max_relative = 1e-15);
        assert_relative_eq!(f2.weight(1.0), 0.3247, max_relative = 1e-3);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianFilter::new(-1.0, 1.0).is_err());
        assert!(GaussianFilter::new(1.0, 0.0).is_err());
        assert!(GaussianFilter::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn peak_is_one() {
        // g is a unit-height Gaussian centred at nu = -1/(beta sigma^2)
        let f = GaussianFilter::new(1.5, 0.8).unwrap();
        assert_relative_eq!(f.weight(-1.0 / (1.5 * 0.64)), 1.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn kms_functional_equation(beta in 0.0f64..10.0, sigma in 0.2f64..5.0, nu in -5.0f64..5.0) {
            let f = GaussianFilter::new(beta, sigma).unwrap();
            let lhs = f.weight(nu);
            let rhs = f.weight(-nu) * (-beta * nu / 2.0).exp();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
        }
    }
}
