//! Exponent window and regularity predictions in exact rational arithmetic.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive};

use crate::error::{Error, Result};

/// Exact value of the shortest decimal that round-trips to `x`, so that
/// `0.2` becomes `1/5` rather than its binary neighbour.
pub fn decimal_rational(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("expected a finite number, got {x}")));
    }
    let text = format!("{x}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int}{frac}").parse().expect("decimal digits");
    let denom = num::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(numer, denom);
    Ok(if negative { -r } else { r })
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Range of integrability exponents `p ∈ ((d+2)/κ, (1+β)/γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityWindow {
    pub beta: BigRational,
    pub gamma: BigRational,
    pub kappa: BigRational,
    pub dim: usize,
    pub p_min: BigRational,
    pub p_max: BigRational,
    pub nonempty: bool,
}

impl AdmissibilityWindow {
    pub fn p_min_f64(&self) -> f64 {
        to_f64(&self.p_min)
    }

    pub fn p_max_f64(&self) -> f64 {
        to_f64(&self.p_max)
    }

    pub fn contains(&self, p: &BigRational) -> bool {
        *p > self.p_min && *p < self.p_max
    }

    /// `p₀ = p / (p(γ+1) - (1+β))`, or `None` where the denominator is
    /// not positive.
    pub fn p0_of(&self, p: &BigRational) -> Option<BigRational> {
        let one = BigRational::one();
        let denom = p * (&self.gamma + &one) - (&self.beta + &one);
        denom.is_positive().then(|| p / denom)
    }

    /// `κ - γ(d+2)/(1+β)`, the room left for Hölder regularity.
    pub fn gap(&self) -> BigRational {
        let d2 = BigRational::from_integer(BigInt::from(self.dim + 2));
        &self.kappa - &self.gamma * d2 / (&self.beta + BigRational::one())
    }
}

/// Window for exact rational inputs.
pub fn admissibility_exact(
    beta: BigRational,
    gamma: BigRational,
    dim: usize,
    kappa: BigRational,
) -> Result<AdmissibilityWindow> {
    if !beta.is_positive() || !gamma.is_positive() {
        return Err(Error::InvalidParameter("beta and gamma must be positive".into()));
    }
    if !kappa.is_positive() || kappa > BigRational::one() {
        return Err(Error::InvalidParameter("kappa must lie in (0, 1]".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    let one = BigRational::one();
    let p_min = BigRational::from_integer(BigInt::from(dim + 2)) / &kappa;
    let p_max = (&beta + &one) / &gamma;
    let nonempty = p_min < p_max;
    Ok(AdmissibilityWindow {
        beta,
        gamma,
        kappa,
        dim,
        p_min,
        p_max,
        nonempty,
    })
}

/// Window for decimal inputs, each read as the decimal it prints as.
pub fn admissibility(beta: f64, gamma: f64, dim: usize, kappa: f64) -> Result<AdmissibilityWindow> {
    admissibility_exact(
        decimal_rational(beta)?,
        decimal_rational(gamma)?,
        dim,
        decimal_rational(kappa)?,
    )
}

/// Exponent `p` with its pair `α₁ < α₂` from `1/p < α₁ < α₂ < (κ - d/p)/2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Witness {
    pub p: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Witness {
    fn valid(&self, kappa: f64, dim: usize) -> bool {
        1.0 / self.p < self.alpha1 && self.alpha1 < self.alpha2 && self.alpha2 < 0.5 * (kappa - dim as f64 / self.p)
    }
}

/// Predicted Hölder exponents with the exponents that realise them.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HolderPrediction {
    pub epsilon: f64,
    pub space_exponent: f64,
    pub time_exponent: f64,
    pub space_witness: Witness,
    /// Absent when `ε` is at least half the gap, where the time exponent
    /// is no longer positive.
    pub time_witness: Option<Witness>,
}

fn p_of(beta: f64, gamma: f64, dim: usize, eps: f64) -> f64 {
    let d2 = dim as f64 + 2.0;
    2.0 * d2 * (1.0 + beta) / (2.0 * d2 * gamma + (1.0 + beta) * eps)
}

/// Space exponent `κ - γ(d+2)/(1+β) - ε` and time exponent
/// `(κ - γ(d+2)/(1+β))/2 - ε`, with `p_ε = 2(d+2)(1+β)/(2(d+2)γ + (1+β)ε)`,
/// `α₁ = 1/p_ε + ε/8`, `α₂ = 1/p_ε + ε/4` in space and `p_{2ε}`,
/// `α_{1,2} = (κ - d/p_{2ε})/2 - ε/2, ε/4` in time.
pub fn holder_prediction(beta: f64, gamma: f64, dim: usize, kappa: f64, epsilon: f64) -> Result<HolderPrediction> {
    let window = admissibility(beta, gamma, dim, kappa)?;
    let gap = to_f64(&window.gap());
    if !window.nonempty || !(epsilon > 0.0) || epsilon >= gap {
        return Err(Error::InfeasibleEpsilon { epsilon, gap });
    }
    let p = p_of(beta, gamma, dim, epsilon);
    let space_witness = Witness {
        p,
        alpha1: 1.0 / p + epsilon / 8.0,
        alpha2: 1.0 / p + epsilon / 4.0,
    };
    debug_assert!(space_witness.valid(kappa, dim));
    let p2 = p_of(beta, gamma, dim, 2.0 * epsilon);
    let centre = 0.5 * (kappa - dim as f64 / p2);
    let time = Witness {
        p: p2,
        alpha1: centre - epsilon / 2.0,
        alpha2: centre - epsilon / 4.0,
    };
    Ok(HolderPrediction {
        epsilon,
        space_exponent: gap - epsilon,
        time_exponent: 0.5 * gap - epsilon,
        space_witness,
        time_witness: time.valid(kappa, dim).then_some(time),
    })
}

/// Whether `gamma < kappa (1 + beta) / (d + 2)`, decided exactly.
pub fn is_admissible(beta: f64, gamma: f64, dim: usize, kappa: f64) -> Result<bool> {
    Ok(admissibility(beta, gamma, dim, kappa)?.nonempty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn decimal_inputs_are_exact() {
        assert_eq!(decimal_rational(0.2).unwrap(), q(1, 5));
        assert_eq!(decimal_rational(-1.25).unwrap(), q(-5, 4));
        assert_eq!(decimal_rational(3.0).unwrap(), q(3, 1));
        assert_eq!(decimal_rational(1e-7).unwrap(), q(1, 10_000_000));
        assert!(decimal_rational(f64::NAN).is_err());
    }

    #[test]
    fn window_examples() {
        let w = admissibility(5.0, 0.2, 1, 0.5).unwrap();
        assert_eq!((w.p_min.clone(), w.p_max.clone()), (q(6, 1), q(30, 1)));
        assert!(w.nonempty);
        assert_eq!(w.p0_of(&q(10, 1)).unwrap(), q(5, 3));
        assert!(!admissibility(1.0, 0.5, 1, 0.5).unwrap().nonempty);
        // The boundary itself is excluded: γ = κ(1+β)/(d+2) exactly.
        assert!(!admissibility(2.0, 0.5, 1, 0.5).unwrap().nonempty);
        let w = admissibility(8.0, 0.3, 1, 0.49).unwrap();
        assert_eq!(w.p_min, q(300, 49));
        assert_eq!(w.p_max, q(30, 1));
    }

    #[test]
    fn prediction_examples() {
        let h = holder_prediction(5.0, 0.2, 1, 0.5, 0.01).unwrap();
        assert!((h.space_exponent - 0.39).abs() < 1e-12);
        assert!((h.time_exponent - 0.19).abs() < 1e-12);
        assert!(h.time_witness.is_some());
        // γ/(1+β) → 0 and ε → 0 give the heat-equation exponents.
        let h = holder_prediction(1e6, 1e-6, 1, 0.5, 1e-9).unwrap();
        assert!((h.space_exponent - 0.5).abs() < 1e-6 && (h.time_exponent - 0.25).abs() < 1e-6);
        match holder_prediction(5.0, 0.2, 1, 0.5, 0.4) {
            Err(Error::InfeasibleEpsilon { gap, .. }) => assert!((gap - 0.4).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        let h = holder_prediction(5.0, 0.2, 1, 0.5, 0.25).unwrap();
        assert!(h.time_witness.is_none());
    }
}
