//! Closed forms: critical bias, trap-length law, trap return times, ruin
//! probabilities, escape bound, resistance bounds, geometric moment bound.
//!
//! Everything here is generic over [`Scalar`] so the same formulas can be
//! evaluated in `f32` or `f64`.

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::scalar::{normalizer, Scalar};

fn check_density<T: Scalar>(p: T) -> Result<()> {
    if p > T::zero() && p < T::one() {
        Ok(())
    } else {
        domain(format!("edge density must lie in (0,1), got {p}"))
    }
}

fn check_positive_bias<T: Scalar>(lambda: T) -> Result<()> {
    if lambda > T::zero() && lambda.is_finite() {
        Ok(())
    } else {
        domain(format!("bias must be positive and finite, got {lambda}"))
    }
}

/// Per-column persistence factor of a trap, `e^{−2λ_c}`:
/// `(1 + 2p − 2p² − √(1 + 4p² − 8p³ + 4p⁴)) / 2`.
pub fn trap_persistence<T: Scalar>(p: T) -> Result<T> {
    check_density(p)?;
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let p2 = p * p;
    let radicand = one + four * p2 - T::lit(8.0) * p2 * p + four * p2 * p2;
    Ok((one + two * p - two * p2 - radicand.sqrt()) / two)
}

/// Critical bias separating positive from zero speed.
pub fn compute_lambda_c<T: Scalar>(p: T) -> Result<T> {
    let beta = trap_persistence(p)?;
    let lc = -beta.ln() / T::lit(2.0);
    if lc.is_finite() && lc > T::zero() {
        Ok(lc)
    } else {
        Err(crate::LadderError::Internal(format!("λ_c evaluated to {lc} at p={p}")))
    }
}

/// `P(ℓ = m) = (e^{2λ_c} − 1) e^{−2λ_c m}` for a trap length `m ≥ 1`.
pub fn trap_length_pmf<T: Scalar>(p: T, m: u32) -> Result<T> {
    if m < 1 {
        return domain("trap length must be >= 1");
    }
    let beta = trap_persistence(p)?;
    Ok((T::one() - beta) * beta.powi(m as i32 - 1))
}

/// `E₀[τ_m] = 2 (e^{2λm} − 1)/(e^{2λ} − 1)` for the reflected segment walk.
pub fn expected_trap_return_time<T: Scalar>(lambda: T, m: u32) -> Result<T> {
    check_positive_bias(lambda)?;
    if m < 1 {
        return domain("trap depth must be >= 1");
    }
    let two = T::lit(2.0);
    let mm = T::from_u32(m).unwrap();
    Ok(two * (two * lambda * mm).exp_m1() / (two * lambda).exp_m1())
}

/// Lower and upper bounds on `E₀[τ_m^κ]` for `κ ≥ 1`:
/// `2^κ e^{2κλ(m−1)}` and `c(κ,λ) m^κ e^{2κλm}`.
pub fn trap_moment_bounds(lambda: f64, m: u32, kappa: f64) -> Result<(f64, f64)> {
    check_positive_bias(lambda)?;
    if kappa < 1.0 || m < 1 {
        return domain("trap moment bounds need κ >= 1 and m >= 1");
    }
    let m = m as f64;
    let lower = 2f64.powf(kappa) * (2.0 * kappa * lambda * (m - 1.0)).exp();
    let ratio = ((2.0 * lambda).exp() + 1.0) / (2.0 * lambda).exp_m1();
    let c = 2f64.powf(kappa - 1.0)
        * (1.0
            + 2.0
                * (2.0 * (kappa / std::f64::consts::E).powf(kappa) + gamma(kappa + 1.0))
                * ratio.powf(kappa));
    let upper = c * m.powf(kappa) * (2.0 * kappa * lambda * m).exp();
    Ok((lower, upper))
}

/// `r_i = P_i(σ_i < σ_0)` on the reflected segment `{0,…,m}`.
pub fn ruin_probability<T: Scalar>(lambda: T, m: u32, i: u32) -> Result<T> {
    check_positive_bias(lambda)?;
    if i < 1 || i > m {
        return domain(format!("position must satisfy 1 <= i <= m, got i={i}, m={m}"));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let up = lambda.exp() / (lambda.exp() + (-lambda).exp());
    let escape = |j: u32| {
        let jj = T::from_u32(j).unwrap();
        (two * lambda).exp_m1() / (-(-two * lambda * jj).exp_m1()) * (-two * lambda * jj).exp()
    };
    if i < m {
        Ok(up + (one - up) * (one - escape(i)))
    } else {
        Ok(one - escape(m))
    }
}

/// Uniform lower bound on the probability of never returning to a forwards
/// communicating vertex: `(1 − e^{−λ})/(e^λ + 1 + e^{−λ})`.
pub fn escape_probability_bound<T: Scalar>(lambda: T) -> Result<T> {
    check_positive_bias(lambda)?;
    Ok(-(-lambda).exp_m1() / normalizer(lambda))
}

/// Resistance of the staircase path from column `m` to column `k`:
/// `Σ_{j=2m}^{2k−1} e^{−jλ}`.
pub fn series_path_resistance<T: Scalar>(lambda: T, m: i64, k: i64) -> T {
    (2 * m..2 * k).fold(T::zero(), |acc, j| acc + (-lambda * T::from_i64(j).unwrap()).exp())
}

/// Nash–Williams lower bound `½ (1 − e^{−2λm})/(e^λ − e^{−λ})` on the
/// resistance between column `m` and the origin.
pub fn nash_williams_lower_bound<T: Scalar>(lambda: T, m: i64) -> T {
    let mm = T::from_i64(m).unwrap();
    let two = T::lit(2.0);
    -(-two * lambda * mm).exp_m1() / (two * (lambda.exp() - (-lambda).exp()))
}

/// Quenched bound on `P^v(σ_0 < σ_k)` for a backbone vertex at column `m`.
pub fn backtrack_probability_bound<T: Scalar>(lambda: T, m: i64, k: i64) -> T {
    let two = T::lit(2.0);
    let mm = T::from_i64(m).unwrap();
    let km = T::from_i64(k - m).unwrap();
    two * (two * lambda).exp_m1() / lambda.exp_m1() * (-(-two * lambda * km).exp_m1())
        / (-(-two * lambda * mm).exp_m1())
        * (-two * lambda * mm).exp()
}

/// Upper bound on `Σ_{k≥0} k^κ r^k`:
/// `|log r|^{−κ} (2 (κ/e)^κ + Γ(κ+1)/|log r|)`.
pub fn geometric_moment_bound<T: Scalar>(r: T, kappa: T) -> Result<T> {
    if !(r > T::zero() && r < T::one()) {
        return domain(format!("ratio must lie in (0,1), got {r}"));
    }
    if !(kappa > T::zero()) {
        return domain(format!("exponent must be positive, got {kappa}"));
    }
    let l = r.ln().abs();
    let gamma_term = T::lit(gamma(kappa.as_f64() + 1.0));
    Ok((T::lit(2.0) * (kappa / T::E()).powf(kappa) + gamma_term / l) / l.powf(kappa))
}

/// Direct summation of `Σ_{k≥0} k^κ r^k` (with `0^κ = 0`), truncated once
/// the terms are past the mode and below machine precision of the sum.
pub fn geometric_moment_sum(r: f64, kappa: f64) -> f64 {
    let mode = kappa / r.ln().abs();
    let mut sum = 0.0;
    let mut k = 1u64;
    loop {
        let term = (k as f64).powf(kappa) * r.powf(k as f64);
        sum += term;
        if (k as f64) > mode && term <= sum * f64::EPSILON * 0.25 {
            break;
        }
        k += 1;
    }
    sum
}
