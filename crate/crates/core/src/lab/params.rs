//! Parameter arithmetic for the main theorem, done in exact rationals.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The primed extractor triple `(k′, ℓ′, r′)` together with the instance
/// size and memory/length budget. Derived quantities:
/// `r = min{r′/4, ℓ′/26 + 1/6, (k′−1)/2}`, `k = k′ − 1`,
/// `ℓ = (ℓ′ − 13r − 2)/5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSet {
    pub n: BigRational,
    pub q: BigRational,
    pub m: BigRational,
    pub steps: BigRational,
    pub k_prime: BigRational,
    pub ell_prime: BigRational,
    pub r_prime: BigRational,
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// Parses `7`, `-3` or `13/2`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    BigRational::from_str(s.trim()).map_err(|_| Error::InvalidParameter(format!("not a rational number: {s:?}")))
}

impl ParameterSet {
    pub fn from_integers(n: i64, q: i64, m: i64, steps: i64, k_prime: i64, ell_prime: i64, r_prime: i64) -> Self {
        Self {
            n: int(n),
            q: int(q),
            m: int(m),
            steps: int(steps),
            k_prime: int(k_prime),
            ell_prime: int(ell_prime),
            r_prime: int(r_prime),
        }
    }

    pub fn r(&self) -> BigRational {
        let a = &self.r_prime / int(4);
        let b = &self.ell_prime / int(26) + ratio(1, 6);
        let c = (&self.k_prime - int(1)) / int(2);
        a.min(b).min(c)
    }

    pub fn k(&self) -> BigRational {
        &self.k_prime - int(1)
    }

    pub fn ell(&self) -> BigRational {
        (&self.ell_prime - int(13) * self.r() - int(2)) / int(5)
    }
}

/// `T ≤ 2^{e}` for rational `e = p/d`, decided as `T^d ≤ 2^p`.
fn at_most_power_of_two(t: &BigRational, e: &BigRational) -> bool {
    if !t.is_positive() {
        return true;
    }
    let d = e.denom().to_u32().expect("exponent denominator fits in u32");
    let p = e.numer();
    let lhs = num_traits::pow(t.clone(), d as usize);
    let two = int(2);
    let rhs = if p.is_negative() {
        BigRational::one() / num_traits::pow(two, (-p).to_usize().expect("exponent fits"))
    } else {
        num_traits::pow(two, p.to_usize().expect("exponent fits"))
    };
    lhs <= rhs
}

/// One inequality, decided exactly; the float sides are for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub r: f64,
    pub k: f64,
    pub ell: f64,
    /// Exact values as `p/q` strings.
    pub exact: [String; 3],
    pub checks: Vec<Inequality>,
}

impl ParameterReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect()
    }
}

impl fmt::Display for ParameterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "r = {}, k = {}, l = {}", self.exact[0], self.exact[1], self.exact[2])?;
        for c in &self.checks {
            writeln!(f, "{:<28} {:>14.4} vs {:>14.4}  {}", c.name, c.lhs, c.rhs, if c.holds { "ok" } else { "FAIL" })?;
        }
        Ok(())
    }
}

fn f(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn le(name: &str, lhs: BigRational, rhs: BigRational) -> Inequality {
    Inequality { name: name.into(), lhs: f(&lhs), rhs: f(&rhs), holds: lhs <= rhs }
}

/// Every inequality the main theorem needs of its parameters.
pub fn parameter_check(p: &ParameterSet) -> ParameterReport {
    let (r, k, ell) = (p.r(), p.k(), p.ell());
    let two_r = int(2) * &r;
    let mut checks = vec![
        le("q + r + 1 - r' <= -2r", &p.q + &r + int(1) - &p.r_prime, -two_r.clone()),
        le("2l + 9r - n <= -r", int(2) * &ell + int(9) * &r - &p.n, -r.clone()),
        le("2m + 4r + 1 <= (k - r) l", int(2) * &p.m + int(4) * &r + int(1), (&k - &r) * &ell),
        le("l' <= n", p.ell_prime.clone(), p.n.clone()),
        le("q <= r - 7", p.q.clone(), &r - int(7)),
        le("m <= (k' - 1) l' / 44", p.m.clone(), (&p.k_prime - int(1)) * &p.ell_prime / int(44)),
    ];
    let exponent = &r - int(2);
    checks.push(Inequality {
        name: "T <= 2^(r - 2)".into(),
        lhs: f(&p.steps),
        rhs: f(&exponent).exp2(),
        holds: at_most_power_of_two(&p.steps, &exponent),
    });
    let show = |x: &BigRational| if x.denom().is_one() { x.numer().to_string() } else { x.to_string() };
    ParameterReport { r: f(&r), k: f(&k), ell: f(&ell), exact: [show(&r), show(&k), show(&ell)], checks }
}
