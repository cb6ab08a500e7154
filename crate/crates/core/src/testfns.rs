//! Named test functions shared by the suites and the command line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{expand, HermiteExpansion, MultiIndex};
use crate::scheme::SamplingScheme;

/// `h0`, `h2+h5`, `gaussian(σ)` or `shifted-gaussian(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestFunction {
    H0,
    H2PlusH5,
    /// `e^{-|x|^2 / (2σ^2)}`.
    Gaussian(f64),
    /// `e^{-|x - c e_1|^2 / 2}`.
    ShiftedGaussian(f64),
}

impl TestFunction {
    /// The four-member family used across the norm-equivalence suites.
    pub fn family() -> [TestFunction; 4] {
        [
            TestFunction::H0,
            TestFunction::H2PlusH5,
            TestFunction::Gaussian(1.0),
            TestFunction::ShiftedGaussian(1.5),
        ]
    }

    /// Expansion to the scheme's degree cap.
    pub fn expansion(&self, scheme: &SamplingScheme) -> Result<HermiteExpansion> {
        let n = scheme.dimension();
        let d = scheme.degree_cap();
        let along_x1 = |m: usize| -> Result<MultiIndex> {
            let mut e = vec![0; n];
            e[0] = m;
            MultiIndex::new(e)
        };
        match *self {
            TestFunction::H0 => HermiteExpansion::from_terms(n, d, &[(along_x1(0)?, 1.0)]),
            TestFunction::H2PlusH5 => {
                HermiteExpansion::from_terms(n, d, &[(along_x1(2)?, 1.0), (along_x1(5)?, 1.0)])
            }
            TestFunction::Gaussian(sigma) => {
                let s2 = 2.0 * sigma * sigma;
                expand(
                    |x| (-x.iter().map(|a| a * a).sum::<f64>() / s2).exp(),
                    n,
                    d,
                    scheme,
                )
            }
            TestFunction::ShiftedGaussian(c) => expand(
                |x| {
                    let r2: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, a)| if i == 0 { (a - c) * (a - c) } else { a * a })
                        .sum();
                    (-0.5 * r2).exp()
                },
                n,
                d,
                scheme,
            ),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::H0 => write!(f, "h0"),
            TestFunction::H2PlusH5 => write!(f, "h2+h5"),
            TestFunction::Gaussian(s) => write!(f, "gaussian({s})"),
            TestFunction::ShiftedGaussian(c) => write!(f, "shifted-gaussian({c})"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            let inner = s.strip_prefix(prefix)?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("bad argument in test function '{s}'"))),
            )
        };
        if s == "h0" {
            return Ok(TestFunction::H0);
        }
        if s == "h2+h5" {
            return Ok(TestFunction::H2PlusH5);
        }
        if let Some(v) = arg("shifted-gaussian(") {
            return Ok(TestFunction::ShiftedGaussian(v?));
        }
        if let Some(v) = arg("gaussian(") {
            let v = v?;
            if !(v > 0.0) {
                return Err(Error::input(format!("gaussian width must be positive in '{s}'")));
            }
            return Ok(TestFunction::Gaussian(v));
        }
        Err(Error::input(format!(
            "unknown test function '{s}' (expected h0, h2+h5, gaussian(σ), shifted-gaussian(c))"
        )))
    }
}

impl TryFrom<String> for TestFunction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestFunction> for String {
    fn from(t: TestFunction) -> Self {
        t.to_string()
    }
}
