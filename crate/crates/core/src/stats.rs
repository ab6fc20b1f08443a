//! 2×2 contingency tables and elevation-sided significance tests.
//!
//! Rows are {target stratum, complement stratum}, columns are {current
//! window, reference window}:
//!
//! ```text
//!               current  reference
//!   target         a         b
//!   complement     c         d
//! ```
//!
//! Both tests ask whether `a` is larger than its margin-product expectation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("expected count of a cell is zero; use the exact test")]
    ZeroExpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Expected counts of a, b, c, d under independence of rows and columns.
    pub fn expected_cells(&self) -> Result<[f64; 4], StatError> {
        let n = self.total();
        if n == 0 {
            return Err(StatError::EmptyTable);
        }
        let n = n as f64;
        let (r1, r2) = ((self.a + self.b) as f64, (self.c + self.d) as f64);
        let (c1, c2) = ((self.a + self.c) as f64, (self.b + self.d) as f64);
        Ok([r1 * c1 / n, r1 * c2 / n, r2 * c1 / n, r2 * c2 / n])
    }

    /// Swaps the target and complement rows.
    pub fn transposed_strata(&self) -> Self {
        Self::new(self.c, self.d, self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Fisher,
    ChiSquare,
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestKind::Fisher => "fisher",
            TestKind::ChiSquare => "chi_square",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    /// Pearson statistic; absent for the exact test.
    pub statistic: Option<f64>,
    pub test_used: TestKind,
    pub expected_a: f64,
}

/// Margin-product expectation of the target/current cell, `(a+b)(a+c)/N`.
pub fn expected_count(t: &ContingencyTable) -> Result<f64, StatError> {
    t.expected_cells().map(|e| e[0])
}

fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// One-sided Fisher exact p-value: the hypergeometric probability, given the
/// table's margins, of a target/current cell at least as large as `a`.
pub fn fisher_exact_p(t: &ContingencyTable) -> f64 {
    if t.a == 0 {
        return 1.0;
    }
    let n = t.total();
    let row = t.a + t.b; // target stratum total
    let col = t.a + t.c; // current window total
    let hi = row.min(col);
    let lo = (row + col).saturating_sub(n);
    if t.a <= lo {
        return 1.0;
    }
    let pmf_at = |x: u64| -> f64 {
        (ln_factorial(row) + ln_factorial(n - row) + ln_factorial(col) + ln_factorial(n - col)
            - ln_factorial(n)
            - ln_factorial(x)
            - ln_factorial(row - x)
            - ln_factorial(col - x)
            - ln_factorial(n + x - row - col))
            .exp()
    };
    let mode = ((row + 1) * (col + 1) / (n + 2)).clamp(lo, hi);
    let p = if t.a > mode {
        // Upper tail is the short side: sum it directly, terms decrease.
        let mut term = pmf_at(t.a);
        let mut sum = 0.0;
        let mut x = t.a;
        loop {
            sum += term;
            if x == hi || term < sum * 1e-17 {
                break;
            }
            term *= ((row - x) * (col - x)) as f64 / ((x + 1) * (n + x + 1 - row - col)) as f64;
            x += 1;
        }
        sum
    } else {
        // Complement: 1 - P(X < a), summing down from a - 1.
        let mut x = t.a - 1;
        let mut term = pmf_at(x);
        let mut sum = 0.0;
        loop {
            sum += term;
            if x == lo || term < sum * 1e-17 {
                break;
            }
            term *= (x * (n + x - row - col)) as f64 / ((row - x + 1) * (col - x + 1)) as f64;
            x -= 1;
        }
        1.0 - sum
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    /// Upper tail of chi-square(1) at `statistic`.
    pub two_sided: f64,
    /// Half the two-sided tail when `a` exceeds its expectation, 1 otherwise.
    pub p_value: f64,
}

/// Upper-tail probability of the chi-square distribution with one degree of
/// freedom, via `erfc(sqrt(x / 2))`.
pub fn chi_square_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

/// Pearson chi-square test without continuity correction.
pub fn chi_square_p(t: &ContingencyTable) -> Result<ChiSquareOutcome, StatError> {
    let expected = t.expected_cells()?;
    if expected.iter().any(|&e| e <= 0.0) {
        return Err(StatError::ZeroExpected);
    }
    let observed = [t.a, t.b, t.c, t.d];
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let two_sided = chi_square_1_sf(statistic);
    let p_value = if t.a as f64 > expected[0] {
        two_sided / 2.0
    } else {
        1.0
    };
    Ok(ChiSquareOutcome {
        statistic,
        two_sided,
        p_value,
    })
}

/// Smallest expected cell for which the chi-square approximation is used.
pub const MIN_EXPECTED_CELL: f64 = 5.0;
/// Smallest grand total for which the chi-square approximation is used.
pub const MIN_CHI_SQUARE_TOTAL: u64 = 200;

/// Exact test when any expected cell is below 5 or the table holds fewer than
/// 200 events; chi-square otherwise.
pub fn select_test(t: &ContingencyTable) -> TestKind {
    match t.expected_cells() {
        Ok(e) if t.total() >= MIN_CHI_SQUARE_TOTAL && e.iter().all(|&x| x >= MIN_EXPECTED_CELL) => {
            TestKind::ChiSquare
        }
        _ => TestKind::Fisher,
    }
}

/// Routes the table to a test and reports its elevation-sided p-value.
pub fn test_table(t: &ContingencyTable) -> Result<TestResult, StatError> {
    let expected_a = expected_count(t)?;
    Ok(match select_test(t) {
        TestKind::Fisher => TestResult {
            p_value: fisher_exact_p(t),
            statistic: None,
            test_used: TestKind::Fisher,
            expected_a,
        },
        TestKind::ChiSquare => {
            let outcome = chi_square_p(t)?;
            TestResult {
                p_value: outcome.p_value,
                statistic: Some(outcome.statistic),
                test_used: TestKind::ChiSquare,
                expected_a,
            }
        }
    })
}

/// Benjamini–Hochberg step-up: how many of the ascending `sorted_p` are
/// rejected at false discovery rate `alpha` among `m` tests.
pub fn benjamini_hochberg_cutoff(sorted_p: &[f64], m: u64, alpha: f64) -> usize {
    sorted_p
        .iter()
        .enumerate()
        .rev()
        .find(|(i, &p)| p <= (*i as f64 + 1.0) * alpha / m as f64)
        .map_or(0, |(i, _)| i + 1)
}
