use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Lengths of one rolling triple, in years of `days_per_year` trading days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_years: f64,
    pub valid_years: f64,
    pub test_years: f64,
    pub days_per_year: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_years: 5.0,
            valid_years: 1.0,
            test_years: 2.0,
            days_per_year: 252,
        }
    }
}

impl SplitSpec {
    fn days(&self, years: f64) -> usize {
        (years * self.days_per_year as f64).round() as usize
    }
}

/// Date-index ranges of one train/valid/test triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTriple {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub triples: Vec<SplitTriple>,
}

impl SplitPlan {
    /// Every test date index, in order.
    pub fn test_dates(&self) -> impl Iterator<Item = usize> + '_ {
        self.triples.iter().flat_map(|t| t.test.clone())
    }
}

/// Rolling triples over `n_dates` consecutive trading days.
///
/// Triple `k` starts `k` test-lengths after the first date. The last triple's
/// test range is truncated at the end of the panel and kept when it holds at
/// least one day, so test ranges tile the evaluation period exactly once.
pub fn rolling_splits(n_dates: usize, spec: &SplitSpec) -> Result<SplitPlan, DataError> {
    let train = spec.days(spec.train_years);
    let valid = spec.days(spec.valid_years);
    let test = spec.days(spec.test_years);
    if train == 0 || valid == 0 || test == 0 {
        return Err(DataError::Invalid("split lengths must be positive".into()));
    }
    let needed = train + valid + test;
    if n_dates < needed {
        return Err(DataError::InsufficientHistory {
            needed,
            got: n_dates,
            years: spec.train_years + spec.valid_years + spec.test_years,
        });
    }
    let mut triples = Vec::new();
    let mut start = 0;
    while start + train + valid < n_dates {
        let v0 = start + train;
        let t0 = v0 + valid;
        triples.push(SplitTriple {
            train: start..v0,
            valid: v0..t0,
            test: t0..(t0 + test).min(n_dates),
        });
        start += test;
    }
    Ok(SplitPlan { triples })
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y: usize = 252;

    #[test]
    fn eight_years_gives_one_triple() {
        let plan = rolling_splits(8 * Y, &SplitSpec::default()).unwrap();
        assert_eq!(
            plan.triples,
            vec![SplitTriple {
                train: 0..5 * Y,
                valid: 5 * Y..6 * Y,
                test: 6 * Y..8 * Y,
            }]
        );
    }

    #[test]
    fn seven_years_is_insufficient() {
        let err = rolling_splits(7 * Y, &SplitSpec::default()).unwrap_err();
        assert!(err.to_string().contains("2016"), "{err}");
    }

    #[test]
    fn nine_and_a_half_years_folds_tail_into_short_test() {
        let n = 9 * Y + Y / 2;
        let plan = rolling_splits(n, &SplitSpec::default()).unwrap();
        assert_eq!(plan.triples.len(), 2);
        let second = &plan.triples[1];
        assert_eq!(second.train, 2 * Y..7 * Y);
        assert_eq!(second.valid, 7 * Y..8 * Y);
        assert_eq!(second.test, 8 * Y..n);
        let tested: Vec<usize> = plan.test_dates().collect();
        assert_eq!(tested, (6 * Y..n).collect::<Vec<_>>());
    }

    #[test]
    fn one_extra_day_opens_another_triple() {
        let plan = rolling_splits(8 * Y + 1, &SplitSpec::default()).unwrap();
        assert_eq!(plan.triples.len(), 2);
        assert_eq!(plan.triples[1].test, 8 * Y..8 * Y + 1);
    }

    #[test]
    fn triples_are_ordered_and_tests_contiguous() {
        let spec = SplitSpec {
            days_per_year: 20,
            ..SplitSpec::default()
        };
        let plan = rolling_splits(433, &spec).unwrap();
        for t in &plan.triples {
            assert!(t.train.end == t.valid.start && t.valid.end == t.test.start);
        }
        for w in plan.triples.windows(2) {
            assert_eq!(w[0].test.end, w[1].test.start);
        }
        assert_eq!(plan.triples.last().unwrap().test.end, 433);
    }
}
