//! Accuracy tables, drop rates and deltas, in exact hundredths of a percent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::prompt::PromptMode;
use super::record::{Bucket, EvalRecord};

/// A percentage stored as an integer number of hundredths, so 81.19 is
/// `Percent(8119)`. Arithmetic is exact; division rounds half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(pub i64);

fn div_round(num: i128, den: i128) -> i64 {
    assert!(den != 0);
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = (2 * num.abs() + den) / (2 * den);
    (if num < 0 { -q } else { q }) as i64
}

impl Percent {
    pub const HUNDRED: Percent = Percent(10_000);

    pub fn from_hundredths(h: i64) -> Self {
        Percent(h)
    }

    /// `100 * num / den`, rounded to two decimals.
    pub fn from_ratio(num: u64, den: u64) -> Self {
        Percent(div_round(num as i128 * 10_000, den as i128))
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Signed rendering for delta columns: "+10.15", "-0.49", "+0.00".
    pub fn signed(self) -> String {
        if self.0 < 0 {
            self.to_string()
        } else {
            format!("+{self}")
        }
    }
}

impl std::ops::Sub for Percent {
    type Output = Percent;
    fn sub(self, rhs: Percent) -> Percent {
        Percent(self.0 - rhs.0)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", a / 100, a % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a percentage with at most two decimals: {0:?}")]
pub struct PercentParseError(String);

impl FromStr for Percent {
    type Err = PercentParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PercentParseError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty()
            || frac.len() > 2
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let i: i64 = int.parse().map_err(|_| err())?;
        let f: i64 = format!("{frac:0<2}").parse().map_err(|_| err())?;
        let v = i * 100 + f;
        Ok(Percent(if neg { -v } else { v }))
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    ContextLength,
    Complexity,
    /// One bucket per mode.
    Mode,
}

/// Accuracy per (mode, bucket). Empty groups are absent.
pub type AccuracyTable = BTreeMap<(PromptMode, Bucket), Percent>;

/// Mean score per group. Records that failed with an error count as wrong.
pub fn accuracy_table(records: &[EvalRecord], group_by: GroupBy) -> AccuracyTable {
    let mut tally: BTreeMap<(PromptMode, Bucket), (u64, u64)> = BTreeMap::new();
    for r in records {
        let bucket = match group_by {
            GroupBy::ContextLength => match r.context_length {
                Some(cl) => Bucket::ContextLength(cl),
                None => continue,
            },
            GroupBy::Complexity => match r.complexity {
                Some(c) => Bucket::Complexity(c),
                None => continue,
            },
            GroupBy::Mode => Bucket::All,
        };
        let t = tally.entry((r.mode, bucket)).or_default();
        t.0 += u64::from(r.score.unwrap_or(0));
        t.1 += 1;
    }
    tally
        .into_iter()
        .map(|(k, (hit, n))| (k, Percent::from_ratio(hit, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("drop rate needs at least two context lengths")]
    TooFewLengths,
    #[error("accuracy at the shortest context length is zero")]
    ZeroShortAccuracy,
}

/// Relative decline from the shortest to the longest context length:
/// `100 * (acc[min] - acc[max]) / acc[min]`.
pub fn extremum_drop_rate(per_cl: &BTreeMap<usize, Percent>) -> Result<Percent, MetricError> {
    if per_cl.len() < 2 {
        return Err(MetricError::TooFewLengths);
    }
    let short = *per_cl.values().next().expect("nonempty");
    let long = *per_cl.values().next_back().expect("nonempty");
    if short.0 == 0 {
        return Err(MetricError::ZeroShortAccuracy);
    }
    Ok(Percent(div_round((short.0 - long.0) as i128 * 10_000, short.0 as i128)))
}

/// Per-bucket accuracy of `mode`, taken from a table.
pub fn row(table: &AccuracyTable, mode: PromptMode) -> BTreeMap<Bucket, Percent> {
    table
        .iter()
        .filter(|((m, _), _)| *m == mode)
        .map(|((_, b), p)| (*b, *p))
        .collect()
}

/// Context-length view of a row, for [`extremum_drop_rate`].
pub fn by_context_length(row: &BTreeMap<Bucket, Percent>) -> BTreeMap<usize, Percent> {
    row.iter()
        .filter_map(|(b, p)| match b {
            Bucket::ContextLength(cl) => Some((*cl, *p)),
            _ => None,
        })
        .collect()
}

/// `mode - baseline` for every bucket present in both.
pub fn deltas(table: &AccuracyTable, mode: PromptMode) -> BTreeMap<Bucket, Percent> {
    let base = row(table, PromptMode::Baseline);
    row(table, mode)
        .into_iter()
        .filter_map(|(b, p)| base.get(&b).map(|q| (b, p - *q)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Percent {
        s.parse().unwrap()
    }

    #[test]
    fn percent_format_and_parse() {
        assert_eq!(p("81.19"), Percent(8119));
        assert_eq!(p("60.1"), Percent(6010));
        assert_eq!(p("-0.5").to_string(), "-0.50");
        assert_eq!(Percent(1015).signed(), "+10.15");
        assert_eq!(Percent(-49).signed(), "-0.49");
        assert!("1.234".parse::<Percent>().is_err());
        assert!("x".parse::<Percent>().is_err());
    }

    #[test]
    fn ratio_rounding() {
        assert_eq!(Percent::from_ratio(2, 3).to_string(), "66.67");
        assert_eq!(Percent::from_ratio(1, 3).to_string(), "33.33");
        assert_eq!(Percent::from_ratio(5, 5).to_string(), "100.00");
        // 1/8 = 12.5 exactly; 1/80000 = 0.00125 rounds to 0.00
        assert_eq!(Percent::from_ratio(1, 8).to_string(), "12.50");
        assert_eq!(Percent::from_ratio(1, 80_000).to_string(), "0.00");
        // 0.005 rounds up
        assert_eq!(Percent::from_ratio(1, 20_000).to_string(), "0.01");
    }

    #[test]
    fn drop_rate_edge_cases() {
        let m = |pairs: &[(usize, &str)]| pairs.iter().map(|(k, v)| (*k, p(v))).collect::<BTreeMap<_, _>>();
        assert_eq!(extremum_drop_rate(&m(&[(250, "70"), (32000, "70")])), Ok(Percent(0)));
        assert_eq!(extremum_drop_rate(&m(&[(250, "70")])), Err(MetricError::TooFewLengths));
        assert_eq!(
            extremum_drop_rate(&m(&[(250, "0"), (500, "1")])),
            Err(MetricError::ZeroShortAccuracy)
        );
        assert_eq!(extremum_drop_rate(&m(&[(250, "50"), (500, "75")])), Ok(Percent(-5000)));
    }
}
