use std::fmt;
use std::ops::{Add, Mul};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact amount in millionths of a dollar.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

const MICROS: i64 = 1_000_000;

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    /// Rounded to whole cents (half away from zero).
    pub fn cents(self) -> i64 {
        let c = MICROS / 100;
        if self.0 >= 0 {
            (self.0 + c / 2) / c
        } else {
            (self.0 - c / 2) / c
        }
    }

    pub fn checked_mul(self, n: u64) -> Option<Money> {
        i64::try_from(n).ok().and_then(|n| self.0.checked_mul(n)).map(Money)
    }
}

impl Add for Money {
    type Output = Money;

    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Mul<u64> for Money {
    type Output = Money;

    fn mul(self, rhs: u64) -> Money {
        self.checked_mul(rhs).expect("money overflow")
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

/// `$1,850.00` style, to the cent.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cents = self.cents();
        let sign = if cents < 0 { "-" } else { "" };
        let cents = cents.unsigned_abs();
        let dollars = (cents / 100).to_string();
        let mut grouped = String::new();
        for (i, ch) in dollars.chars().enumerate() {
            if i > 0 && (dollars.len() - i).is_multiple_of(3) {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        write!(f, "{sign}${grouped}.{:02}", cents % 100)
    }
}

impl FromStr for Money {
    type Err = Error;

    /// Decimal dollars, optionally with `$` and thousands separators.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid amount `{s}`"));
        let t = s.trim();
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let t: String = t.trim_start_matches('$').chars().filter(|c| *c != ',').collect();
        let (whole, frac) = t.split_once('.').unwrap_or((&t, ""));
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 6 {
            return Err(Error::Parse(format!("amount `{s}` is finer than a millionth of a dollar")));
        }
        let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac_micros: i64 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<6}").parse().map_err(|_| bad())?
        };
        let micros = whole
            .checked_mul(MICROS)
            .and_then(|w| w.checked_add(frac_micros))
            .ok_or_else(bad)?;
        Ok(Money(if neg { -micros } else { micros }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let abs = self.0.unsigned_abs();
        let sign = if self.0 < 0 { "-" } else { "" };
        let frac = format!("{:06}", abs % MICROS as u64);
        let frac = frac.trim_end_matches('0');
        let frac = if frac.len() < 2 { format!("{frac:0<2}") } else { frac.to_string() };
        s.serialize_str(&format!("{sign}{}.{frac}", abs / MICROS as u64))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub task: String,
    pub tasks: u64,
    pub cost_per_assignment: Money,
    pub assignments: u64,
    /// Filled in by [`estimate_cost`].
    #[serde(default)]
    pub total: Money,
}

impl CostRow {
    pub fn new(task: impl Into<String>, tasks: u64, cost_per_assignment: Money, assignments: u64) -> Self {
        Self {
            task: task.into(),
            tasks,
            cost_per_assignment,
            assignments,
            total: Money::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostPlan {
    pub rows: Vec<CostRow>,
    #[serde(default)]
    pub total: Money,
}

impl CostPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Row totals `tasks * cost * assignments` and their sum, exact.
pub fn estimate_cost(rows: &[CostRow]) -> Result<CostPlan> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        if r.cost_per_assignment < Money::ZERO {
            return Err(Error::InvalidValue(format!("negative cost in row `{}`", r.task)));
        }
        let total = r
            .cost_per_assignment
            .checked_mul(r.tasks)
            .and_then(|m| m.checked_mul(r.assignments))
            .ok_or_else(|| Error::InvalidValue(format!("row `{}` overflows", r.task)))?;
        out.push(CostRow { total, ..r.clone() });
    }
    let total = out.iter().map(|r| r.total).sum();
    Ok(CostPlan { rows: out, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Money {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(m("0.05").micros(), 50_000);
        assert_eq!(m("$1,850.00"), m("1850"));
        assert_eq!(m("1850").to_string(), "$1,850.00");
        assert_eq!(m("0.005").to_string(), "$0.01");
        assert_eq!(m("250").to_string(), "$250.00");
        assert!("abc".parse::<Money>().is_err());
        assert!("0.0000001".parse::<Money>().is_err());
    }

    #[test]
    fn single_row() {
        let plan = estimate_cost(&[CostRow::new("rerank", 1000, m("0.05"), 5)]).unwrap();
        assert_eq!(plan.rows[0].total.to_string(), "$250.00");
        assert_eq!(estimate_cost(&[CostRow::new("none", 0, m("0.05"), 5)]).unwrap().total, Money::ZERO);
    }

    #[test]
    fn serde_keeps_exact_amounts() {
        let plan = estimate_cost(&[CostRow::new("x", 3, m("0.015"), 1)]).unwrap();
        let text = plan.to_toml().unwrap();
        assert_eq!(CostPlan::from_toml(&text).unwrap(), plan);
        assert!(text.contains("\"0.045\""));
    }
}
