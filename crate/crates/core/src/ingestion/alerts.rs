use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "info" => Ok(Severity::Info),
            "warning" => Ok(Severity::Warning),
            "critical" => Ok(Severity::Critical),
            other => Err(format!("unknown severity `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

/// Threshold rule evaluated on every loaded record of `measure`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub name: String,
    pub measure: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub severity: Severity,
}

impl AlertRule {
    pub fn new(name: &str, measure: &str, comparator: Comparator, threshold: f64, severity: Severity) -> Self {
        Self {
            name: name.to_string(),
            measure: measure.to_string(),
            comparator,
            threshold,
            severity,
        }
    }

    pub fn defaults() -> Vec<AlertRule> {
        alloc::vec![
            AlertRule::new("low_inventory", "inventory", Comparator::Lt, 5.0, Severity::Critical),
            AlertRule::new("disruption", "disruption_flag", Comparator::Ge, 1.0, Severity::Warning),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub id: u64,
    pub tick: Tick,
    pub severity: Severity,
    pub subject: String,
    pub rule: String,
    pub message: String,
    pub acknowledged: bool,
    /// The triggering value was imputed rather than observed.
    #[serde(default)]
    pub imputed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown alert {0}")]
pub struct UnknownAlert(pub u64);

/// Append-only alert list with one entry per `(rule, subject, tick)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlertBook {
    alerts: Vec<AlertEvent>,
    keys: BTreeSet<(String, String, Tick)>,
}

impl AlertBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an alert unless its key was seen; ids start at 1.
    pub fn raise(
        &mut self,
        rule: &str,
        subject: &str,
        tick: Tick,
        severity: Severity,
        message: String,
        imputed: bool,
    ) -> Option<&AlertEvent> {
        if !self.keys.insert((rule.to_string(), subject.to_string(), tick)) {
            return None;
        }
        self.alerts.push(AlertEvent {
            id: self.alerts.len() as u64 + 1,
            tick,
            severity,
            subject: subject.to_string(),
            rule: rule.to_string(),
            message,
            acknowledged: false,
            imputed,
        });
        self.alerts.last()
    }

    pub fn all(&self) -> &[AlertEvent] {
        &self.alerts
    }

    pub fn len(&self) -> usize {
        self.alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }

    /// Alerts with id greater than `cursor`.
    pub fn since(&self, cursor: u64) -> &[AlertEvent] {
        let start = (cursor as usize).min(self.alerts.len());
        &self.alerts[start..]
    }

    pub fn get(&self, id: u64) -> Option<&AlertEvent> {
        id.checked_sub(1).and_then(|i| self.alerts.get(i as usize))
    }

    pub fn acknowledge(&mut self, id: u64) -> Result<&AlertEvent, UnknownAlert> {
        let alert = id
            .checked_sub(1)
            .and_then(|i| self.alerts.get_mut(i as usize))
            .ok_or(UnknownAlert(id))?;
        alert.acknowledged = true;
        Ok(alert)
    }

    pub fn unacknowledged(&self) -> impl Iterator<Item = &AlertEvent> {
        self.alerts.iter().filter(|a| !a.acknowledged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_alert_per_rule_subject_tick() {
        let mut book = AlertBook::new();
        assert!(book
            .raise("low_inventory", "W1", 3, Severity::Critical, "x".into(), false)
            .is_some());
        assert!(book
            .raise("low_inventory", "W1", 3, Severity::Critical, "y".into(), false)
            .is_none());
        assert!(book
            .raise("low_inventory", "W1", 4, Severity::Critical, "z".into(), false)
            .is_some());
        assert_eq!(book.len(), 2);
        assert_eq!(book.since(1)[0].tick, 4);
        assert!(book.since(5).is_empty());
    }

    #[test]
    fn acknowledge_marks_alert() {
        let mut book = AlertBook::new();
        book.raise("r", "s", 0, Severity::Info, String::new(), false);
        assert!(book.acknowledge(1).unwrap().acknowledged);
        assert_eq!(book.acknowledge(2), Err(UnknownAlert(2)));
        assert_eq!(book.unacknowledged().count(), 0);
    }
}
