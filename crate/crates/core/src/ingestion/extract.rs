use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::graph::Tick;
use crate::provenance::SourceKind;

/// Observed value of an event. A missing value is a gap marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Flag(bool),
    Number(f64),
}

impl RawValue {
    pub fn as_f64(self) -> f64 {
        match self {
            RawValue::Flag(b) => f64::from(u8::from(b)),
            RawValue::Number(x) => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub source: SourceKind,
    pub source_event_id: String,
    pub observed_tick: Tick,
    pub subject: String,
    pub measure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<RawValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Monotone intake counter.
    #[serde(default)]
    pub received_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number within the batch.
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extracted {
    pub events: Vec<RawEvent>,
    pub rejections: Vec<Rejection>,
}

fn non_empty_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str).filter(|s| !s.is_empty())
}

fn parse_line(line: &str, source: SourceKind) -> Result<RawEvent, &'static str> {
    if line.trim().is_empty() {
        return Err("empty line");
    }
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) else {
        return Err("malformed");
    };
    if let Some(s) = obj.get("source") {
        let named = s.as_str().and_then(|s| s.parse::<SourceKind>().ok());
        if named != Some(source) {
            return Err("source mismatch");
        }
    }
    let id = non_empty_str(&obj, "source_event_id").ok_or("missing id")?;
    let observed_tick = match obj.get("observed_tick") {
        Some(v) => v.as_u64().ok_or("invalid observed_tick")?,
        None => return Err("invalid observed_tick"),
    };
    let subject = non_empty_str(&obj, "subject").ok_or("missing subject")?;
    let measure = non_empty_str(&obj, "measure").ok_or("missing measure")?;
    let value = match obj.get("value") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(RawValue::Flag(*b)),
        Some(Value::Number(n)) => Some(RawValue::Number(n.as_f64().ok_or("invalid value")?)),
        Some(_) => return Err("invalid value"),
    };
    let unit = match obj.get("unit") {
        None | Some(Value::Null) => None,
        Some(Value::String(u)) => Some(u.clone()),
        Some(_) => return Err("invalid unit"),
    };
    Ok(RawEvent {
        source,
        source_event_id: id.to_string(),
        observed_tick,
        subject: subject.to_string(),
        measure: measure.to_string(),
        value,
        unit,
        received_seq: 0,
    })
}

/// Parses newline-delimited JSON events. Each line yields one event or one
/// rejection, in input order. Accepted events are numbered from `*seq`.
pub fn extract<'a>(lines: impl IntoIterator<Item = &'a str>, source: SourceKind, seq: &mut u64) -> Extracted {
    let mut out = Extracted::default();
    for (i, line) in lines.into_iter().enumerate() {
        match parse_line(line, source) {
            Ok(mut ev) => {
                ev.received_seq = *seq;
                *seq += 1;
                out.events.push(ev);
            }
            Err(reason) => out.rejections.push(Rejection {
                line: i + 1,
                reason: reason.to_string(),
                raw: line.to_string(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(line: &str) -> Extracted {
        extract([line], SourceKind::Iot, &mut 0)
    }

    #[test]
    fn well_formed_line_is_one_event() {
        let out = one(
            r#"{"source":"iot","source_event_id":"e1","observed_tick":3,"subject":"W1","measure":"inventory","value":40}"#,
        );
        assert!(out.rejections.is_empty());
        assert_eq!(out.events[0].value, Some(RawValue::Number(40.0)));
        assert_eq!(out.events[0].observed_tick, 3);
    }

    #[test]
    fn rejection_reasons() {
        let cases = [
            (
                r#"{"observed_tick":1,"subject":"W","measure":"inventory","value":1}"#,
                "missing id",
            ),
            (
                r#"{"source_event_id":"","observed_tick":1,"subject":"W","measure":"m"}"#,
                "missing id",
            ),
            (
                r#"{"source_event_id":"a","observed_tick":-1,"subject":"W","measure":"m"}"#,
                "invalid observed_tick",
            ),
            (
                r#"{"source_event_id":"a","observed_tick":1,"measure":"m"}"#,
                "missing subject",
            ),
            (
                r#"{"source_event_id":"a","observed_tick":1,"subject":"W"}"#,
                "missing measure",
            ),
            (
                r#"{"source":"erp","source_event_id":"a","observed_tick":1,"subject":"W","measure":"m"}"#,
                "source mismatch",
            ),
            (
                r#"{"source_event_id":"a","observed_tick":1,"subject":"W","measure":"m","value":"x"}"#,
                "invalid value",
            ),
            ("not json", "malformed"),
            ("", "empty line"),
        ];
        for (line, reason) in cases {
            assert_eq!(one(line).rejections[0].reason, reason, "{line}");
        }
    }

    #[test]
    fn gap_marker_and_flags() {
        let out = extract(
            [
                r#"{"source_event_id":"a","observed_tick":1,"subject":"W","measure":"inventory"}"#,
                r#"{"source_event_id":"b","observed_tick":1,"subject":"W","measure":"disruption_flag","value":true}"#,
            ],
            SourceKind::Iot,
            &mut 7,
        );
        assert_eq!(out.events[0].value, None);
        assert_eq!(out.events[1].value.map(RawValue::as_f64), Some(1.0));
        assert_eq!(out.events[1].received_seq, 8);
    }

    #[test]
    fn empty_batch() {
        assert_eq!(extract([], SourceKind::Iot, &mut 0), Extracted::default());
    }
}
