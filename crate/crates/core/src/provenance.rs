use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Origin system of a telemetry event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Iot,
    Erp,
    Logistics,
    Public,
}

impl SourceKind {
    pub const ALL: [SourceKind; 4] = [
        SourceKind::Iot,
        SourceKind::Erp,
        SourceKind::Logistics,
        SourceKind::Public,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Iot => "iot",
            SourceKind::Erp => "erp",
            SourceKind::Logistics => "logistics",
            SourceKind::Public => "public",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iot" => Ok(SourceKind::Iot),
            "erp" => Ok(SourceKind::Erp),
            "logistics" => Ok(SourceKind::Logistics),
            "public" => Ok(SourceKind::Public),
            other => Err(alloc::format!("unknown source kind `{other}`")),
        }
    }
}

/// Identity of the source record a value was derived from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: SourceKind,
    pub source_event_id: String,
}
