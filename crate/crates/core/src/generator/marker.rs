use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Where the object-auth token travels, as far as the privilege provider is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubTokenLocation {
    Header,
    Body,
}

impl StubTokenLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            StubTokenLocation::Header => "header",
            StubTokenLocation::Body => "body",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarkerChecks {
    pub groups: bool,
    pub user_id: bool,
}

/// The line placed above every handler of an object-bound path:
///
/// ```text
/// # @object_privilege(path="/pet", token_in="header", groups=true, user_id=true)
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrivilegeProviderMarker {
    pub path: String,
    pub token_location: StubTokenLocation,
    pub checks: MarkerChecks,
}

const PREFIX: &str = "# @object_privilege";

fn grammar() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"^\s*# @object_privilege\(path="([^"]*)", token_in="(header|body)", groups=(true|false), user_id=(true|false)\)\s*$"#,
        )
        .expect("marker grammar compiles")
    })
}

impl PrivilegeProviderMarker {
    /// `Ok(None)` for lines that are not markers; `Err` for lines that start like
    /// a marker but do not follow the grammar.
    pub fn parse_line(line: &str) -> Result<Option<PrivilegeProviderMarker>, String> {
        if !line.trim_start().starts_with(PREFIX) {
            return Ok(None);
        }
        let caps = grammar()
            .captures(line)
            .ok_or_else(|| format!("malformed privilege marker `{}`", line.trim()))?;
        let token_location = match &caps[2] {
            "header" => StubTokenLocation::Header,
            _ => StubTokenLocation::Body,
        };
        Ok(Some(PrivilegeProviderMarker {
            path: caps[1].to_string(),
            token_location,
            checks: MarkerChecks {
                groups: &caps[3] == "true",
                user_id: &caps[4] == "true",
            },
        }))
    }
}

impl fmt::Display for PrivilegeProviderMarker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{PREFIX}(path=\"{}\", token_in=\"{}\", groups={}, user_id={})",
            self.path,
            self.token_location.as_str(),
            self.checks.groups,
            self.checks.user_id
        )
    }
}
