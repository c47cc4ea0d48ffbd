use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four object actions an authorization rule can grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrudAction {
    Create,
    Read,
    Update,
    Delete,
}

impl CrudAction {
    pub const ALL: [CrudAction; 4] = [
        CrudAction::Create,
        CrudAction::Read,
        CrudAction::Update,
        CrudAction::Delete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CrudAction::Create => "create",
            CrudAction::Read => "read",
            CrudAction::Update => "update",
            CrudAction::Delete => "delete",
        }
    }

    /// Single-letter scope key (`C`, `R`, `U`, `D`).
    pub fn letter(self) -> &'static str {
        match self {
            CrudAction::Create => "C",
            CrudAction::Read => "R",
            CrudAction::Update => "U",
            CrudAction::Delete => "D",
        }
    }

    /// The HTTP verb bound to this action: POST, GET, PUT, DELETE.
    pub fn http_method(self) -> HttpMethod {
        match self {
            CrudAction::Create => HttpMethod::Post,
            CrudAction::Read => HttpMethod::Get,
            CrudAction::Update => HttpMethod::Put,
            CrudAction::Delete => HttpMethod::Delete,
        }
    }

    /// Accepts a full action name or its scope letter, case-insensitively.
    pub fn from_scope_key(key: &str) -> Option<CrudAction> {
        CrudAction::ALL.into_iter().find(|a| {
            key.eq_ignore_ascii_case(a.as_str()) || key.eq_ignore_ascii_case(a.letter())
        })
    }
}

impl fmt::Display for CrudAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action `{0}` (expected create, read, update or delete)")]
pub struct UnknownAction(pub String);

impl FromStr for CrudAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CrudAction::ALL
            .into_iter()
            .find(|a| s.eq_ignore_ascii_case(a.as_str()))
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

/// HTTP verbs that may appear as operations under an OpenAPI path item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMethod {
    Get,
    Put,
    Post,
    Delete,
    Options,
    Head,
    Patch,
    Trace,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 8] = [
        HttpMethod::Get,
        HttpMethod::Put,
        HttpMethod::Post,
        HttpMethod::Delete,
        HttpMethod::Options,
        HttpMethod::Head,
        HttpMethod::Patch,
        HttpMethod::Trace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "get",
            HttpMethod::Put => "put",
            HttpMethod::Post => "post",
            HttpMethod::Delete => "delete",
            HttpMethod::Options => "options",
            HttpMethod::Head => "head",
            HttpMethod::Patch => "patch",
            HttpMethod::Trace => "trace",
        }
    }

    pub fn parse(s: &str) -> Option<HttpMethod> {
        HttpMethod::ALL
            .into_iter()
            .find(|m| s.eq_ignore_ascii_case(m.as_str()))
    }

    /// POST=create, GET=read, PUT=update, DELETE=delete; every other verb has no action.
    pub fn action(self) -> Option<CrudAction> {
        match self {
            HttpMethod::Post => Some(CrudAction::Create),
            HttpMethod::Get => Some(CrudAction::Read),
            HttpMethod::Put => Some(CrudAction::Update),
            HttpMethod::Delete => Some(CrudAction::Delete),
            _ => None,
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
