//! Compact HMAC-SHA-256 tokens.
//!
//! `base64url(header) . base64url(claims) . base64url(hmac)`, JWT-shaped, with
//! header `{"alg":"HS256","typ":"JWT"}` and claims `user_id`, `user_name`,
//! `groups`, `exp` only. The MAC covers the exact text of the first two parts.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

type HmacSha256 = Hmac<Sha256>;

const HEADER: &str = r#"{"alg":"HS256","typ":"JWT"}"#;

/// Seconds since the Unix epoch.
pub type Timestamp = u64;

#[derive(Clone)]
pub struct SigningKey(Vec<u8>);

impl SigningKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> SigningKey {
        SigningKey(bytes.into())
    }

    /// Reads a key file; a single trailing newline is not part of the key.
    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<SigningKey> {
        let mut bytes = std::fs::read(path)?;
        if bytes.last() == Some(&b'\n') {
            bytes.pop();
            if bytes.last() == Some(&b'\r') {
                bytes.pop();
            }
        }
        if bytes.is_empty() {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "key file is empty"));
        }
        Ok(SigningKey(bytes))
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("HMAC accepts keys of any length")
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey(<{} bytes>)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("invalid token: {0}")]
    TokenInvalid(String),
    #[error("token expired at {expiry}")]
    TokenExpired { expiry: Timestamp },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Claims {
    user_id: String,
    user_name: String,
    groups: BTreeSet<String>,
    exp: Timestamp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    alg: String,
    #[allow(dead_code)]
    typ: Option<String>,
}

/// An authenticated principal together with its serialized, signed form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthToken {
    pub user_id: String,
    pub user_name: String,
    pub groups: BTreeSet<String>,
    pub expiry: Timestamp,
    signature: Vec<u8>,
    encoded: String,
}

impl AuthToken {
    /// The serialized token, as carried in the `api_key` header.
    pub fn as_str(&self) -> &str {
        &self.encoded
    }

    pub fn signature(&self) -> &[u8] {
        &self.signature
    }

    pub fn in_group(&self, group: &str) -> bool {
        self.groups.contains(group)
    }
}

impl fmt::Display for AuthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encoded)
    }
}

/// Issues a token valid from `now` until `now + ttl`.
pub fn issue_token<I, S>(
    user_id: &str,
    user_name: &str,
    groups: I,
    ttl: Duration,
    key: &SigningKey,
    now: Timestamp,
) -> AuthToken
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let claims = Claims {
        user_id: user_id.to_string(),
        user_name: user_name.to_string(),
        groups: groups.into_iter().map(Into::into).collect(),
        exp: now.saturating_add(ttl.as_secs()),
    };
    let payload = serde_json::to_vec(&claims).expect("claims serialize");
    let signing_input = format!("{}.{}", URL_SAFE_NO_PAD.encode(HEADER), URL_SAFE_NO_PAD.encode(payload));
    let mut mac = key.mac();
    mac.update(signing_input.as_bytes());
    let signature = mac.finalize().into_bytes().to_vec();
    let encoded = format!("{signing_input}.{}", URL_SAFE_NO_PAD.encode(&signature));
    AuthToken {
        user_id: claims.user_id,
        user_name: claims.user_name,
        groups: claims.groups,
        expiry: claims.exp,
        signature,
        encoded,
    }
}

/// Checks the signature, then the expiry (`now < exp`).
pub fn verify_token(raw: &str, key: &SigningKey, now: Timestamp) -> Result<AuthToken, TokenError> {
    let invalid = |why: &str| TokenError::TokenInvalid(why.to_string());
    let raw = raw.trim();
    let mut parts = raw.split('.');
    let (Some(header_b64), Some(claims_b64), Some(sig_b64), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(invalid("expected three dot-separated parts"));
    };
    let signature = URL_SAFE_NO_PAD
        .decode(sig_b64)
        .map_err(|_| invalid("signature is not base64url"))?;
    let mut mac = key.mac();
    mac.update(&raw.as_bytes()[..header_b64.len() + 1 + claims_b64.len()]);
    mac.verify_slice(&signature)
        .map_err(|_| invalid("signature mismatch"))?;

    let header: Header = URL_SAFE_NO_PAD
        .decode(header_b64)
        .ok()
        .and_then(|h| serde_json::from_slice(&h).ok())
        .ok_or_else(|| invalid("malformed header"))?;
    if header.alg != "HS256" {
        return Err(invalid("unsupported algorithm"));
    }
    let claims: Claims = URL_SAFE_NO_PAD
        .decode(claims_b64)
        .ok()
        .and_then(|c| serde_json::from_slice(&c).ok())
        .ok_or_else(|| invalid("malformed claims"))?;
    if now >= claims.exp {
        return Err(TokenError::TokenExpired { expiry: claims.exp });
    }
    Ok(AuthToken {
        user_id: claims.user_id,
        user_name: claims.user_name,
        groups: claims.groups,
        expiry: claims.exp,
        signature,
        encoded: raw.to_string(),
    })
}

/// Something that can turn a serialized token into a verified principal.
pub trait TokenVerifier: Send + Sync {
    fn verify(&self, raw: &str, now: Timestamp) -> Result<AuthToken, TokenError>;
}

impl TokenVerifier for SigningKey {
    fn verify(&self, raw: &str, now: Timestamp) -> Result<AuthToken, TokenError> {
        verify_token(raw, self, now)
    }
}
