//! Runtime authorization: tokens, path-based group rules and per-object ACL checks.
//!
//! Every request is decided in two steps. First the caller's groups are matched
//! against the rules for the route template and action
//! ([`effective_permission`]): no match denies, a match without ownership
//! requirement allows any object, and otherwise only objects the caller owns or
//! is listed on are allowed. In the last case the object's
//! [`AccessControlEntry`] is consulted. Entries are created automatically when
//! an object is created ([`AuthzEngine::record_creation`]).

mod rules;
mod token;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acl_store::{AccessControlEntry, AclError, AclStore, ObjectId};
use crate::action::CrudAction;

pub use rules::{effective_permission, GroupRule, GroupRuleSet, Permission, RuleError};
pub use token::{issue_token, verify_token, AuthToken, SigningKey, Timestamp, TokenError, TokenVerifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    GroupGrant,
    OwnershipGrant,
    AclGrant,
    NoGroupRule,
    NotOwner,
    TokenInvalid,
    NoSuchObject,
}

impl DecisionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionReason::GroupGrant => "group_grant",
            DecisionReason::OwnershipGrant => "ownership_grant",
            DecisionReason::AclGrant => "acl_grant",
            DecisionReason::NoGroupRule => "no_group_rule",
            DecisionReason::NotOwner => "not_owner",
            DecisionReason::TokenInvalid => "token_invalid",
            DecisionReason::NoSuchObject => "no_such_object",
        }
    }

    pub fn is_grant(self) -> bool {
        matches!(
            self,
            DecisionReason::GroupGrant | DecisionReason::OwnershipGrant | DecisionReason::AclGrant
        )
    }
}

impl fmt::Display for DecisionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuthzDecision {
    pub allowed: bool,
    pub reason: DecisionReason,
    pub matched_rule: Option<GroupRule>,
}

impl AuthzDecision {
    fn new(reason: DecisionReason, matched_rule: Option<&GroupRule>) -> AuthzDecision {
        AuthzDecision {
            allowed: reason.is_grant(),
            reason,
            matched_rule: matched_rule.cloned(),
        }
    }

    pub fn deny(reason: DecisionReason) -> AuthzDecision {
        debug_assert!(!reason.is_grant());
        AuthzDecision::new(reason, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessLevel {
    Ro,
    Rw,
}

impl std::str::FromStr for AccessLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ro" => Ok(AccessLevel::Ro),
            "rw" => Ok(AccessLevel::Rw),
            other => Err(format!("unknown access level `{other}` (expected ro or rw)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AuthzError {
    #[error("user `{actor}` does not own object {id} under {path}")]
    NotOwner { actor: String, path: String, id: ObjectId },
    #[error("the owner of object {id} under {path} always keeps read-write access")]
    OwnerImmutable { path: String, id: ObjectId },
    #[error(transparent)]
    Store(#[from] AclError),
}

/// Decision for create requests: the group rules alone decide.
pub fn decide_create(rules: &GroupRuleSet, token: &AuthToken, path: &str) -> AuthzDecision {
    match rules.evaluate(&token.groups, path, CrudAction::Create) {
        (Permission::Deny, _) => AuthzDecision::deny(DecisionReason::NoGroupRule),
        (_, rule) => AuthzDecision::new(DecisionReason::GroupGrant, rule),
    }
}

/// Decision for requests on an existing object, given a snapshot of its entry.
pub fn decide_access(
    rules: &GroupRuleSet,
    token: &AuthToken,
    path: &str,
    action: CrudAction,
    entry: Option<&AccessControlEntry>,
) -> AuthzDecision {
    if action == CrudAction::Create {
        return decide_create(rules, token, path);
    }
    match rules.evaluate(&token.groups, path, action) {
        (Permission::Deny, _) => AuthzDecision::deny(DecisionReason::NoGroupRule),
        (Permission::AllowAny, rule) => AuthzDecision::new(DecisionReason::GroupGrant, rule),
        (Permission::AllowOwnOnly, rule) => {
            let Some(entry) = entry else {
                return AuthzDecision::new(DecisionReason::NoSuchObject, rule);
            };
            let user = token.user_id.as_str();
            let reason = if entry.owner == user {
                DecisionReason::OwnershipGrant
            } else if (action == CrudAction::Read && entry.can_read(user)) || entry.can_write(user) {
                DecisionReason::AclGrant
            } else {
                DecisionReason::NotOwner
            };
            AuthzDecision::new(reason, rule)
        }
    }
}

/// Rule set plus ACL store; shared by all request contexts.
#[derive(Debug, Clone)]
pub struct AuthzEngine {
    rules: Arc<GroupRuleSet>,
    store: Arc<AclStore>,
}

impl AuthzEngine {
    pub fn new(rules: GroupRuleSet, store: Arc<AclStore>) -> AuthzEngine {
        AuthzEngine {
            rules: Arc::new(rules),
            store,
        }
    }

    pub fn rules(&self) -> &GroupRuleSet {
        &self.rules
    }

    pub fn store(&self) -> &Arc<AclStore> {
        &self.store
    }

    pub fn effective_permission(&self, token: &AuthToken, path: &str, action: CrudAction) -> Permission {
        effective_permission(&self.rules, &token.groups, path, action)
    }

    /// Whether `token` may create objects under `path`. Allocates nothing.
    pub fn authorize_create(&self, token: &AuthToken, path: &str) -> AuthzDecision {
        decide_create(&self.rules, token, path)
    }

    /// Stores the entry for a newly created object: owner and sole read-write user is the creator.
    pub fn record_creation(
        &self,
        token: &AuthToken,
        path: &str,
        object_id: ObjectId,
    ) -> Result<AccessControlEntry, AuthzError> {
        let entry = AccessControlEntry::new_owned(object_id, path, token.user_id.clone());
        self.store.insert_new(entry.clone())?;
        Ok(entry)
    }

    pub fn authorize_access(
        &self,
        token: &AuthToken,
        path: &str,
        action: CrudAction,
        object_id: ObjectId,
    ) -> AuthzDecision {
        let entry = self.store.get(path, object_id);
        decide_access(&self.rules, token, path, action, entry.as_ref())
    }

    /// Owner-only: gives `grantee` read-only or read-write access.
    pub fn grant(
        &self,
        actor: &AuthToken,
        object_id: ObjectId,
        path: &str,
        grantee: &str,
        level: AccessLevel,
    ) -> Result<AccessControlEntry, AuthzError> {
        grant_as(&self.store, &actor.user_id, object_id, path, grantee, level)
    }
}

/// [`AuthzEngine::grant`] for an actor known only by user id (offline tooling).
pub fn grant_as(
    store: &AclStore,
    actor: &str,
    object_id: ObjectId,
    path: &str,
    grantee: &str,
    level: AccessLevel,
) -> Result<AccessControlEntry, AuthzError> {
    store
        .update(path, object_id, |entry| {
            if entry.owner != actor {
                return Err(AuthzError::NotOwner {
                    actor: actor.to_string(),
                    path: path.to_string(),
                    id: object_id,
                });
            }
            if grantee == entry.owner {
                return match level {
                    AccessLevel::Rw => Ok(()),
                    AccessLevel::Ro => Err(AuthzError::OwnerImmutable {
                        path: path.to_string(),
                        id: object_id,
                    }),
                };
            }
            let (add, remove) = match level {
                AccessLevel::Ro => (&mut entry.users_ro, &mut entry.users_rw),
                AccessLevel::Rw => (&mut entry.users_rw, &mut entry.users_ro),
            };
            remove.retain(|u| u != grantee);
            if !add.iter().any(|u| u == grantee) {
                add.push(grantee.to_string());
            }
            Ok(())
        })?
}
