use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::CrudAction;

/// Grants `actions` on `path` to members of `group`, optionally only on objects they own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRule {
    pub path: String,
    pub group: String,
    pub actions: BTreeSet<CrudAction>,
    #[serde(rename = "ownership")]
    pub ownership_required: bool,
}

impl GroupRule {
    pub fn new(
        path: impl Into<String>,
        group: impl Into<String>,
        actions: impl IntoIterator<Item = CrudAction>,
        ownership_required: bool,
    ) -> GroupRule {
        GroupRule {
            path: path.into(),
            group: group.into(),
            actions: actions.into_iter().collect(),
            ownership_required,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("two rules for group `{group}` on `{path}`; merge their actions into one rule")]
    DuplicateRule { path: String, group: String },
    #[error("rule for group `{group}` on `{path}` grants no actions")]
    EmptyActions { path: String, group: String },
    #[error("rule for group `{group}` names unknown route `{path}`")]
    UnknownPath { path: String, group: String },
    #[error("cannot parse rule set: {0}")]
    Parse(String),
    #[error("cannot read rule set: {0}")]
    Io(#[from] std::io::Error),
}

/// What a set of groups may do with an action on a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Permission {
    Deny,
    AllowOwnOnly,
    AllowAny,
}

/// Group rules indexed by (path, group).
#[derive(Debug, Clone, Default)]
pub struct GroupRuleSet {
    rules: Vec<GroupRule>,
    index: HashMap<(String, String), usize>,
}

impl GroupRuleSet {
    pub fn new(rules: Vec<GroupRule>) -> Result<GroupRuleSet, RuleError> {
        let mut index = HashMap::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            if rule.actions.is_empty() {
                return Err(RuleError::EmptyActions {
                    path: rule.path.clone(),
                    group: rule.group.clone(),
                });
            }
            if index.insert((rule.path.clone(), rule.group.clone()), i).is_some() {
                return Err(RuleError::DuplicateRule {
                    path: rule.path.clone(),
                    group: rule.group.clone(),
                });
            }
        }
        Ok(GroupRuleSet { rules, index })
    }

    pub fn empty() -> GroupRuleSet {
        GroupRuleSet::default()
    }

    /// The four groups of the petstore example:
    /// G11 on `/user` and G21 on `/pet` may create/read/update/delete their own
    /// objects, G22 may read any pet, G23 may delete any pet.
    pub fn petstore_default() -> GroupRuleSet {
        use CrudAction::*;
        GroupRuleSet::new(vec![
            GroupRule::new("/user", "G11", CrudAction::ALL, true),
            GroupRule::new("/pet", "G21", CrudAction::ALL, true),
            GroupRule::new("/pet", "G22", [Read], false),
            GroupRule::new("/pet", "G23", [Delete], false),
        ])
        .expect("default rules are well formed")
    }

    /// Parses a YAML (or JSON, which is valid YAML) list of rules.
    pub fn from_yaml(text: &str) -> Result<GroupRuleSet, RuleError> {
        let rules: Vec<GroupRule> = serde_yaml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        GroupRuleSet::new(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GroupRuleSet, RuleError> {
        GroupRuleSet::from_yaml(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[GroupRule] {
        &self.rules
    }

    pub fn get(&self, path: &str, group: &str) -> Option<&GroupRule> {
        self.index
            .get(&(path.to_string(), group.to_string()))
            .map(|&i| &self.rules[i])
    }

    /// Fails if any rule names a path outside `routes`.
    pub fn check_routes<S: AsRef<str>>(&self, routes: &[S]) -> Result<(), RuleError> {
        match self
            .rules
            .iter()
            .find(|r| !routes.iter().any(|route| route.as_ref() == r.path))
        {
            Some(r) => Err(RuleError::UnknownPath {
                path: r.path.clone(),
                group: r.group.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Combines every rule matching (path, g ∈ groups) that grants `action`.
    /// A rule without ownership requirement overrides one with it.
    pub fn evaluate<'a, I, S>(&'a self, groups: I, path: &str, action: CrudAction) -> (Permission, Option<&'a GroupRule>)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut best: (Permission, Option<&GroupRule>) = (Permission::Deny, None);
        for group in groups {
            let Some(rule) = self.get(path, group.as_ref()) else { continue };
            if !rule.actions.contains(&action) {
                continue;
            }
            let p = if rule.ownership_required {
                Permission::AllowOwnOnly
            } else {
                Permission::AllowAny
            };
            if p > best.0 {
                best = (p, Some(rule));
            }
        }
        best
    }
}

/// Deny-by-default permission of `groups` for `action` on `path`.
pub fn effective_permission<I, S>(rules: &GroupRuleSet, groups: I, path: &str, action: CrudAction) -> Permission
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    rules.evaluate(groups, path, action).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use CrudAction::*;

    #[test]
    fn petstore_examples() {
        let rules = GroupRuleSet::petstore_default();
        assert_eq!(effective_permission(&rules, ["G21"], "/pet", Read), Permission::AllowOwnOnly);
        assert_eq!(effective_permission(&rules, ["G21", "G22"], "/pet", Read), Permission::AllowAny);
        assert_eq!(effective_permission(&rules, ["G23"], "/pet", Update), Permission::Deny);
        assert_eq!(effective_permission(&rules, ["G11"], "/pet", Read), Permission::Deny);
        assert_eq!(effective_permission(&rules, ["G11"], "/user", Create), Permission::AllowOwnOnly);
        assert_eq!(effective_permission(&rules, Vec::<String>::new(), "/pet", Read), Permission::Deny);
    }

    #[test]
    fn override_is_per_action() {
        let rules = GroupRuleSet::petstore_default();
        // G22's ownership-free read does not widen G21's update
        assert_eq!(effective_permission(&rules, ["G21", "G22"], "/pet", Update), Permission::AllowOwnOnly);
    }

    #[test]
    fn rule_file_format() {
        let text = r#"
- path: /pet
  group: G21
  actions: [create, read, update, delete]
  ownership: true
- path: /pet
  group: G22
  actions: [read]
  ownership: false
"#;
        let rules = GroupRuleSet::from_yaml(text).unwrap();
        assert_eq!(rules.rules().len(), 2);
        assert!(!rules.get("/pet", "G22").unwrap().ownership_required);
        let json = serde_json::to_string(&rules.rules()[1]).unwrap();
        assert_eq!(json, r#"{"path":"/pet","group":"G22","actions":["read"],"ownership":false}"#);
        let back = GroupRuleSet::from_yaml(&serde_json::to_string(rules.rules()).unwrap()).unwrap();
        assert_eq!(back.rules(), rules.rules());
    }

    #[test]
    fn invalid_rule_sets() {
        let dup = vec![
            GroupRule::new("/pet", "G1", [Read], true),
            GroupRule::new("/pet", "G1", [Update], true),
        ];
        assert!(matches!(GroupRuleSet::new(dup), Err(RuleError::DuplicateRule { .. })));
        let empty = vec![GroupRule::new("/pet", "G1", [], true)];
        assert!(matches!(GroupRuleSet::new(empty), Err(RuleError::EmptyActions { .. })));
        assert!(matches!(
            GroupRuleSet::from_yaml("- path: /pet\n  group: G\n  actions: [fly]\n  ownership: true\n"),
            Err(RuleError::Parse(_))
        ));
        let rules = GroupRuleSet::petstore_default();
        assert!(rules.check_routes(&["/pet", "/user"]).is_ok());
        assert!(matches!(rules.check_routes(&["/pet"]), Err(RuleError::UnknownPath { .. })));
    }
}
