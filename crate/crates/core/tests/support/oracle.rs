//! Naive interpreter of the group/ownership rules, written independently of the
//! engine: a flat rule table scanned linearly, booleans instead of a permission
//! lattice, and ACL lists checked by hand.
#![allow(dead_code)]

/// (path, group, actions as "CRUD" letters, ownership required)
pub type RuleRow = (&'static str, &'static str, &'static str, bool);

pub const PETSTORE: &[RuleRow] = &[
    ("/user", "G11", "CRUD", true),
    ("/pet", "G21", "CRUD", true),
    ("/pet", "G22", "R", false),
    ("/pet", "G23", "D", false),
];

pub const GROUPS: [&str; 4] = ["G11", "G21", "G22", "G23"];
pub const PATHS: [&str; 2] = ["/user", "/pet"];
pub const ACTIONS: [char; 4] = ['C', 'R', 'U', 'D'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleAce {
    pub owner: String,
    pub ro: Vec<String>,
    pub rw: Vec<String>,
}

/// Expected (allowed, reason) for one request.
pub fn expected(
    table: &[RuleRow],
    groups: &[&str],
    user: &str,
    path: &str,
    action: char,
    ace: Option<&OracleAce>,
) -> (bool, &'static str) {
    let mut some_rule = false;
    let mut ownership_free = false;
    for (p, g, acts, own) in table {
        if *p == path && groups.contains(g) && acts.contains(action) {
            some_rule = true;
            if !own {
                ownership_free = true;
            }
        }
    }
    if !some_rule {
        return (false, "no_group_rule");
    }
    if action == 'C' || ownership_free {
        return (true, "group_grant");
    }
    let Some(ace) = ace else {
        return (false, "no_such_object");
    };
    if ace.owner == user {
        return (true, "ownership_grant");
    }
    let in_rw = ace.rw.iter().any(|u| u == user);
    let in_ro = ace.ro.iter().any(|u| u == user);
    let listed = if action == 'R' { in_rw || in_ro } else { in_rw };
    if listed {
        (true, "acl_grant")
    } else {
        (false, "not_owner")
    }
}

/// Every group subset of size 0, 1 or 2.
pub fn group_subsets() -> Vec<Vec<&'static str>> {
    let mut out = vec![vec![]];
    for (i, a) in GROUPS.iter().enumerate() {
        out.push(vec![*a]);
        for b in &GROUPS[i + 1..] {
            out.push(vec![*a, *b]);
        }
    }
    out
}
