//! Object-level authorization toolkit for OpenAPI-described services.
//!
//! * [`model`] parses documents carrying the Extended Security Scheme (ESS)
//!   vendor extensions and resolves their references.
//! * [`validate`] lints ESS usage and flags paths exposed to broken object
//!   level authorization.
//! * [`authz`] issues and verifies tokens and decides every request against
//!   path-based group rules and per-object access control entries.
//! * [`acl_store`] persists those entries in an append-only journal.
//! * [`generator`] turns an annotated document into a server stub and back.

pub mod action;
pub mod authz;
pub mod generator;
pub mod acl_store;
pub mod journal;
pub mod model;
pub mod validate;

pub use action::{CrudAction, HttpMethod};
