#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use bola_guard::authz::{issue_token, SigningKey};
use bola_guard_server::{start, AppState, EventLog, ManualClock, RunningService, ServiceConfig};
use tempfile::TempDir;

pub const NOW: u64 = 1_750_000_000;
pub const KEY: &[u8] = b"reference-service-test-key";

/// A service instance over a scratch directory that can be restarted in place.
pub struct Harness {
    pub dir: TempDir,
    pub config: ServiceConfig,
    pub events: Arc<EventLog>,
    pub clock: Arc<ManualClock>,
    running: Option<RunningService>,
    pub client: reqwest::Client,
}

impl Harness {
    pub async fn start() -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let key_path = dir.path().join("signing.key");
        std::fs::write(&key_path, KEY).unwrap();
        let config = ServiceConfig::new(key_path, dir.path().join("data/acl.ndjson"));
        let mut h = Harness {
            dir,
            config,
            events: Arc::new(EventLog::default()),
            clock: Arc::new(ManualClock::new(NOW)),
            running: None,
            client: reqwest::Client::new(),
        };
        h.boot().await;
        h
    }

    async fn boot(&mut self) {
        let mut state = AppState::from_config(&self.config).unwrap();
        state.clock = self.clock.clone();
        let state = state.with_instrumentation(self.events.clone());
        let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
        self.running = Some(start(state, addr).await.unwrap());
    }

    pub async fn restart(&mut self) {
        if let Some(r) = self.running.take() {
            r.stop().await.unwrap();
        }
        self.boot().await;
    }

    pub async fn stop(mut self) {
        if let Some(r) = self.running.take() {
            r.stop().await.unwrap();
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.running.as_ref().unwrap().addr, path)
    }

    pub fn token(&self, user: &str, groups: &[&str]) -> String {
        let key = SigningKey::new(KEY.to_vec());
        issue_token(user, &format!("user-{user}"), groups.iter().copied(), Duration::from_secs(3600), &key, NOW)
            .as_str()
            .to_string()
    }

    pub fn request(&self, method: reqwest::Method, path: &str, token: Option<&str>) -> reqwest::RequestBuilder {
        let mut r = self.client.request(method, self.url(path));
        if let Some(t) = token {
            r = r.header("api_key", t);
        }
        r
    }
}
