//! HTTP adapter that delegates oracle judgments to an external service.
//!
//! Request/response payloads are documented in `docs/oracle-adapter.md`. The
//! endpoint comes from the `ORACLE_ENDPOINT` environment variable
//! (`http://host:port/path`). Only plain HTTP is supported; the adapter is
//! excluded from the acceptance suites.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ClusterResult, GoalDescriptor, OracleError, SemanticOracle};
use crate::app::{ActionStep, AppSpec, Page};
use crate::condition::{parse_condition, Condition, Valuation};
use crate::ffg::Functionality;

pub const ENDPOINT_ENV: &str = "ORACLE_ENDPOINT";

#[derive(Debug, Clone)]
pub struct RemoteOracle {
    host: String,
    port: u16,
    path: String,
    timeout: Duration,
}

impl RemoteOracle {
    /// Build from an `http://host:port/path` URL.
    pub fn from_url(url: &str) -> Result<RemoteOracle, OracleError> {
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| OracleError::Remote(format!("unsupported endpoint `{url}`")))?;
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], rest[i..].to_string()),
            None => (rest, "/".to_string()),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (
                h.to_string(),
                p.parse::<u16>()
                    .map_err(|_| OracleError::Remote(format!("bad port in `{url}`")))?,
            ),
            None => (authority.to_string(), 80),
        };
        Ok(RemoteOracle { host, port, path, timeout: Duration::from_secs(10) })
    }

    pub fn from_env() -> Result<RemoteOracle, OracleError> {
        let url = std::env::var(ENDPOINT_ENV)
            .map_err(|_| OracleError::Remote(format!("{ENDPOINT_ENV} is not set")))?;
        RemoteOracle::from_url(&url)
    }

    fn post(&self, body: &serde_json::Value) -> Result<serde_json::Value, OracleError> {
        let payload = serde_json::to_string(body)
            .map_err(|e| OracleError::Remote(e.to_string()))?;
        let mut stream = TcpStream::connect((self.host.as_str(), self.port))
            .map_err(|e| OracleError::Remote(format!("connect: {e}")))?;
        stream
            .set_read_timeout(Some(self.timeout))
            .and_then(|_| stream.set_write_timeout(Some(self.timeout)))
            .map_err(|e| OracleError::Remote(format!("timeout setup: {e}")))?;
        let request = format!(
            "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            self.path,
            self.host,
            payload.len(),
            payload
        );
        stream
            .write_all(request.as_bytes())
            .map_err(|e| OracleError::Remote(format!("write: {e}")))?;
        let mut raw = Vec::new();
        stream
            .read_to_end(&mut raw)
            .map_err(|e| OracleError::Remote(format!("read: {e}")))?;
        let text = String::from_utf8_lossy(&raw);
        let (head, body) = text
            .split_once("\r\n\r\n")
            .ok_or_else(|| OracleError::Remote("malformed HTTP response".into()))?;
        let status = head.lines().next().unwrap_or_default();
        if !status.contains("200") {
            return Err(OracleError::Remote(format!("service answered `{status}`")));
        }
        serde_json::from_str(body).map_err(|e| OracleError::Remote(format!("bad JSON: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GoalPayload {
    label: String,
    vector: Vec<f64>,
    #[serde(default)]
    topics: std::collections::BTreeSet<String>,
}

impl SemanticOracle for RemoteOracle {
    fn infer_page_goal(&self, page: &Page) -> Result<GoalDescriptor, OracleError> {
        let reply = self.post(&json!({
            "op": "infer_page_goal",
            "page": {
                "id": page.id,
                "title": page.title,
                "widgets": page.widgets.iter().map(|w| &w.text).collect::<Vec<_>>(),
            },
        }))?;
        let goal: GoalPayload =
            serde_json::from_value(reply).map_err(|e| OracleError::Remote(e.to_string()))?;
        GoalDescriptor::new(goal.label, goal.vector, goal.topics)
    }

    fn essential_actions(
        &self,
        func: &Functionality,
        spec: &AppSpec,
    ) -> Result<Vec<ActionStep>, OracleError> {
        let reply = self.post(&json!({
            "op": "essential_actions",
            "functionality": { "id": func.id, "goal": func.goal.label },
            "app": spec.name,
        }))?;
        serde_json::from_value(reply).map_err(|e| OracleError::Remote(e.to_string()))
    }

    fn cluster_trace_goals(
        &self,
        goals: &[(String, GoalDescriptor)],
    ) -> Result<ClusterResult, OracleError> {
        let reply = self.post(&json!({
            "op": "cluster_trace_goals",
            "goals": goals,
        }))?;
        serde_json::from_value(reply).map_err(|e| OracleError::Remote(e.to_string()))
    }

    fn infer_flow_condition(
        &self,
        prefix_state: &Valuation,
        target_func: &Functionality,
        _spec: &AppSpec,
    ) -> Result<Condition, OracleError> {
        let reply = self.post(&json!({
            "op": "infer_flow_condition",
            "state": prefix_state,
            "target": { "id": target_func.id, "vars": target_func.vars },
        }))?;
        let text = reply
            .get("condition")
            .and_then(|v| v.as_str())
            .ok_or_else(|| OracleError::Remote("missing `condition` field".into()))?;
        parse_condition(text).map_err(|e| OracleError::Remote(e.to_string()))
    }
}
