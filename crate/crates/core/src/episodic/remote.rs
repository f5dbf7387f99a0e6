//! HTTP client for remote expectation backends.
//!
//! Request body: `{"percept":{"entries":[["ch","tok",w],...]},"n":N,"seed":S}`.
//! Reply body: `{"samples":[{"entries":[...]},...]}` with exactly `N` samples.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ExpectationProvider, ExpectationSample, ProviderError};
use crate::embed::Descriptor;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub struct RemoteProvider {
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Reply {
    samples: Vec<ReplySample>,
}

#[derive(Deserialize)]
struct ReplySample {
    entries: Vec<(String, String, f64)>,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Validates a reply body against the request size.
pub(crate) fn parse_reply(body: &str, n: usize) -> Result<Vec<ExpectationSample>, ProviderError> {
    let reply: Reply =
        serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    if reply.samples.len() != n {
        return Err(ProviderError::SampleCount {
            expected: n,
            got: reply.samples.len(),
        });
    }
    let weight = 1.0 / n as f64;
    reply
        .samples
        .into_iter()
        .enumerate()
        .map(|(index, s)| {
            let invalid = |reason: String| ProviderError::InvalidSample { index, reason };
            if let Some((c, t, w)) = s
                .entries
                .iter()
                .find(|(_, _, w)| !(w.is_finite() && *w > 0.0))
            {
                return Err(invalid(format!("weight {w} for {c}:{t} must be positive")));
            }
            let descriptor =
                Descriptor::from_entries(s.entries).map_err(|e| invalid(e.to_string()))?;
            if descriptor.is_empty() {
                return Err(invalid("empty sample".into()));
            }
            Ok(ExpectationSample { descriptor, weight })
        })
        .collect()
}

impl ExpectationProvider for RemoteProvider {
    fn samples(
        &self,
        query: &Descriptor,
        n: usize,
        seed: u64,
    ) -> Result<Vec<ExpectationSample>, ProviderError> {
        let body = json!({"percept": {"entries": query.to_json()}, "n": n, "seed": seed});
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ProviderError::Status(status));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        parse_reply(&text, n)
    }

    fn identity(&self) -> String {
        format!("remote:{}", self.url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_validation() {
        let ok = r#"{"samples":[{"entries":[["affordance","passable",1.0]]},{"entries":[["affordance","blocked",0.5]]}]}"#;
        let s = parse_reply(ok, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].weight, 0.5);
        assert!(matches!(
            parse_reply(ok, 3),
            Err(ProviderError::SampleCount {
                expected: 3,
                got: 2
            })
        ));
        assert!(matches!(
            parse_reply("{", 1),
            Err(ProviderError::Malformed(_))
        ));
        assert!(matches!(
            parse_reply(r#"{"samples":[{"entries":[["a","b",0]]}]}"#, 1),
            Err(ProviderError::InvalidSample { index: 0, .. })
        ));
        assert!(matches!(
            parse_reply(r#"{"samples":[{"entries":[]}]}"#, 1),
            Err(ProviderError::InvalidSample { .. })
        ));
    }
}
