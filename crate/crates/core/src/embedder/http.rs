use serde_json::{json, Value};

use super::EmbedEndpoint;
use crate::endpoint::{EndpointError, HttpConfig};

/// Client for an OpenAI-style `POST {base}/embeddings` endpoint.
pub struct HttpEmbedEndpoint {
    config: HttpConfig,
    model_id: String,
    agent: ureq::Agent,
}

impl HttpEmbedEndpoint {
    pub fn new(config: HttpConfig, model_id: impl Into<String>) -> Self {
        let agent = config.agent();
        HttpEmbedEndpoint { config, model_id: model_id.into(), agent }
    }
}

impl EmbedEndpoint for HttpEmbedEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EndpointError> {
        let body = json!({ "model": self.model_id, "input": texts });
        let resp = self.config.post_json(&self.agent, "embeddings", &body)?;
        parse_embeddings(&resp)
    }
}

fn parse_embeddings(resp: &Value) -> Result<Vec<Vec<f32>>, EndpointError> {
    let bad = |why: &str| EndpointError::Fatal(format!("malformed embeddings response: {why}"));
    let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| bad("missing `data` array"))?;
    let mut rows = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("item without `embedding`"))?
            .iter()
            .map(|v| v.as_f64().map(|f| f as f32).ok_or_else(|| bad("non-numeric entry")))
            .collect::<Result<Vec<f32>, _>>()?;
        rows.push((index, values));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}
