use base64::Engine;
use serde_json::{json, Value};

use super::frames::MediaInput;
use super::prompt::PromptConfig;
use super::DecodeParams;
use crate::endpoint::{EndpointError, HttpConfig};

/// A completed model answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    /// `stop`, `length`, ... as reported by the endpoint.
    pub finish_reason: Option<String>,
}

impl ChatReply {
    pub fn stop(text: impl Into<String>) -> Self {
        ChatReply { text: text.into(), finish_reason: Some("stop".into()) }
    }
}

pub struct ChatRequest<'a> {
    pub media: &'a MediaInput,
    pub prompt: &'a PromptConfig,
    pub decode: &'a DecodeParams,
}

/// A multimodal chat model.
pub trait ChatEndpoint: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &ChatRequest<'_>) -> Result<ChatReply, EndpointError>;
}

/// Client for an OpenAI-style `POST {base}/chat/completions` endpoint. Frames
/// travel as base64 JPEG data URLs in one user message, in timestamp order.
pub struct HttpChatEndpoint {
    config: HttpConfig,
    model_id: String,
    agent: ureq::Agent,
}

impl HttpChatEndpoint {
    pub fn new(config: HttpConfig, model_id: impl Into<String>) -> Self {
        let agent = config.agent();
        HttpChatEndpoint { config, model_id: model_id.into(), agent }
    }
}

pub(crate) fn request_body(model_id: &str, req: &ChatRequest<'_>) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut content = vec![json!({ "type": "text", "text": req.prompt.instruction })];
    for f in &req.media.frames {
        content.push(json!({
            "type": "image_url",
            "image_url": { "url": format!("data:image/jpeg;base64,{}", b64.encode(&f.jpeg)) },
        }));
    }
    let mut messages = Vec::new();
    if let Some(system) = &req.prompt.system_prompt {
        messages.push(json!({ "role": "system", "content": system }));
    }
    messages.push(json!({ "role": "user", "content": content }));
    json!({
        "model": model_id,
        "messages": messages,
        "temperature": 0,
        "max_tokens": req.decode.max_output_tokens,
    })
}

pub(crate) fn parse_reply(resp: &Value) -> Result<ChatReply, EndpointError> {
    let choice = resp
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| EndpointError::Fatal("response has no choices".into()))?;
    let finish_reason = choice.get("finish_reason").and_then(Value::as_str).map(str::to_string);
    let message = choice.get("message").cloned().unwrap_or(Value::Null);
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(EndpointError::Refused(refusal.to_string()));
    }
    if finish_reason.as_deref() == Some("content_filter") {
        return Err(EndpointError::Refused("content filter".into()));
    }
    let text = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect(),
        _ => String::new(),
    };
    Ok(ChatReply { text, finish_reason })
}

impl ChatEndpoint for HttpChatEndpoint {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ChatReply, EndpointError> {
        let resp = self.config.post_json(&self.agent, "chat/completions", &request_body(&self.model_id, request))?;
        parse_reply(&resp)
    }
}
