//! Deterministic stand-ins for the model endpoints, for offline runs and tests.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crate::describer::{ChatEndpoint, ChatReply, ChatRequest, Clock};
use crate::digest::sha256_parts;
use crate::embedder::EmbedEndpoint;
use crate::endpoint::EndpointError;

const PHRASES: &[&str] = &[
    "A sedan pulls up next to the curb.",
    "A person walks toward the parked car.",
    "The driver door swings open.",
    "Someone closes the rear door.",
    "A pickup truck turns at the intersection.",
    "The vehicle slowly comes to a halt.",
    "A man lifts a box into the trunk.",
    "A woman carries a bag away from the van.",
    "The trunk lid is raised.",
    "A white car moves forward along the lane.",
    "Two people stand beside a vehicle.",
    "The car backs out of the parking space.",
];

/// Answers with 1–4 canned sentences picked by hashing the request, so equal
/// inputs always get equal text and different frames usually differ.
pub struct MockChat {
    model_id: String,
    fixed: Option<String>,
    calls: AtomicUsize,
}

impl MockChat {
    pub fn new(model_id: impl Into<String>) -> Self {
        MockChat { model_id: model_id.into(), fixed: None, calls: AtomicUsize::new(0) }
    }

    /// Always answer with `text`.
    pub fn fixed(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        MockChat { model_id: model_id.into(), fixed: Some(text.into()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatEndpoint for MockChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ChatReply, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(t) = &self.fixed {
            return Ok(ChatReply::stop(t.clone()));
        }
        let h = sha256_parts(&[
            self.model_id.as_bytes(),
            request.prompt.fingerprint().as_bytes(),
            request.media.fingerprint().as_bytes(),
        ]);
        let n = 1 + usize::from(h[0] % 4);
        let text: Vec<&str> = (0..n).map(|i| PHRASES[usize::from(h[1 + i]) % PHRASES.len()]).collect();
        Ok(ChatReply::stop(text.join(if h[5].is_multiple_of(2) { " " } else { "\n" })))
    }
}

/// Signed feature hashing over lowercase word tokens: a linear bag-of-words
/// encoder, so a whole text embeds to the sum of its sentences' raw vectors.
pub struct HashingEmbedder {
    model_id: String,
    dim: usize,
    calls: AtomicUsize,
}

impl HashingEmbedder {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        HashingEmbedder { model_id: model_id.into(), dim, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn raw(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = sha256_parts(&[self.model_id.as_bytes(), token.as_bytes()]);
            let idx = (u64::from_le_bytes(h[..8].try_into().unwrap()) % self.dim as u64) as usize;
            v[idx] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        if v.iter().all(|&x| x == 0.0) {
            // Token-free or fully cancelled text still needs a direction.
            v[0] = 1.0;
        }
        v
    }
}

impl EmbedEndpoint for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.raw(t)).collect())
    }
}

/// A clock that never moves.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// A clock that advances by `step` milliseconds on every read.
#[derive(Debug)]
pub struct TickClock {
    now: AtomicU64,
    step: u64,
}

impl TickClock {
    pub fn new(start: u64, step: u64) -> Self {
        TickClock { now: AtomicU64::new(start), step }
    }
}

impl Clock for TickClock {
    fn now_ms(&self) -> u64 {
        self.now.fetch_add(self.step, Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describer::{resolve_prompt, DatasetKey, DecodeParams, EncodedFrame, InputKind, MediaInput, Strategy};
    use crate::manifest::MediaKind;

    #[test]
    fn chat_is_deterministic_and_input_sensitive() {
        let chat = MockChat::new("m");
        let prompt = resolve_prompt(DatasetKey::SovaBench, Strategy::TaskAware, MediaKind::Video, None).unwrap();
        let decode = DecodeParams::default();
        let texts: Vec<String> = (0..20u8)
            .map(|i| {
                let media =
                    MediaInput { kind: InputKind::Image, frames: vec![EncodedFrame { timestamp: 0.0, jpeg: vec![i] }] };
                chat.complete(&ChatRequest { media: &media, prompt: &prompt, decode: &decode }).unwrap().text
            })
            .collect();
        let media = MediaInput { kind: InputKind::Image, frames: vec![EncodedFrame { timestamp: 0.0, jpeg: vec![0] }] };
        assert_eq!(
            chat.complete(&ChatRequest { media: &media, prompt: &prompt, decode: &decode }).unwrap().text,
            texts[0]
        );
        let distinct: std::collections::HashSet<_> = texts.iter().collect();
        assert!(distinct.len() > 10);
        assert_eq!(chat.calls(), 21);
    }

    #[test]
    fn hashing_embedder_is_linear_in_tokens() {
        let e = HashingEmbedder::new("h", 32);
        let a = e.raw("A car stops.");
        let b = e.raw("A man exits.");
        let whole = e.raw("A car stops. A man exits.");
        let sum: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        assert_eq!(whole, sum);
        assert_eq!(e.raw("..."), {
            let mut v = vec![0.0; 32];
            v[0] = 1.0;
            v
        });
    }

    #[test]
    fn clocks() {
        let c = TickClock::new(10, 5);
        assert_eq!((c.now_ms(), c.now_ms()), (10, 15));
        assert_eq!(FixedClock(3).now_ms(), 3);
    }
}
