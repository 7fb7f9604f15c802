use serde::{Deserialize, Serialize};

use super::DescribeError;
use crate::digest::hex_parts;
use crate::manifest::MediaKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    General,
    #[default]
    TaskAware,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "general" => Ok(Strategy::General),
            "task-aware" | "taskaware" => Ok(Strategy::TaskAware),
            other => Err(format!("unknown prompt strategy `{other}` (expected general or task-aware)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKey {
    #[serde(alias = "spatial_bench")]
    SpatialBench,
    Vsr,
    #[serde(alias = "whats_up")]
    WhatsUp,
    #[serde(alias = "count_bench")]
    CountBench,
    #[serde(alias = "visual7w_count")]
    Visual7wCount,
    #[default]
    #[serde(alias = "sova_bench")]
    SovaBench,
    Custom,
}

impl std::str::FromStr for DatasetKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match norm.as_str() {
            "spatialbench" => DatasetKey::SpatialBench,
            "vsr" => DatasetKey::Vsr,
            "whatsup" => DatasetKey::WhatsUp,
            "countbench" => DatasetKey::CountBench,
            "visual7wcount" => DatasetKey::Visual7wCount,
            "sovabench" => DatasetKey::SovaBench,
            "custom" => DatasetKey::Custom,
            _ => return Err(format!("unknown dataset `{s}`")),
        })
    }
}

const SPATIAL_LIST: &str =
    "List all spatial relationships between objects (e.g., position, size, distance, or orientation) in short sentences.";
const PAIRWISE_RELATIONS: &str = "List all pairwise spatial relations between objects in the image.";
const COUNT_CAPTION: &str = "Describe the image in a short caption that accurately states the number of main objects (in words) and includes a brief descriptive phrase.";
const ACTION_INSTRUCTION: &str = "Briefly classify the actions occurring in this video.";
const ACTION_SYSTEM: &str = "You are an expert video analysis model specialized in action recognition. Focus on how subjects and objects change and move over time rather than on static appearances or backgrounds. Infer the actions by reasoning about motion, temporal progression, and interactions across the video frames.";

/// The instruction (and optional system prompt) sent with every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub strategy: Strategy,
    pub dataset_key: DatasetKey,
    pub instruction: String,
    pub system_prompt: Option<String>,
}

impl PromptConfig {
    /// Digest of exactly what the model sees.
    pub fn fingerprint(&self) -> String {
        let system = self.system_prompt.as_deref().unwrap_or("");
        hex_parts(&[
            b"prompt",
            &[u8::from(self.system_prompt.is_some())],
            system.as_bytes(),
            self.instruction.as_bytes(),
        ])
    }
}

/// Pick the instruction for a dataset, strategy and media kind. `custom` is
/// required for [`DatasetKey::Custom`] and ignored otherwise.
pub fn resolve_prompt(
    dataset_key: DatasetKey,
    strategy: Strategy,
    kind: MediaKind,
    custom: Option<&str>,
) -> Result<PromptConfig, DescribeError> {
    let (instruction, system_prompt) = match (strategy, dataset_key) {
        (Strategy::General, _) => {
            let text = match kind {
                MediaKind::Image => "Describe the image",
                MediaKind::Video => "Describe the video",
            };
            (text.to_string(), None)
        }
        (Strategy::TaskAware, DatasetKey::Custom) => {
            let text = custom.filter(|t| !t.trim().is_empty()).ok_or(DescribeError::MissingInstruction)?;
            (text.to_string(), None)
        }
        (Strategy::TaskAware, DatasetKey::SpatialBench) => (SPATIAL_LIST.to_string(), None),
        (Strategy::TaskAware, DatasetKey::Vsr | DatasetKey::WhatsUp) => (PAIRWISE_RELATIONS.to_string(), None),
        (Strategy::TaskAware, DatasetKey::CountBench | DatasetKey::Visual7wCount) => (COUNT_CAPTION.to_string(), None),
        (Strategy::TaskAware, DatasetKey::SovaBench) => {
            (ACTION_INSTRUCTION.to_string(), Some(ACTION_SYSTEM.to_string()))
        }
    };
    Ok(PromptConfig { strategy, dataset_key, instruction, system_prompt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Action;

    #[test]
    fn dataset_keys_parse_in_either_spelling() {
        for (text, key) in [
            ("sovabench", DatasetKey::SovaBench),
            ("sova_bench", DatasetKey::SovaBench),
            ("visual7w_count", DatasetKey::Visual7wCount),
        ] {
            assert_eq!(serde_json::from_str::<DatasetKey>(&format!("\"{text}\"")).unwrap(), key);
            assert_eq!(text.parse::<DatasetKey>().unwrap(), key);
        }
        assert_eq!(serde_json::to_string(&DatasetKey::SovaBench).unwrap(), "\"sovabench\"");
    }

    #[test]
    fn count_prompt_is_verbatim() {
        let p = resolve_prompt(DatasetKey::CountBench, Strategy::TaskAware, MediaKind::Image, None).unwrap();
        assert_eq!(
            p.instruction,
            "Describe the image in a short caption that accurately states the number of main objects (in words) and includes a brief descriptive phrase."
        );
        assert_eq!(p.system_prompt, None);
    }

    #[test]
    fn general_depends_only_on_kind() {
        for key in [DatasetKey::SovaBench, DatasetKey::Vsr, DatasetKey::Custom] {
            let v = resolve_prompt(key, Strategy::General, MediaKind::Video, None).unwrap();
            assert_eq!(v.instruction, "Describe the video");
            let i = resolve_prompt(key, Strategy::General, MediaKind::Image, None).unwrap();
            assert_eq!(i.instruction, "Describe the image");
        }
    }

    #[test]
    fn custom_passes_through_or_errors() {
        let p =
            resolve_prompt(DatasetKey::Custom, Strategy::TaskAware, MediaKind::Image, Some("List colors.")).unwrap();
        assert_eq!(p.instruction, "List colors.");
        assert!(matches!(
            resolve_prompt(DatasetKey::Custom, Strategy::TaskAware, MediaKind::Image, None),
            Err(DescribeError::MissingInstruction)
        ));
    }

    #[test]
    fn action_prompt_carries_system_message() {
        let p = resolve_prompt(DatasetKey::SovaBench, Strategy::TaskAware, MediaKind::Video, None).unwrap();
        assert_eq!(p.instruction, "Briefly classify the actions occurring in this video.");
        assert!(p.system_prompt.as_deref().unwrap().starts_with("You are an expert video analysis model"));
    }

    #[test]
    fn action_prompt_names_no_class() {
        let p = resolve_prompt(DatasetKey::SovaBench, Strategy::TaskAware, MediaKind::Video, None).unwrap();
        let text = format!("{} {}", p.instruction, p.system_prompt.unwrap()).to_lowercase();
        for a in Action::ALL {
            for name in [a.display_name().to_lowercase(), a.as_str().replace('_', " ")] {
                assert!(!text.contains(&name), "prompt mentions `{name}`");
            }
        }
    }

    #[test]
    fn fingerprint_tracks_model_visible_text() {
        let a = resolve_prompt(DatasetKey::Vsr, Strategy::TaskAware, MediaKind::Image, None).unwrap();
        let b = resolve_prompt(DatasetKey::WhatsUp, Strategy::TaskAware, MediaKind::Image, None).unwrap();
        let c = resolve_prompt(DatasetKey::SovaBench, Strategy::TaskAware, MediaKind::Video, None).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn parses_names() {
        assert_eq!("visual7w-count".parse::<DatasetKey>().unwrap(), DatasetKey::Visual7wCount);
        assert_eq!("What's Up".parse::<DatasetKey>().unwrap(), DatasetKey::WhatsUp);
        assert_eq!("task-aware".parse::<Strategy>().unwrap(), Strategy::TaskAware);
    }
}
