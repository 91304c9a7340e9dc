use std::path::Path;

use super::{ModelConfig, ModelError, PoolingKind};
use crate::data::{RelationType, Task};
use crate::embedding::Modality;
use crate::kv::{KvDocument, KvError, Section};

pub const PI_CONVENTION: &str = "equal=0,similar=1,subclass_of=2,superclass_of=3;pi swaps 2 and 3";
pub const VIDEO_BN_CHOICE: &str = "flattened-batch";

pub fn meta_section(config: &ModelConfig) -> Section {
    let mut s = Section::default();
    s.set("task", config.task);
    s.set("modality", config.modality);
    s.set("input_dim", config.input_dim);
    s.set("d_emb", config.d_emb);
    s.set("hidden_layers", config.hidden_layers);
    s.set("blocks", config.blocks());
    s.set("pooling", config.pooling.map_or("none", PoolingKind::name));
    s.set("d_att", config.d_att);
    s.set("classes", RelationType::ALL.map(RelationType::name).join(","));
    s.set("pi_convention", PI_CONVENTION);
    s.set("video_bn", VIDEO_BN_CHOICE);
    s
}

pub fn config_from_section(s: &Section) -> Result<ModelConfig, ModelError> {
    let value = |key: &str, e: String| KvError::Value { key: key.into(), value: s.get(key).unwrap_or("").into(), reason: e };
    let task: Task = s.require("task")?.parse().map_err(|e: crate::data::DataError| value("task", e.to_string()))?;
    let modality: Modality =
        s.require("modality")?.parse().map_err(|e: crate::embedding::EmbeddingError| value("modality", e.to_string()))?;
    let pooling = match s.require("pooling")? {
        "none" => None,
        p => Some(p.parse::<PoolingKind>().map_err(|e| value("pooling", e))?),
    };
    let config = ModelConfig {
        task,
        modality,
        input_dim: s.parse("input_dim")?.ok_or_else(|| KvError::Missing("input_dim".into()))?,
        d_emb: s.parse("d_emb")?.ok_or_else(|| KvError::Missing("d_emb".into()))?,
        hidden_layers: s.parse("hidden_layers")?.ok_or_else(|| KvError::Missing("hidden_layers".into()))?,
        pooling,
        d_att: s.parse_or("d_att", super::DEFAULT_D_ATT)?,
    };
    if let Some(pi) = s.get("pi_convention") {
        if pi != PI_CONVENTION {
            return Err(ModelError::Config(format!("unsupported class convention `{pi}`")));
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn write_meta(path: &Path, config: &ModelConfig) -> Result<(), ModelError> {
    let doc = KvDocument { root: meta_section(config), ..Default::default() };
    std::fs::write(path, doc.render()).map_err(|source| KvError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<ModelConfig, ModelError> {
    config_from_section(&KvDocument::read(path)?.root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.meta");
        let mut c = ModelConfig::new(Task::Classification, Modality::Video, 2304);
        c.pooling = Some(PoolingKind::Attention);
        c.hidden_layers = 3;
        write_meta(&path, &c).unwrap();
        assert_eq!(read_meta(&path).unwrap(), c);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("video_bn = flattened-batch"));
        let label = ModelConfig::new(Task::Detection, Modality::Label, 768);
        write_meta(&path, &label).unwrap();
        assert_eq!(read_meta(&path).unwrap(), label);
    }
}
