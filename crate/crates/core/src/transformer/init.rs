//! Hybrid initialization from a text-side and a visual-side checkpoint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::params::{group_of, ModelConfig, ParamGroup, Parameters};
use crate::error::{Error, Result};

/// Where an initialized tensor came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferSource {
    /// Copied from the text-side checkpoint with this label.
    Text(String),
    /// Copied from the visual-side checkpoint with this label.
    Visual(String),
    /// Seeded random draw.
    Random { seed: u64 },
}

/// Name → source for every tensor of the new model.
pub type TransferManifest = BTreeMap<String, TransferSource>;

/// A pretrained checkpoint offered for transfer, with a label recorded in
/// the manifest (typically its file path).
#[derive(Debug, Clone, Copy)]
pub struct Donor<'a> {
    pub model: &'a Model,
    pub label: &'a str,
}

/// Which initialization variant a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Random,
    VisualOnly,
    Hybrid,
}

impl InitMode {
    pub const ALL: [InitMode; 3] = [InitMode::Random, InitMode::VisualOnly, InitMode::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::VisualOnly => "visual_only",
            InitMode::Hybrid => "hybrid",
        }
    }
}

/// Seeded random parameters with text-group tensors (token embeddings,
/// transformer stack, MLM head) copied from `text` and visual-group tensors
/// (feature and box projections) copied from `visual`. Position and segment
/// embeddings are always drawn fresh. Passing only `visual` gives the
/// visual-only variant; passing neither is plain random init.
pub fn init_hybrid(
    config: &ModelConfig,
    text: Option<Donor<'_>>,
    visual: Option<Donor<'_>>,
) -> Result<(Model, TransferManifest)> {
    let mut model = Model::init_random(config.clone())?;
    let mut manifest = TransferManifest::new();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        let donor = match group_of(&name) {
            ParamGroup::Text => text.map(|d| (d, TransferSource::Text(d.label.to_string()))),
            ParamGroup::Visual => visual.map(|d| (d, TransferSource::Visual(d.label.to_string()))),
            ParamGroup::Fresh => None,
        };
        let source = match donor {
            Some((d, source)) => {
                let src = d.model.params.get(&name).ok_or_else(|| {
                    Error::Checkpoint(format!("donor `{}` has no tensor `{name}`", d.label))
                })?;
                let dst = model.params.get_mut(&name).expect("own tensor");
                if src.shape() != dst.shape() {
                    return Err(Error::TensorShapeConflict {
                        name,
                        expected: dst.shape().to_vec(),
                        found: src.shape().to_vec(),
                    });
                }
                *dst = src.detached();
                source
            }
            None => TransferSource::Random { seed: config.seed },
        };
        manifest.insert(name, source);
    }
    Ok((model, manifest))
}

/// Dispatches on [`InitMode`].
pub fn init_for_mode(
    mode: InitMode,
    config: &ModelConfig,
    text: Option<Donor<'_>>,
    visual: Option<Donor<'_>>,
) -> Result<(Model, TransferManifest)> {
    fn need<'d>(mode: InitMode, d: Option<Donor<'d>>, what: &str) -> Result<Donor<'d>> {
        d.ok_or_else(|| {
            Error::Config(format!(
                "{} initialization needs a {what} checkpoint",
                mode.name()
            ))
        })
    }
    match mode {
        InitMode::Random => init_hybrid(config, None, None),
        InitMode::VisualOnly => init_hybrid(config, None, Some(need(mode, visual, "visual")?)),
        InitMode::Hybrid => init_hybrid(
            config,
            Some(need(mode, text, "text")?),
            Some(need(mode, visual, "visual")?),
        ),
    }
}

impl Parameters {
    /// Names grouped by transfer group.
    pub fn grouped_names(&self) -> BTreeMap<&'static str, Vec<String>> {
        let mut out: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
        for name in self.names() {
            let key = match group_of(name) {
                ParamGroup::Text => "text",
                ParamGroup::Visual => "visual",
                ParamGroup::Fresh => "fresh",
            };
            out.entry(key).or_default().push(name.to_string());
        }
        out
    }
}
