//! Composition of the single input stream: token, position, segment and
//! visual embeddings.
//!
//! Canonical layout of one masked-prediction input:
//!
//! ```text
//! [SPEC] src_1 … src_m [SEP] y_1 … y_{t-1} [MASK] [SEP] roi_1 … roi_k
//! └──────── SRC ────────┘ └──────── TGT ─────────┘ └──── VIS ────┘
//! ```
//!
//! Source and its separator are absent for image-only inputs; regions are
//! absent for text-only inputs. Positions run `0..len` across the whole
//! stream, regions included. When the input carries an image, the projected
//! full-image feature is added at every non-visual position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::tasks::Modality;
use crate::transformer::{Bound, ModelConfig, LN_EPS};
use crate::vocab::{TokenId, IMG, MASK, SEP, STOP};

/// Segment ids.
pub const SEG_SRC: usize = 0;
pub const SEG_TGT: usize = 1;
pub const SEG_VIS: usize = 2;

/// One detected region: feature vector plus pixel bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFeature {
    #[serde(rename = "feat")]
    pub feature: Vec<f64>,
    /// `[x1, y1, x2, y2]` in pixels.
    pub bbox: [f64; 4],
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl RegionFeature {
    pub fn full_image(feature: Vec<f64>, width: f64, height: f64) -> Self {
        Self {
            feature,
            bbox: [0.0, 0.0, width, height],
            width,
            height,
            confidence: 1.0,
        }
    }

    pub fn is_full_image(&self) -> bool {
        self.bbox == [0.0, 0.0, self.width, self.height]
    }

    pub fn validate(&self, d_visual: usize) -> Result<()> {
        let [x1, y1, x2, y2] = self.bbox;
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::invalid(format!(
                "degenerate bounding box {:?}",
                self.bbox
            )));
        }
        if !(0.0 <= x1 && x2 <= self.width && 0.0 <= y1 && y2 <= self.height) {
            return Err(Error::invalid(format!(
                "bounding box {:?} outside {}x{} image",
                self.bbox, self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "confidence {} outside [0,1]",
                self.confidence
            )));
        }
        if self.feature.len() != d_visual {
            return Err(Error::ShapeMismatch {
                op: "region feature",
                lhs: vec![self.feature.len()],
                rhs: vec![d_visual],
            });
        }
        if !self.feature.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("region feature".into()));
        }
        Ok(())
    }

    /// `(x1/W, y1/H, x2/W, y2/H)`.
    pub fn normalized_box(&self) -> [f64; 4] {
        let [x1, y1, x2, y2] = self.bbox;
        [
            x1 / self.width,
            y1 / self.height,
            x2 / self.width,
            y2 / self.height,
        ]
    }
}

/// Visual side of an input: the full-image feature and the selected regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub full: RegionFeature,
    pub regions: Vec<RegionFeature>,
}

impl ImageFeatures {
    /// Splits a flat region list: the first full-image box becomes the
    /// full-image feature, the rest stay regions. A list holding only the
    /// full-image box uses it for both roles.
    pub fn from_regions(mut all: Vec<RegionFeature>) -> Result<Self> {
        let idx = all
            .iter()
            .position(RegionFeature::is_full_image)
            .ok_or_else(|| {
                Error::invalid("region list has no full-image entry (bbox = [0,0,w,h])")
            })?;
        let full = all.remove(idx);
        let regions = if all.is_empty() {
            vec![full.clone()]
        } else {
            all
        };
        Ok(Self { full, regions })
    }

    /// Flat list with the full-image entry first.
    pub fn to_regions(&self) -> Vec<RegionFeature> {
        let mut out = vec![self.full.clone()];
        if !(self.regions.len() == 1 && self.regions[0] == self.full) {
            out.extend(self.regions.iter().cloned());
        }
        out
    }

    pub fn validate(&self, d_visual: usize) -> Result<()> {
        self.full.validate(d_visual)?;
        if self.regions.is_empty() {
            return Err(Error::Empty("image regions"));
        }
        self.regions.iter().try_for_each(|r| r.validate(d_visual))
    }
}

/// Result of [`select_regions`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSelection {
    pub regions: Vec<RegionFeature>,
    /// Fewer than `k_min` regions were available; all were kept.
    pub under_minimum: bool,
}

/// Keeps the `k_max` most confident regions (stable for ties).
pub fn select_regions(
    regions: &[RegionFeature],
    k_min: usize,
    k_max: usize,
) -> Result<RegionSelection> {
    if regions.is_empty() {
        return Err(Error::Empty("region list"));
    }
    if k_min > k_max || k_max == 0 {
        return Err(Error::invalid(format!(
            "bad region bounds [{k_min}, {k_max}]"
        )));
    }
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| regions[b].confidence.total_cmp(&regions[a].confidence));
    order.truncate(k_max);
    Ok(RegionSelection {
        regions: order.iter().map(|&i| regions[i].clone()).collect(),
        under_minimum: regions.len() < k_min,
    })
}

/// Everything an input is conditioned on besides the target prefix.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub modality: Modality,
    /// Target-language specifier token.
    pub specifier: TokenId,
    pub source: Option<&'a [TokenId]>,
    pub image: Option<&'a ImageFeatures>,
}

/// Token-level layout of a composed input, independent of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLayout {
    /// Token ids of the non-visual positions (including `[MASK]`).
    pub tokens: Vec<TokenId>,
    pub segments: Vec<usize>,
    pub positions: Vec<usize>,
    pub mask_index: usize,
    /// Number of region rows following the text rows.
    pub visual_rows: usize,
}

impl InputLayout {
    pub fn len(&self) -> usize {
        self.tokens.len() + self.visual_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn text_rows(&self) -> usize {
        self.tokens.len()
    }
}

/// Builds the layout for predicting the token after `prefix`.
///
/// Parts not used by the modality are ignored; parts it requires must be
/// present.
pub fn compose_layout(cond: &Conditioning<'_>, prefix: &[TokenId]) -> Result<InputLayout> {
    if prefix.iter().any(|&t| t == MASK || t == STOP) {
        return Err(Error::invalid("target prefix contains [MASK] or [STOP]"));
    }
    let source = if cond.modality.uses_source() {
        Some(cond.source.ok_or_else(|| {
            Error::Modality(format!("{} input without a source sentence", cond.modality))
        })?)
    } else {
        None
    };
    let image =
        if cond.modality.uses_image() {
            Some(cond.image.ok_or_else(|| {
                Error::Modality(format!("{} input without an image", cond.modality))
            })?)
        } else {
            None
        };
    if let Some(src) = source {
        if src.contains(&MASK) {
            return Err(Error::invalid("source contains [MASK]"));
        }
    }

    let mut tokens = vec![cond.specifier];
    let mut segments = vec![SEG_SRC];
    if let Some(src) = source {
        tokens.extend_from_slice(src);
        tokens.push(SEP);
        segments.resize(tokens.len(), SEG_SRC);
    }
    tokens.extend_from_slice(prefix);
    let mask_index = tokens.len();
    tokens.push(MASK);
    tokens.push(SEP);
    segments.resize(tokens.len(), SEG_TGT);
    let visual_rows = image.map_or(0, |img| img.regions.len());
    segments.resize(tokens.len() + visual_rows, SEG_VIS);
    let positions = (0..tokens.len() + visual_rows).collect();
    Ok(InputLayout {
        tokens,
        segments,
        positions,
        mask_index,
        visual_rows,
    })
}

/// A composed input: its layout plus the `[len, d_model]` embedding matrix on
/// the tape.
#[derive(Debug, Clone)]
pub struct ComposedInput {
    pub layout: InputLayout,
    pub embeddings: Var,
}

/// Token-table lookup.
pub fn embed_tokens(tape: &mut Tape<'_>, table: Var, ids: &[TokenId]) -> Result<Var> {
    tape.gather(table, ids)
}

/// Rows `0..length` of the learned position table.
pub fn embed_positions(tape: &mut Tape<'_>, table: Var, length: usize) -> Result<Var> {
    let max = tape.value(table).rows();
    if length > max {
        return Err(Error::invalid(format!(
            "sequence length {length} exceeds the {max} learned positions"
        )));
    }
    let ids: Vec<usize> = (0..length).collect();
    tape.gather(table, &ids)
}

/// Linear projection of the normalized box, outside any tape.
pub fn geometric_embedding(region: &RegionFeature, projection: &Tensor) -> Result<Vec<f64>> {
    let [x1, y1, x2, y2] = region.bbox;
    if !(x1 < x2 && y1 < y2) {
        return Err(Error::invalid(format!(
            "degenerate bounding box {:?}",
            region.bbox
        )));
    }
    if projection.rows() != 4 {
        return Err(Error::ShapeMismatch {
            op: "geometric_embedding",
            lhs: vec![1, 4],
            rhs: projection.shape().to_vec(),
        });
    }
    let b = region.normalized_box();
    let d = projection.cols();
    Ok((0..d)
        .map(|c| (0..4).map(|r| b[r] * projection.get(r, c)).sum())
        .collect())
}

/// Per region: `feature·W + b + box·G`, in input order.
pub fn embed_regions(
    tape: &mut Tape<'_>,
    regions: &[RegionFeature],
    feat_w: Var,
    feat_b: Var,
    geo_w: Var,
) -> Result<Var> {
    let first = regions.first().ok_or(Error::Empty("regions"))?;
    let d_v = first.feature.len();
    let mut feats = Vec::with_capacity(regions.len() * d_v);
    let mut boxes = Vec::with_capacity(regions.len() * 4);
    for r in regions {
        if r.feature.len() != d_v {
            return Err(Error::ShapeMismatch {
                op: "embed_regions",
                lhs: vec![d_v],
                rhs: vec![r.feature.len()],
            });
        }
        let [x1, y1, x2, y2] = r.bbox;
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::invalid(format!(
                "degenerate bounding box {:?}",
                r.bbox
            )));
        }
        feats.extend_from_slice(&r.feature);
        boxes.extend_from_slice(&r.normalized_box());
    }
    let feats = tape.constant(Tensor::matrix(regions.len(), d_v, feats)?);
    let boxes = tape.constant(Tensor::matrix(regions.len(), 4, boxes)?);
    let fp = tape.linear(feats, feat_w, Some(feat_b))?;
    let gp = tape.matmul(boxes, geo_w)?;
    tape.add(fp, gp)
}

/// Embeds a layout: token/visual part + position + segment, the full-image
/// addend on text rows when an image is used, then layer norm.
pub fn embed_layout(
    tape: &mut Tape<'_>,
    bound: &Bound,
    config: &ModelConfig,
    cond: &Conditioning<'_>,
    layout: InputLayout,
) -> Result<ComposedInput> {
    let mut text = embed_tokens(tape, bound.token, &layout.tokens)?;
    let image = if cond.modality.uses_image() {
        cond.image
    } else {
        None
    };
    let mut x = match image {
        Some(img) => {
            let full = tape.constant(Tensor::matrix(
                1,
                img.full.feature.len(),
                img.full.feature.clone(),
            )?);
            let full = tape.linear(full, bound.vis_w, Some(bound.vis_b))?;
            let repeated = tape.gather(full, &vec![0; layout.text_rows()])?;
            text = tape.add(text, repeated)?;
            let mut vis = embed_regions(tape, &img.regions, bound.vis_w, bound.vis_b, bound.geo_w)?;
            if config.region_token {
                let img_tok = embed_tokens(tape, bound.token, &vec![IMG; img.regions.len()])?;
                vis = tape.add(vis, img_tok)?;
            }
            tape.concat_rows(&[text, vis])?
        }
        None => text,
    };
    let pos = embed_positions(tape, bound.position, layout.len())?;
    let seg = tape.gather(bound.segment, &layout.segments)?;
    x = tape.add(x, pos)?;
    x = tape.add(x, seg)?;
    let embeddings = tape.layer_norm(x, bound.emb_gain, bound.emb_bias, LN_EPS)?;
    Ok(ComposedInput { layout, embeddings })
}

/// [`compose_layout`] followed by [`embed_layout`].
pub fn compose_input(
    tape: &mut Tape<'_>,
    bound: &Bound,
    config: &ModelConfig,
    cond: &Conditioning<'_>,
    prefix: &[TokenId],
) -> Result<ComposedInput> {
    let layout = compose_layout(cond, prefix)?;
    embed_layout(tape, bound, config, cond, layout)
}
