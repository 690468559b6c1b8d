//! Synthetic corpora: word-cipher translation, attribute-grammar captioning
//! and their combination, where part of the target depends on the image.
//!
//! Region features one-hot encode each attribute value inside the
//! attribute's own sub-range of the feature vector, plus uniform noise in
//! `[-noise, noise]` on every dimension. The first region is the described
//! object; the remaining ones are noise-only distractors with lower
//! confidence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_corpus, CorpusRecord, Modality, Task, TaskSet, TaskSpec};
use crate::embeddings::RegionFeature;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// A word-by-word map between two languages.
#[derive(Debug, Clone, PartialEq)]
pub struct Cipher {
    pub source_lang: String,
    pub target_lang: String,
    map: HashMap<String, String>,
    source_words: Vec<String>,
    /// Emit the mapped words in reverse order.
    pub reverse: bool,
}

impl Cipher {
    /// Pairs `source[i]` with `target[i]`; both sides must be duplicate-free
    /// and of equal length so the map is a bijection.
    pub fn new(
        source_lang: &str,
        target_lang: &str,
        source: &[String],
        target: &[String],
        reverse: bool,
    ) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Empty("cipher lexicon"));
        }
        if source.len() != target.len() {
            return Err(Error::Config(format!(
                "cipher {source_lang}->{target_lang} is not bijective: {} source words, {} target words",
                source.len(),
                target.len()
            )));
        }
        for (lang, side) in [(source_lang, source), (target_lang, target)] {
            let mut seen = BTreeSet::new();
            if let Some(dup) = side.iter().find(|w| !seen.insert(w.as_str())) {
                return Err(Error::Config(format!(
                    "cipher {source_lang}->{target_lang} is not bijective: `{dup}` repeats in {lang}"
                )));
            }
            if let Some(bad) = side
                .iter()
                .find(|w| w.is_empty() || w.chars().any(char::is_whitespace))
            {
                return Err(Error::Config(format!(
                    "cipher word `{bad}` is empty or has whitespace"
                )));
            }
        }
        Ok(Self {
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            map: source.iter().cloned().zip(target.iter().cloned()).collect(),
            source_words: source.to_vec(),
            reverse,
        })
    }

    /// Maps every source word in `source.len()` order, reversed if set.
    pub fn translate<S: AsRef<str>>(&self, source: &[S]) -> Result<Vec<String>> {
        let mut out = source
            .iter()
            .map(|w| {
                self.map
                    .get(w.as_ref())
                    .cloned()
                    .ok_or_else(|| Error::UnknownToken(w.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.reverse {
            out.reverse();
        }
        Ok(out)
    }

    pub fn source_words(&self) -> &[String] {
        &self.source_words
    }

    fn sentence(&self, rng: &mut ChaCha8Rng, lengths: (usize, usize)) -> Vec<String> {
        let n = rng.random_range(lengths.0..=lengths.1);
        (0..n)
            .map(|_| {
                self.source_words
                    .choose(rng)
                    .expect("non-empty lexicon")
                    .clone()
            })
            .collect()
    }
}

fn check_lengths(lengths: (usize, usize)) -> Result<()> {
    if lengths.0 == 0 || lengths.0 > lengths.1 {
        return Err(Error::Config(format!(
            "invalid sentence lengths {lengths:?}"
        )));
    }
    Ok(())
}

/// `size` random source sentences and their cipher images.
pub fn synth_translation_corpus(
    task: &str,
    cipher: &Cipher,
    size: usize,
    lengths: (usize, usize),
    seed: u64,
) -> Result<Vec<CorpusRecord>> {
    if size == 0 {
        return Err(Error::Empty("corpus size"));
    }
    check_lengths(lengths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let src = cipher.sentence(&mut rng, lengths);
            let tgt = cipher.translate(&src)?;
            Ok(CorpusRecord {
                task: task.to_string(),
                src: Some(src.join(" ")),
                tgt: tgt.join(" "),
                regions: None,
            })
        })
        .collect()
}

/// One attribute slot: its values' surface words per language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribute {
    pub name: String,
    pub words: BTreeMap<String, Vec<String>>,
}

impl Attribute {
    pub fn arity(&self) -> usize {
        self.words.values().next().map_or(0, Vec::len)
    }
}

/// Attribute grammar plus rendering parameters for synthetic images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageGrammar {
    pub d_visual: usize,
    pub attributes: Vec<Attribute>,
    /// Uniform noise amplitude added to every feature dimension.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Regions per image, the described object included.
    #[serde(default = "default_regions")]
    pub regions: usize,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

fn default_noise() -> f64 {
    0.05
}
fn default_regions() -> usize {
    3
}
fn default_width() -> f64 {
    640.0
}
fn default_height() -> f64 {
    480.0
}

impl ImageGrammar {
    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Config("image grammar has no attributes".into()));
        }
        let width: usize = self.attributes.iter().map(Attribute::arity).sum();
        if width > self.d_visual {
            return Err(Error::Config(format!(
                "attribute slots need {width} feature dimensions, d_visual is {}",
                self.d_visual
            )));
        }
        for a in &self.attributes {
            if a.arity() == 0 || a.words.values().any(|w| w.len() != a.arity()) {
                return Err(Error::Config(format!(
                    "attribute `{}` needs the same non-zero number of words in every language",
                    a.name
                )));
            }
        }
        if !(self.noise >= 0.0 && self.noise < 0.5) {
            return Err(Error::Config(format!(
                "noise {} outside [0, 0.5)",
                self.noise
            )));
        }
        if self.regions == 0 || !(self.width >= 4.0 && self.height >= 4.0) {
            return Err(Error::Config(
                "need at least one region and an image of at least 4x4".into(),
            ));
        }
        Ok(())
    }

    /// First feature dimension of each attribute's sub-range.
    pub fn offsets(&self) -> Vec<usize> {
        self.attributes
            .iter()
            .scan(0, |acc, a| {
                let start = *acc;
                *acc += a.arity();
                Some(start)
            })
            .collect()
    }

    fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Config(format!("unknown attribute `{name}`")))
    }

    pub fn sample_attributes(&self, rng: &mut impl Rng) -> Vec<usize> {
        self.attributes
            .iter()
            .map(|a| rng.random_range(0..a.arity()))
            .collect()
    }

    /// Words for `values` in `lang`, in grammar order.
    pub fn render(&self, values: &[usize], lang: &str) -> Result<Vec<String>> {
        self.attributes
            .iter()
            .zip(values)
            .map(|(a, &v)| {
                let words = a.words.get(lang).ok_or_else(|| {
                    Error::Config(format!("attribute `{}` has no `{lang}` words", a.name))
                })?;
                Ok(words[v].clone())
            })
            .collect()
    }

    fn noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.d_visual)
            .map(|_| {
                if self.noise > 0.0 {
                    rng.random_range(-self.noise..=self.noise)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn encode(&self, values: &[usize], rng: &mut impl Rng) -> Vec<f64> {
        let mut f = self.noise(rng);
        for (off, &v) in self.offsets().iter().zip(values) {
            f[off + v] += 1.0;
        }
        f
    }

    fn random_box(&self, rng: &mut impl Rng) -> [f64; 4] {
        let x1 = rng.random_range(0.0..self.width * 0.5).floor();
        let y1 = rng.random_range(0.0..self.height * 0.5).floor();
        let x2 = (x1 + rng.random_range(self.width * 0.1..self.width * 0.5))
            .min(self.width)
            .ceil();
        let y2 = (y1 + rng.random_range(self.height * 0.1..self.height * 0.5))
            .min(self.height)
            .ceil();
        [x1, y1, x2.min(self.width), y2.min(self.height)]
    }

    /// Full-image entry followed by the object region and distractors.
    pub fn draw_image(&self, values: &[usize], rng: &mut impl Rng) -> Vec<RegionFeature> {
        let mut out = vec![RegionFeature::full_image(
            self.encode(values, rng),
            self.width,
            self.height,
        )];
        out.push(RegionFeature {
            feature: self.encode(values, rng),
            bbox: self.random_box(rng),
            width: self.width,
            height: self.height,
            confidence: rng.random_range(0.8..=1.0),
        });
        for _ in 1..self.regions {
            out.push(RegionFeature {
                feature: self.noise(rng),
                bbox: self.random_box(rng),
                width: self.width,
                height: self.height,
                confidence: rng.random_range(0.1..0.7),
            });
        }
        out
    }
}

/// A generated captioning item with the attribute values it renders.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionItem {
    pub attributes: Vec<usize>,
    pub record: CorpusRecord,
}

/// `size` images with captions rendering their attributes in `lang`.
pub fn synth_captioning_corpus(
    task: &str,
    grammar: &ImageGrammar,
    lang: &str,
    size: usize,
    seed: u64,
) -> Result<Vec<CaptionItem>> {
    grammar.validate()?;
    if size == 0 {
        return Err(Error::Empty("corpus size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let attributes = grammar.sample_attributes(&mut rng);
            let caption = grammar.render(&attributes, lang)?;
            let regions = grammar.draw_image(&attributes, &mut rng);
            Ok(CaptionItem {
                attributes,
                record: CorpusRecord {
                    task: task.to_string(),
                    src: None,
                    tgt: caption.join(" "),
                    regions: Some(regions),
                },
            })
        })
        .collect()
}

/// Translation pairs with an image whose `attributes` are rendered in the
/// target language after the translated words, so the image is needed to
/// complete the target.
pub fn synth_multimodal_corpus(
    task: &str,
    cipher: &Cipher,
    grammar: &ImageGrammar,
    attributes: &[String],
    size: usize,
    lengths: (usize, usize),
    seed: u64,
) -> Result<Vec<CaptionItem>> {
    grammar.validate()?;
    if size == 0 {
        return Err(Error::Empty("corpus size"));
    }
    if attributes.is_empty() {
        return Err(Error::Config(
            "multimodal task needs at least one image attribute".into(),
        ));
    }
    check_lengths(lengths)?;
    let slots = attributes
        .iter()
        .map(|a| grammar.attribute_index(a))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| {
            let src = cipher.sentence(&mut rng, lengths);
            let values = grammar.sample_attributes(&mut rng);
            let rendered = grammar.render(&values, &cipher.target_lang)?;
            let mut tgt = cipher.translate(&src)?;
            tgt.extend(slots.iter().map(|&s| rendered[s].clone()));
            let regions = grammar.draw_image(&values, &mut rng);
            Ok(CaptionItem {
                attributes: values,
                record: CorpusRecord {
                    task: task.to_string(),
                    src: Some(src.join(" ")),
                    tgt: tgt.join(" "),
                    regions: Some(regions),
                },
            })
        })
        .collect()
}

/// A language and its lexicon. Lexicons are aligned by index: word `i` of
/// every language denotes the same concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub code: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Translation,
    Captioning,
    Multimodal,
}

/// One corpus to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTask {
    pub name: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub source: Option<String>,
    pub target: String,
    pub size: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub reverse: bool,
    #[serde(default)]
    pub reference: bool,
    /// Image attributes appended to multimodal targets.
    #[serde(default)]
    pub attributes: Vec<String>,
}

fn default_min_len() -> usize {
    3
}
fn default_max_len() -> usize {
    5
}

impl SynthTask {
    pub fn modality(&self) -> Modality {
        match self.kind {
            TaskKind::Translation => Modality::TextToText,
            TaskKind::Captioning => Modality::ImageToText,
            TaskKind::Multimodal => Modality::ImageTextToText,
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            name: self.name.clone(),
            modality: self.modality(),
            source_lang: self.source.clone(),
            target_lang: self.target.clone(),
            corpus: format!("{}.jsonl", self.name).into(),
            reference: self.reference,
        }
    }
}

/// A full synthetic-data description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub languages: Vec<LanguageSpec>,
    #[serde(default)]
    pub image: Option<ImageGrammar>,
    pub tasks: Vec<SynthTask>,
}

/// Generated corpora, in task order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub corpora: Vec<(SynthTask, Vec<CorpusRecord>)>,
    /// Attribute values per record for image tasks, empty for translation.
    pub attributes: Vec<Vec<Vec<usize>>>,
}

/// Sentence and unrolled counts of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub task: String,
    pub sents: usize,
    pub augm: usize,
    pub ratio: f64,
}

impl CorpusStats {
    pub fn of(task: &Task) -> Self {
        let sents = task.samples.len();
        let augm = task.unrolled_count();
        Self {
            name: task.spec.name.clone(),
            kind: task.spec.modality.kind().to_string(),
            task: task.spec.direction().to_string(),
            sents,
            augm,
            ratio: augm as f64 / sents as f64,
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic data spec: {e}")))
    }

    pub fn language(&self, code: &str) -> Result<&LanguageSpec> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| Error::Config(format!("unknown language `{code}`")))
    }

    pub fn cipher(&self, source: &str, target: &str, reverse: bool) -> Result<Cipher> {
        Cipher::new(
            source,
            target,
            &self.language(source)?.words,
            &self.language(target)?.words,
            reverse,
        )
    }

    fn grammar(&self) -> Result<&ImageGrammar> {
        self.image
            .as_ref()
            .ok_or_else(|| Error::Config("image tasks need an [image] grammar".into()))
    }

    pub fn language_codes(&self) -> Vec<&str> {
        self.languages.iter().map(|l| l.code.as_str()).collect()
    }

    pub fn generate(&self) -> Result<SynthCorpus> {
        if self.tasks.is_empty() {
            return Err(Error::Empty("synthetic task list"));
        }
        let mut corpora = Vec::new();
        let mut attributes = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let seed = self.seed.wrapping_add(1_000_003 * (i as u64 + 1));
            let lengths = (t.min_len, t.max_len);
            let source = || {
                t.source.as_deref().ok_or_else(|| {
                    Error::Config(format!("task `{}` needs a source language", t.name))
                })
            };
            let (records, attrs) = match t.kind {
                TaskKind::Translation => {
                    let cipher = self.cipher(source()?, &t.target, t.reverse)?;
                    (
                        synth_translation_corpus(&t.name, &cipher, t.size, lengths, seed)?,
                        vec![],
                    )
                }
                TaskKind::Captioning => {
                    self.language(&t.target)?;
                    split_items(synth_captioning_corpus(
                        &t.name,
                        self.grammar()?,
                        &t.target,
                        t.size,
                        seed,
                    )?)
                }
                TaskKind::Multimodal => {
                    let cipher = self.cipher(source()?, &t.target, t.reverse)?;
                    split_items(synth_multimodal_corpus(
                        &t.name,
                        &cipher,
                        self.grammar()?,
                        &t.attributes,
                        t.size,
                        lengths,
                        seed,
                    )?)
                }
            };
            corpora.push((t.clone(), records));
            attributes.push(attrs);
        }
        Ok(SynthCorpus {
            spec: self.clone(),
            corpora,
            attributes,
        })
    }
}

fn split_items(items: Vec<CaptionItem>) -> (Vec<CorpusRecord>, Vec<Vec<usize>>) {
    items.into_iter().map(|i| (i.record, i.attributes)).unzip()
}

impl SynthCorpus {
    /// Vocabulary over every generated sentence, with specifiers for all
    /// declared languages.
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let text = self
            .corpora
            .iter()
            .flat_map(|(_, recs)| recs.iter())
            .flat_map(|r| {
                r.src
                    .as_deref()
                    .into_iter()
                    .chain(std::iter::once(r.tgt.as_str()))
            });
        Vocabulary::build(text, &self.spec.language_codes())
    }

    pub fn records(&self, name: &str) -> Result<&[CorpusRecord]> {
        self.corpora
            .iter()
            .find(|(t, _)| t.name == name)
            .map(|(_, r)| r.as_slice())
            .ok_or_else(|| Error::Config(format!("no generated task `{name}`")))
    }

    /// Every corpus encoded as a task, in generation order.
    pub fn tasks(&self, vocab: &Vocabulary) -> Result<Vec<Task>> {
        self.corpora
            .iter()
            .map(|(t, recs)| Task::from_records(t.task_spec(), vocab, recs))
            .collect()
    }

    /// Training registry over the named tasks with the last `heldout` lines
    /// of each split off for evaluation.
    pub fn split(
        &self,
        vocab: &Vocabulary,
        names: &[&str],
        heldout: usize,
    ) -> Result<(TaskSet, Vec<Task>)> {
        let (train, held) = self.split_tasks(vocab, names, heldout)?;
        Ok((TaskSet::new(train)?, held))
    }

    /// [`SynthCorpus::split`] with `reference` as the reference task.
    pub fn split_with_reference(
        &self,
        vocab: &Vocabulary,
        names: &[&str],
        reference: &str,
        heldout: usize,
    ) -> Result<(TaskSet, Vec<Task>)> {
        let (train, held) = self.split_tasks(vocab, names, heldout)?;
        Ok((TaskSet::with_reference(train, reference)?, held))
    }

    fn split_tasks(
        &self,
        vocab: &Vocabulary,
        names: &[&str],
        heldout: usize,
    ) -> Result<(Vec<Task>, Vec<Task>)> {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for name in names {
            let (t, _) = self
                .corpora
                .iter()
                .find(|(t, _)| t.name == *name)
                .ok_or_else(|| Error::Config(format!("no generated task `{name}`")))?;
            let task = Task::from_records(t.task_spec(), vocab, self.records(name)?)?;
            let (a, b) = task.split_heldout(heldout)?;
            train.push(a);
            held.push(b);
        }
        Ok((train, held))
    }

    /// Writes `<task>.jsonl` per task, `stats.csv` and `vocab.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<CorpusStats>> {
        std::fs::create_dir_all(dir)?;
        let vocab = self.vocabulary()?;
        let mut stats = Vec::new();
        for ((t, recs), task) in self.corpora.iter().zip(self.tasks(&vocab)?) {
            write_corpus(&dir.join(format!("{}.jsonl", t.name)), recs)?;
            stats.push(CorpusStats::of(&task));
        }
        let mut w = csv::Writer::from_path(dir.join("stats.csv"))?;
        for s in &stats {
            w.serialize(s)?;
        }
        w.flush()?;
        vocab.save(&dir.join("vocab.txt"))?;
        Ok(stats)
    }
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|w| w.to_string()).collect()
}

const EN: [&str; 12] = [
    "man", "woman", "child", "dog", "cat", "horse", "sees", "holds", "likes", "near", "under",
    "with",
];
const DE: [&str; 12] = [
    "mann", "frau", "kind", "hund", "katze", "pferd", "sieht", "haelt", "mag", "nahe", "unter",
    "mit",
];
const FR: [&str; 12] = [
    "homme", "femme", "enfant", "chien", "chat", "cheval", "voit", "tient", "aime", "pres", "sous",
    "avec",
];

fn attribute(name: &str, per_lang: &[(&str, &[&str])]) -> Attribute {
    Attribute {
        name: name.to_string(),
        words: per_lang
            .iter()
            .map(|(l, w)| (l.to_string(), words(w)))
            .collect(),
    }
}

/// Object attributes used by the demo image tasks, 10 feature dimensions.
pub fn demo_grammar(d_visual: usize) -> ImageGrammar {
    ImageGrammar {
        d_visual,
        attributes: vec![
            attribute(
                "size",
                &[("en", &["big", "small"]), ("de", &["gross", "klein"])],
            ),
            attribute(
                "color",
                &[
                    ("en", &["red", "blue", "green", "yellow"]),
                    ("de", &["rot", "blau", "gruen", "gelb"]),
                ],
            ),
            attribute(
                "shape",
                &[
                    ("en", &["circle", "square", "triangle", "star"]),
                    ("de", &["kreis", "quadrat", "dreieck", "stern"]),
                ],
            ),
        ],
        noise: default_noise(),
        regions: default_regions(),
        width: default_width(),
        height: default_height(),
    }
}

fn translation(name: &str, src: &str, tgt: &str, size: usize) -> SynthTask {
    SynthTask {
        name: name.to_string(),
        kind: TaskKind::Translation,
        source: Some(src.to_string()),
        target: tgt.to_string(),
        size,
        min_len: default_min_len(),
        max_len: default_max_len(),
        reverse: false,
        reference: false,
        attributes: vec![],
    }
}

impl SynthSpec {
    /// Three ciphers (EN→DE, DE→EN, EN→FR), captioning into English, and an
    /// EN→DE multimodal task whose last target word is the object's colour
    /// in German. The multimodal task is the reference.
    pub fn multitask_demo(size: usize, seed: u64) -> Self {
        let tasks = vec![
            translation("mt_en_de", "en", "de", size),
            translation("mt_de_en", "de", "en", size),
            translation("mt_en_fr", "en", "fr", size),
            SynthTask {
                kind: TaskKind::Captioning,
                source: None,
                ..translation("ic_en", "en", "en", size)
            },
            SynthTask {
                kind: TaskKind::Multimodal,
                reference: true,
                attributes: vec!["color".into()],
                ..translation("mmt_en_de", "en", "de", size)
            },
        ];
        Self {
            seed,
            languages: vec![
                LanguageSpec {
                    code: "en".into(),
                    words: words(&EN),
                },
                LanguageSpec {
                    code: "de".into(),
                    words: words(&DE),
                },
                LanguageSpec {
                    code: "fr".into(),
                    words: words(&FR),
                },
            ],
            image: Some(demo_grammar(16)),
            tasks,
        }
    }

    /// Sets the sentence-length range of every task.
    pub fn with_lengths(mut self, min_len: usize, max_len: usize) -> Self {
        for t in &mut self.tasks {
            t.min_len = min_len;
            t.max_len = max_len;
        }
        self
    }

    /// Ciphers A→B, B→A, A→C for training and B→C for zero-shot testing.
    /// The last `shared` concepts use the same surface form in every
    /// language (names), the rest are language-specific.
    pub fn zero_shot_demo(size: usize, shared: usize, seed: u64) -> Self {
        const NAMES: [&str; 8] = [
            "anna", "bruno", "clara", "dario", "elena", "felix", "greta", "hugo",
        ];
        let shared = shared.min(NAMES.len());
        let lang = |code: &str, own: &[&str]| {
            let mut w = words(own);
            w.extend(words(&NAMES[..shared]));
            LanguageSpec {
                code: code.into(),
                words: w,
            }
        };
        let mut ab = translation("mt_a_b", "a", "b", size);
        ab.reference = true;
        Self {
            seed,
            languages: vec![lang("a", &EN), lang("b", &DE), lang("c", &FR)],
            image: None,
            tasks: vec![
                ab,
                translation("mt_b_a", "b", "a", size),
                translation("mt_a_c", "a", "c", size),
                translation("mt_b_c", "b", "c", size),
            ],
        }
    }
}
