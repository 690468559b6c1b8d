//! JSON-lines corpus files: one `{"task","src","tgt","regions"}` object per
//! line. The full-image feature is the region whose box is `[0,0,w,h]`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Sample;
use crate::embeddings::{ImageFeatures, RegionFeature};
use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, STOP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub task: String,
    #[serde(default)]
    pub src: Option<String>,
    /// May be empty in decoding inputs.
    #[serde(default)]
    pub tgt: String,
    #[serde(default)]
    pub regions: Option<Vec<RegionFeature>>,
}

impl CorpusRecord {
    /// Encodes the record; the target gets `[STOP]` appended.
    pub fn to_sample(&self, vocab: &Vocabulary) -> Result<Sample> {
        let mut target = vocab.encode(&self.tgt);
        if target.is_empty() {
            return Err(Error::Empty("target sentence"));
        }
        target.push(STOP);
        let image = match &self.regions {
            Some(r) => Some(ImageFeatures::from_regions(r.clone())?),
            None => None,
        };
        Ok(Sample {
            source: self.src.as_deref().map(|s| vocab.encode(s)),
            image,
            target,
        })
    }

    pub fn image(&self) -> Result<Option<ImageFeatures>> {
        self.regions
            .clone()
            .map(ImageFeatures::from_regions)
            .transpose()
    }
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
            what: "corpus".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
