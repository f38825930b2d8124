use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ParserConfig, ParserModel};
use crate::error::{Error, Result};
use crate::lexical::CharVocab;
use crate::tensor::{ParamSet, Rng};
use crate::treebank::{LabelInventory, Vocabulary};

const MODEL_MAGIC: &str = "spanparse-model 1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ParserConfig,
    labels: LabelInventory,
    words: Vocabulary,
    chars: CharVocab,
    tags: Vocabulary,
    #[serde(default)]
    updates: u64,
}

/// Writes the model: a magic line, a JSON line with the configuration,
/// inventory and vocabularies, then the parameter container.
pub fn write_model<W: Write>(model: &ParserModel, mut w: W) -> std::io::Result<()> {
    let header = Header {
        config: model.config,
        labels: model.labels.clone(),
        words: model.lexicon.words.clone(),
        chars: model.lexicon.chars.clone(),
        tags: model.lexicon.tags.clone(),
        updates: model.updates,
    };
    writeln!(w, "{MODEL_MAGIC}")?;
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    model.params.write_to(&mut w)?;
    w.flush()
}

/// Reads a model written by [`write_model`]. The architecture is rebuilt from
/// the header and every parameter is then filled by name.
pub fn read_model<R: BufRead>(mut r: R) -> Result<ParserModel> {
    let mut line = String::new();
    r.read_line(&mut line)
        .map_err(|e| Error::serialization("magic", e.to_string()))?;
    if line.trim_end() != MODEL_MAGIC {
        return Err(Error::serialization("magic", format!("not a model file (header {:?})", line.trim_end())));
    }
    line.clear();
    r.read_line(&mut line)
        .map_err(|e| Error::serialization("header", e.to_string()))?;
    let header: Header = serde_json::from_str(&line).map_err(|e| Error::serialization("header", e.to_string()))?;
    let updates = header.updates;
    let stored = ParamSet::read_from(r)?;
    let mut model = ParserModel::new(
        header.config,
        header.labels,
        header.words,
        header.chars,
        header.tags,
        &mut Rng::new(0),
    )
    .map_err(|e| Error::serialization("config", e.to_string()))?;
    if stored.len() != model.params.len() {
        let extra = stored.iter().find(|p| model.params.id(p.name()).is_none());
        if let Some(p) = extra {
            return Err(Error::serialization(p.name(), "parameter not used by this configuration"));
        }
    }
    for id in model.params.ids().collect::<Vec<_>>() {
        let name = model.params.get(id).name().to_string();
        let value = stored
            .id(&name)
            .map(|s| stored.value(s))
            .ok_or_else(|| Error::serialization(name.clone(), "missing parameter"))?;
        if value.shape() != model.params.value(id).shape() {
            return Err(Error::serialization(
                name,
                format!("shape {:?}, expected {:?}", value.shape(), model.params.value(id).shape()),
            ));
        }
        *model.params.value_mut(id) = value.clone();
    }
    model.updates = updates;
    Ok(model)
}

/// Saves to `path` through a temporary file renamed into place.
pub fn save(model: &ParserModel, path: &Path) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile_in(dir, path)?;
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        write_model(model, BufWriter::new(file)).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn tempfile_in(dir: &Path, path: &Path) -> Result<std::path::PathBuf> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    Ok(dir.join(tmp_name))
}

pub fn load(path: &Path) -> Result<ParserModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
