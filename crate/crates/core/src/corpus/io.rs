use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use super::{Corpus, Dialogue, KbAttribute, KbRecord, Speaker, Turn};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Stanford multi-domain dialogue JSON (driver/assistant turns, KB items).
    Smd,
    /// MetaLWOz JSON lines: one dialogue per line, bot speaks first.
    MetaLwoz,
    /// The canonical schema written by `save_normalized`.
    Normalized,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smd" | "smd_json" => Ok(CorpusFormat::Smd),
            "metalwoz" | "metalwoz_json" => Ok(CorpusFormat::MetaLwoz),
            "normalized" | "normalized_json" | "json" => Ok(CorpusFormat::Normalized),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let corpus = match format {
        CorpusFormat::Normalized => load_normalized(path)?,
        CorpusFormat::Smd => Corpus::new(name, load_smd(path)?),
        CorpusFormat::MetaLwoz => {
            let mut dialogues = Vec::new();
            for file in metalwoz_files(path)? {
                dialogues.extend(load_metalwoz_file(&file)?);
            }
            Corpus::new(name, dialogues)
        }
    };
    validate(path, &corpus)?;
    Ok(corpus)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn validate(path: &Path, corpus: &Corpus) -> Result<()> {
    for (i, d) in corpus.dialogues.iter().enumerate() {
        let schema = |message: &str| Error::Schema {
            path: path.to_path_buf(),
            locus: format!("dialogue {i} ({})", d.id),
            message: message.to_string(),
        };
        if d.domain.is_empty() {
            return Err(schema("empty domain"));
        }
        if d.kb.iter().flat_map(|r| &r.attributes).any(|a| a.key.is_empty()) {
            return Err(schema("empty KB key"));
        }
    }
    Ok(())
}

fn load_normalized(path: &Path) -> Result<Corpus> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| {
        let locus = format!("line {} column {}", e.line(), e.column());
        if e.is_data() {
            Error::Schema {
                path: path.to_path_buf(),
                locus,
                message: e.to_string(),
            }
        } else {
            Error::Parse {
                path: path.to_path_buf(),
                locus,
                message: e.to_string(),
            }
        }
    })
}

/// Canonical NORMALIZED_JSON text: pretty-printed, schema key order, trailing newline.
pub fn to_normalized_json(corpus: &Corpus) -> String {
    let mut text = serde_json::to_string_pretty(corpus).expect("corpus serializes");
    text.push('\n');
    text
}

pub fn save_normalized(corpus: &Corpus, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, to_normalized_json(corpus)).map_err(|e| Error::io(path, e))
}

fn schema_err(path: &Path, locus: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        locus: locus.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Value, key: &str, path: &Path, locus: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| schema_err(path, locus, format!("missing field `{key}`")))
}

fn str_field<'a>(obj: &'a Value, key: &str, path: &Path, locus: &str) -> Result<&'a str> {
    field(obj, key, path, locus)?
        .as_str()
        .ok_or_else(|| schema_err(path, locus, format!("field `{key}` is not a string")))
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn load_smd(path: &Path) -> Result<Vec<Dialogue>> {
    let text = read(path)?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        locus: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let records = root
        .as_array()
        .ok_or_else(|| schema_err(path, "root", "expected an array of dialogues"))?;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| smd_dialogue(path, i, rec))
        .collect()
}

fn smd_dialogue(path: &Path, i: usize, rec: &Value) -> Result<Dialogue> {
    let locus = format!("record {i}");
    let scenario = field(rec, "scenario", path, &locus)?;
    let task = field(scenario, "task", path, &locus)?;
    let domain = str_field(task, "intent", path, &locus)?.to_string();
    let id = scenario
        .get("uuid")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("{domain}-{i}"));

    let raw_turns = field(rec, "dialogue", path, &locus)?
        .as_array()
        .ok_or_else(|| schema_err(path, &locus, "`dialogue` is not an array"))?;
    let mut turns = Vec::with_capacity(raw_turns.len());
    for (j, t) in raw_turns.iter().enumerate() {
        let tlocus = format!("record {i} turn {j}");
        let speaker = match str_field(t, "turn", path, &tlocus)? {
            "driver" | "user" => Speaker::User,
            "assistant" | "system" => Speaker::System,
            other => return Err(schema_err(path, tlocus, format!("unknown speaker `{other}`"))),
        };
        let data = field(t, "data", path, &tlocus)?;
        let text = str_field(data, "utterance", path, &tlocus)?;
        turns.push(Turn::new(speaker, text));
    }

    let mut kb = Vec::new();
    if let Some(kb_obj) = scenario.get("kb").filter(|v| !v.is_null()) {
        let columns: Option<Vec<String>> = kb_obj
            .get("column_names")
            .and_then(Value::as_array)
            .map(|cols| cols.iter().map(value_text).collect());
        let items = kb_obj.get("items").and_then(Value::as_array);
        for (r, item) in items.into_iter().flatten().enumerate() {
            let obj = item.as_object().ok_or_else(|| {
                schema_err(path, format!("record {i} kb item {r}"), "KB item is not an object")
            })?;
            kb.push(smd_record(obj, columns.as_deref()));
        }
    }
    Ok(Dialogue {
        id,
        domain,
        turns,
        kb,
    })
}

fn smd_record(obj: &Map<String, Value>, columns: Option<&[String]>) -> KbRecord {
    let mut attributes = Vec::new();
    match columns {
        Some(cols) => {
            for c in cols {
                if let Some(v) = obj.get(c) {
                    attributes.push(KbAttribute::new(c.clone(), value_text(v)));
                }
            }
            for (k, v) in obj {
                if !cols.contains(k) {
                    attributes.push(KbAttribute::new(k.clone(), value_text(v)));
                }
            }
        }
        None => {
            for (k, v) in obj {
                attributes.push(KbAttribute::new(k.clone(), value_text(v)));
            }
        }
    }
    KbRecord { attributes }
}

fn metalwoz_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn load_metalwoz_file(path: &Path) -> Result<Vec<Dialogue>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let locus = format!("line {}", n + 1);
        let rec: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            locus: locus.clone(),
            message: e.to_string(),
        })?;
        let id = str_field(&rec, "id", path, &locus)?.to_string();
        let domain = str_field(&rec, "domain", path, &locus)?.to_string();
        let raw = field(&rec, "turns", path, &locus)?
            .as_array()
            .ok_or_else(|| schema_err(path, &locus, "`turns` is not an array"))?;
        let turns = raw
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let speaker = if j % 2 == 0 {
                    Speaker::System
                } else {
                    Speaker::User
                };
                t.as_str()
                    .map(|s| Turn::new(speaker, s))
                    .ok_or_else(|| schema_err(path, &locus, format!("turn {j} is not a string")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Dialogue {
            id,
            domain,
            turns,
            kb: vec![],
        });
    }
    Ok(out)
}

/// Renders a corpus in the SMD layout accepted by `load_corpus`.
pub fn to_smd_json(corpus: &Corpus) -> String {
    let records: Vec<Value> = corpus
        .dialogues
        .iter()
        .map(|d| {
            let turns: Vec<Value> = d
                .turns
                .iter()
                .map(|t| {
                    json!({
                        "turn": if t.speaker == Speaker::User { "driver" } else { "assistant" },
                        "data": { "end_dialogue": false, "utterance": t.text },
                    })
                })
                .collect();
            let mut columns: Vec<String> = Vec::new();
            for attr in d.kb.iter().flat_map(|r| &r.attributes) {
                if !columns.contains(&attr.key) {
                    columns.push(attr.key.clone());
                }
            }
            let items: Vec<Value> = d
                .kb
                .iter()
                .map(|r| {
                    Value::Object(
                        r.attributes
                            .iter()
                            .map(|a| (a.key.clone(), Value::String(a.value.clone())))
                            .collect(),
                    )
                })
                .collect();
            json!({
                "dialogue": turns,
                "scenario": {
                    "kb": { "items": if items.is_empty() { Value::Null } else { Value::Array(items) },
                            "column_names": columns, "kb_title": d.domain },
                    "task": { "intent": d.domain },
                    "uuid": d.id,
                },
            })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&records).expect("serializable");
    text.push('\n');
    text
}

/// Renders a corpus as MetaLWOz JSON lines. Dialogues must start with the bot.
pub fn to_metalwoz_lines(corpus: &Corpus) -> String {
    let mut out = String::new();
    for d in &corpus.dialogues {
        let turns: Vec<&str> = d.turns.iter().map(|t| t.text.as_str()).collect();
        let rec = json!({
            "id": d.id,
            "user_id": "u",
            "bot_id": "b",
            "domain": d.domain,
            "task_id": format!("{}-task", d.domain),
            "turns": turns,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}
