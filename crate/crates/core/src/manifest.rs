//! JSON-lines dataset manifest: one recording per line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::CorruptionKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "PD")]
    Pd,
    #[serde(rename = "HC")]
    Hc,
}

impl Group {
    pub fn is_pd(self) -> bool {
        self == Group::Pd
    }

    pub fn other(self) -> Self {
        match self {
            Group::Pd => Group::Hc,
            Group::Hc => Group::Pd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reading,
    Repetition,
    Monologue,
    Ddk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Highquality,
    Telephone,
}

macro_rules! text_enum {
    ($t:ty, $($name:literal => $v:expr),+ $(,)?) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $(x if *x == $v => $name,)+ _ => unreachable!() };
                f.write_str(s)
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $(n if n == $name.to_ascii_lowercase() => Ok($v),)+
                    _ => Err(Error::Config(format!("unknown {} '{s}'", stringify!($t)))),
                }
            }
        }
    };
}

text_enum!(Group, "PD" => Group::Pd, "HC" => Group::Hc);
text_enum!(Sex, "M" => Sex::M, "F" => Sex::F);
text_enum!(Task, "reading" => Task::Reading, "repetition" => Task::Repetition, "monologue" => Task::Monologue, "ddk" => Task::Ddk);
text_enum!(Channel, "highquality" => Channel::Highquality, "telephone" => Channel::Telephone);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub subject_id: String,
    pub group: Group,
    pub sex: Sex,
    pub task: Task,
    pub session_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub audio: PathBuf,
    pub channel: Channel,
    /// Silence recorded in the same session, used as the noise reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<PathBuf>,
    /// Set on corrupted copies produced by augmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionKind>,
}

impl Record {
    /// Unique utterance key.
    pub fn utterance_id(&self) -> String {
        let stem = self.audio.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        format!("{}/{}/{}/{}", self.subject_id, self.session_id, self.task, stem)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    /// Directory used to resolve relative paths.
    pub root: PathBuf,
}

/// Per-subject attributes that must be constant across sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub group: Group,
    pub sex: Sex,
}

impl DatasetManifest {
    pub fn new(records: Vec<Record>, root: impl Into<PathBuf>) -> Result<Self> {
        let m = Self { records, root: root.into() };
        m.subjects()?;
        Ok(m)
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(rec);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::new(records, root)?;
        for r in &m.records {
            for p in std::iter::once(&r.audio).chain(r.noise.as_ref()) {
                let full = m.resolve(p);
                if !full.exists() {
                    return Err(Error::io(full, std::io::Error::new(std::io::ErrorKind::NotFound, "manifest entry missing")));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r)?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Subject table; fails if a subject changes group or sex between records.
    pub fn subjects(&self) -> Result<BTreeMap<String, SubjectInfo>> {
        let mut out: BTreeMap<String, SubjectInfo> = BTreeMap::new();
        for r in &self.records {
            let info = SubjectInfo { group: r.group, sex: r.sex };
            match out.get(&r.subject_id) {
                Some(prev) if *prev != info => {
                    return Err(Error::Format(format!("subject {} has inconsistent group/sex", r.subject_id)));
                }
                Some(_) => {}
                None => {
                    out.insert(r.subject_id.clone(), info);
                }
            }
        }
        Ok(out)
    }

    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> Self {
        Self { records: self.records.iter().filter(|r| keep(r)).cloned().collect(), root: self.root.clone() }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}
