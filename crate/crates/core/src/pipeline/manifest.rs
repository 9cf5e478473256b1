//! CSV dataset manifests.
//!
//! Header `image_path,person_id,role,pair_hint`. Paths are relative to the
//! manifest's directory unless absolute; `pair_hint` names the style image
//! for a `content` record and is left empty otherwise.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["image_path", "person_id", "role", "pair_hint"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Content,
    Style,
    Train,
    Query,
    Gallery,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(Role::Content),
            "style" => Ok(Role::Style),
            "train" => Ok(Role::Train),
            "query" => Ok(Role::Query),
            "gallery" => Ok(Role::Gallery),
            other => Err(Error::Validation(format!("unknown role `{other}`"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Content => "content",
            Role::Style => "style",
            Role::Train => "train",
            Role::Query => "query",
            Role::Gallery => "gallery",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    /// The path as written in the manifest; doubles as the item id.
    pub item_id: String,
    /// Resolved location on disk.
    pub path: PathBuf,
    pub person_id: i32,
    pub role: Role,
    pub pair_hint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Manifest {
    /// Parses manifest text, resolving relative paths against `base`. Every
    /// record is checked (paths exist, ids non-negative, item ids unique
    /// within a role) before anything is returned.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::format("manifest", e.to_string()))?;
        let found: Vec<&str> = headers.iter().collect();
        if found != MANIFEST_HEADER[..3] && found != MANIFEST_HEADER {
            return Err(Error::format("manifest", format!("expected header `{}`", MANIFEST_HEADER.join(","))));
        }
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::format("manifest", e.to_string()))?;
            let line = i + 2;
            let field = |k: usize| row.get(k).unwrap_or("");
            let item_id = field(0).to_string();
            if item_id.is_empty() {
                return Err(Error::Validation(format!("manifest line {line}: empty image path")));
            }
            let person_id: i32 = field(1)
                .parse()
                .map_err(|_| Error::Validation(format!("manifest line {line}: bad person id `{}`", field(1))))?;
            if person_id < 0 {
                return Err(Error::Validation(format!("manifest line {line}: negative person id {person_id}")));
            }
            let role: Role = field(2)
                .parse()
                .map_err(|e: Error| Error::Validation(format!("manifest line {line}: {e}")))?;
            let path = resolve(base, &item_id);
            if !path.is_file() {
                return Err(Error::Validation(format!("manifest line {line}: `{}` does not exist", path.display())));
            }
            let pair_hint = match field(3) {
                "" => None,
                hint => {
                    let p = resolve(base, hint);
                    if !p.is_file() {
                        return Err(Error::Validation(format!(
                            "manifest line {line}: style image `{}` does not exist",
                            p.display()
                        )));
                    }
                    Some(p)
                }
            };
            if !seen.insert((role, item_id.clone())) {
                return Err(Error::Validation(format!("manifest line {line}: duplicate {role} item `{item_id}`")));
            }
            records.push(Record {
                item_id,
                path,
                person_id,
                role,
                pair_hint,
            });
        }
        Ok(Manifest { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.role == role)
    }
}

/// Writes manifest text for `(image_path, person_id, role)` rows.
pub fn format_manifest<'a>(rows: impl IntoIterator<Item = (&'a str, i32, Role)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::format("manifest", e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for (path, id, role) in rows {
        w.write_record([path, &id.to_string(), &role.to_string(), ""]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("manifest", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
