use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const MANIFEST_HEADER: [&str; 5] = ["id", "path", "label", "split", "dataset"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("bad split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    pub id: String,
    /// Resolved path: relative paths in the file are taken relative to the manifest's directory.
    pub path: PathBuf,
    pub label: String,
    pub split: Split,
    pub dataset_id: String,
}

/// Records plus `#key=value` metadata lines (patch size, magnification, ...).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub records: Vec<PatchRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl Manifest {
    /// Parses manifest text. `base_dir` resolves relative image paths.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, DatasetError> {
        let err = |line: u64, message: String| DatasetError::Manifest { line, message };

        let mut metadata = BTreeMap::new();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let header_line = reader.position().line().max(1);
        let mut cols = [0usize; 5];
        for (slot, name) in cols.iter_mut().zip(MANIFEST_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| err(header_line, format!("missing column `{name}`")))?;
        }

        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for row in reader.records() {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<&str, DatasetError> {
                row.get(cols[i]).ok_or_else(|| err(line, format!("missing value for `{}`", MANIFEST_HEADER[i])))
            };
            let id = field(0)?;
            if id.is_empty() {
                return Err(err(line, "empty id".into()));
            }
            if !seen.insert(id.to_string()) {
                return Err(err(line, format!("duplicate id `{id}`")));
            }
            let split = field(3)?.parse().map_err(|m| err(line, m))?;
            records.push(PatchRecord {
                id: id.to_string(),
                path: base_dir.join(field(1)?),
                label: field(2)?.to_string(),
                split,
                dataset_id: field(4)?.to_string(),
            });
        }
        if records.is_empty() {
            return Err(err(header_line, "manifest has no records".into()));
        }
        Ok(Self { records, metadata })
    }

    pub fn split(&self, split: Split) -> Vec<&PatchRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn in_splits(&self, splits: &[Split]) -> Vec<&PatchRecord> {
        self.records.iter().filter(|r| splits.contains(&r.split)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&PatchRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Sorted, de-duplicated labels.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.records.iter().map(|r| r.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Errors on the first record whose image file does not exist.
    pub fn verify_files(&self) -> Result<(), DatasetError> {
        match self.records.iter().find(|r| !r.path.is_file()) {
            Some(r) => {
                Err(DatasetError::Decode { id: r.id.clone(), message: format!("file not found: {}", r.path.display()) })
            }
            None => Ok(()),
        }
    }

    /// Writes the manifest with paths relative to `path`'s directory where possible.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("#{k}={v}\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| DatasetError::Io { path: path.to_path_buf(), message: e.to_string() };
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for r in &self.records {
            let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
            let rel = rel.to_string_lossy();
            w.write_record([r.id.as_str(), &rel, &r.label, r.split.as_str(), &r.dataset_id]).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| DatasetError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        out.push_str(&String::from_utf8_lossy(&body));
        fs::write(path, out).map_err(|e| DatasetError::io(path, e))
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    Manifest::parse(&text, path.parent().unwrap_or(Path::new("")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "#patch_size=64x64\n#magnification=10x\nid,path,label,split,dataset\n\
        a,img/a.png,G3,train,sicap\nb,img/b.png,G4,val,sicap\nc,/abs/c.png,NC,test,sicap\nd,img/d.png,G5,test,sicap\n";

    #[test]
    fn parses_records_and_metadata() {
        let m = Manifest::parse(SAMPLE, Path::new("/data")).unwrap();
        assert_eq!(m.records.len(), 4);
        assert_eq!(m.metadata["patch_size"], "64x64");
        assert_eq!(m.records[0].path, PathBuf::from("/data/img/a.png"));
        assert_eq!(m.records[2].path, PathBuf::from("/abs/c.png"));
        assert_eq!(m.split(Split::Test).len(), 2);
        assert_eq!(m.labels(), ["G3", "G4", "G5", "NC"]);
    }

    #[test]
    fn column_order_is_free() {
        let m = Manifest::parse("label,id,dataset,split,path\nG3,x,d,train,x.png\n", Path::new("")).unwrap();
        assert_eq!(m.records[0].id, "x");
        assert_eq!(m.records[0].label, "G3");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dup = "id,path,label,split,dataset\na,a.png,G3,train,s\nb,b.png,G3,train,s\na,c.png,G4,test,s\n";
        let e = Manifest::parse(dup, Path::new("")).unwrap_err();
        assert!(matches!(&e, DatasetError::Manifest { line: 4, .. }), "{e}");
        assert!(e.to_string().contains("`a`"));

        let bad = "id,path,label,split,dataset\na,a.png,G3,training,s\n";
        let e = Manifest::parse(bad, Path::new("")).unwrap_err();
        assert!(matches!(&e, DatasetError::Manifest { line: 2, .. }), "{e}");

        let missing = "id,path,label,dataset\na,a.png,G3,s\n";
        let e = Manifest::parse(missing, Path::new("")).unwrap_err();
        assert!(e.to_string().contains("missing column `split`"), "{e}");

        assert!(Manifest::parse("id,path,label,split,dataset\n", Path::new("")).is_err());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::parse(SAMPLE, dir.path()).unwrap();
        let path = dir.path().join("m.csv");
        m.save(&path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("a,img/a.png,G3,train,sicap"));
    }
}
