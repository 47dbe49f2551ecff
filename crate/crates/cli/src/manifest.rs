//! Dataset manifest: `signer_id,sample_id,kind,target_id,path`, one line per
//! sample. For a forgery `signer_id` is the forger and `target_id` the
//! imitated signer; `path` is relative to the manifest's directory.

use crate::error::{io_err, CliError, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const FILE_NAME: &str = "manifest.csv";
const HEADER: &str = "signer_id,sample_id,kind,target_id,path";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Genuine,
    Forgery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub signer_id: usize,
    pub sample_id: usize,
    pub kind: Kind,
    pub target_id: usize,
    pub path: String,
}

impl Entry {
    /// File name without the `.csv` extension.
    pub fn stem(&self) -> &str {
        self.path.strip_suffix(".csv").unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\n");
        for e in &self.entries {
            let kind = match e.kind {
                Kind::Genuine => "genuine",
                Kind::Forgery => "forgery",
            };
            let _ = writeln!(
                s,
                "{},{},{kind},{},{}",
                e.signer_id, e.sample_id, e.target_id, e.path
            );
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, m: String| CliError::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {m}"),
        };
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some(HEADER) {
            return Err(bad(1, format!("expected header {HEADER:?}")));
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1, format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(i + 1, format!("bad id {s:?}")))
            };
            let kind = match f[2] {
                "genuine" => Kind::Genuine,
                "forgery" => Kind::Forgery,
                other => return Err(bad(i + 1, format!("unknown kind {other:?}"))),
            };
            entries.push(Entry {
                signer_id: num(f[0])?,
                sample_id: num(f[1])?,
                kind,
                target_id: num(f[3])?,
                path: f[4].to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn load(dir_or_file: &Path) -> Result<(Self, PathBuf)> {
        let path = if dir_or_file.is_dir() {
            dir_or_file.join(FILE_NAME)
        } else {
            dir_or_file.to_path_buf()
        };
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text, &path)?, dir))
    }

    pub fn num_classes(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == Kind::Genuine)
            .map(|e| e.signer_id + 1)
            .max()
            .unwrap_or(0)
    }

    /// Genuine sample counts and forgery counts per target signer.
    pub fn counts(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.num_classes();
        let (mut g, mut f) = (vec![0; n], vec![0; n]);
        for e in &self.entries {
            match e.kind {
                Kind::Genuine => g[e.signer_id] += 1,
                Kind::Forgery if e.target_id < n => f[e.target_id] += 1,
                Kind::Forgery => {}
            }
        }
        (g, f)
    }

    /// Genuine sample `id` of `signer`.
    pub fn genuine(&self, signer: usize, id: usize) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.kind == Kind::Genuine && e.signer_id == signer && e.sample_id == id)
    }

    /// Forgery `id` among those targeting `target`.
    pub fn forgery(&self, target: usize, id: usize) -> Option<&Entry> {
        self.entries
            .iter()
            .find(|e| e.kind == Kind::Forgery && e.target_id == target && e.sample_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counts() {
        let m = Manifest {
            entries: vec![
                Entry {
                    signer_id: 0,
                    sample_id: 0,
                    kind: Kind::Genuine,
                    target_id: 0,
                    path: "s00_g00.csv".into(),
                },
                Entry {
                    signer_id: 1,
                    sample_id: 0,
                    kind: Kind::Genuine,
                    target_id: 1,
                    path: "s01_g00.csv".into(),
                },
                Entry {
                    signer_id: 1,
                    sample_id: 0,
                    kind: Kind::Forgery,
                    target_id: 0,
                    path: "s00_f00.csv".into(),
                },
            ],
        };
        let back = Manifest::parse(&m.to_text(), Path::new("m")).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.counts(), (vec![1, 1], vec![1, 0]));
        assert_eq!(m.forgery(0, 0).unwrap().stem(), "s00_f00");
        assert!(Manifest::parse("a,b\n", Path::new("m")).is_err());
    }
}
