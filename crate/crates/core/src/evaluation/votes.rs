use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Wire form of a tied vote.
pub const TIE: &str = "TIE";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Winner {
    Model(String),
    Tie,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Winner::Model(m) => f.write_str(m),
            Winner::Tie => f.write_str(TIE),
        }
    }
}

impl From<&str> for Winner {
    fn from(s: &str) -> Self {
        if s == TIE {
            Winner::Tie
        } else {
            Winner::Model(s.to_owned())
        }
    }
}

impl Serialize for Winner {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Winner {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("winner must not be empty"));
        }
        Ok(Winner::from(s.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRecord {
    pub line_id: String,
    pub winner: Winner,
    pub source: Source,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TallySummary {
    pub counts: BTreeMap<String, usize>,
    /// Share of contested lines per model, rounded to two decimals; `None`
    /// when no line was contested.
    pub percentages: Option<BTreeMap<String, f64>>,
    /// Lines with a non-tie vote.
    pub contested: usize,
    pub ties: usize,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Counts wins per model over non-tie votes.
pub fn tally<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>) -> TallySummary {
    tally_for(votes, std::iter::empty::<&str>())
}

/// Like [`tally`], but every model in `models` appears even with zero wins.
pub fn tally_for<'a, 'm>(
    votes: impl IntoIterator<Item = &'a VoteRecord>,
    models: impl IntoIterator<Item = &'m str>,
) -> TallySummary {
    let mut summary = TallySummary {
        counts: models.into_iter().map(|m| (m.to_owned(), 0)).collect(),
        ..Default::default()
    };
    for v in votes {
        match &v.winner {
            Winner::Model(m) => {
                *summary.counts.entry(m.clone()).or_default() += 1;
                summary.contested += 1;
            }
            Winner::Tie => summary.ties += 1,
        }
    }
    if summary.contested > 0 {
        let total = summary.contested as f64;
        summary.percentages = Some(
            summary
                .counts
                .iter()
                .map(|(m, &c)| (m.clone(), round2(c as f64 * 100.0 / total)))
                .collect(),
        );
    }
    summary
}

/// Append-only JSON-lines vote file. When a line is voted on again by the
/// same source, the newest record wins.
#[derive(Clone, Debug)]
pub struct VoteStore {
    path: PathBuf,
}

impl VoteStore {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &VoteRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("vote records serialize");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        file.sync_data().map_err(|e| Error::io(&self.path, e))
    }

    /// Every stored record in file order, including superseded ones.
    pub fn history(&self) -> Result<Vec<VoteRecord>> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    Error::format(format!("{} line {}", self.path.display(), i + 1), e.to_string())
                })
            })
            .collect()
    }

    /// The latest record per (line, source), ordered by line id then source.
    pub fn current(&self) -> Result<Vec<VoteRecord>> {
        let mut latest = BTreeMap::new();
        for r in self.history()? {
            latest.insert((r.line_id.clone(), r.source), r);
        }
        Ok(latest.into_values().collect())
    }
}
