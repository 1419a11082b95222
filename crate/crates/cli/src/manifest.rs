//! Run manifest: which stages are complete, what they wrote, and what they read.
//!
//! A stage counts as complete only while every output it recorded still hashes to
//! the recorded checksum and every upstream stage is itself complete with the
//! outputs this stage consumed. Anything else is re-run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relgen_core::store::{write_atomic, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sample,
    Generate,
    Map,
    Score,
    Rank,
    Blend,
    Split,
    EvalRc,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Sample,
        Stage::Generate,
        Stage::Map,
        Stage::Score,
        Stage::Rank,
        Stage::Blend,
        Stage::Split,
        Stage::EvalRc,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Generate => "generate",
            Stage::Map => "map",
            Stage::Score => "score",
            Stage::Rank => "rank",
            Stage::Blend => "blend",
            Stage::Split => "split",
            Stage::EvalRc => "eval-rc",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Sample => &[],
            Stage::Generate => &[Stage::Sample],
            Stage::Map => &[Stage::Generate],
            Stage::Score => &[Stage::Map],
            Stage::Rank => &[Stage::Score],
            Stage::Blend => &[Stage::Rank],
            Stage::Split => &[Stage::Blend],
            Stage::EvalRc => &[Stage::Split],
            Stage::Report => &[Stage::Score, Stage::Split, Stage::EvalRc],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Run-directory-relative path → SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Digest of each consumed input: upstream stages by name, data files by `data:<role>`.
    pub inputs: BTreeMap<String, String>,
    /// Counts and drop reports worth keeping next to the markers.
    #[serde(default)]
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub seed: u64,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendInfo>,
    #[serde(default)]
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl RunManifest {
    pub fn new(config_digest: &str, seed: u64) -> Self {
        Self {
            run_id: format!("run-{}-{seed}", &config_digest[..12]),
            config_digest: config_digest.to_string(),
            seed,
            backends: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Option<Self>, StoreError> {
        let path = run_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(StoreError::Io { path, source }),
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), StoreError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&run_dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// One digest over a stage's recorded output checksums.
    pub fn stage_digest(&self, stage: Stage) -> Option<String> {
        let rec = self.stages.get(&stage)?;
        let mut h = Sha256::new();
        for (path, sum) in &rec.outputs {
            h.update(path.as_bytes());
            h.update([0]);
            h.update(sum.as_bytes());
            h.update([0]);
        }
        Some(hex::encode(h.finalize()))
    }

    fn outputs_intact(&self, stage: Stage, run_dir: &Path) -> bool {
        let Some(rec) = self.stages.get(&stage) else {
            return false;
        };
        rec.outputs
            .iter()
            .all(|(rel, sum)| sha256_file(&run_dir.join(rel)).is_ok_and(|actual| &actual == sum))
    }

    /// Complete, with intact outputs, and consistent with its upstream stages and the
    /// current data-file digests in `data`.
    pub fn is_complete(
        &self,
        stage: Stage,
        run_dir: &Path,
        data: &BTreeMap<String, String>,
    ) -> bool {
        if !self.outputs_intact(stage, run_dir) {
            return false;
        }
        let rec = &self.stages[&stage];
        for up in stage.upstream() {
            if !self.is_complete(*up, run_dir, data) {
                return false;
            }
            if rec.inputs.get(up.as_str()) != self.stage_digest(*up).as_ref() {
                return false;
            }
        }
        rec.inputs
            .iter()
            .filter(|(k, _)| k.starts_with("data:"))
            .all(|(k, v)| data.get(k) == Some(v))
    }

    /// Records `stage` as complete with checksums of `outputs` (relative to `run_dir`).
    pub fn mark(
        &mut self,
        stage: Stage,
        run_dir: &Path,
        outputs: &[PathBuf],
        mut inputs: BTreeMap<String, String>,
        summary: Value,
    ) -> std::io::Result<()> {
        let mut sums = BTreeMap::new();
        for rel in outputs {
            let key = rel.to_string_lossy().replace('\\', "/");
            sums.insert(key, sha256_file(&run_dir.join(rel))?);
        }
        for up in stage.upstream() {
            if let Some(d) = self.stage_digest(*up) {
                inputs.insert(up.as_str().to_string(), d);
            }
        }
        self.stages.insert(
            stage,
            StageRecord {
                outputs: sums,
                inputs,
                summary,
            },
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rel: &str, text: &str) -> PathBuf {
        std::fs::write(dir.join(rel), text).unwrap();
        PathBuf::from(rel)
    }

    #[test]
    fn marker_tracks_checksums_and_upstream() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let data = BTreeMap::new();
        let mut m = RunManifest::new("0123456789abcdef", 1);
        let a = write(d, "a.txt", "one");
        m.mark(Stage::Sample, d, &[a], BTreeMap::new(), Value::Null)
            .unwrap();
        let b = write(d, "b.txt", "two");
        m.mark(Stage::Generate, d, &[b], BTreeMap::new(), Value::Null)
            .unwrap();
        assert!(m.is_complete(Stage::Generate, d, &data));

        // Tampering with an upstream output invalidates both stages.
        write(d, "a.txt", "changed");
        assert!(!m.is_complete(Stage::Sample, d, &data));
        assert!(!m.is_complete(Stage::Generate, d, &data));

        // Re-running upstream with different output leaves downstream stale.
        let a = PathBuf::from("a.txt");
        m.mark(Stage::Sample, d, &[a], BTreeMap::new(), Value::Null)
            .unwrap();
        assert!(m.is_complete(Stage::Sample, d, &data));
        assert!(!m.is_complete(Stage::Generate, d, &data));
    }

    #[test]
    fn data_digests_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut m = RunManifest::new("0123456789abcdef", 1);
        let a = write(d, "a.txt", "one");
        let inputs = BTreeMap::from([("data:tuples".to_string(), "x".to_string())]);
        m.mark(Stage::Sample, d, &[a], inputs, Value::Null).unwrap();
        let same = BTreeMap::from([("data:tuples".to_string(), "x".to_string())]);
        let other = BTreeMap::from([("data:tuples".to_string(), "y".to_string())]);
        assert!(m.is_complete(Stage::Sample, d, &same));
        assert!(!m.is_complete(Stage::Sample, d, &other));
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        let json = serde_json::to_string(&Stage::EvalRc).unwrap();
        assert_eq!(json, "\"eval-rc\"");
    }
}
