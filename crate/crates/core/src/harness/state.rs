//! Resumable run state for one (strategy, repetition) pair.
//!
//! ```text
//! alexbench-state v1
//! strategy=<id>
//! repetition=<n>
//! iteration=<next step>
//! finished=<bool>
//! config=<digest of the config echo, hex>
//! labeled=<index:label ...>
//! unlabeled=<index ...>
//! record=<report fields>,<selection fields or ->
//! digest=<FNV-1a 64 of every preceding byte, hex>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{LabeledPool, UnlabeledPool};
use crate::strategies::StrategyId;

use super::config::ALConfig;
use super::report::IterationRecord;
use super::HarnessError;

const TAG: &str = "alexbench-state v1";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn config_digest(cfg: &ALConfig) -> u64 {
    let text: String = cfg.echo().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fnv1a64(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub strategy: StrategyId,
    pub repetition: usize,
    /// Next step to train.
    pub iteration: usize,
    pub finished: bool,
    pub config_digest: u64,
    pub labeled: LabeledPool,
    pub unlabeled: UnlabeledPool,
    pub records: Vec<IterationRecord>,
}

fn corrupt(m: impl Into<String>) -> HarnessError {
    HarnessError::CorruptCheckpoint(m.into())
}

impl RunState {
    pub fn encode(&self) -> String {
        let mut out = format!(
            "{TAG}\nstrategy={}\nrepetition={}\niteration={}\nfinished={}\nconfig={:016x}\n",
            self.strategy, self.repetition, self.iteration, self.finished, self.config_digest
        );
        let labeled: Vec<String> = self
            .labeled
            .entries()
            .iter()
            .map(|(i, y)| format!("{i}:{y}"))
            .collect();
        out.push_str(&format!("labeled={}\n", labeled.join(" ")));
        let unlabeled: Vec<String> = self.unlabeled.indices().iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("unlabeled={}\n", unlabeled.join(" ")));
        for r in &self.records {
            out.push_str(&format!("record={}\n", r.full_line()));
        }
        let digest = fnv1a64(out.as_bytes());
        out.push_str(&format!("digest={digest:016x}\n"));
        out
    }

    pub fn decode(text: &str) -> Result<Self, HarnessError> {
        let body_end = text.rfind("digest=").ok_or_else(|| corrupt("missing digest"))?;
        let (body, tail) = text.split_at(body_end);
        let stored = u64::from_str_radix(tail["digest=".len()..].trim_end(), 16)
            .map_err(|_| corrupt("unreadable digest"))?;
        if stored != fnv1a64(body.as_bytes()) {
            return Err(corrupt("digest mismatch"));
        }
        let mut lines = body.lines();
        if lines.next() != Some(TAG) {
            return Err(corrupt("unknown state tag"));
        }
        let mut field = |name: &str| -> Result<&str, HarnessError> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix('='))
                .ok_or_else(|| corrupt(format!("missing `{name}`")))
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| corrupt(format!("bad number `{s}`")));
        let strategy = field("strategy")?.parse().map_err(corrupt)?;
        let repetition = num(field("repetition")?)?;
        let iteration = num(field("iteration")?)?;
        let finished = field("finished")?.parse().map_err(|_| corrupt("bad finished flag"))?;
        let config_digest = u64::from_str_radix(field("config")?, 16).map_err(|_| corrupt("bad config digest"))?;
        let mut entries = Vec::new();
        for tok in field("labeled")?.split_whitespace() {
            let (i, y) = tok.split_once(':').ok_or_else(|| corrupt("bad labeled entry"))?;
            entries.push((num(i)?, y.parse::<u8>().map_err(|_| corrupt("bad label"))?));
        }
        let labeled = LabeledPool::from_entries(entries).map_err(|e| corrupt(e.to_string()))?;
        let unlabeled = field("unlabeled")?
            .split_whitespace()
            .map(num)
            .collect::<Result<Vec<_>, _>>()?;
        let unlabeled = UnlabeledPool::new(unlabeled);
        let mut records = Vec::new();
        for line in lines {
            let rec = line.strip_prefix("record=").ok_or_else(|| corrupt("unexpected line"))?;
            records.push(IterationRecord::parse_full_line(rec).map_err(|e| corrupt(e.to_string()))?);
        }
        Ok(Self {
            strategy,
            repetition,
            iteration,
            finished,
            config_digest,
            labeled,
            unlabeled,
            records,
        })
    }

    /// Atomic write through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if path.as_os_str().is_empty() {
            return Err(HarnessError::Config("empty checkpoint path".into()));
        }
        let io = |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.encode().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = fs::read(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|_| corrupt("state is not UTF-8"))?;
        Self::decode(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunState {
        RunState {
            strategy: StrategyId::Alex,
            repetition: 2,
            iteration: 1,
            finished: false,
            config_digest: 0xdead_beef,
            labeled: LabeledPool::from_entries(vec![(5, 1), (2, 9)]).unwrap(),
            unlabeled: UnlabeledPool::new(vec![0, 1, 3]),
            records: vec![IterationRecord {
                repetition: 2,
                iteration: 0,
                strategy: StrategyId::Alex,
                labeled_count: 2,
                test_accuracy: 0.5,
                wall_ms: 0,
                selection: None,
            }],
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn encode_decode() {
        let s = sample();
        assert_eq!(RunState::decode(&s.encode()).unwrap(), s);
    }

    #[test]
    fn tampering_detected() {
        let text = sample().encode().replace("unlabeled=0 1 3", "unlabeled=0 1 4");
        assert!(matches!(RunState::decode(&text), Err(HarnessError::CorruptCheckpoint(_))));
        assert!(matches!(RunState::decode("junk"), Err(HarnessError::CorruptCheckpoint(_))));
    }

    #[test]
    fn empty_path_writes_nothing() {
        assert!(sample().save(Path::new("")).is_err());
        assert!(!Path::new(".tmp").exists());
    }
}
