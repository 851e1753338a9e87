//! Parallel campaign execution with a crash-recovery journal.
//!
//! Each finished trial is appended to a JSON-lines journal keyed by its cell
//! index. A rerun with the same configuration hash skips the cells already in
//! the journal; the journal is removed once the results are saved.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crossing_core::doe::{assemble, run_cell, CampaignResult, DoePlan, Provenance, TrialFailure, TrialRecord};
use crossing_core::scenario::{Outcome, TrialConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;
use crate::formats::PlanJson;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

type CellOutcome = Result<TrialRecord, TrialFailure>;

/// SHA-256 of everything that determines the campaign output.
pub fn config_hash(plan: &DoePlan, template: &TrialConfig) -> String {
    let doc = serde_json::json!({ "plan": PlanJson::from(plan), "template": template, "code_version": CODE_VERSION });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalHeader {
    config_hash: String,
    cells: usize,
}

/// Record fields as raw bit patterns so NaN event times survive the round trip.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalEntry {
    index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bits: Option<[u64; 10]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<TrialFailure>,
}

impl JournalEntry {
    fn new(index: usize, o: &CellOutcome) -> Self {
        match o {
            Ok(r) => JournalEntry {
                index,
                bits: Some(
                    [r.h_o, r.vc, r.cav, r.delta_ec, r.pitch_rate_t2, r.cdwo, r.dx_w_max, r.t1, r.t2, r.t3].map(f64::to_bits),
                ),
                outcome: Some(r.outcome),
                failure: None,
            },
            Err(f) => JournalEntry { index, bits: None, outcome: None, failure: Some(f.clone()) },
        }
    }

    fn into_outcome(self) -> Option<(usize, CellOutcome)> {
        match (self.bits, self.outcome, self.failure) {
            (Some(b), Some(outcome), None) => {
                let v = b.map(f64::from_bits);
                let r = TrialRecord {
                    h_o: v[0],
                    vc: v[1],
                    cav: v[2],
                    delta_ec: v[3],
                    pitch_rate_t2: v[4],
                    cdwo: v[5],
                    dx_w_max: v[6],
                    t1: v[7],
                    t2: v[8],
                    t3: v[9],
                    outcome,
                };
                Some((self.index, Ok(r)))
            }
            (None, None, Some(f)) => Some((self.index, Err(f))),
            _ => None,
        }
    }
}

struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens the journal, returning entries from an earlier run with the same hash.
    fn open(path: &Path, hash: &str, cells: usize) -> Result<(Self, BTreeMap<usize, CellOutcome>), LabError> {
        let mut done = BTreeMap::new();
        let mut reuse = false;
        if let Ok(f) = File::open(path) {
            let mut lines = BufReader::new(f).lines();
            if let Some(Ok(first)) = lines.next() {
                if let Ok(h) = serde_json::from_str::<JournalHeader>(&first) {
                    reuse = h.config_hash == hash && h.cells == cells;
                }
            }
            if reuse {
                // A torn last line from a crash is simply ignored.
                for line in lines.map_while(|l| l.ok()) {
                    if let Some((i, o)) = serde_json::from_str::<JournalEntry>(&line).ok().and_then(JournalEntry::into_outcome) {
                        if i < cells {
                            done.insert(i, o);
                        }
                    }
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        }
        let file = if reuse {
            OpenOptions::new().append(true).open(path)
        } else {
            File::create(path)
        }
        .map_err(|e| LabError::io(path, e))?;
        let mut journal = Journal { path: path.to_path_buf(), file };
        if !reuse {
            let header = serde_json::to_string(&JournalHeader { config_hash: hash.to_string(), cells }).expect("header");
            journal.line(&header)?;
        }
        Ok((journal, done))
    }

    fn line(&mut self, text: &str) -> Result<(), LabError> {
        writeln!(self.file, "{text}").and_then(|_| self.file.flush()).map_err(|e| LabError::io(&self.path, e))
    }
}

/// Runs every cell of `plan` on `workers` threads. Results come back in the
/// canonical (hO, vc, cAV) order whatever the worker count.
pub fn run_campaign(
    plan: &DoePlan,
    template: &TrialConfig,
    workers: usize,
    journal: Option<&Path>,
) -> Result<CampaignResult, LabError> {
    if workers == 0 {
        return Err(LabError::Invalid("workers must be at least 1".into()));
    }
    plan.validate(template.vehicle.wheel_radius)?;
    template.vehicle.validate()?;
    template.contact.validate()?;
    let hash = config_hash(plan, template);
    let cells = plan.cells();

    let (journal, mut done) = match journal {
        Some(p) => {
            let (j, d) = Journal::open(p, &hash, cells.len())?;
            (Some(Mutex::new(j)), d)
        }
        None => (None, BTreeMap::new()),
    };
    let pending: Vec<usize> = (0..cells.len()).filter(|i| !done.contains_key(i)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Invalid(format!("cannot start worker pool: {e}")))?;
    let fresh: Result<Vec<(usize, CellOutcome)>, LabError> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let outcome = run_cell(template, &cells[i]);
                if let Some(j) = &journal {
                    let line = serde_json::to_string(&JournalEntry::new(i, &outcome)).expect("journal entry");
                    j.lock().expect("journal lock").line(&line)?;
                }
                Ok((i, outcome))
            })
            .collect()
    });
    let journal_path = journal.as_ref().map(|j| j.lock().expect("journal lock").path.clone());
    let fresh = fresh.map_err(|e| match &journal_path {
        Some(p) => LabError::Aborted { message: e.to_string(), journal: p.clone() },
        None => e,
    })?;
    done.extend(fresh);

    let provenance = Provenance { config_hash: hash, code_version: CODE_VERSION.to_string() };
    Ok(assemble(plan, done.into_values(), provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crossing_core::doe::run_campaign_serial;

    fn small_plan() -> DoePlan {
        let wr = TrialConfig::new(0.0, 1.0, 1.0).vehicle.wheel_radius;
        DoePlan { h_o_levels: vec![0.25 * wr], vc_levels: vec![6.0], cav_levels: vec![400.0, 6400.0], replicates: 1 }
    }

    #[test]
    fn matches_serial_runner() {
        let template = TrialConfig::new(0.0, 1.0, 1.0);
        let plan = small_plan();
        let par = run_campaign(&plan, &template, 2, None).unwrap();
        let ser = run_campaign_serial(&plan, &template, par.provenance.clone()).unwrap();
        assert_eq!(par.records.len(), 2);
        assert!(par.records.iter().zip(&ser.records).all(|(a, b)| a.same_as(b)));
    }

    #[test]
    fn hash_tracks_configuration() {
        let mut template = TrialConfig::new(0.0, 1.0, 1.0);
        let plan = small_plan();
        let a = config_hash(&plan, &template);
        assert_eq!(a, config_hash(&plan, &template));
        assert_eq!(a.len(), 64);
        template.sim.dt = 1e-5;
        assert_ne!(a, config_hash(&plan, &template));
    }

    #[test]
    fn journal_resumes_completed_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let template = TrialConfig::new(0.0, 1.0, 1.0);
        let plan = small_plan();
        let first = run_campaign(&plan, &template, 1, Some(&path)).unwrap();

        // Keep the header and one entry, plus a torn line, then rerun.
        let text = std::fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().take(2).collect();
        std::fs::write(&path, format!("{}\n{{\"index\": 1, \"bi", kept.join("\n"))).unwrap();
        let resumed = run_campaign(&plan, &template, 1, Some(&path)).unwrap();
        assert!(first.records.iter().zip(&resumed.records).all(|(a, b)| a.same_as(b)));
        assert_eq!(resumed.records.len(), 2);
    }

    #[test]
    fn foreign_journal_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        std::fs::write(&path, "{\"config_hash\":\"other\",\"cells\":2}\n{\"index\":0,\"failure\":{\"hO\":0,\"vc\":1,\"cAV\":1,\"replicate\":0,\"reason\":\"x\"}}\n").unwrap();
        let r = run_campaign(&small_plan(), &TrialConfig::new(0.0, 1.0, 1.0), 1, Some(&path)).unwrap();
        assert!(r.failures.is_empty());
        assert!(r.is_complete());
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(run_campaign(&small_plan(), &TrialConfig::new(0.0, 1.0, 1.0), 0, None).is_err());
    }
}
