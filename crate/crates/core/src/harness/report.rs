//! Evaluation report: in-memory aggregate plus its on-disk CSV layout.
//!
//! A report directory holds five files, all UTF-8 with LF endings:
//! `report.csv` (dual accuracy per regime/category), `questions.csv`
//! (per-question accuracy split by gold/hallucination), `profile_action.csv`
//! and `profile_scene.csv` (attention mass per layer/head/block, averaged
//! over gold questions of that category), and `meta.csv` (key/value run
//! metadata). Floats are written in shortest round-trip form, so write →
//! read reproduces the exact bits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::dataset::{QaKind, QuestionCategory, Regime};
use crate::harness::eval::{DualRow, EvalOutcome, QuestionRow};
use crate::harness::profile::{BlockType, ProfileRow};

pub const REPORT_FILE: &str = "report.csv";
pub const QUESTIONS_FILE: &str = "questions.csv";
pub const PROFILE_ACTION_FILE: &str = "profile_action.csv";
pub const PROFILE_SCENE_FILE: &str = "profile_scene.csv";
pub const META_FILE: &str = "meta.csv";

/// Run provenance recorded next to the metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub config_hash: u64,
    pub seed: u64,
    pub revision: String,
    pub invalid_answers: u64,
}

/// Everything one evaluation produces.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dual: Vec<DualRow>,
    pub questions: Vec<QuestionRow>,
    pub profile_action: Vec<ProfileRow>,
    pub profile_scene: Vec<ProfileRow>,
    pub meta: RunMeta,
}

impl EvalReport {
    pub fn new(
        outcome: EvalOutcome,
        profile_action: Vec<ProfileRow>,
        profile_scene: Vec<ProfileRow>,
        mut meta: RunMeta,
    ) -> Self {
        meta.invalid_answers = outcome.invalid_answers as u64;
        EvalReport { dual: outcome.dual, questions: outcome.questions, profile_action, profile_scene, meta }
    }

    /// Pooled dual accuracy over the hallucination-prone regimes (everything
    /// except `usual`), weighted by cell size. This is the experiment's
    /// headline number.
    pub fn halluc_regimes_dual_mean(&self) -> f64 {
        let mut hits = 0.0;
        let mut n = 0usize;
        for row in &self.dual {
            if row.regime == Regime::Usual {
                continue;
            }
            hits += row.dual_acc * row.n as f64;
            n += row.n;
        }
        if n == 0 {
            0.0
        } else {
            hits / n as f64
        }
    }

    /// Dual accuracy of one (regime, category) cell.
    pub fn dual_cell(&self, regime: Regime, category: QuestionCategory) -> Option<&DualRow> {
        self.dual.iter().find(|r| r.regime == regime && r.category == category)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut report = String::from("regime,category,dual_acc,n\n");
        for row in &self.dual {
            report.push_str(&format!(
                "{},{},{},{}\n",
                row.regime.as_str(),
                row.category.as_str(),
                row.dual_acc,
                row.n
            ));
        }
        fs::write(dir.join(REPORT_FILE), report)?;

        let mut questions = String::from("regime,category,kind,acc,n\n");
        for row in &self.questions {
            questions.push_str(&format!(
                "{},{},{},{},{}\n",
                row.regime.as_str(),
                row.category.as_str(),
                row.kind.as_str(),
                row.acc,
                row.n
            ));
        }
        fs::write(dir.join(QUESTIONS_FILE), questions)?;

        fs::write(dir.join(PROFILE_ACTION_FILE), profile_csv(&self.profile_action))?;
        fs::write(dir.join(PROFILE_SCENE_FILE), profile_csv(&self.profile_scene))?;

        let meta = format!(
            "key,value\nconfig_hash,{:016x}\nseed,{}\nrevision,{}\ninvalid_answers,{}\n",
            self.meta.config_hash, self.meta.seed, self.meta.revision, self.meta.invalid_answers
        );
        fs::write(dir.join(META_FILE), meta)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let report = fs::read_to_string(dir.join(REPORT_FILE))?;
        let mut dual = Vec::new();
        for fields in parse_csv(&report, &["regime", "category", "dual_acc", "n"])? {
            dual.push(DualRow {
                regime: Regime::parse(&fields[0])?,
                category: QuestionCategory::parse(&fields[1])?,
                dual_acc: parse_f64(&fields[2])?,
                n: parse_usize(&fields[3])?,
            });
        }
        let questions_text = fs::read_to_string(dir.join(QUESTIONS_FILE))?;
        let mut questions = Vec::new();
        for fields in parse_csv(&questions_text, &["regime", "category", "kind", "acc", "n"])? {
            questions.push(QuestionRow {
                regime: Regime::parse(&fields[0])?,
                category: QuestionCategory::parse(&fields[1])?,
                kind: QaKind::parse(&fields[2])?,
                acc: parse_f64(&fields[3])?,
                n: parse_usize(&fields[4])?,
            });
        }
        let profile_action = read_profile(&fs::read_to_string(dir.join(PROFILE_ACTION_FILE))?)?;
        let profile_scene = read_profile(&fs::read_to_string(dir.join(PROFILE_SCENE_FILE))?)?;

        let meta_text = fs::read_to_string(dir.join(META_FILE))?;
        let mut config_hash = None;
        let mut seed = None;
        let mut revision = None;
        let mut invalid_answers = None;
        for fields in parse_csv(&meta_text, &["key", "value"])? {
            match fields[0].as_str() {
                "config_hash" => {
                    config_hash = Some(u64::from_str_radix(&fields[1], 16).map_err(|e| {
                        Error::Report(format!("bad config_hash '{}': {e}", fields[1]))
                    })?)
                }
                "seed" => seed = Some(parse_u64(&fields[1])?),
                "revision" => revision = Some(fields[1].clone()),
                "invalid_answers" => invalid_answers = Some(parse_u64(&fields[1])?),
                other => return Err(Error::Report(format!("unknown meta key '{other}'"))),
            }
        }
        let meta = RunMeta {
            config_hash: config_hash.ok_or_else(|| Error::Report("meta missing config_hash".into()))?,
            seed: seed.ok_or_else(|| Error::Report("meta missing seed".into()))?,
            revision: revision.ok_or_else(|| Error::Report("meta missing revision".into()))?,
            invalid_answers: invalid_answers
                .ok_or_else(|| Error::Report("meta missing invalid_answers".into()))?,
        };
        Ok(EvalReport { dual, questions, profile_action, profile_scene, meta })
    }
}

fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("layer,head,block,mass\n");
    for row in rows {
        out.push_str(&format!("{},{},{},{}\n", row.layer, row.head, row.block.as_str(), row.mass));
    }
    out
}

fn read_profile(text: &str) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    for fields in parse_csv(text, &["layer", "head", "block", "mass"])? {
        rows.push(ProfileRow {
            layer: parse_usize(&fields[0])?,
            head: parse_usize(&fields[1])?,
            block: BlockType::parse(&fields[2])?,
            mass: parse_f64(&fields[3])?,
        });
    }
    Ok(rows)
}

/// Strict CSV: exact header, fixed field count, no quoting or escapes.
fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Report("empty CSV".into()))?;
    let expect = header.join(",");
    if first != expect {
        return Err(Error::Report(format!("bad CSV header: got '{first}', want '{expect}'")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
        if fields.len() != header.len() {
            return Err(Error::Report(format!(
                "CSV row {} has {} fields, want {}",
                i + 2,
                fields.len(),
                header.len()
            )));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Report(format!("bad float '{s}': {e}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse::<u64>().map_err(|e| Error::Report(format!("bad integer '{s}': {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>().map_err(|e| Error::Report(format!("bad integer '{s}': {e}")))
}
