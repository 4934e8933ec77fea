//! Evaluation report: per-task scores, family means, overall score and the
//! configuration that produced them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::StructuralVariant;
use crate::embed_io::PromptMode;
use crate::metrics::{family_means, overall_score};
use crate::taskgen::{TaskFamily, TaskId};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: TaskId,
    pub metric_name: String,
    pub value: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyScores {
    pub retrieval: Option<f64>,
    pub paraphrase: Option<f64>,
    pub classification: Option<f64>,
    pub clustering: Option<f64>,
}

impl FamilyScores {
    pub fn get(&self, f: TaskFamily) -> Option<f64> {
        match f {
            TaskFamily::Retrieval => self.retrieval,
            TaskFamily::Paraphrase => self.paraphrase,
            TaskFamily::Classification => self.classification,
            TaskFamily::Clustering => self.clustering,
        }
    }
}

/// Everything that determines the numbers in a report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub toolkit_version: String,
    pub provider: String,
    pub prompt_mode: PromptMode,
    pub seed: u64,
    pub variant: StructuralVariant,
    pub layer_cap: Option<usize>,
    pub truncate_dim: Option<usize>,
    pub corpus_hash: String,
    /// SHA-256 over the evaluated task records.
    pub tasks_hash: String,
    pub probe_seed: u64,
    pub kmeans_seed: u64,
}

/// Wall-clock measurements, kept apart from the deterministic fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub embed_seconds: f64,
    pub texts: usize,
    /// Full-depth time per text divided by this run's time per text.
    pub speed_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskResult>,
    pub families: FamilyScores,
    pub overall_score: Option<f64>,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    /// Assembles a report; tasks are sorted into canonical order.
    pub fn new(mut tasks: Vec<TaskResult>, config: RunConfig) -> Self {
        tasks.sort_by_key(|t| t.task_id);
        let scores: Vec<(TaskId, f64)> = tasks.iter().map(|t| (t.task_id, t.value)).collect();
        let mut families = FamilyScores::default();
        for (f, v) in family_means(&scores) {
            match f {
                TaskFamily::Retrieval => families.retrieval = Some(v),
                TaskFamily::Paraphrase => families.paraphrase = Some(v),
                TaskFamily::Classification => families.classification = Some(v),
                TaskFamily::Clustering => families.clustering = Some(v),
            }
        }
        let values: Vec<f64> = tasks.iter().map(|t| t.value).collect();
        Self {
            tasks,
            families,
            overall_score: overall_score(&values).ok(),
            config,
            timing: None,
        }
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Header of the leaderboard CSV.
    pub fn leaderboard_header() -> Vec<String> {
        let mut h: Vec<String> = ["provider", "prompt_mode", "variant", "layer_cap", "truncate_dim"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(TaskId::ALL.iter().map(|t| t.name().to_string()));
        h.extend(TaskFamily::ALL.iter().map(|f| f.as_str().to_string()));
        h.push("overall".into());
        h
    }

    pub fn leaderboard_row(&self) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let opt = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
        let c = &self.config;
        let mut row = vec![
            c.provider.clone(),
            c.prompt_mode.to_string(),
            c.variant.to_string(),
            opt(c.layer_cap),
            opt(c.truncate_dim),
        ];
        row.extend(TaskId::ALL.iter().map(|&t| fmt(self.task(t).map(|r| r.value))));
        row.extend(TaskFamily::ALL.iter().map(|&f| fmt(self.families.get(f))));
        row.push(fmt(self.overall_score));
        row
    }

    /// Writes the header and this report's leaderboard row.
    pub fn write_leaderboard_csv(&self, path: &Path) -> Result<(), Error> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
        w.write_record(Self::leaderboard_header()).map_err(csv_err)?;
        w.write_record(self.leaderboard_row()).map_err(csv_err)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Human-readable table of the per-task scores.
    pub fn render_table(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{:<24} {:<10} {:>8} {:>8} {:>8}  flags", "task", "metric", "value", "n", "skipped")?;
        for t in &self.tasks {
            writeln!(
                out,
                "{:<24} {:<10} {:>8.4} {:>8} {:>8}  {}",
                t.task_id.name(),
                t.metric_name,
                t.value,
                t.n_evaluated,
                t.n_skipped,
                t.flags.join(",")
            )?;
        }
        for f in TaskFamily::ALL {
            if let Some(v) = self.families.get(f) {
                writeln!(out, "{:<24} {:>19.4}", f.as_str(), v)?;
            }
        }
        if let Some(o) = self.overall_score {
            writeln!(out, "{:<24} {:>19.4}", "overall", o)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(t: TaskId, v: f64) -> TaskResult {
        TaskResult {
            task_id: t,
            metric_name: t.metric_name().into(),
            value: v,
            n_evaluated: 1,
            n_skipped: 0,
            flags: vec![],
        }
    }

    #[test]
    fn aggregates_and_order() {
        let tasks: Vec<TaskResult> = TaskId::ALL.iter().rev().map(|&t| result(t, 0.5)).collect();
        let r = EvalReport::new(tasks, RunConfig::default());
        assert_eq!(r.tasks[0].task_id, TaskId::ALL[0]);
        assert_eq!(r.overall_score, Some(0.5));
        assert_eq!(r.families.clustering, Some(0.5));
        assert_eq!(r.leaderboard_row().len(), EvalReport::leaderboard_header().len());
    }

    #[test]
    fn partial_report_has_no_overall() {
        let r = EvalReport::new(vec![result(TaskId::ClassBloom, 1.0)], RunConfig::default());
        assert_eq!(r.overall_score, None);
        assert_eq!(r.families.classification, Some(1.0));
        assert_eq!(r.families.retrieval, None);
    }

    #[test]
    fn json_round_trip() {
        let r = EvalReport::new(vec![result(TaskId::RetrievalIn, 0.25)], RunConfig::default());
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
