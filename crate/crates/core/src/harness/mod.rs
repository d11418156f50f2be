//! Batch experiments: run a strategy over a record set, score every
//! answer, and aggregate per configuration.

mod manifest;
mod report;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use thiserror::Error;

use crate::chain::{Chain, PromptSet};
use crate::domain::{
    ChainConfig, ChainTrace, ConfigError, EvalScores, ExperimentReport, MeanScores, RecordResult, ReportRow,
    SlangRecord, Strategy,
};
use crate::gateway::Gateway;
use crate::metrics::score_result;

pub use manifest::{file_sha256, DatasetInfo, RunManifest};
pub use report::{emit_report, load_report_json, report_csv, report_json, ReportFormat};

/// Default temperature grid for `sweep-temp`.
pub const DEFAULT_TEMPERATURES: [f64; 4] = [0.1, 0.3, 0.5, 0.7];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("no records to run")]
    NoRecords,
    #[error("temperature list is empty")]
    NoTemperatures,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Applies `f` to every item on up to `workers` threads and returns the
/// results in input order.
pub fn for_each_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Report plus the traces behind it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub traces: Vec<ChainTrace>,
}

impl ExperimentRun {
    pub fn merge(&mut self, other: ExperimentRun) {
        self.report.merge(other.report);
        self.traces.extend(other.traces);
    }
}

/// Arithmetic means over `scores`; `None` when empty.
pub fn mean_scores(scores: &[&EvalScores]) -> Option<MeanScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&EvalScores) -> f64| scores.iter().map(|s| f(s)).sum::<f64>() / n;
    let embeds: Vec<f64> = scores.iter().filter_map(|s| s.embed_sim).collect();
    Some(MeanScores {
        rouge_precision: mean(|s| s.rouge_precision),
        rouge_recall: mean(|s| s.rouge_recall),
        rouge_f1: mean(|s| s.rouge_f1),
        embed_sim: (!embeds.is_empty()).then(|| embeds.iter().sum::<f64>() / embeds.len() as f64),
        embed_count: embeds.len(),
    })
}

/// Runs `config.strategy` over every record and aggregates one report row.
/// Failed records are listed with their error and left out of the means.
pub fn run_experiment(
    config: &ChainConfig,
    records: &[SlangRecord],
    prompts: &PromptSet,
    gateway: &Gateway,
) -> Result<ExperimentRun, HarnessError> {
    config.validate()?;
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let chain = Chain::new(gateway, prompts, config);
    let outcomes = for_each_ordered(records, gateway.max_in_flight(), |record| {
        let trace = chain.run(record);
        let scores = trace.is_success().then(|| score_result(&trace, record, gateway));
        (trace, scores)
    });

    let mut per_record = Vec::with_capacity(records.len());
    let mut traces = Vec::with_capacity(records.len());
    for (trace, scores) in outcomes {
        per_record.push(RecordResult {
            record_id: trace.record_id.clone(),
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            strategy: config.strategy,
            final_meaning: scores.as_ref().map(|_| trace.final_meaning.clone()),
            scores,
            error: trace.error.clone(),
        });
        traces.push(trace);
    }
    let ok: Vec<&EvalScores> = per_record.iter().filter_map(|r| r.scores.as_ref()).collect();
    let row = ReportRow {
        model_id: config.model_id.clone(),
        temperature: config.temperature,
        strategy: config.strategy,
        record_count: ok.len(),
        failed_count: records.len() - ok.len(),
        means: mean_scores(&ok),
    };
    Ok(ExperimentRun {
        report: ExperimentReport {
            rows: vec![row],
            per_record,
        },
        traces,
    })
}

/// One row per temperature, everything else held fixed.
pub fn sweep_temperature(
    base: &ChainConfig,
    temperatures: &[f64],
    records: &[SlangRecord],
    prompts: &PromptSet,
    gateway: &Gateway,
) -> Result<ExperimentRun, HarnessError> {
    if temperatures.is_empty() {
        return Err(HarnessError::NoTemperatures);
    }
    let mut run = ExperimentRun::default();
    for t in temperatures {
        run.merge(run_experiment(&base.with_temperature(*t), records, prompts, gateway)?);
    }
    Ok(run)
}

/// The baseline and the greedy chain over the same records, model and
/// temperature. Rows are ordered io, then greedy_cot.
pub fn compare_strategies(
    config: &ChainConfig,
    records: &[SlangRecord],
    prompts: &PromptSet,
    gateway: &Gateway,
) -> Result<ExperimentRun, HarnessError> {
    let mut run = run_experiment(&config.with_strategy(Strategy::Io), records, prompts, gateway)?;
    run.merge(run_experiment(
        &config.with_strategy(Strategy::GreedyCot),
        records,
        prompts,
        gateway,
    )?);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashingEmbedder, RetryPolicy, ScriptEntry, ScriptedChat, ScriptedEmbedder};
    use std::sync::Arc;

    #[test]
    fn ordered_fan_out() {
        let items: Vec<usize> = (0..100).collect();
        let out = for_each_ordered(&items, 8, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(for_each_ordered(&[] as &[usize], 4, |x| *x).is_empty());
    }

    fn thoughts(items: &[(&str, u8)]) -> String {
        let t: Vec<_> = items
            .iter()
            .map(|(s, n)| crate::domain::ScoredThought::new(*s, i64::from(*n)).unwrap())
            .collect();
        crate::chain::render_thoughts(&t)
    }

    fn conf(n: u8) -> String {
        format!(r#"{{"Your_Confidence_Score": {n}}}"#)
    }

    /// Script for one greedy chain on `word` ending at `answer`.
    fn cot_script(word: &str, answer: &str) -> Vec<ScriptEntry> {
        let ctx = format!("A: so {word}");
        vec![
            ScriptEntry::contains(
                format!("Example usage: {ctx}\n\nPlease explain the following word:\nWord: {word}\n\nBased on"),
                thoughts(&[("compliment", 8), ("insult", 2), ("drug", 1)]),
            ),
            ScriptEntry::contains(
                format!("Example usage: {ctx}\n\nAnd the most likely inferred category:\nInferred category: compliment\n\nBased"),
                thoughts(&[(answer, 9), ("other one", 5), ("other two", 2)]),
            ),
            ScriptEntry::contains(format!("Example usage: {ctx}\n\nAnd the most likely inferred category:\nInferred category: compliment\n\nAnd"), conf(9)),
            ScriptEntry::contains(format!("Example usage: {ctx}\n\nAnd the most likely inferred category:\nInferred category: compliment\n\nAnd"), conf(3)),
            ScriptEntry::contains(format!("Example usage: {ctx}\n\nAnd the most likely inferred category:\nInferred category: compliment\n\nAnd"), conf(1)),
        ]
    }

    fn rec(word: &str, meaning: &str) -> SlangRecord {
        SlangRecord::new(word, meaning, format!("A: so {word}"), None).unwrap()
    }

    fn gateway(entries: Vec<ScriptEntry>) -> Gateway {
        Gateway::new(Arc::new(ScriptedChat::new(entries)))
            .with_embedder(Arc::new(
                ScriptedEmbedder::new().with_fallback(HashingEmbedder::default()),
            ))
            .with_retry(RetryPolicy::immediate(0))
    }

    #[test]
    fn means_are_hand_averages() {
        let records = vec![rec("lit", "really exciting party"), rec("salty", "bitter or upset")];
        let mut script = cot_script("lit", "really exciting");
        script.extend(cot_script("salty", "upset about losing"));
        let gw = gateway(script);
        let run = run_experiment(&ChainConfig::default(), &records, &PromptSet::default(), &gw).unwrap();
        let row = &run.report.rows[0];
        assert_eq!(row.record_count, 2);
        // lit: lcs 2, p=2/2, r=2/3. salty: lcs 1 ("upset"), p=1/3, r=1/3.
        let (p1, r1) = (1.0, 2.0 / 3.0);
        let (p2, r2) = (1.0 / 3.0, 1.0 / 3.0);
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let m = row.means.as_ref().unwrap();
        assert!((m.rouge_precision - (p1 + p2) / 2.0).abs() < 1e-12);
        assert!((m.rouge_recall - (r1 + r2) / 2.0).abs() < 1e-12);
        assert!((m.rouge_f1 - (f(p1, r1) + f(p2, r2)) / 2.0).abs() < 1e-12);
        assert_eq!(m.embed_count, 2);
        assert_eq!(run.traces.len(), 2);
    }

    #[test]
    fn failures_are_excluded() {
        let records = vec![rec("lit", "really exciting party"), rec("salty", "bitter")];
        let gw = gateway(cot_script("lit", "really exciting"));
        let run = run_experiment(&ChainConfig::default(), &records, &PromptSet::default(), &gw).unwrap();
        let row = &run.report.rows[0];
        assert_eq!((row.record_count, row.failed_count), (1, 1));
        let ok = run.report.per_record[0].scores.as_ref().unwrap();
        assert_eq!(row.means.as_ref().unwrap().rouge_f1, ok.rouge_f1);
        assert!(run.report.per_record[1].error.is_some());
        assert!(run.report.per_record[1].scores.is_none());

        let gw = gateway(vec![]);
        let run = run_experiment(&ChainConfig::default(), &records[..1], &PromptSet::default(), &gw).unwrap();
        assert_eq!(run.report.rows[0].record_count, 0);
        assert!(run.report.rows[0].means.is_none());
    }

    #[test]
    fn sweep_rows_per_temperature() {
        let records = vec![rec("lit", "really exciting party")];
        let mut script = cot_script("lit", "really exciting");
        script.extend(cot_script("lit", "really exciting"));
        let gw = gateway(script);
        let base = ChainConfig::default();
        let run = sweep_temperature(&base, &[0.1, 0.3], &records, &PromptSet::default(), &gw).unwrap();
        assert_eq!(run.report.rows.len(), 2);
        assert_eq!(run.report.rows[0].temperature, 0.1);
        assert_eq!(run.report.rows[1].temperature, 0.3);
        assert_eq!(run.report.rows[0].means, run.report.rows[1].means);
        assert!(matches!(
            sweep_temperature(&base, &[], &records, &PromptSet::default(), &gw),
            Err(HarnessError::NoTemperatures)
        ));
    }

    #[test]
    fn single_temperature_sweep_equals_run() {
        let records = vec![rec("lit", "really exciting party")];
        let a = sweep_temperature(
            &ChainConfig::default(),
            &[0.3],
            &records,
            &PromptSet::default(),
            &gateway(cot_script("lit", "really exciting")),
        )
        .unwrap();
        let b = run_experiment(
            &ChainConfig::default(),
            &records,
            &PromptSet::default(),
            &gateway(cot_script("lit", "really exciting")),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors_abort() {
        let bad = ChainConfig {
            weight_prior: 0.5,
            ..ChainConfig::default()
        };
        let gw = gateway(vec![]);
        assert!(matches!(
            run_experiment(&bad, &[rec("a", "b")], &PromptSet::default(), &gw),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            run_experiment(&ChainConfig::default(), &[], &PromptSet::default(), &gw),
            Err(HarnessError::NoRecords)
        ));
    }

    #[test]
    fn compare_identical_answers_give_identical_rows() {
        let records = vec![rec("lit", "really exciting party")];
        let mut script = vec![ScriptEntry::contains("Answer with the meaning only", "really exciting")];
        script.extend(cot_script("lit", "really exciting"));
        let gw = gateway(script);
        let run = compare_strategies(&ChainConfig::default(), &records, &PromptSet::default(), &gw).unwrap();
        let (io, cot) = (&run.report.rows[0], &run.report.rows[1]);
        assert_eq!((io.strategy, cot.strategy), (Strategy::Io, Strategy::GreedyCot));
        assert_eq!(io.means, cot.means);
        assert_eq!(io.record_count, 1);
    }
}
