use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    accuracy, flip_rate, true_accuracy, weak_flip_rate, MetricError, PairedEvalLog, ParsedRole,
    SelectionRecord,
};
use crate::perturb::{Setting, Severity};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    /// Items with a round-0 record in each setting.
    pub n_clean: usize,
    pub n_adversarial: usize,
    /// Items present in both settings.
    pub n_paired: usize,
    /// Items present in only one setting.
    pub unpaired: usize,
    /// |D+|: paired items answered correctly in the clean setting.
    pub clean_correct: usize,
    pub unparsable_clean: usize,
    pub unparsable_adversarial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub acc_clean: Option<f64>,
    pub acc_adv: Option<f64>,
    pub fr: Option<f64>,
    pub wfr: Option<f64>,
    pub t_acc: Option<f64>,
    pub counts: ReportCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc_clean: Option<f64>,
    pub acc_adv: Option<f64>,
    pub fr: Option<f64>,
    pub wfr: Option<f64>,
    pub t_acc: Option<f64>,
    pub counts: ReportCounts,
    pub by_severity: BTreeMap<Severity, SeverityReport>,
}

fn summarize(records: &[SelectionRecord]) -> Result<SeverityReport, MetricError> {
    let paired = PairedEvalLog::build(records);
    let round0 = |s: Setting| {
        let mut seen = std::collections::HashSet::new();
        records
            .iter()
            .filter(|r| r.setting == s && r.round == 0 && seen.insert(r.item_id.as_str()))
            .map(|r| r.parsed_role)
            .collect::<Vec<_>>()
    };
    let (clean, adv) = (round0(Setting::Clean), round0(Setting::Adversarial));
    let unparsable = |v: &[ParsedRole]| v.iter().filter(|r| **r == ParsedRole::Unparsable).count();
    // T-Acc only applies to logs that were run with rotated rounds.
    let has_rounds = records
        .iter()
        .any(|r| r.setting == Setting::Adversarial && r.round > 0);
    let t_acc = if has_rounds {
        true_accuracy(records, Setting::Adversarial)?
    } else {
        None
    };
    Ok(SeverityReport {
        acc_clean: accuracy(records, Setting::Clean),
        acc_adv: accuracy(records, Setting::Adversarial),
        fr: flip_rate(&paired),
        wfr: weak_flip_rate(&paired),
        t_acc,
        counts: ReportCounts {
            n_clean: clean.len(),
            n_adversarial: adv.len(),
            n_paired: paired.items.len(),
            unpaired: paired.unpaired,
            clean_correct: paired.clean_correct().count(),
            unparsable_clean: unparsable(&clean),
            unparsable_adversarial: unparsable(&adv),
        },
    })
}

/// Overall and per-severity metrics for a combined clean + adversarial log.
pub fn build_report(records: &[SelectionRecord]) -> Result<MetricReport, MetricError> {
    let overall = summarize(records)?;
    let mut groups: BTreeMap<Severity, Vec<SelectionRecord>> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.severity {
            groups.entry(s).or_default().push(r.clone());
        }
    }
    let by_severity = groups
        .into_iter()
        .map(|(s, rs)| summarize(&rs).map(|rep| (s, rep)))
        .collect::<Result<_, _>>()?;
    Ok(MetricReport {
        acc_clean: overall.acc_clean,
        acc_adv: overall.acc_adv,
        fr: overall.fr,
        wfr: overall.wfr,
        t_acc: overall.t_acc,
        counts: overall.counts,
        by_severity,
    })
}

impl MetricReport {
    fn rows(&self) -> Vec<(String, SeverityReport)> {
        let mut rows: Vec<(String, SeverityReport)> = self
            .by_severity
            .iter()
            .map(|(s, r)| (s.as_str().to_string(), r.clone()))
            .collect();
        rows.push((
            "all".into(),
            SeverityReport {
                acc_clean: self.acc_clean,
                acc_adv: self.acc_adv,
                fr: self.fr,
                wfr: self.wfr,
                t_acc: self.t_acc,
                counts: self.counts.clone(),
            },
        ));
        rows
    }

    /// One CSV row per severity class plus an `all` row. Undefined metrics are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "severity", "acc_clean", "acc_adv", "fr", "wfr", "t_acc", "n_paired", "clean_correct",
            "unparsable_clean", "unparsable_adversarial",
        ])?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for (name, r) in self.rows() {
            w.write_record([
                name,
                cell(r.acc_clean),
                cell(r.acc_adv),
                cell(r.fr),
                cell(r.wfr),
                cell(r.t_acc),
                r.counts.n_paired.to_string(),
                r.counts.clean_correct.to_string(),
                r.counts.unparsable_clean.to_string(),
                r.counts.unparsable_adversarial.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `(label, acc_adv, fr, wfr)` per severity class, for plotting.
    pub fn severity_bars(&self) -> Vec<(String, [Option<f64>; 3])> {
        self.by_severity
            .iter()
            .map(|(s, r)| (s.as_str().to_string(), [r.acc_adv, r.fr, r.wfr]))
            .collect()
    }
}
