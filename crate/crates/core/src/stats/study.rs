//! Study outcome table and the research-question analyses over it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{correlate, group_compare, Correlation, CorrelationMethod, PValueMethod, RankSumResult, StatsError};
use crate::metrics::ScoreSummary;

pub const STUDY_HEADER: [&str; 7] = [
    "participant",
    "gender",
    "condition",
    "pretest",
    "posttest",
    "rapport",
    "excluded",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl FromStr for Gender {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Gender::Female,
            "male" | "m" => Gender::Male,
            _ => Gender::Other,
        })
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRecord {
    pub participant_id: String,
    pub gender: Gender,
    pub condition: String,
    pub pretest: f64,
    pub posttest: f64,
    pub rapport: f64,
    pub excluded: bool,
}

/// Learning-gain formula.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Gain {
    /// posttest − pretest
    #[default]
    Raw,
    /// (posttest − pretest) / (max − pretest); undefined when pretest ≥ max.
    Normalized { max_score: f64 },
}

pub fn learning_gain(record: &StudyRecord, gain: Gain) -> Option<f64> {
    let raw = record.posttest - record.pretest;
    match gain {
        Gain::Raw => Some(raw),
        Gain::Normalized { max_score } => {
            let headroom = max_score - record.pretest;
            (headroom > 0.0).then(|| raw / headroom)
        }
    }
}

/// Reads the study table (tab- or comma-separated, header required).
pub fn parse_study_records(source: &str) -> Result<Vec<StudyRecord>, StatsError> {
    let first = source.lines().find(|l| !l.starts_with('#')).unwrap_or_default();
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| StatsError::StudyTable(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StatsError::StudyTable(format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = STUDY_HEADER.iter().map(|n| col(n)).collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| StatsError::StudyTable(e.to_string()))?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or_default();
        let number = |k: usize| -> Result<f64, StatsError> {
            field(k).parse().map_err(|_| {
                StatsError::StudyTable(format!(
                    "row {}: `{}` is not a number in column {}",
                    row + 2,
                    field(k),
                    STUDY_HEADER[k]
                ))
            })
        };
        let excluded = matches!(field(6).to_ascii_lowercase().as_str(), "true" | "1" | "yes");
        records.push(StudyRecord {
            participant_id: field(0).to_string(),
            gender: field(1).parse().expect("infallible"),
            condition: field(2).to_string(),
            pretest: number(3)?,
            posttest: number(4)?,
            rapport: number(5)?,
            excluded,
        });
    }
    Ok(records)
}

/// Outcome of one analysis; failures (e.g. too few rows) are reported, not
/// fatal to the whole report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Analysis<R> {
    Done(R),
    Failed { error: String },
}

impl<R> From<Result<R, StatsError>> for Analysis<R> {
    fn from(r: Result<R, StatsError>) -> Self {
        match r {
            Ok(v) => Analysis::Done(v),
            Err(e) => Analysis::Failed { error: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub method: CorrelationMethod,
    pub joined: usize,
    pub excluded: usize,
    pub unmatched_scorecards: Vec<String>,
    pub correlations: BTreeMap<String, Analysis<Correlation<f64>>>,
    pub gender_comparisons: BTreeMap<String, Analysis<RankSumResult<f64>>>,
}

/// Joins scores with outcomes by participant id and runs the analyses:
/// agreement and control against rapport and learning gain, control against
/// agreement, and both scores by gender (female vs male).
pub fn study_report(
    records: &[StudyRecord],
    scores: &[ScoreSummary],
    method: CorrelationMethod,
    gain: Gain,
    p_method: PValueMethod,
) -> StudyReport {
    let by_id: BTreeMap<&str, &StudyRecord> =
        records.iter().map(|r| (r.participant_id.as_str(), r)).collect();
    let mut unmatched = Vec::new();
    let mut excluded = 0;
    let mut rows: Vec<(&StudyRecord, &ScoreSummary)> = Vec::new();
    for s in scores {
        match by_id.get(s.participant.as_str()) {
            Some(r) if r.excluded => excluded += 1,
            Some(r) => rows.push((r, s)),
            None => unmatched.push(s.participant.clone()),
        }
    }

    type Pick = fn(&StudyRecord, &ScoreSummary, Gain) -> Option<f64>;
    let control: Pick = |_, s, _| s.control.map(|v| v.to_f64());
    let agreement: Pick = |_, s, _| s.agreement.map(|v| v.to_f64());
    let rapport: Pick = |r, _, _| Some(r.rapport);
    let gain_of: Pick = |r, _, g| learning_gain(r, g);

    let pairs: [(&str, Pick, Pick); 5] = [
        ("agreement~rapport", agreement, rapport),
        ("agreement~learning_gain", agreement, gain_of),
        ("control~rapport", control, rapport),
        ("control~learning_gain", control, gain_of),
        ("control~agreement", control, agreement),
    ];
    let mut correlations = BTreeMap::new();
    for (name, fx, fy) in pairs {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|(r, s)| Some((fx(r, s, gain)?, fy(r, s, gain)?)))
            .unzip();
        correlations.insert(name.to_string(), correlate(&x, &y, method, p_method).into());
    }

    let mut gender_comparisons = BTreeMap::new();
    for (name, f) in [("control~gender", control), ("agreement~gender", agreement)] {
        let (vals, labels): (Vec<f64>, Vec<Gender>) = rows
            .iter()
            .filter(|(r, _)| r.gender != Gender::Other)
            .filter_map(|(r, s)| Some((f(r, s, gain)?, r.gender)))
            .unzip();
        gender_comparisons.insert(name.to_string(), group_compare(&vals, &labels, p_method).into());
    }

    StudyReport {
        method,
        joined: rows.len(),
        excluded,
        unmatched_scorecards: unmatched,
        correlations,
        gender_comparisons,
    }
}

impl StudyReport {
    /// Plain-text table for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "participants joined: {}  excluded: {}  unmatched: {}\n\n",
            self.joined,
            self.excluded,
            self.unmatched_scorecards.len()
        );
        out.push_str(&format!("{:<26} {:>9} {:>4} {:>10}\n", "correlation", "coef", "n", "p"));
        for (name, a) in &self.correlations {
            match a {
                Analysis::Done(c) => out.push_str(&format!(
                    "{:<26} {:>9.4} {:>4} {:>10.4}\n",
                    name, c.coefficient, c.n, c.p_value
                )),
                Analysis::Failed { error } => out.push_str(&format!("{name:<26} {error}\n")),
            }
        }
        out.push_str(&format!(
            "\n{:<26} {:>9} {:>10} {:>10} {:>10}\n",
            "rank-sum", "U", "p", "median a", "median b"
        ));
        for (name, a) in &self.gender_comparisons {
            match a {
                Analysis::Done(r) => out.push_str(&format!(
                    "{:<26} {:>9.1} {:>10.4} {:>10.4} {:>10.4}  ({}={} vs {}={})\n",
                    name, r.statistic, r.p_value, r.median_a, r.median_b, r.group_a, r.n_a, r.group_b, r.n_b
                )),
                Analysis::Failed { error } => out.push_str(&format!("{name:<26} {error}\n")),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Score;

    const TABLE: &str = "# comment, with a comma\n\
        participant\tgender\tcondition\tpretest\tposttest\trapport\texcluded\n\
        1\tmale\tsocial\t3\t5\t4.0\tfalse\n\
        2\tfemale\tsocial\t2\t5\t4.5\tfalse\n\
        3\tfemale\tnon-social\t4\t4\t3.0\tfalse\n\
        4\tmale\tentrain\t1\t4\t3.5\tfalse\n\
        14\tfemale\tsocial\t1\t1\t1.0\ttrue\n";

    fn summary(p: &str, control: (u64, u64), agreement: (u64, u64)) -> ScoreSummary {
        ScoreSummary {
            participant: p.into(),
            gender: None,
            control: Some(Score::new(control.0, control.1)),
            agreement: Some(Score::new(agreement.0, agreement.1)),
            tutor_counts: None,
            tutee_counts: None,
            transaction_counts: None,
        }
    }

    #[test]
    fn parses_tsv_and_csv() {
        let recs = parse_study_records(TABLE).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs[1].gender, Gender::Female);
        assert!(recs[4].excluded);
        let csv = TABLE.replace('\t', ",");
        assert_eq!(parse_study_records(&csv).unwrap(), recs);
        assert!(parse_study_records("participant\tgender\n1\tmale\n").is_err());
    }

    #[test]
    fn gains() {
        let r = &parse_study_records(TABLE).unwrap()[0];
        assert_eq!(learning_gain(r, Gain::Raw), Some(2.0));
        assert_eq!(learning_gain(r, Gain::Normalized { max_score: 7.0 }), Some(0.5));
        assert_eq!(learning_gain(r, Gain::Normalized { max_score: 3.0 }), None);
    }

    #[test]
    fn report_joins_and_excludes() {
        let recs = parse_study_records(TABLE).unwrap();
        let scores = vec![
            summary("1", (7, 10), (6, 10)),
            summary("2", (8, 10), (7, 10)),
            summary("3", (5, 10), (4, 10)),
            summary("4", (6, 10), (6, 10)),
            summary("14", (1, 10), (1, 10)),
            summary("99", (1, 10), (1, 10)),
        ];
        let rep = study_report(&recs, &scores, CorrelationMethod::Pearson, Gain::Raw, PValueMethod::Asymptotic);
        assert_eq!(rep.joined, 4);
        assert_eq!(rep.excluded, 1);
        assert_eq!(rep.unmatched_scorecards, vec!["99".to_string()]);
        assert!(matches!(rep.correlations["control~agreement"], Analysis::Done(_)));
        assert!(matches!(rep.gender_comparisons["control~gender"], Analysis::Done(_)));
        assert!(rep.to_text().contains("control~agreement"));
    }
}
