use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::agent::{QType, Query, Tier, WindowLocator};
use crate::error::{Error, Result};
use crate::signal::Dataset;

fn de_answer<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::String(s) => s,
        Value::Bool(b) => crate::agent::yes_no(b).to_string(),
        other => other.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub dataset: Dataset,
    pub tier: Tier,
    pub qtype: QType,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(deserialize_with = "de_answer")]
    pub answer: String,
    pub target: String,
    pub locator: WindowLocator,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::DataIntegrity(format!("example {}: {m}", self.id)));
        match self.qtype {
            QType::SingleVerify if !matches!(normalize(&self.answer).as_str(), "yes" | "no") => {
                bad("verify answer must be yes or no")
            }
            QType::SingleChoose => match &self.options {
                Some(o) if o.iter().any(|x| normalize(x) == normalize(&self.answer)) => Ok(()),
                _ => bad("choose answer must be one of the options"),
            },
            _ => Ok(()),
        }
    }

    pub fn to_query(&self) -> Query {
        Query {
            text: self.question.clone(),
            locator: Some(self.locator.clone()),
            tier: Some(self.tier),
            qtype: Some(self.qtype),
            options: self.options.clone(),
            target: Some(self.target.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(deserialize_with = "de_answer")]
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            abs_tol: 2.0,
            rel_tol: 0.05,
        }
    }
}

fn normalize(s: &str) -> String {
    s.trim()
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// First number in the text, if any.
pub fn parse_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let start = bytes
        .iter()
        .enumerate()
        .position(|(i, b)| b.is_ascii_digit() || (*b == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)))?;
    let mut end = start + 1;
    let mut seen_dot = false;
    while end < bytes.len() {
        match bytes[end] {
            b'0'..=b'9' => {}
            b'.' if !seen_dot && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) => seen_dot = true,
            _ => break,
        }
        end += 1;
    }
    s[start..end].parse().ok()
}

fn first_word(s: &str) -> String {
    normalize(s)
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
        .unwrap_or_default()
        .to_string()
}

/// Whether `predicted` matches `gold` under the rules for `qtype`.
pub fn answer_matches(qtype: QType, gold: &str, predicted: &str, cfg: &ScoreConfig) -> bool {
    match qtype {
        QType::SingleVerify => {
            let p = first_word(predicted);
            matches!(p.as_str(), "yes" | "no") && p == normalize(gold)
        }
        QType::SingleChoose => normalize(predicted) == normalize(gold),
        QType::SingleQuery => match parse_number(gold) {
            Some(g) => parse_number(predicted).is_some_and(|p| (p - g).abs() <= cfg.abs_tol.max(cfg.rel_tol * g.abs())),
            None => normalize(predicted) == normalize(gold),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub tier: Tier,
    pub qtype: QType,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub by_cell: Vec<CellScore>,
    pub incorrect_ids: Vec<String>,
    pub config: ScoreConfig,
}

fn ratio(c: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        c as f64 / n as f64
    }
}

/// Requires exactly one prediction per example id.
pub fn score_qa(examples: &[QAExample], predictions: &[Prediction], cfg: &ScoreConfig) -> Result<QaReport> {
    let mut pred: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if pred.insert(&p.id, &p.answer).is_some() {
            return Err(Error::DataIntegrity(format!("duplicate prediction for {}", p.id)));
        }
    }
    let mut seen = HashMap::with_capacity(examples.len());
    for e in examples {
        if seen.insert(e.id.as_str(), ()).is_some() {
            return Err(Error::DataIntegrity(format!("duplicate example id {}", e.id)));
        }
        if !pred.contains_key(e.id.as_str()) {
            return Err(Error::DataIntegrity(format!("no prediction for example {}", e.id)));
        }
    }
    if let Some(extra) = predictions.iter().find(|p| !seen.contains_key(p.id.as_str())) {
        return Err(Error::DataIntegrity(format!(
            "prediction {} matches no example",
            extra.id
        )));
    }

    let mut cells: BTreeMap<(Tier, QType), (usize, usize)> = BTreeMap::new();
    let mut incorrect = Vec::new();
    let mut correct = 0;
    for e in examples {
        let ok = answer_matches(e.qtype, &e.answer, pred[e.id.as_str()], cfg);
        let c = cells.entry((e.tier, e.qtype)).or_default();
        c.1 += 1;
        if ok {
            c.0 += 1;
            correct += 1;
        } else {
            incorrect.push(e.id.clone());
        }
    }
    Ok(QaReport {
        correct,
        total: examples.len(),
        accuracy: ratio(correct, examples.len()),
        by_cell: cells
            .into_iter()
            .map(|((tier, qtype), (c, n))| CellScore {
                tier,
                qtype,
                correct: c,
                total: n,
                accuracy: ratio(c, n),
            })
            .collect(),
        incorrect_ids: incorrect,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, qtype: QType, answer: &str) -> QAExample {
        QAExample {
            id: id.into(),
            dataset: Dataset::Synthetic,
            tier: Tier::A,
            qtype,
            question: "q".into(),
            options: (qtype == QType::SingleChoose).then(|| vec!["often".into(), "occasionally".into()]),
            answer: answer.into(),
            target: "hr_bpm".into(),
            locator: WindowLocator {
                dataset: Dataset::Synthetic,
                patient_id: "p".into(),
                window_start_s: 0.0,
                window_end_s: 10.0,
            },
        }
    }

    fn pred(id: &str, a: &str) -> Prediction {
        Prediction {
            id: id.into(),
            answer: a.into(),
        }
    }

    #[test]
    fn tolerance_rule() {
        let c = ScoreConfig::default();
        assert!(answer_matches(QType::SingleQuery, "72", "73 bpm", &c));
        assert!(!answer_matches(QType::SingleQuery, "72", "76 bpm", &c));
        assert!(!answer_matches(QType::SingleQuery, "72", "about seventy", &c));
        assert!(answer_matches(QType::SingleQuery, "200", "209", &c));
        assert!(answer_matches(QType::SingleVerify, "yes", " Yes.", &c));
        assert!(!answer_matches(QType::SingleVerify, "yes", "no", &c));
        assert!(answer_matches(QType::SingleChoose, "often", "Often", &c));
        assert!(answer_matches(QType::SingleQuery, "N", "n", &c));
    }

    #[test]
    fn number_parsing() {
        assert_eq!(parse_number("HR: -3.5 bpm"), Some(-3.5));
        assert_eq!(parse_number("72."), Some(72.0));
        assert_eq!(parse_number("none"), None);
    }

    #[test]
    fn constant_no_on_balanced_verify() {
        let exs: Vec<QAExample> = (0..10)
            .map(|i| {
                ex(
                    &i.to_string(),
                    QType::SingleVerify,
                    if i % 2 == 0 { "yes" } else { "no" },
                )
            })
            .collect();
        let preds: Vec<Prediction> = exs.iter().map(|e| pred(&e.id, "no")).collect();
        let r = score_qa(&exs, &preds, &ScoreConfig::default()).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.by_cell.len(), 1);
    }

    #[test]
    fn id_mismatch_is_an_error() {
        let exs = vec![ex("a", QType::SingleQuery, "72")];
        assert!(score_qa(&exs, &[pred("b", "72")], &ScoreConfig::default()).is_err());
        assert!(score_qa(&exs, &[pred("a", "1"), pred("a", "2")], &ScoreConfig::default()).is_err());
    }

    #[test]
    fn example_validation_and_numeric_answers() {
        assert!(ex("a", QType::SingleVerify, "maybe").validate().is_err());
        assert!(ex("a", QType::SingleChoose, "never").validate().is_err());
        assert!(ex("a", QType::SingleChoose, "often").validate().is_ok());
        let j = r#"{"id":"x","dataset":"wesad","tier":"B","qtype":"single_query","question":"q","answer":72,
            "target":"hr_bpm","locator":{"dataset":"wesad","patient_id":"p","window_start_s":0,"window_end_s":10}}"#;
        let e: QAExample = serde_json::from_str(j).unwrap();
        assert_eq!(e.answer, "72");
    }
}
