use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The metrics this crate can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "bleu4")]
    Bleu4,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "ciderD")]
    CiderD,
    #[serde(rename = "meteor")]
    Meteor,
    #[serde(rename = "clipscore")]
    ClipScore,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Bleu4,
        Metric::RougeL,
        Metric::CiderD,
        Metric::Meteor,
        Metric::ClipScore,
        Metric::Hybrid,
    ];

    pub const NGRAM: [Metric; 4] = [Metric::Bleu4, Metric::RougeL, Metric::CiderD, Metric::Meteor];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu4 => "bleu4",
            Metric::RougeL => "rougeL",
            Metric::CiderD => "ciderD",
            Metric::Meteor => "meteor",
            Metric::ClipScore => "clipscore",
            Metric::Hybrid => "hybrid",
        }
    }

    /// Display name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Bleu4 => "BLEU-4",
            Metric::RougeL => "ROUGE-L",
            Metric::CiderD => "CIDEr-D",
            Metric::Meteor => "METEOR",
            Metric::ClipScore => "CLIPScore",
            Metric::Hybrid => "CLIPScore+CIDEr",
        }
    }

    /// Inclusive upper bound of the metric's range (lower bound is 0).
    pub fn upper_bound(self) -> f64 {
        match self {
            Metric::Bleu4 | Metric::RougeL | Metric::Meteor => 1.0,
            Metric::ClipScore => 2.5,
            Metric::CiderD => 10.0,
            Metric::Hybrid => 12.5,
        }
    }

    /// Whether scoring needs image and text embeddings.
    pub fn needs_embeddings(self) -> bool {
        matches!(self, Metric::ClipScore | Metric::Hybrid)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric {s:?}")))
    }
}

/// Parses a comma-separated metric list such as `bleu4,ciderD`.
pub fn parse_metric_list(s: &str) -> Result<Vec<Metric>> {
    let metrics: Vec<Metric> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if metrics.is_empty() {
        return Err(Error::InvalidInput("no metrics selected".into()));
    }
    Ok(metrics)
}

/// A score tagged with the metric that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
}

impl MetricScore {
    pub fn new(metric: Metric, value: f64) -> Self {
        MetricScore { metric, value }
    }

    pub fn in_range(&self) -> bool {
        self.value.is_finite() && (0.0..=self.metric.upper_bound()).contains(&self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        let ms = parse_metric_list("bleu4,rougeL,ciderD,meteor,clipscore,hybrid").unwrap();
        assert_eq!(ms, Metric::ALL.to_vec());
        assert!(parse_metric_list("bleu4,spice").is_err());
        assert!(parse_metric_list("").is_err());
    }

    #[test]
    fn serde_names_match_cli_names() {
        for m in Metric::ALL {
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
    }
}
