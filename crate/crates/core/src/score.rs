//! Scoring of manifest instances with any combination of metrics.

use rayon::prelude::*;

use crate::audit::ScoreRecord;
use crate::corpus::Instance;
use crate::embed::{clipscore, image_key, text_key, EmbeddingStore, HybridScore, HybridWeights};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::ngram::{bleu4, build_idf, cider_d, meteor, rouge_l, IdfTable};
use crate::tokenize::{tokenize, TokenSeq};

/// Scores captions against references and, for embedding metrics, images.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    idf: IdfTable,
    embeddings: Option<&'a EmbeddingStore>,
    weights: HybridWeights,
}

impl<'a> Scorer<'a> {
    pub fn new(idf: IdfTable, embeddings: Option<&'a EmbeddingStore>, weights: HybridWeights) -> Self {
        Scorer {
            idf,
            embeddings,
            weights,
        }
    }

    /// A scorer whose CIDEr-D statistics come from the manifest's own
    /// reference sets (one document per instance).
    pub fn for_manifest(instances: &[Instance], embeddings: Option<&'a EmbeddingStore>, weights: HybridWeights) -> Self {
        let corpus: Vec<Vec<TokenSeq>> = instances
            .iter()
            .map(|i| vec![tokenize(&i.triple.reference)])
            .collect();
        Scorer::new(build_idf(&corpus), embeddings, weights)
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    /// Errors with a configuration error when a requested metric needs
    /// embeddings and none were supplied.
    pub fn check_metrics(&self, metrics: &[Metric]) -> Result<()> {
        if let Some(m) = metrics.iter().find(|m| m.needs_embeddings()) {
            if self.embeddings.is_none() {
                return Err(Error::Config(format!("metric {m} requires an embedding store")));
            }
        }
        Ok(())
    }

    /// Score of `candidate` under `metric`. `references` must already be
    /// tokenized; `image_ref` is used only by embedding metrics.
    pub fn score(&self, metric: Metric, candidate: &str, references: &[TokenSeq], image_ref: &str) -> Result<f64> {
        let cand = tokenize(candidate);
        let value = match metric {
            Metric::Bleu4 => bleu4(&cand, references)?.value,
            Metric::RougeL => rouge_l(&cand, references)?.value,
            Metric::Meteor => meteor(&cand, references)?.value,
            Metric::CiderD => cider_d(&cand, references, &self.idf)?.value,
            Metric::ClipScore => self.clip(candidate, image_ref)?,
            Metric::Hybrid => {
                let clip = self.clip(candidate, image_ref)?;
                let cider = cider_d(&cand, references, &self.idf)?.value;
                HybridScore::weighted(clip, cider, self.weights).total
            }
        };
        Ok(value)
    }

    fn clip(&self, caption: &str, image_ref: &str) -> Result<f64> {
        let store = self
            .embeddings
            .ok_or_else(|| Error::Config("CLIPScore requires an embedding store".into()))?;
        let text = store
            .text(caption)
            .ok_or_else(|| Error::Config(format!("no embedding for {:?}", text_key(caption))))?;
        let image = store
            .image(image_ref)
            .ok_or_else(|| Error::Config(format!("no embedding for {:?}", image_key(image_ref))))?;
        Ok(clipscore(text, image)?.value)
    }

    /// Scores the good and bad caption of one instance.
    pub fn score_instance(&self, instance: &Instance, metric: Metric) -> Result<ScoreRecord> {
        let refs = [tokenize(&instance.triple.reference)];
        let good = self.score(metric, &instance.triple.good, &refs, &instance.image_ref)?;
        let bad = self.score(metric, &instance.triple.bad, &refs, &instance.image_ref)?;
        ScoreRecord::new(instance.id.clone(), metric, good, bad)
    }
}

/// Scores every instance under every metric, in parallel.
///
/// Output order is manifest order, then `metrics` order, independent of the
/// number of threads.
pub fn score_instances(scorer: &Scorer<'_>, instances: &[Instance], metrics: &[Metric]) -> Result<Vec<ScoreRecord>> {
    scorer.check_metrics(metrics)?;
    let nested: Vec<Vec<ScoreRecord>> = instances
        .par_iter()
        .map(|inst| metrics.iter().map(|&m| scorer.score_instance(inst, m)).collect())
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}
