//! Scoring harness: cosine similarity between gold and predicted score
//! vectors, the coverage-weighted final score, and the signed breakdown of
//! per-sign cosines.

use crate::error::{Error, Result};

/// Gold scores paired with optional predictions. A `None` prediction is an
/// unanswered instance.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub pairs: Vec<(f64, Option<f64>)>,
}

impl PredictionSet {
    pub fn from_answered(gold: &[f64], predicted: &[f64]) -> PredictionSet {
        assert_eq!(gold.len(), predicted.len());
        PredictionSet {
            pairs: gold.iter().zip(predicted).map(|(&g, &p)| (g, Some(p))).collect(),
        }
    }

    pub fn gold_total(&self) -> usize {
        self.pairs.len()
    }

    pub fn answered(&self) -> Vec<(f64, f64)> {
        self.pairs.iter().filter_map(|&(g, p)| p.map(|p| (g, p))).collect()
    }
}

/// cosine(G, P) = Σ GᵢPᵢ / (‖G‖·‖P‖).
pub fn cosine_similarity(gold: &[f64], predicted: &[f64]) -> Result<f64> {
    if gold.len() != predicted.len() || gold.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cosine similarity needs equal nonzero lengths, got {} and {}",
            gold.len(),
            predicted.len()
        )));
    }
    let dot: f64 = gold.iter().zip(predicted).map(|(g, p)| g * p).sum();
    let norm_g: f64 = gold.iter().map(|g| g * g).sum::<f64>().sqrt();
    let norm_p: f64 = predicted.iter().map(|p| p * p).sum::<f64>().sqrt();
    if norm_g == 0.0 || norm_p == 0.0 {
        return Err(Error::UndefinedSimilarity(format!(
            "zero-norm vector (‖G‖={}, ‖P‖={})",
            norm_g, norm_p
        )));
    }
    Ok(dot / (norm_g * norm_p))
}

/// Final score: (answered / |G|) × cosine over the answered pairs.
/// Zero answered pairs score 0 by convention.
pub fn weighted_score(preds: &PredictionSet) -> Result<f64> {
    let answered = preds.answered();
    if answered.is_empty() {
        eprintln!("warning: no answered instances, score is 0 by convention");
        return Ok(0.0);
    }
    let gold: Vec<f64> = answered.iter().map(|p| p.0).collect();
    let pred: Vec<f64> = answered.iter().map(|p| p.1).collect();
    let ratio = answered.len() as f64 / preds.gold_total() as f64;
    Ok(ratio * cosine_similarity(&gold, &pred)?)
}

/// Per-sign cosines, partitioned by the *predicted* value: predictions ≥ 0
/// form the positive group. An empty group reports `None`.
pub fn signed_breakdown(preds: &PredictionSet) -> Result<(Option<f64>, Option<f64>)> {
    let answered = preds.answered();
    let (pos, neg): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
        answered.into_iter().partition(|&(_, p)| p >= 0.0);
    let group_cosine = |group: &[(f64, f64)]| -> Result<Option<f64>> {
        if group.is_empty() {
            return Ok(None);
        }
        let gold: Vec<f64> = group.iter().map(|p| p.0).collect();
        let pred: Vec<f64> = group.iter().map(|p| p.1).collect();
        Ok(Some(cosine_similarity(&gold, &pred)?))
    };
    Ok((group_cosine(&pos)?, group_cosine(&neg)?))
}

/// Full evaluation report for a prediction set.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub cosine: f64,
    pub score: f64,
    pub cosine_positive: Option<f64>,
    pub cosine_negative: Option<f64>,
    pub n_answered: usize,
    pub n_gold: usize,
}

impl EvalReport {
    pub fn compute(preds: &PredictionSet) -> Result<EvalReport> {
        let answered = preds.answered();
        let gold: Vec<f64> = answered.iter().map(|p| p.0).collect();
        let pred: Vec<f64> = answered.iter().map(|p| p.1).collect();
        let cosine = cosine_similarity(&gold, &pred)?;
        let score = weighted_score(preds)?;
        let (cosine_positive, cosine_negative) = signed_breakdown(preds)?;
        Ok(EvalReport {
            cosine,
            score,
            cosine_positive,
            cosine_negative,
            n_answered: answered.len(),
            n_gold: preds.gold_total(),
        })
    }

    /// Tab-separated `metric<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let fmt_opt = |v: Option<f64>| match v {
            Some(v) => format!("{:.6}", v),
            None => "absent".to_string(),
        };
        format!(
            "cosine\t{:.6}\nscore\t{:.6}\ncosine_positive\t{}\ncosine_negative\t{}\nn_answered\t{}\nn_gold\t{}\n",
            self.cosine,
            self.score,
            fmt_opt(self.cosine_positive),
            fmt_opt(self.cosine_negative),
            self.n_answered,
            self.n_gold
        )
    }
}
