//! Walk through the evaluation metrics: cosine similarity over answered
//! predictions, the coverage-weighted score, and the signed breakdown.

use finsent::{cosine_similarity, signed_breakdown, weighted_score, EvalReport, PredictionSet};

fn main() -> finsent::Result<()> {
    let gold = [0.5, -0.5, 1.0];
    let pred = [0.4, -0.6, 0.9];
    println!("cosine({:?}, {:?}) = {:.4}", gold, pred, cosine_similarity(&gold, &pred)?);

    // one unanswered instance scales the score by the answered fraction
    let set = PredictionSet {
        pairs: vec![(0.5, Some(0.4)), (-0.5, Some(-0.6)), (1.0, Some(0.9)), (0.2, None)],
    };
    println!("weighted score with 3/4 answered = {:.4}", weighted_score(&set)?);

    let (pos, neg) = signed_breakdown(&set)?;
    println!("cosine over predicted-positive: {:?}", pos);
    println!("cosine over predicted-negative: {:?}", neg);

    let report = EvalReport::compute(&set)?;
    print!("{}", report.to_tsv());
    Ok(())
}
