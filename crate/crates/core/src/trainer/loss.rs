use ndarray::Array2;

use super::TrainError;

/// Result of scoring one batch of question/answer embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossReport {
    /// Mean cross-entropy of each row's softmax at its diagonal entry.
    pub loss: f64,
    /// `S = Q · Aᵀ`.
    pub logits: Array2<f64>,
    /// Row-wise softmax of `logits`.
    pub probs: Array2<f64>,
    /// Rows whose diagonal entry is strictly larger than every other entry.
    pub diag_rank_hits: usize,
}

impl BatchLossReport {
    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }

    /// `∂loss/∂S = (P − I) / B`.
    pub fn logits_grad(&self) -> Array2<f64> {
        let b = self.batch_size();
        let mut g = self.probs.clone();
        for i in 0..b {
            g[[i, i]] -= 1.0;
        }
        g / b as f64
    }
}

/// In-batch softmax cross-entropy over dot-product logits: the answers of the
/// other rows in the batch act as negatives for each question.
pub fn batch_loss(
    questions: &Array2<f64>,
    answers: &Array2<f64>,
) -> Result<BatchLossReport, TrainError> {
    if questions.dim() != answers.dim() || questions.nrows() == 0 {
        return Err(TrainError::Shape(format!(
            "question batch {:?} and answer batch {:?} must share a nonempty shape",
            questions.dim(),
            answers.dim()
        )));
    }
    if questions
        .iter()
        .chain(answers.iter())
        .any(|v| !v.is_finite())
    {
        return Err(TrainError::NonFinite(
            "embedding batch contains NaN or infinity".into(),
        ));
    }
    let logits = questions.dot(&answers.t());
    let b = logits.nrows();
    let mut probs = logits.clone();
    let mut loss = 0.0;
    let mut hits = 0;
    for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let diag = row[i];
        if row.iter().enumerate().all(|(j, &v)| j == i || v < diag) {
            hits += 1;
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        // -log softmax_ii = log(sum) - (s_ii - max)
        loss += sum.ln() - (diag - max);
        row /= sum;
    }
    Ok(BatchLossReport {
        loss: loss / b as f64,
        logits,
        probs,
        diag_rank_hits: hits,
    })
}
