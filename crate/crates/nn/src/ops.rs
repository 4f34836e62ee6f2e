use crate::NnError;

fn check_finite(values: &[f64]) -> Result<(), NnError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite)
    }
}

pub fn logsumexp(values: &[f64]) -> Result<f64, NnError> {
    check_finite(values)?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::Dimension {
            expected: 1,
            got: 0,
        });
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, NnError> {
    check_finite(logits)?;
    if logits.is_empty() {
        return Err(NnError::Dimension {
            expected: 1,
            got: 0,
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>, NnError> {
    let lse = logsumexp(logits)?;
    Ok(logits.iter().map(|v| v - lse).collect())
}
