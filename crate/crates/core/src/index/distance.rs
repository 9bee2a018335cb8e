use super::IndexError;

fn check_len(a: &[f32], b: &[f32]) -> Result<(), IndexError> {
    if a.len() != b.len() {
        return Err(IndexError::DimMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

/// `√Σ(aᵢ − bᵢ)²`, accumulated in f64.
pub fn euclidean(a: &[f32], b: &[f32]) -> Result<f64, IndexError> {
    check_len(a, b)?;
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// `1 − a·b / (‖a‖‖b‖)`, clamped to `[0, 2]`. Errors if either vector is zero.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64, IndexError> {
    check_len(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0))
}
