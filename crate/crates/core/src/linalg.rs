//! Small dense-vector helpers. Hidden dimensions in this toolkit are a few
//! thousand at most, so plain `Vec<f64>` beats pulling in an array crate.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity. Returns `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

/// `v + alpha * w`, element-wise.
pub fn axpy(v: &[f64], alpha: f64, w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), w.len());
    v.iter().zip(w).map(|(x, y)| x + alpha * y).collect()
}

pub fn scale(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
