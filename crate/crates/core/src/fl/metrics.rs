//! Vector similarity measures.

use super::FlError;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64, FlError> {
    same_len(u, v)?;
    Ok(squared_distance(u, v).sqrt())
}

/// `u.v / (|u| |v|)`; undefined when either vector is zero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, FlError> {
    same_len(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(FlError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn same_len(u: &[f64], v: &[f64]) -> Result<(), FlError> {
    if u.len() != v.len() {
        return Err(FlError::Dimension {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let (u, v) = ([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(cosine_similarity(&u, &v).unwrap(), 0.0);
        assert!((euclidean_distance(&u, &v).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let w = [0.3, -1.2, 4.0];
        let twice: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let neg: Vec<f64> = w.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&w, &twice).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&w, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&w, &[0.0; 3]).unwrap_err(), FlError::ZeroVector);
        assert!(euclidean_distance(&w, &u).is_err());
    }
}
