use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("distributions have different lengths ({left} vs {right})")]
pub struct DivergenceError {
    pub left: usize,
    pub right: usize,
}

fn check(p: &[f64], q: &[f64]) -> Result<(), DivergenceError> {
    if p.len() == q.len() {
        Ok(())
    } else {
        Err(DivergenceError {
            left: p.len(),
            right: q.len(),
        })
    }
}

/// `(1/2) Σ |p_i - q_i|`.
pub fn tv_divergence(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    check(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `Σ p_i ln(p_i / q_i)`; `+inf` if `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    check(p, q)?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can push a zero divergence slightly negative.
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_divergence(&[0.3, 0.7], &[0.3, 0.7]), Ok(0.0));
        assert_eq!(tv_divergence(&[1.0, 0.0], &[0.5, 0.5]), Ok(0.5));
        assert_eq!(tv_divergence(&[1.0, 0.0], &[0.0, 1.0]), Ok(1.0));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), Ok(0.0));
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_divergence(&[1.0, 0.0], &[0.0, 1.0]), Ok(f64::INFINITY));
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            tv_divergence(&[1.0], &[0.5, 0.5]),
            Err(DivergenceError { left: 1, right: 2 })
        );
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }
}
