//! Least-squares projection onto non-increasing sequences (pool adjacent
//! violators).

pub fn non_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, size); adjacent blocks must satisfy mean[i] >= mean[i+1]
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn already_monotone_is_unchanged() {
        let v = [1.0, 0.8, 0.8, 0.1];
        assert_eq!(non_increasing(&v), v.to_vec());
    }

    #[test]
    fn pools_a_violation() {
        assert_eq!(non_increasing(&[1.0, 0.5, 0.7, 0.2]), vec![1.0, 0.6, 0.6, 0.2]);
        assert_eq!(non_increasing(&[0.0, 1.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_mean_preserving(v in prop::collection::vec(-1.0f64..2.0, 1..60)) {
            let p = non_increasing(&v);
            prop_assert_eq!(p.len(), v.len());
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            let s1: f64 = v.iter().sum();
            let s2: f64 = p.iter().sum();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }
    }
}
