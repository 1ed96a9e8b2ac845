use crate::scalar::Scalar;

use super::SensingError;

/// In-place unnormalized Walsh–Hadamard transform (Sylvester ordering).
///
/// `H₂ = [[1, 1], [1, -1]]` and `H_{2d} = [[H_d, H_d], [H_d, -H_d]]`, so
/// applying the transform twice multiplies by the length.
pub fn fwht_in_place<T: Scalar>(v: &mut [T]) -> Result<(), SensingError> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(SensingError::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Entry `(row, col)` of the Sylvester–Hadamard matrix: `(-1)^{popcount(row & col)}`.
#[inline]
pub(crate) fn hadamard_entry(row: usize, col: usize) -> i8 {
    if (row & col).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sylvester(d: usize) -> Vec<Vec<f64>> {
        let mut h = vec![vec![1.0]];
        while h.len() < d {
            let n = h.len();
            let mut next = vec![vec![0.0; 2 * n]; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    next[i][j] = h[i][j];
                    next[i][j + n] = h[i][j];
                    next[i + n][j] = h[i][j];
                    next[i + n][j + n] = -h[i][j];
                }
            }
            h = next;
        }
        h
    }

    #[test]
    fn first_column_of_h2() {
        let mut v = [1.0, 0.0];
        fwht_in_place(&mut v).unwrap();
        assert_eq!(v, [1.0, 1.0]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut v = [1.0; 3];
        assert_eq!(fwht_in_place(&mut v), Err(SensingError::NotPowerOfTwo(3)));
        let mut e: [f64; 0] = [];
        assert!(fwht_in_place(&mut e).is_err());
    }

    #[test]
    fn entry_formula_matches_recursion() {
        let h = sylvester(32);
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(hadamard_entry(i, j) as f64, v);
            }
        }
    }

    #[test]
    fn dense_agreement_d16() {
        let h = sylvester(16);
        let x: Vec<f64> = (0..16).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let mut y = x.clone();
        fwht_in_place(&mut y).unwrap();
        for i in 0..16 {
            let expect: f64 = (0..16).map(|j| h[i][j] * x[j]).sum();
            assert!((y[i] - expect).abs() < 1e-12);
        }
    }
}
