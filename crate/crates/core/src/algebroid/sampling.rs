const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

/// The `index`-th point of the Halton sequence in `[0,1)^dim`.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "halton sequence supports at most 32 dimensions"
    );
    PRIMES[..dim]
        .iter()
        .map(|&p| {
            let p = p as usize;
            let mut i = index;
            let mut f = 1.0;
            let mut r = 0.0;
            while i > 0 {
                f /= p as f64;
                r += f * (i % p) as f64;
                i /= p;
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points_match_radical_inverse() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
    }
}
