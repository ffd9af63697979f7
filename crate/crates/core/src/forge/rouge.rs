//! ROUGE-L over lowercase alphanumeric tokens.

/// Lowercase tokens split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Length of a longest common subsequence, in O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// Balanced F-measure of LCS precision (against `b`) and recall (against `a`).
pub fn rouge_l_tokens(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let l = lcs_len(a, b) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / b.len() as f64;
    let r = l / a.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_l(a: &str, b: &str) -> f64 {
    rouge_l_tokens(&tokenize(a), &tokenize(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Longest common subsequence by enumerating every subsequence of the
    /// shorter list; only usable for short inputs.
    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let is_subseq = |s: &[u8]| {
            let mut it = long.iter();
            s.iter().all(|x| it.any(|y| y == x))
        };
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let n = mask.count_ones() as usize;
            if n <= best {
                continue;
            }
            let sub: Vec<u8> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| short[i]).collect();
            if is_subseq(&sub) {
                best = n;
            }
        }
        best
    }

    #[test]
    fn cat_sentences() {
        let s = rouge_l("the cat sat on the mat", "the cat lay on the mat");
        assert!((s - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(rouge_l("Alpha beta, gamma!", "alpha BETA gamma"), 1.0);
        assert_eq!(rouge_l("alpha beta", "gamma delta"), 0.0);
        assert_eq!(rouge_l("", "alpha"), 0.0);
        assert_eq!(rouge_l("...", "..."), 0.0);
    }

    #[test]
    fn unequal_lengths() {
        // LCS 2, P = 2/2, R = 2/4
        let s = rouge_l("a b c d", "b d");
        assert!((s - 2.0 * 1.0 * 0.5 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Dr. Smith's PHI (e.g., name)"), ["dr", "smith", "s", "phi", "e", "g", "name"]);
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in prop::collection::vec(0u8..4, 0..12), b in prop::collection::vec(0u8..4, 0..12)) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn symmetric_and_bounded(a in "[a-c ]{0,30}", b in "[a-c ]{0,30}") {
            let ab = rouge_l(&a, &b);
            prop_assert!((ab - rouge_l(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            if !tokenize(&a).is_empty() {
                prop_assert_eq!(rouge_l(&a, &a), 1.0);
            }
        }
    }
}
