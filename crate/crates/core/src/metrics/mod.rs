//! Sentence-level ROUGE-L and BLEU-4 on a shared tokenizer, plus report
//! aggregation. Scores are in [0, 1]; presentation layers multiply by 100.

mod report;

use std::collections::HashMap;

use unicode_general_category::{get_general_category, GeneralCategory};

pub use report::{aggregate_report, Aggregates, ExampleScores, MetricReport};

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Lowercase, split on Unicode whitespace, trim punctuation from both ends
/// of each token, drop empties.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(is_punctuation))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 between reference and hypothesis tokens.
pub fn rouge_l(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    if r.is_empty() || h.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&r, &h) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let recall = lcs / r.len() as f64;
    let precision = lcs / h.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU with clipped 1..4-gram precisions, uniform weights, and brevity
/// penalty `min(1, exp(1 - |ref|/|hyp|))`.
///
/// A zero match count for n >= 2 is smoothed to `1 / (total + 1)`; zero
/// unigram overlap scores 0.
pub fn bleu_4(reference: &str, hypothesis: &str) -> f64 {
    let r = tokenize(reference);
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let hyp_counts = ngram_counts(&h, n);
        let ref_counts = ngram_counts(&r, n);
        let matched: usize = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = h.len().saturating_sub(n - 1);
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += precision.ln();
    }
    let brevity = (1.0 - r.len() as f64 / h.len() as f64).exp().min(1.0);
    (brevity * (log_sum / 4.0).exp()).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("The cat, sat."), ["the", "cat", "sat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Bake at 95°F \u{2014} then wait!"),
            ["bake", "at", "95°f", "then", "wait"]
        );
        assert_eq!(tokenize("  «Quoted»\t(x) it's "), ["quoted", "x", "it's"]);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("a b c", "a b c"), 1.0);
        assert_eq!(rouge_l("a b c", ""), 0.0);
        let f = rouge_l("the cat sat on the mat", "the cat ate the mat");
        assert!((f - 8.0 / 11.0).abs() < 1e-15);
        assert!((f - 0.727_273).abs() < 1e-6);
    }

    #[test]
    fn bleu_examples() {
        let ten = "one two three four five six seven eight nine ten";
        assert_eq!(bleu_4(ten, ten), 1.0);
        assert_eq!(bleu_4("red green blue", "cyan magenta"), 0.0);
        assert_eq!(bleu_4("something", ""), 0.0);
        // mpmath reference with the same smoothing, tests/oracles/oracle.py
        let b = bleu_4("the cat sat on the mat", "the cat sat on mat");
        assert!((b - 0.578_930_067_467_409_8).abs() < 1e-9, "{b}");
    }

    #[test]
    fn short_identical_strings_score_one() {
        for s in ["a", "a b", "x y z"] {
            assert_eq!(bleu_4(s, s), 1.0);
        }
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec![
            "the", "Cat", "sat", "on", "MAT", "dog,", "ran.", "über", "naïve", "42",
        ]), 0..12)
        .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(a in sentence().prop_filter("non-empty", |s| !tokenize(s).is_empty())) {
            prop_assert_eq!(rouge_l(&a, &a), 1.0);
            prop_assert!((bleu_4(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn bounded_and_rouge_symmetric(a in sentence(), b in sentence()) {
            let r = rouge_l(&a, &b);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((r - rouge_l(&b, &a)).abs() < 1e-15);
            let bl = bleu_4(&a, &b);
            prop_assert!((0.0..=1.0).contains(&bl));
        }

        #[test]
        fn case_insensitive(a in sentence(), b in sentence()) {
            prop_assert_eq!(rouge_l(&a, &b), rouge_l(&a.to_uppercase(), &b.to_lowercase()));
            prop_assert_eq!(bleu_4(&a, &b), bleu_4(&a.to_lowercase(), &b.to_uppercase()));
        }

        #[test]
        fn appending_reference_stays_bounded(a in sentence().prop_filter("non-empty", |s| !tokenize(s).is_empty())) {
            let doubled = format!("{a} {a}");
            prop_assert!(bleu_4(&a, &doubled) <= 1.0);
        }
    }
}
