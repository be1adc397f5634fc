//! Lexicon sentiment scoring on a -4..=+4 scale.
//!
//! Each text gets a positive and a negative component in 1..=5 (the
//! strongest term of each kind, 1 when there is none) and the polarity is
//! their difference.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::textrank::tokenize;

pub const MIN_STRENGTH: u8 = 2;
pub const MAX_STRENGTH: u8 = 5;

const STARTER_LEXICON: &str = include_str!("../data/lexicon/starter.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    Positive(u8),
    Negative(u8),
    Negator,
    Booster(i8),
}

/// Sentiment terms, negators and boosters. A term belongs to exactly one of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Entry>,
    /// Duplicate-term notices produced while parsing.
    pub warnings: Vec<String>,
}

impl Lexicon {
    /// Parses `term<TAB>+N`/`-N` (N in 2..=5), `term<TAB>NEG` and
    /// `term<TAB>B+1`/`B-1` lines. Blank lines and `#` comments are skipped.
    /// A repeated term keeps its last definition.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| LexiconError::Parse { line, message };
            let (term, value) = raw
                .split_once('\t')
                .ok_or_else(|| err("expected `term<TAB>value`".into()))?;
            let term = term.trim().to_lowercase();
            let value = value.trim();
            if term.is_empty() {
                return Err(err("empty term".into()));
            }
            if tokenize(&term) != [term.as_str()] {
                return Err(err(format!("`{term}` is not a single token")));
            }
            let entry = match value {
                "NEG" => Entry::Negator,
                "B+1" => Entry::Booster(1),
                "B-1" => Entry::Booster(-1),
                _ => {
                    let (sign, digits) =
                        value.split_at(value.chars().next().map_or(0, char::len_utf8));
                    let strength: u8 = digits
                        .parse()
                        .map_err(|_| err(format!("bad value `{value}`")))?;
                    if !(MIN_STRENGTH..=MAX_STRENGTH).contains(&strength) {
                        return Err(err(format!("strength {strength} outside 2..=5")));
                    }
                    match sign {
                        "+" => Entry::Positive(strength),
                        "-" => Entry::Negative(strength),
                        _ => return Err(err(format!("strength `{value}` needs a + or - sign"))),
                    }
                }
            };
            if let Some(old) = lexicon.entries.insert(term.clone(), entry) {
                let msg = format!("line {line}: `{term}` redefined ({old:?} -> {entry:?})");
                log::warn!("lexicon {msg}");
                lexicon.warnings.push(msg);
            }
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Lexicon::parse(&std::fs::read_to_string(path)?)
    }

    /// Small bundled English/Portuguese lexicon.
    pub fn starter() -> Self {
        Lexicon::parse(STARTER_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Signed strength of a sentiment term.
    pub fn strength(&self, term: &str) -> Option<i8> {
        match self.entries.get(term)? {
            Entry::Positive(s) => Some(*s as i8),
            Entry::Negative(s) => Some(-(*s as i8)),
            _ => None,
        }
    }

    pub fn is_negator(&self, term: &str) -> bool {
        matches!(self.entries.get(term), Some(Entry::Negator))
    }

    pub fn booster(&self, term: &str) -> Option<i8> {
        match self.entries.get(term)? {
            Entry::Booster(b) => Some(*b),
            _ => None,
        }
    }

    pub fn positive_terms(&self) -> BTreeSet<&str> {
        self.select(|e| matches!(e, Entry::Positive(_)))
    }

    pub fn negative_terms(&self) -> BTreeSet<&str> {
        self.select(|e| matches!(e, Entry::Negative(_)))
    }

    pub fn negators(&self) -> BTreeSet<&str> {
        self.select(|e| matches!(e, Entry::Negator))
    }

    pub fn boosters(&self) -> BTreeSet<&str> {
        self.select(|e| matches!(e, Entry::Booster(_)))
    }

    fn select(&self, keep: impl Fn(&Entry) -> bool) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| keep(e))
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

/// How many tokens before a sentiment term are searched for negators and boosters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringOptions {
    pub negation_window: usize,
    pub booster_window: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            negation_window: 1,
            booster_window: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SentimentScore {
    pub polarity: i8,
    pub pos: u8,
    pub neg: u8,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore {
        polarity: 0,
        pos: 1,
        neg: 1,
    };

    fn from_components(pos: u8, neg: u8) -> Self {
        SentimentScore {
            polarity: pos as i8 - neg as i8,
            pos,
            neg,
        }
    }
}

pub fn score_text(text: &str, lexicon: &Lexicon) -> SentimentScore {
    score_text_with(text, lexicon, &ScoringOptions::default())
}

/// Scores a text. A negator among the preceding `negation_window` tokens
/// moves a term to the opposite polarity; boosters among the preceding
/// `booster_window` tokens shift its strength, kept within 2..=5.
pub fn score_text_with(text: &str, lexicon: &Lexicon, opts: &ScoringOptions) -> SentimentScore {
    let tokens = tokenize(text);
    let (mut pos, mut neg) = (1u8, 1u8);
    for (i, token) in tokens.iter().enumerate() {
        let Some(signed) = lexicon.strength(token) else {
            continue;
        };
        let before = |w: usize| &tokens[i.saturating_sub(w)..i];
        let boost: i32 = before(opts.booster_window)
            .iter()
            .filter_map(|t| lexicon.booster(t))
            .map(i32::from)
            .sum();
        let strength = (i32::from(signed.unsigned_abs()) + boost)
            .clamp(MIN_STRENGTH.into(), MAX_STRENGTH.into()) as u8;
        let negated = before(opts.negation_window)
            .iter()
            .any(|t| lexicon.is_negator(t));
        if (signed > 0) != negated {
            pos = pos.max(strength);
        } else {
            neg = neg.max(strength);
        }
    }
    SentimentScore::from_components(pos, neg)
}

/// Histogram of polarities with an exact mean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Distribution {
    /// Counts for polarity -4..=+4 keyed by the polarity.
    pub bins: BTreeMap<i8, usize>,
    pub n: usize,
    pub sum: i64,
    /// Mean in hundredths, rounded half away from zero; `None` for no scores.
    #[serde(skip)]
    pub mean_hundredths: Option<i64>,
}

impl Distribution {
    /// Mean polarity rounded to two decimals.
    pub fn mean(&self) -> Option<f64> {
        self.mean_hundredths.map(|h| h as f64 / 100.0)
    }

    /// Mean polarity without rounding.
    pub fn mean_exact(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    /// Mean as text with exactly two decimals, e.g. `-0.05`.
    pub fn mean_text(&self) -> Option<String> {
        self.mean_hundredths.map(|h| {
            let sign = if h < 0 { "-" } else { "" };
            format!("{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let bins: serde_json::Map<String, serde_json::Value> = self
            .bins
            .iter()
            .map(|(k, v)| (format!("{k:+}").replace("+0", "0"), (*v).into()))
            .collect();
        serde_json::json!({
            "bins": bins,
            "n": self.n,
            "sum": self.sum,
            "mean": self.mean(),
        })
    }
}

pub fn distribution<'a>(scores: impl IntoIterator<Item = &'a SentimentScore>) -> Distribution {
    let mut bins: BTreeMap<i8, usize> = (-4..=4).map(|p| (p, 0)).collect();
    let (mut n, mut sum) = (0usize, 0i64);
    for s in scores {
        *bins.entry(s.polarity).or_insert(0) += 1;
        n += 1;
        sum += i64::from(s.polarity);
    }
    let mean_hundredths = (n > 0).then(|| {
        let (num, den) = (sum * 100, n as i64);
        let q = (2 * num.abs() + den) / (2 * den);
        q * num.signum()
    });
    Distribution {
        bins,
        n,
        sum,
        mean_hundredths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(text: &str) -> Lexicon {
        Lexicon::parse(text).unwrap()
    }

    #[test]
    fn parse_format() {
        assert!(lex("").is_empty());
        let l = lex("great\t+3\nawful\t-4\nnot\tNEG\nvery\tB+1\nslightly\tB-1\n# note\n");
        assert_eq!(l.strength("great"), Some(3));
        assert_eq!(l.strength("awful"), Some(-4));
        assert!(l.is_negator("not"));
        assert_eq!(l.booster("very"), Some(1));
        assert_eq!(l.booster("slightly"), Some(-1));
        assert_eq!(l.len(), 5);
    }

    #[test]
    fn parse_errors_carry_line() {
        for bad in [
            "great\t+9",
            "great\t3",
            "great\t+1",
            "great",
            "great\tB+2",
            "two words\t+2",
            "\t+2",
        ] {
            let text = format!("ok\t+2\n{bad}\n");
            match Lexicon::parse(&text) {
                Err(LexiconError::Parse { line, .. }) => assert_eq!(line, 2, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicates_last_wins() {
        let l = lex("great\t+3\ngreat\t-2\n");
        assert_eq!(l.strength("great"), Some(-2));
        assert_eq!(l.warnings.len(), 1);
        let l = lex("not\t+2\nnot\tNEG\n");
        assert!(l.is_negator("not"));
        assert!(l.positive_terms().is_empty());
    }

    #[test]
    fn scoring_examples() {
        let l = lex("great\t+3\nnot\tNEG\nvery\tB+1\nslightly\tB-1\nawful\t-4\nbad\t-2\n");
        assert_eq!(score_text("nothing here", &l), SentimentScore::NEUTRAL);
        assert_eq!(
            score_text("great", &l),
            SentimentScore {
                polarity: 2,
                pos: 3,
                neg: 1
            }
        );
        assert_eq!(
            score_text("not great", &l),
            SentimentScore {
                polarity: -2,
                pos: 1,
                neg: 3
            }
        );
        assert_eq!(score_text("very great", &l).pos, 4);
        assert_eq!(score_text("slightly bad", &l).neg, 2);
        assert_eq!(
            score_text("very awful, great", &l),
            SentimentScore {
                polarity: -2,
                pos: 3,
                neg: 5
            }
        );
        assert_eq!(score_text("NOT GREAT", &l).polarity, -2);
        // window of one: the negator is two tokens away
        assert_eq!(score_text("not very great", &l).polarity, 3);
        let wide = ScoringOptions {
            negation_window: 2,
            booster_window: 1,
        };
        assert_eq!(score_text_with("not very great", &l, &wide).polarity, -3);
    }

    #[test]
    fn distribution_examples() {
        let s = |p: i8| {
            SentimentScore::from_components(
                if p > 0 { 1 + p as u8 } else { 1 },
                if p < 0 { 1 + (-p) as u8 } else { 1 },
            )
        };
        let d = distribution(&[s(0), s(0), s(0)]);
        assert_eq!(d.mean_text().as_deref(), Some("0.00"));
        assert_eq!(d.bins[&0], 3);
        let d = distribution(&[s(2), s(-2)]);
        assert_eq!(d.mean(), Some(0.0));
        assert_eq!((d.bins[&2], d.bins[&-2]), (1, 1));
        let mut v = vec![s(0); 19];
        v.push(s(-1));
        let d = distribution(&v);
        assert_eq!(d.mean_text().as_deref(), Some("-0.05"));
        assert_eq!(
            distribution(&[s(1), s(0), s(0)]).mean_text().as_deref(),
            Some("0.33")
        );
        assert_eq!(
            distribution(&[s(-1), s(0), s(0)]).mean_text().as_deref(),
            Some("-0.33")
        );
        assert_eq!(
            distribution(&[s(1), s(0), s(0), s(0), s(0), s(0), s(0), s(0)]).mean_hundredths,
            Some(13)
        );
        assert_eq!(distribution(&[]).mean(), None);
        let json = distribution(&[s(-4), s(4)]).to_json();
        assert_eq!(json["bins"]["-4"], 1);
        assert_eq!(json["bins"]["+4"], 1);
        assert_eq!(json["bins"]["0"], 0);
        assert_eq!(json["n"], 2);
    }

    #[test]
    fn starter_lexicon_is_disjoint() {
        let l = Lexicon::starter();
        assert!(l.warnings.is_empty());
        assert_eq!(score_text("não gosto", &l).polarity, -1);
        assert_eq!(score_text("muito ruim", &l).polarity, -3);
    }

    fn vocab() -> Lexicon {
        lex("good\t+2\ngreat\t+3\nsuperb\t+5\nbad\t-2\nawful\t-4\nnot\tNEG\nnever\tNEG\nvery\tB+1\nslightly\tB-1\n")
    }

    fn words() -> impl Strategy<Value = Vec<&'static str>> {
        proptest::collection::vec(
            proptest::sample::select(vec![
                "good", "great", "superb", "bad", "awful", "not", "never", "very", "slightly",
                "city", "beer",
            ]),
            0..15,
        )
    }

    proptest! {
        #[test]
        fn polarity_bounded(w in words(), nw in 0usize..4, bw in 0usize..4) {
            let opts = ScoringOptions { negation_window: nw, booster_window: bw };
            let s = score_text_with(&w.join(" "), &vocab(), &opts);
            prop_assert!((-4..=4).contains(&s.polarity));
            prop_assert_eq!(s.polarity, s.pos as i8 - s.neg as i8);
            prop_assert!((1..=5).contains(&s.pos) && (1..=5).contains(&s.neg));
        }

        #[test]
        fn prepending_terms_is_monotone(w in words(), pos in proptest::sample::select(vec!["good", "great", "superb"]), neg in proptest::sample::select(vec!["bad", "awful"])) {
            let l = vocab();
            let base = score_text(&w.join(" "), &l).polarity;
            let with_pos = score_text(&format!("{} {}", pos, w.join(" ")), &l).polarity;
            let with_neg = score_text(&format!("{} {}", neg, w.join(" ")), &l).polarity;
            prop_assert!(with_pos >= base);
            prop_assert!(with_neg <= base);
        }

        #[test]
        fn case_insensitive(w in words()) {
            let text = w.join(" ");
            prop_assert_eq!(score_text(&text.to_uppercase(), &vocab()), score_text(&text, &vocab()));
        }

        #[test]
        fn distribution_order_invariant(mut ps in proptest::collection::vec((1u8..=5, 1u8..=5), 0..40), seed in any::<u64>()) {
            let scores: Vec<_> = ps.iter().map(|&(p, n)| SentimentScore::from_components(p, n)).collect();
            let d = distribution(&scores);
            prop_assert_eq!(d.bins.values().sum::<usize>(), scores.len());
            let k = ps.len().max(1);
            ps.rotate_left(seed as usize % k);
            ps.reverse();
            let shuffled: Vec<_> = ps.iter().map(|&(p, n)| SentimentScore::from_components(p, n)).collect();
            prop_assert_eq!(distribution(&shuffled), d);
        }
    }

    #[test]
    fn negation_involution() {
        let l = vocab();
        for term in ["good", "great", "superb", "bad", "awful"] {
            assert_eq!(
                score_text(&format!("not {term}"), &l).polarity,
                -score_text(term, &l).polarity
            );
        }
    }
}
