//! Text normalisation, TF-IDF vectors and relevance ranking of comments
//! against a topic built from news articles.
//!
//! Weights are `tf * ln(N / df)` with raw term counts. The IDF population is
//! every comment plus one document holding all articles concatenated.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::Comment;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("no articles to build a topic from")]
    EmptyArticles,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("stemmer rules line {line}: {message}")]
    Rules { line: usize, message: String },
    #[error("cannot read language config: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on every character that is not a letter or digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StemRule {
    suffix: String,
    replacement: String,
}

/// Stopword list plus suffix-stripping rules for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageConfig {
    stopwords: HashSet<String>,
    rules: Vec<StemRule>,
    min_stem: usize,
}

const EN_STOPWORDS: &str = include_str!("../data/lang/en/stopwords.txt");
const EN_RULES: &str = include_str!("../data/lang/en/stemmer.tsv");
const PT_STOPWORDS: &str = include_str!("../data/lang/pt/stopwords.txt");
const PT_RULES: &str = include_str!("../data/lang/pt/stemmer.tsv");

impl LanguageConfig {
    /// Builds a config from a stopword list (one term per line, `#` comments)
    /// and a rule table of `suffix<TAB>replacement` lines.
    ///
    /// Rules are tried longest suffix first and only when at least
    /// `min_stem` characters remain in front of the suffix (an
    /// `@min_stem<TAB>N` line sets it; default 3). A rule must either
    /// shorten the word or leave it unchanged; an unchanged match stops
    /// stemming, which lets a longer suffix protect a word from a shorter
    /// rule.
    pub fn parse(stopwords: &str, rules: &str) -> Result<Self, TextError> {
        let stopwords = stopwords
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();

        let mut min_stem = 3;
        let mut parsed = Vec::new();
        for (n, raw) in rules.lines().enumerate() {
            let line = n + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (left, right) = raw.split_once('\t').unwrap_or((raw, ""));
            let (left, right) = (left.trim(), right.trim());
            if left == "@min_stem" {
                min_stem = right.parse().map_err(|_| TextError::Rules {
                    line,
                    message: format!("bad @min_stem value `{right}`"),
                })?;
                continue;
            }
            let suffix = left.to_lowercase();
            let replacement = right.to_lowercase();
            if suffix.is_empty() {
                return Err(TextError::Rules {
                    line,
                    message: "empty suffix".into(),
                });
            }
            if replacement != suffix && replacement.chars().count() >= suffix.chars().count() {
                return Err(TextError::Rules {
                    line,
                    message: format!("replacement `{replacement}` does not shorten `{suffix}`"),
                });
            }
            if parsed.iter().any(|r: &StemRule| r.suffix == suffix) {
                return Err(TextError::Rules {
                    line,
                    message: format!("duplicate suffix `{suffix}`"),
                });
            }
            parsed.push(StemRule {
                suffix,
                replacement,
            });
        }
        parsed.sort_by(|a, b| {
            b.suffix
                .chars()
                .count()
                .cmp(&a.suffix.chars().count())
                .then_with(|| a.suffix.cmp(&b.suffix))
        });
        Ok(LanguageConfig {
            stopwords,
            rules: parsed,
            min_stem,
        })
    }

    pub fn load(stopwords: &Path, rules: &Path) -> Result<Self, TextError> {
        LanguageConfig::parse(
            &std::fs::read_to_string(stopwords)?,
            &std::fs::read_to_string(rules)?,
        )
    }

    /// Loads `stopwords.txt` and `stemmer.tsv` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, TextError> {
        LanguageConfig::load(&dir.join("stopwords.txt"), &dir.join("stemmer.tsv"))
    }

    pub fn english() -> Self {
        LanguageConfig::parse(EN_STOPWORDS, EN_RULES).expect("bundled English config is valid")
    }

    pub fn portuguese() -> Self {
        LanguageConfig::parse(PT_STOPWORDS, PT_RULES).expect("bundled Portuguese config is valid")
    }

    /// Bundled config by language code (`en`, `pt`).
    pub fn builtin(code: &str) -> Option<Self> {
        match code {
            "en" => Some(LanguageConfig::english()),
            "pt" => Some(LanguageConfig::portuguese()),
            _ => None,
        }
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.contains(term)
    }

    /// Applies suffix rules until none shortens the word further.
    pub fn stem(&self, word: &str) -> String {
        let mut current = word.to_string();
        loop {
            let len = current.chars().count();
            let rule = self.rules.iter().find(|r| {
                current.ends_with(&r.suffix) && len - r.suffix.chars().count() >= self.min_stem
            });
            match rule {
                Some(r) if r.replacement != r.suffix => {
                    current.truncate(current.len() - r.suffix.len());
                    current.push_str(&r.replacement);
                }
                _ => return current,
            }
        }
    }
}

/// Normalised terms of one document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn term_set(&self) -> BTreeSet<&str> {
        self.0.iter().map(String::as_str).collect()
    }
}

/// Tokenize, drop stopwords, stem, and drop anything that stemmed into a stopword.
pub fn normalize(text: &str, lang: &LanguageConfig) -> TokenSequence {
    TokenSequence(
        tokenize(text)
            .into_iter()
            .filter(|t| !lang.is_stopword(t))
            .map(|t| lang.stem(&t))
            .filter(|t| !t.is_empty() && !lang.is_stopword(t))
            .collect(),
    )
}

/// Document frequency of every term over a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocumentFrequencies {
    pub n_docs: usize,
    pub df: HashMap<String, usize>,
}

impl DocumentFrequencies {
    pub fn from_docs<'a>(docs: impl IntoIterator<Item = &'a TokenSequence>) -> Self {
        let mut out = DocumentFrequencies::default();
        for doc in docs {
            out.n_docs += 1;
            for term in doc.term_set() {
                *out.df.entry(term.to_string()).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn get(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }
}

/// Sparse nonnegative term weights. Terms with zero weight are not stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermVector(BTreeMap<String, f64>);

impl TermVector {
    /// Builds a vector, dropping zero weights. Negative or non-finite weights
    /// are rejected.
    pub fn from_weights(
        weights: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, TextError> {
        let mut map = BTreeMap::new();
        for (term, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(TextError::InvalidInput(format!("weight {w} for `{term}`")));
            }
            if w > 0.0 {
                map.insert(term, w);
            }
        }
        Ok(TermVector(map))
    }

    pub fn get(&self, term: &str) -> f64 {
        self.0.get(term).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(t, &w)| (t.as_str(), w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains_key(term)
    }

    fn norm_sq(&self) -> f64 {
        self.0.values().map(|w| w * w).sum()
    }

    /// Every weight multiplied by `factor` (which must be positive).
    pub fn scaled(&self, factor: f64) -> TermVector {
        TermVector(
            self.0
                .iter()
                .map(|(t, w)| (t.clone(), w * factor))
                .collect(),
        )
    }
}

/// `weight(t) = tf(t) * ln(n_docs / df(t))`; terms with `df = 0` are skipped.
pub fn tfidf_vector(
    doc: &TokenSequence,
    stats: &DocumentFrequencies,
) -> Result<TermVector, TextError> {
    if stats.n_docs < 1 {
        return Err(TextError::InvalidInput("corpus has no documents".into()));
    }
    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    for t in doc.tokens() {
        *tf.entry(t).or_insert(0) += 1;
    }
    let n = stats.n_docs as f64;
    let mut weights = Vec::with_capacity(tf.len());
    for (term, count) in tf {
        let df = stats.get(term);
        if df == 0 {
            continue;
        }
        if df > stats.n_docs {
            return Err(TextError::InvalidInput(format!(
                "df({term}) = {df} exceeds corpus size {}",
                stats.n_docs
            )));
        }
        weights.push((term.to_string(), count as f64 * (n / df as f64).ln()));
    }
    TermVector::from_weights(weights)
}

/// Cosine of the angle between two vectors; 0 when either is all-zero.
pub fn cosine_similarity(a: &TermVector, b: &TermVector) -> f64 {
    let dot: f64 =
        a.0.iter()
            .filter_map(|(t, wa)| b.0.get(t).map(|wb| wa * wb))
            .sum();
    if dot == 0.0 {
        return 0.0;
    }
    let denom = (a.norm_sq() * b.norm_sq()).sqrt();
    (dot / denom).min(1.0)
}

/// TF-IDF representation of the planning topic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicProfile {
    pub vector: TermVector,
    /// All topic terms by descending weight, ties alphabetical.
    pub top_terms: Vec<(String, f64)>,
    /// Number of articles concatenated into the topic document.
    pub source_count: usize,
    /// IDF statistics over the comments plus the topic document.
    pub stats: DocumentFrequencies,
}

impl TopicProfile {
    /// True when no topic term carries weight, so every comment scores 0.
    pub fn is_degenerate(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.top_terms[..k.min(self.top_terms.len())]
    }
}

/// Concatenates the articles into one topic document and weights it against
/// a corpus of `comments` plus that document.
pub fn build_topic_profile<S: AsRef<str>>(
    articles: &[S],
    comments: &[TokenSequence],
    lang: &LanguageConfig,
) -> Result<TopicProfile, TextError> {
    if articles.is_empty() {
        return Err(TextError::EmptyArticles);
    }
    let joined = articles
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("\n");
    let topic_doc = normalize(&joined, lang);
    let stats = DocumentFrequencies::from_docs(comments.iter().chain([&topic_doc]));
    let vector = tfidf_vector(&topic_doc, &stats)?;
    let mut top_terms: Vec<(String, f64)> =
        vector.iter().map(|(t, w)| (t.to_string(), w)).collect();
    top_terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(TopicProfile {
        vector,
        top_terms,
        source_count: articles.len(),
        stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedComment {
    /// Position of the comment in the input slice.
    pub index: usize,
    pub comment_id: String,
    pub score: f64,
}

/// Scores each comment by cosine similarity to the topic and sorts by
/// descending score, ties by comment id then input position.
pub fn rank_comments(
    comments: &[Comment],
    topic: &TopicProfile,
    lang: &LanguageConfig,
) -> Result<Vec<RankedComment>, TextError> {
    let scores: Vec<f64> = comments
        .par_iter()
        .map(|c| {
            let v = tfidf_vector(&normalize(&c.text, lang), &topic.stats)?;
            Ok(cosine_similarity(&v, &topic.vector))
        })
        .collect::<Result<_, TextError>>()?;
    let mut ranked: Vec<RankedComment> = comments
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (c, score))| RankedComment {
            index,
            comment_id: c.comment_id.clone(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.comment_id.cmp(&b.comment_id))
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

/// Normalises comments, builds the topic and ranks the comments against it.
pub fn rank_by_relevance<S: AsRef<str>>(
    comments: &[Comment],
    articles: &[S],
    lang: &LanguageConfig,
) -> Result<(TopicProfile, Vec<RankedComment>), TextError> {
    let docs: Vec<TokenSequence> = comments
        .par_iter()
        .map(|c| normalize(&c.text, lang))
        .collect();
    let topic = build_topic_profile(articles, &docs, lang)?;
    let ranked = rank_comments(comments, &topic, lang)?;
    Ok((topic, ranked))
}

/// The `q`-th relevance quarter (1 = most relevant) of a descending ranking:
/// ranks in `(ceil((q-1)n/4), ceil(qn/4)]`.
pub fn quartile_slice<T>(ranked: &[T], q: u8) -> Result<&[T], TextError> {
    if !(1..=4).contains(&q) {
        return Err(TextError::InvalidInput(format!(
            "quartile must be 1..4, got {q}"
        )));
    }
    let n = ranked.len();
    let bound = |k: usize| (k * n).div_ceil(4);
    Ok(&ranked[bound(q as usize - 1)..bound(q as usize)])
}
