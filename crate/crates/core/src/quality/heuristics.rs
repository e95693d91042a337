//! Deterministic built-in providers for the model-based gates.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CategoryClassifier, LineScorer, QualityScorer, WebTypeProvider, DETAIL_PAGE};
use crate::document::Document;
use crate::error::ProviderError;
use crate::fuzzy::tokenize;
use crate::line_dedup::LineFrequencyTable;
use crate::text::{count_words, is_cjk, is_content_line, is_punct_or_symbol};

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Lowercased alphanumeric runs, the unit keyword matching works on.
fn alnum_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() || is_cjk(c))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Occurrences of `keywords` in `text`. Single ASCII-alphanumeric keywords
/// match whole tokens; anything else (CJK, phrases) matches as a substring.
fn keyword_hits(lower: &str, tokens: &[String], keywords: &[String]) -> usize {
    keywords
        .iter()
        .map(|k| {
            if k.chars().all(|c| c.is_ascii_alphanumeric()) {
                tokens.iter().filter(|t| *t == k).count()
            } else {
                lower.matches(k.as_str()).count()
            }
        })
        .sum()
}

pub fn is_link_token(token: &str) -> bool {
    let t = token.to_lowercase();
    t.contains("://")
        || t.starts_with("www.")
        || t.contains("](")
        || [".html", ".htm", ".php", ".asp", ".aspx"].iter().any(|s| t.ends_with(s))
}

fn symbol_fraction(text: &str) -> f64 {
    let (mut sym, mut total) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if is_punct_or_symbol(c) {
            sym += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        sym as f64 / total as f64
    }
}

/// Page-type labels from link density and keyword ratios.
///
/// Checked in order: `adult` (adult-term ratio), `tool` (share of
/// whitespace tokens that are links), `video`, `audio`, `forum` (term ratios
/// over the word count); everything else is a `detail_page`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicWebType {
    pub link_ratio: f64,
    pub media_ratio: f64,
    pub forum_ratio: f64,
    pub adult_ratio: f64,
    pub video_terms: Vec<String>,
    pub audio_terms: Vec<String>,
    pub forum_terms: Vec<String>,
    pub adult_terms: Vec<String>,
}

impl Default for HeuristicWebType {
    fn default() -> Self {
        Self {
            link_ratio: 0.3,
            media_ratio: 0.05,
            forum_ratio: 0.05,
            adult_ratio: 0.02,
            video_terms: words(&["video", "videos", "watch", "youtube", "mp4", "trailer", "视频", "播放"]),
            audio_terms: words(&["audio", "podcast", "mp3", "listen", "episode", "playlist", "音频", "收听"]),
            forum_terms: words(&["reply", "replies", "thread", "quote", "moderator", "posted by", "回复", "帖子", "楼主"]),
            adult_terms: words(&["porn", "xxx", "nsfw", "escort", "camgirl", "成人", "色情", "裸聊"]),
        }
    }
}

impl HeuristicWebType {
    pub fn label(&self, text: &str) -> &'static str {
        let n_words = count_words(text).max(1) as f64;
        let lower = text.to_lowercase();
        let tokens = alnum_tokens(text);
        let ratio = |terms: &[String]| keyword_hits(&lower, &tokens, terms) as f64 / n_words;

        let adult = keyword_hits(&lower, &tokens, &self.adult_terms);
        if adult >= 2 && adult as f64 / n_words >= self.adult_ratio {
            return "adult";
        }
        let ws: Vec<&str> = text.split_whitespace().collect();
        if !ws.is_empty() {
            let links = ws.iter().filter(|t| is_link_token(t)).count();
            if links as f64 / ws.len() as f64 >= self.link_ratio {
                return "tool";
            }
        }
        if ratio(&self.video_terms) >= self.media_ratio {
            return "video";
        }
        if ratio(&self.audio_terms) >= self.media_ratio {
            return "audio";
        }
        if ratio(&self.forum_terms) >= self.forum_ratio {
            return "forum";
        }
        DETAIL_PAGE
    }
}

impl WebTypeProvider for HeuristicWebType {
    fn classify(&self, doc: &Document) -> Result<String, ProviderError> {
        Ok(self.label(&doc.text).to_string())
    }
}

/// Per-line clutter score, the product of:
///
/// * length: `0.3 + 0.7 * min(1, words / min_words)`
/// * links: `1 - link_tokens / tokens`
/// * separators: `1 - 1.5 * (tokens made only of punctuation or symbols) / tokens`
/// * symbols: `1 - 1.5 * max(0, symbol_fraction - 0.15)`
/// * frequency: `1 - 0.25 * log10(global count)` once a line has been seen
///   at least `frequent_at` times in the line-frequency table
///
/// each clamped to `[0, 1]`. Blank lines score 1 and lines with no
/// alphanumeric character score 0.
#[derive(Debug, Clone, Default)]
pub struct HeuristicClutterScorer {
    pub min_words: usize,
    pub frequent_at: u64,
    pub table: Option<LineFrequencyTable>,
}

impl HeuristicClutterScorer {
    pub fn new() -> Self {
        Self {
            min_words: 8,
            frequent_at: 10,
            table: None,
        }
    }

    pub fn with_table(mut self, table: LineFrequencyTable) -> Self {
        self.table = Some(table);
        self
    }

    pub fn score_line(&self, line: &str) -> f64 {
        if line.trim().is_empty() {
            return 1.0;
        }
        if !is_content_line(line) {
            return 0.0;
        }
        let n_words = count_words(line) as f64;
        let length = 0.3 + 0.7 * (n_words / self.min_words.max(1) as f64).min(1.0);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let n_tokens = tokens.len() as f64;
        let links = tokens.iter().filter(|t| is_link_token(t)).count() as f64;
        let seps = tokens
            .iter()
            .filter(|t| t.chars().all(is_punct_or_symbol))
            .count() as f64;
        let link = 1.0 - links / n_tokens;
        let sep = (1.0 - 1.5 * seps / n_tokens).clamp(0.0, 1.0);
        let sym = (1.0 - 1.5 * (symbol_fraction(line) - 0.15).max(0.0)).clamp(0.0, 1.0);
        let freq = match &self.table {
            Some(t) => {
                let g = t.global_count(line);
                if g >= self.frequent_at.max(1) {
                    (1.0 - 0.25 * (g as f64).log10()).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        (length * link * sep * sym * freq).clamp(0.0, 1.0)
    }
}

impl LineScorer for HeuristicClutterScorer {
    fn score_lines(&self, lines: &[&str]) -> Result<Vec<f64>, ProviderError> {
        Ok(lines.iter().map(|l| self.score_line(l)).collect())
    }
}

/// Document quality in `[0, 1]`:
///
/// `(1 - repetition) * (0.5 + 0.5 * stop) * (0.5 + 0.5 * clean)` where
/// `repetition = 1 - distinct token trigrams / token trigrams`,
/// `stop = min(1, stopword tokens / (stop_target * tokens))` and
/// `clean = clamp(1 - symbol_slope * max(0, symbol_fraction - 0.05))`.
/// Tokens come from the fuzzy-dedup tokenizer (CJK characters are tokens).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicQualityScorer {
    pub stopwords: Vec<String>,
    pub stop_target: f64,
    pub symbol_slope: f64,
}

impl Default for HeuristicQualityScorer {
    fn default() -> Self {
        Self {
            stopwords: words(&[
                "the", "a", "an", "and", "or", "of", "to", "in", "on", "at", "for", "with", "is", "are",
                "was", "were", "be", "it", "this", "that", "as", "by", "from", "but", "not", "have",
                "has", "we", "they", "he", "she", "you", "i", "which", "their", "its",
                "的", "了", "是", "在", "和", "有", "我", "不", "这", "也", "就", "都", "他", "她",
                "们", "一", "个", "与", "而", "及",
            ]),
            stop_target: 0.1,
            symbol_slope: 4.0,
        }
    }
}

impl HeuristicQualityScorer {
    pub fn score_text(&self, text: &str) -> f64 {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return 0.0;
        }
        let repetition = if tokens.len() < 3 {
            0.0
        } else {
            let grams: Vec<&[String]> = tokens.windows(3).collect();
            let distinct: HashSet<&[String]> = grams.iter().copied().collect();
            1.0 - distinct.len() as f64 / grams.len() as f64
        };
        let stopwords: HashSet<&str> = self.stopwords.iter().map(String::as_str).collect();
        let hits = tokens.iter().filter(|t| stopwords.contains(t.as_str())).count() as f64;
        let stop = (hits / (self.stop_target * tokens.len() as f64)).min(1.0);
        let clean = (1.0 - self.symbol_slope * (symbol_fraction(text) - 0.05).max(0.0)).clamp(0.0, 1.0);
        ((1.0 - repetition) * (0.5 + 0.5 * stop) * (0.5 + 0.5 * clean)).clamp(0.0, 1.0)
    }
}

impl QualityScorer for HeuristicQualityScorer {
    fn score(&self, text: &str) -> Result<f64, ProviderError> {
        Ok(self.score_text(text))
    }
}

/// Picks the category whose keywords occur most often; ties go to the
/// alphabetically first category and documents with no hit get `other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordCategoryClassifier {
    pub categories: BTreeMap<String, Vec<String>>,
}

impl Default for KeywordCategoryClassifier {
    fn default() -> Self {
        let mut categories = BTreeMap::new();
        categories.insert(
            "knowledge".into(),
            words(&["research", "science", "history", "theory", "study", "physics", "biology", "研究", "科学", "历史", "理论", "实验"]),
        );
        categories.insert(
            "news".into(),
            words(&["reported", "government", "minister", "announced", "officials", "报道", "政府", "记者", "宣布"]),
        );
        categories.insert(
            "entertainment".into(),
            words(&["movie", "celebrity", "music", "game", "concert", "电影", "明星", "音乐", "游戏"]),
        );
        categories.insert(
            "commerce".into(),
            words(&["price", "discount", "buy", "shipping", "sale", "价格", "优惠", "购买", "包邮"]),
        );
        Self { categories }
    }
}

impl KeywordCategoryClassifier {
    pub fn label(&self, text: &str) -> String {
        let lower = text.to_lowercase();
        let tokens = alnum_tokens(text);
        let mut best: Option<(&str, usize)> = None;
        for (name, kws) in &self.categories {
            let hits = keyword_hits(&lower, &tokens, kws);
            if hits > 0 && best.is_none_or(|(_, h)| hits > h) {
                best = Some((name, hits));
            }
        }
        best.map_or_else(|| super::balance::OTHER.to_string(), |(n, _)| n.to_string())
    }
}

impl CategoryClassifier for KeywordCategoryClassifier {
    fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.categories.keys().cloned().collect();
        labels.push(super::balance::OTHER.to_string());
        labels
    }

    fn classify(&self, doc: &Document) -> Result<String, ProviderError> {
        Ok(self.label(&doc.text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line_dedup::{build_frequency_table, LineDedupConfig};

    const PROSE: &str = "The committee met on Tuesday to review the budget for the coming year, \
        and members agreed that the library should receive more funding for its archive.";

    #[test]
    fn link_farm_is_not_a_detail_page() {
        // 40 whitespace tokens, 20 of them links: link ratio 0.5 >= 0.3.
        let mut toks = Vec::new();
        for i in 0..20 {
            toks.push(format!("http://site{i}.example/page"));
            toks.push(format!("cheap{i}"));
        }
        assert_eq!(toks.len(), 40);
        let wt = HeuristicWebType::default();
        assert_eq!(wt.label(&toks.join(" ")), "tool");
        assert_eq!(wt.label(PROSE), DETAIL_PAGE);
    }

    #[test]
    fn media_and_forum_terms() {
        let wt = HeuristicWebType::default();
        assert_eq!(wt.label("watch the new video trailer here on youtube now"), "video");
        assert_eq!(wt.label("listen to this podcast episode in mp3 form"), "audio");
        assert_eq!(wt.label("reply to thread quote reply posted by admin"), "forum");
        assert_eq!(wt.label("porn xxx free"), "adult");
        assert_eq!(wt.label("这是一个关于音乐的视频，欢迎观看视频"), "video");
    }

    #[test]
    fn nav_lines_score_low_and_prose_high() {
        let s = HeuristicClutterScorer::new();
        assert!(s.score_line("Home | About | Contact | Login") < 0.5);
        assert!(s.score_line("Share this:") < 0.5);
        assert!(s.score_line("----") == 0.0);
        assert_eq!(s.score_line(""), 1.0);
        assert!(s.score_line(PROSE) > 0.9);
        assert!(s.score_line("今天的会议讨论了图书馆明年的预算安排，大家都同意增加档案经费。") > 0.5);
        assert!(s.score_line("see http://a.example/x and http://b.example/y") < 0.5);
    }

    #[test]
    fn frequent_lines_are_penalized() {
        let cfg = LineDedupConfig::default();
        let docs: Vec<Document> = (0..1000)
            .map(|i| Document::new(format!("d{i}"), i, format!("Subscribe to our newsletter for weekly updates today\nbody {i}")))
            .collect();
        let table = build_frequency_table(&docs, &cfg);
        let line = "Subscribe to our newsletter for weekly updates today";
        let plain = HeuristicClutterScorer::new().score_line(line);
        let s = HeuristicClutterScorer::new().with_table(table);
        assert!(plain >= 0.5);
        // 1000 occurrences: 1 - 0.25 * 3 = 0.25
        assert!((s.score_line(line) - plain * 0.25).abs() < 1e-12);
    }

    #[test]
    fn repeated_sentence_scores_below_default_threshold() {
        let text = vec!["the cat sat on the mat today."; 50].join(" ");
        // 350 tokens, 348 trigrams, 7 distinct; stopwords 3/7 > 0.1 so stop = 1;
        // 50 periods over 1150 non-space chars < 0.05 so clean = 1.
        let s = HeuristicQualityScorer::default().score_text(&text);
        assert!((s - 7.0 / 348.0).abs() < 1e-12, "{s}");
        assert!(s < 0.5);
    }

    #[test]
    fn prose_scores_high() {
        let s = HeuristicQualityScorer::default();
        assert!(s.score_text(PROSE) > 0.8, "{}", s.score_text(PROSE));
        assert_eq!(s.score_text(""), 0.0);
        let zh = "研究人员在实验室里进行了一项新的实验，他们发现这种材料在低温下的导电性能明显提高，这一结果为未来的应用提供了方向。";
        assert!(s.score_text(zh) > 0.5, "{}", s.score_text(zh));
    }

    #[test]
    fn categories_by_keyword_count() {
        let c = KeywordCategoryClassifier::default();
        assert_eq!(c.label("New research in physics and biology"), "knowledge");
        assert_eq!(c.label("Buy now: discount price and free shipping"), "commerce");
        assert_eq!(c.label("nothing to see"), "other");
        assert_eq!(c.label("政府宣布了新的政策"), "news");
        assert!(c.labels().contains(&"other".to_string()));
    }
}
