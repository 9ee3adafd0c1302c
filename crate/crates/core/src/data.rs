//! Built-in data tables: stdlib module list, import aliases, taxonomy,
//! sentiment lexicon and quality keyword table. All of them are plain text
//! with `#` comments and can be replaced by files on disk.

pub const STDLIB: &str = include_str!("../data/stdlib.txt");
pub const ALIASES: &str = include_str!("../data/aliases.txt");
pub const LEXICON: &str = include_str!("../data/lexicon.tsv");
pub const QUALITY_KEYWORDS: &str = include_str!("../data/quality_keywords.tsv");
pub const FUNCTION_WORDS: &str = include_str!("../data/function_words.txt");

/// Non-empty lines with `#` comments and surrounding whitespace removed.
pub fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

/// `key<sep>value` rows; rows without a separator are skipped.
pub fn data_pairs(text: &str) -> impl Iterator<Item = (&str, &str)> {
    data_lines(text).filter_map(|l| {
        let (k, v) = l.split_once('\t').or_else(|| l.split_once('='))?;
        Some((k.trim(), v.trim()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_handling() {
        let text = "# header\nnumpy\n  \nos # inline\n";
        assert_eq!(data_lines(text).collect::<Vec<_>>(), ["numpy", "os"]);
        let pairs: Vec<_> = data_pairs("a\tb\nc = d\nbogus\n").collect();
        assert_eq!(pairs, [("a", "b"), ("c", "d")]);
    }
}
