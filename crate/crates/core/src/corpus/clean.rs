use std::sync::OnceLock;

use regex::Regex;

fn patterns() -> &'static [Regex; 4] {
    static PATTERNS: OnceLock<[Regex; 4]> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            // markup tags: <i>, </font>, <font color="...">
            Regex::new(r"<[^>]*>").unwrap(),
            // sound and speaker annotations: [door slams], (laughs)
            Regex::new(r"\[[^\]]*\]|\([^)]*\)").unwrap(),
            // sung lyrics between music notes, then any stray note
            Regex::new(r"[♪♫][^♪♫]*[♪♫]|[♪♫]").unwrap(),
            Regex::new(r"\s+").unwrap(),
        ]
    })
}

fn clean_once(raw: &str) -> String {
    let [tags, brackets, music, spaces] = patterns();
    let text = tags.replace_all(raw, " ");
    let text = brackets.replace_all(&text, " ");
    let text = music.replace_all(&text, " ");
    let text = spaces.replace_all(&text, " ");
    let mut text = text.trim();
    // leading speaker dashes, possibly repeated: "- - What?"
    while let Some(rest) = text.strip_prefix(['-', '–', '—']) {
        text = rest.trim_start();
    }
    text.to_string()
}

/// Clean one raw subtitle line.
///
/// Removes `<...>` markup, `[...]`/`(...)` annotations, music-note spans and
/// leading speaker dashes, then collapses whitespace. Returns `None` when
/// nothing is left. The rules are applied until the text stops changing,
/// which makes the function idempotent.
pub fn clean_line(raw: &str) -> Option<String> {
    let mut current = clean_once(raw);
    loop {
        let next = clean_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    (!current.is_empty()).then_some(current)
}
