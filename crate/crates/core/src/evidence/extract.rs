//! Article body extraction from HTML.
//!
//! Boilerplate removal picks the largest text block: paragraph-level text is
//! grouped by its enclosing container and the container holding the most
//! text wins. Navigation, scripts, styles, forms, headers, footers and asides
//! are discarded before grouping.

use std::collections::HashMap;

const SKIPPED: [&str; 11] = [
    "script", "style", "noscript", "nav", "header", "footer", "aside", "form", "svg", "iframe", "template",
];
const CONTAINERS: [&str; 6] = ["article", "main", "section", "div", "td", "body"];
const BLOCKS: [&str; 9] = ["p", "h1", "h2", "h3", "h4", "li", "blockquote", "pre", "figcaption"];
const VOID: [&str; 14] = [
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

#[derive(Debug)]
enum Token<'a> {
    Open(String),
    Close(String),
    Text(&'a str),
}

fn tag_name(inner: &str) -> String {
    inner
        .trim_start_matches('/')
        .split(|c: char| c.is_whitespace() || c == '/' || c == '>')
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase()
}

fn tokenize(html: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut rest = html;
    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            tokens.push(Token::Text(rest));
            break;
        };
        if lt > 0 {
            tokens.push(Token::Text(&rest[..lt]));
        }
        rest = &rest[lt..];
        if let Some(after) = rest.strip_prefix("<!--") {
            rest = after.find("-->").map_or("", |end| &after[end + 3..]);
            continue;
        }
        let Some(gt) = rest.find('>') else {
            tokens.push(Token::Text(rest));
            break;
        };
        let inner = &rest[1..gt];
        rest = &rest[gt + 1..];
        if inner.starts_with('!') || inner.starts_with('?') {
            continue;
        }
        let name = tag_name(inner);
        if name.is_empty() {
            continue;
        }
        if inner.starts_with('/') {
            tokens.push(Token::Close(name));
        } else if VOID.contains(&name.as_str()) || inner.ends_with('/') {
            continue;
        } else if SKIPPED.contains(&name.as_str()) || name == "title" || name == "head" {
            // Raw-text and boilerplate elements: jump past the closing tag.
            let close = format!("</{name}");
            let lower = rest.to_ascii_lowercase();
            rest = match lower.find(&close) {
                Some(pos) => {
                    let tail = &rest[pos..];
                    tail.find('>').map_or("", |g| &tail[g + 1..])
                }
                None => "",
            };
        } else {
            tokens.push(Token::Open(name));
        }
    }
    tokens
}

pub fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let Some(semi) = rest[..rest.len().min(12)].find(';') else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let entity = &rest[1..semi];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" | "#39" => Some('\''),
            "nbsp" => Some(' '),
            "mdash" => Some('—'),
            "ndash" => Some('–'),
            "rsquo" | "lsquo" => Some('\''),
            "rdquo" | "ldquo" => Some('"'),
            e if e.starts_with("#x") || e.starts_with("#X") => {
                u32::from_str_radix(&e[2..], 16).ok().and_then(char::from_u32)
            }
            e if e.starts_with('#') => e[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts the main article text. Plain text input is returned with
/// whitespace collapsed per paragraph.
pub fn extract_article_text(html: &str) -> String {
    if !html.contains('<') {
        return html
            .split("\n\n")
            .map(collapse_whitespace)
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
    }

    // Stack of (tag, container id when the tag is a container).
    let mut stack: Vec<(String, Option<usize>)> = Vec::new();
    let mut containers_seen = 0usize;
    let mut blocks: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut loose: Vec<String> = Vec::new();

    let nearest_container =
        |stack: &[(String, Option<usize>)]| stack.iter().rev().find_map(|(_, c)| *c).unwrap_or(usize::MAX);

    for token in tokenize(html) {
        match token {
            Token::Open(name) => {
                if BLOCKS.contains(&name.as_str()) {
                    if let Some(block) = current.take() {
                        blocks.push(block);
                    }
                    current = Some((nearest_container(&stack), String::new()));
                }
                let container = CONTAINERS.contains(&name.as_str()).then(|| {
                    containers_seen += 1;
                    containers_seen
                });
                stack.push((name, container));
            }
            Token::Close(name) => {
                if BLOCKS.contains(&name.as_str())
                    && let Some(block) = current.take()
                {
                    blocks.push(block);
                }
                if let Some(pos) = stack.iter().rposition(|(n, _)| *n == name) {
                    stack.truncate(pos);
                }
            }
            Token::Text(text) => {
                let text = decode_entities(text);
                match current.as_mut() {
                    Some((_, buf)) => {
                        buf.push(' ');
                        buf.push_str(&text);
                    }
                    None => loose.push(text),
                }
            }
        }
    }
    if let Some(block) = current.take() {
        blocks.push(block);
    }

    let blocks: Vec<(usize, String)> = blocks
        .into_iter()
        .map(|(c, t)| (c, collapse_whitespace(&t)))
        .filter(|(_, t)| !t.is_empty())
        .collect();

    if blocks.is_empty() {
        return collapse_whitespace(&loose.join(" "));
    }

    let mut weight: HashMap<usize, usize> = HashMap::new();
    for (container, text) in &blocks {
        *weight.entry(*container).or_default() += text.chars().count();
    }
    let best = weight
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(c, _)| *c)
        .unwrap_or(usize::MAX);

    blocks
        .into_iter()
        .filter(|(c, _)| *c == best)
        .map(|(_, t)| t)
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAGE: &str = r#"<!DOCTYPE html>
<html><head><title>Ignored title</title><script>var x = "<p>not text</p>";</script>
<style>p { color: red }</style></head>
<body>
<nav><ul><li>Home</li><li>World</li><li>Sport</li></ul></nav>
<header><p>Subscribe to our newsletter</p></header>
<div class="sidebar"><p>Most read</p><p>Short link</p></div>
<article>
  <h1>Flooding hits the coast</h1>
  <p>Heavy rain caused severe flooding along the coast on Tuesday, officials said.</p>
  <!-- ad slot -->
  <p>Residents were evacuated from low-lying areas &amp; shelters were opened.</p>
  <figure><img src="a.jpg"><figcaption>Rescue teams at work</figcaption></figure>
</article>
<footer><p>Copyright 2024</p></footer>
</body></html>"#;

    #[test]
    fn keeps_article_body_and_drops_boilerplate() {
        let text = extract_article_text(PAGE);
        assert!(text.contains("Heavy rain caused severe flooding"));
        assert!(text.contains("Residents were evacuated from low-lying areas & shelters"));
        assert!(text.contains("Rescue teams at work"));
        assert!(text.starts_with("Flooding hits the coast"));
        for junk in [
            "Subscribe",
            "Most read",
            "Copyright",
            "Home",
            "not text",
            "color",
            "Ignored title",
        ] {
            assert!(!text.contains(junk), "leaked {junk:?}: {text}");
        }
    }

    #[test]
    fn plain_text_passthrough() {
        assert_eq!(extract_article_text("one  two\n\nthree"), "one two\n\nthree");
    }

    #[test]
    fn no_paragraphs_falls_back_to_loose_text() {
        assert_eq!(
            extract_article_text("<div>just <b>some</b> text</div>"),
            "just some text"
        );
    }

    #[test]
    fn entities_decode() {
        assert_eq!(
            decode_entities("a &lt;b&gt; &#65;&#x42; &unknown; &"),
            "a <b> AB &unknown; &"
        );
    }
}
