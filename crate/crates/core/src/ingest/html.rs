//! Best-effort main-content extraction from HTML.
//!
//! Picks the largest `<article>` if the page has one; otherwise the container
//! whose direct paragraph children carry the most text. Block elements inside
//! the chosen root become paragraphs separated by blank lines. Scripts, styles,
//! navigation, headers, footers, asides and forms are dropped, as are blocks
//! that are mostly link text.

use scraper::{node::Node, ElementRef, Html, Selector};

const SKIP: &[&str] = &[
    "script", "style", "noscript", "template", "nav", "header", "footer", "aside", "form", "iframe",
    "svg", "button", "select",
];
const BLOCKS: &[&str] = &["p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "blockquote", "pre", "figcaption"];
const CONTAINERS: &str = "main, div, section, td, body";

fn is_skipped(el: &ElementRef) -> bool {
    SKIP.contains(&el.value().name())
}

fn collect_text(el: ElementRef, out: &mut String, links: &mut usize, in_link: bool) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => {
                out.push_str(t);
                if in_link {
                    *links += t.trim().chars().count();
                }
            }
            Node::Element(_) => {
                let c = ElementRef::wrap(child).expect("element node");
                if is_skipped(&c) {
                    continue;
                }
                let name = c.value().name();
                if name == "br" {
                    out.push(' ');
                }
                collect_text(c, out, links, in_link || name == "a");
                if BLOCKS.contains(&name) || name == "div" {
                    out.push(' ');
                }
            }
            _ => {}
        }
    }
}

fn normalized_text(el: ElementRef) -> (String, usize) {
    let mut raw = String::new();
    let mut links = 0;
    collect_text(el, &mut raw, &mut links, el.value().name() == "a");
    (raw.split_whitespace().collect::<Vec<_>>().join(" "), links)
}

fn has_skipped_ancestor(el: &ElementRef, root: &ElementRef) -> bool {
    let mut node = el.parent();
    while let Some(n) = node {
        if n.id() == root.id() {
            return false;
        }
        if let Some(e) = ElementRef::wrap(n) {
            if is_skipped(&e) {
                return true;
            }
        }
        node = n.parent();
    }
    false
}

fn paragraph_score(el: ElementRef) -> usize {
    el.children()
        .filter_map(ElementRef::wrap)
        .filter(|c| c.value().name() == "p")
        .map(|p| normalized_text(p).0.chars().count())
        .sum()
}

fn pick_root(doc: &Html) -> Option<ElementRef<'_>> {
    let article = Selector::parse("article").expect("static selector");
    let best_article = doc
        .select(&article)
        .filter(|a| !has_skipped_ancestor(a, &doc.root_element()))
        .max_by_key(|a| normalized_text(*a).0.chars().count());
    if best_article.is_some() {
        return best_article;
    }
    let containers = Selector::parse(CONTAINERS).expect("static selector");
    let scored = doc
        .select(&containers)
        .filter(|c| !has_skipped_ancestor(c, &doc.root_element()))
        .map(|c| (paragraph_score(c), c))
        .filter(|(s, _)| *s > 0)
        // first maximum in document order
        .fold(None::<(usize, ElementRef)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        });
    scored.map(|(_, c)| c).or_else(|| {
        let body = Selector::parse("body").expect("static selector");
        doc.select(&body).next()
    })
}

/// Extracts the main article text, one paragraph per block element, joined
/// with blank lines. Returns an empty string when nothing usable is found.
pub fn extract_main_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let Some(root) = pick_root(&doc) else {
        return String::new();
    };
    let block_sel = Selector::parse(&BLOCKS.join(", ")).expect("static selector");
    let mut paragraphs = Vec::new();
    for block in root.select(&block_sel) {
        if has_skipped_ancestor(&block, &root) {
            continue;
        }
        // nested blocks (li inside li, p inside blockquote) are covered by the outer one
        let nested = block.ancestors().take_while(|a| a.id() != root.id()).any(|a| {
            ElementRef::wrap(a).is_some_and(|e| BLOCKS.contains(&e.value().name()))
        });
        if nested {
            continue;
        }
        let (text, link_chars) = normalized_text(block);
        let len = text.chars().count();
        if len == 0 || link_chars * 2 > len {
            continue;
        }
        paragraphs.push(text);
    }
    if paragraphs.is_empty() {
        let (text, _) = normalized_text(root);
        if !text.is_empty() {
            paragraphs.push(text);
        }
    }
    paragraphs.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn article_paragraphs_are_extracted() {
        let html = r#"<html><head><title>t</title><style>p{}</style></head><body>
            <nav><ul><li><a href="/">Home</a></li><li><a href="/a">About</a></li></ul></nav>
            <article>
              <h1>Vaccine myths</h1>
              <p>First   paragraph about <b>vaccines</b>.</p>
              <script>track()</script>
              <p>Second paragraph.</p>
            </article>
            <footer><p>Copyright</p></footer>
        </body></html>"#;
        assert_eq!(
            extract_main_text(html),
            "Vaccine myths\n\nFirst paragraph about vaccines.\n\nSecond paragraph."
        );
    }

    #[test]
    fn densest_container_without_article() {
        let html = r#"<body><div id="side"><p>short</p></div>
            <div id="content"><p>A much longer paragraph of real content.</p><p>And another one here.</p></div></body>"#;
        assert_eq!(
            extract_main_text(html),
            "A much longer paragraph of real content.\n\nAnd another one here."
        );
    }

    #[test]
    fn link_heavy_blocks_are_dropped() {
        let html = r#"<article><p>Real text that matters.</p><p><a href="x">Read more links</a></p></article>"#;
        assert_eq!(extract_main_text(html), "Real text that matters.");
    }

    #[test]
    fn scripts_only_is_empty() {
        assert_eq!(extract_main_text("<html><body><script>x()</script><style>a{}</style></body></html>"), "");
    }
}
