//! Minimal HTML to text conversion for email bodies.

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "footer", "form",
    "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre",
    "section", "table", "tbody", "td", "tfoot", "th", "thead", "title", "tr", "ul",
];

/// Strips tags, comments, `<script>`/`<style>` blocks and character
/// references. Block-level tags become word boundaries; inline tags vanish
/// without inserting whitespace. The result never contains `<` or `>` and
/// has its whitespace collapsed.
pub fn html_to_text(html: &str) -> String {
    let stripped = strip_markup(html);
    let decoded = decode_entities(&stripped);
    let mut out = String::with_capacity(decoded.len());
    for word in decoded
        .split(|c: char| c.is_whitespace() || c == '<' || c == '>')
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn strip_markup(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let lower = html.to_ascii_lowercase();
    let bytes = html.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            let next = html[i..].find('<').map_or(html.len(), |off| i + off);
            out.push_str(&html[i..next]);
            i = next;
            continue;
        }
        let rest = &lower[i..];
        if rest.starts_with("<!--") {
            i = rest.find("-->").map_or(bytes.len(), |off| i + off + 3);
            out.push(' ');
            continue;
        }
        let Some(close) = rest.find('>') else {
            // unterminated tag: drop the remainder
            break;
        };
        let tag = &rest[1..close];
        let name = tag_name(tag);
        let mut end = i + close + 1;
        if (name == "script" || name == "style") && !tag.starts_with('/') {
            let closing = format!("</{name}");
            end = match lower[end..].find(&closing) {
                Some(off) => {
                    let after = end + off;
                    lower[after..].find('>').map_or(bytes.len(), |o| after + o + 1)
                }
                None => bytes.len(),
            };
            out.push(' ');
        } else if BLOCK_TAGS.contains(&name) {
            out.push(' ');
        }
        i = end;
    }
    out
}

fn tag_name(tag: &str) -> &str {
    let tag = tag.trim_start_matches('/').trim_start();
    let end = tag
        .find(|c: char| !c.is_ascii_alphanumeric())
        .unwrap_or(tag.len());
    &tag[..end]
}

/// Decodes the common named references and all numeric references.
/// Unknown references are left as written.
pub fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let semi = tail[1..]
            .char_indices()
            .take(10)
            .find(|(_, c)| *c == ';')
            .map(|(off, _)| off + 1);
        match semi.and_then(|s| decode_entity(&tail[1..s]).map(|c| (c, s))) {
            Some((c, s)) => {
                out.push(c);
                rest = &tail[s + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "copy" => '©',
        "reg" => '®',
        "euro" => '€',
        "pound" => '£',
        "hellip" => '…',
        "ndash" => '–',
        "mdash" => '—',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ldquo" => '“',
        "rdquo" => '”',
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_tags_are_removed() {
        assert_eq!(html_to_text("<p>open <b>now</b></p>"), "open now");
    }

    #[test]
    fn script_and_style_blocks_are_dropped() {
        let html = "<style>p { color: red }</style><p>hi</p><script>alert('x')</script>there";
        assert_eq!(html_to_text(html), "hi there");
    }

    #[test]
    fn comments_are_dropped() {
        assert_eq!(html_to_text("a<!-- hidden -->b"), "a b");
    }

    #[test]
    fn entities_are_decoded_without_leaking_brackets() {
        assert_eq!(html_to_text("Tom &amp; Jerry &lt;3 &#233;t&#xE9;"), "Tom & Jerry 3 été");
        assert_eq!(decode_entities("&bogus; &amp"), "&bogus; &amp");
    }

    #[test]
    fn block_tags_split_words() {
        assert_eq!(html_to_text("statement<br>Hi"), "statement Hi");
        assert_eq!(html_to_text("photo<span>s</span>"), "photos");
    }

    #[test]
    fn unterminated_tag_is_dropped() {
        assert_eq!(html_to_text("hello <a href="), "hello");
    }
}
