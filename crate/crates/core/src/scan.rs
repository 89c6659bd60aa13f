//! Lexical URL detection shared by the external-reference filter and FQDN extraction.

fn is_host_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'.' || b == b'-'
}

fn is_quote(b: u8) -> bool {
    matches!(b, b'"' | b'\'' | b'`')
}

fn starts_with_ignore_case(hay: &[u8], needle: &[u8]) -> bool {
    hay.len() >= needle.len() && hay[..needle.len()].eq_ignore_ascii_case(needle)
}

/// A URL-ish occurrence: where the authority starts and whether it came from an
/// explicit `http(s)://` scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct UrlHit {
    pub authority_start: usize,
    pub explicit_scheme: bool,
}

/// Yields every `http://`, `https://` and quoted scheme-relative `//host` occurrence.
///
/// A scheme-relative `//` only counts when it opens a string literal and is
/// followed by an alphanumeric byte, so `// comment` lines do not register.
pub(crate) fn url_hits(content: &[u8]) -> impl Iterator<Item = UrlHit> + '_ {
    let mut i = 0;
    std::iter::from_fn(move || {
        while i + 2 <= content.len() {
            let at = i;
            i += 1;
            let rest = &content[at..];
            if rest[0] == b'h' || rest[0] == b'H' {
                for scheme in [&b"http://"[..], b"https://"] {
                    if starts_with_ignore_case(rest, scheme) {
                        i = at + scheme.len();
                        return Some(UrlHit {
                            authority_start: i,
                            explicit_scheme: true,
                        });
                    }
                }
            } else if rest.starts_with(b"//")
                && at > 0
                && is_quote(content[at - 1])
                && rest.get(2).is_some_and(|b| b.is_ascii_alphanumeric())
            {
                i = at + 2;
                return Some(UrlHit {
                    authority_start: i,
                    explicit_scheme: false,
                });
            }
        }
        None
    })
}

/// The raw host run starting at `start`, up to the first non-hostname byte.
pub(crate) fn host_at(content: &[u8], start: usize) -> &str {
    let end = content[start..]
        .iter()
        .position(|&b| !is_host_byte(b))
        .map_or(content.len(), |n| start + n);
    // host bytes are ASCII
    std::str::from_utf8(&content[start..end]).unwrap_or("")
}
