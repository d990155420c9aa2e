use super::TaggedToken;

/// A token counts as highlighted when at least this fraction of its
/// characters fall inside highlighted spans.
pub const MIN_HIGHLIGHT_FRACTION: f64 = 0.5;

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Projects highlighted character spans (half-open, in chars) onto tagged
/// tokens.
pub fn align_highlights(
    tokens: &[TaggedToken],
    spans: &[(usize, usize)],
    text_len: usize,
) -> Vec<u8> {
    let mut marked = vec![false; text_len];
    for &(start, end) in spans {
        for m in marked.iter_mut().take(end.min(text_len)).skip(start) {
            *m = true;
        }
    }
    tokens
        .iter()
        .map(|t| {
            let end = t.end.min(text_len);
            let width = t.end.saturating_sub(t.start);
            if width == 0 {
                return 0;
            }
            let hit = (t.start..end).filter(|&i| marked[i]).count();
            u8::from(hit as f64 >= MIN_HIGHLIGHT_FRACTION * width as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pos;

    fn tok(start: usize, end: usize) -> TaggedToken {
        TaggedToken {
            surface: String::new(),
            lemma: "x".into(),
            pos: Pos::Noun,
            start,
            end,
        }
    }

    #[test]
    fn half_covered_token_is_annotated() {
        // "abcd efgh": highlight "ab" and "efg"
        let toks = [tok(0, 4), tok(5, 9)];
        assert_eq!(align_highlights(&toks, &[(0, 2), (5, 8)], 9), vec![1, 1]);
        assert_eq!(align_highlights(&toks, &[(0, 1)], 9), vec![0, 0]);
    }

    #[test]
    fn no_spans_means_no_annotation() {
        let toks = [tok(0, 3)];
        assert_eq!(align_highlights(&toks, &[], 3), vec![0]);
    }
}
