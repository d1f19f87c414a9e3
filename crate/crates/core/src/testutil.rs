//! Document builders shared by unit tests.

use crate::corpus::{Document, Rect, StopWords, TextLine, WordToken};

/// A document with one text line per entry of `lines`. Each character is
/// 10 px wide, words are 20 px tall and separated by 10 px, lines by 10 px.
/// Stop words are marked with the English list.
pub(crate) fn text_document(doc_id: &str, lines: &[&str]) -> Document {
    let stop = StopWords::english();
    let mut words = Vec::new();
    let mut text_lines = Vec::new();
    let mut page_w = 0;
    for (l, line) in lines.iter().enumerate() {
        let y = 10 + 30 * l as i64;
        let mut x = 10;
        let mut ids = Vec::new();
        for token in line.split_whitespace() {
            let id = words.len() as u32;
            let w = 10 * token.chars().count() as i64;
            ids.push(id);
            words.push(WordToken {
                word_id: id,
                text: Some(token.to_string()),
                bbox: Rect::new(x, y, w, 20).unwrap(),
                line_index: l,
                stop_word: Some(stop.contains(token)),
            });
            x += w + 10;
        }
        let start = words.len() - ids.len();
        let bbox = Rect::union_all(words[start..].iter().map(|w| &w.bbox)).expect("lines are non-empty");
        page_w = page_w.max(bbox.right() + 10);
        text_lines.push(TextLine {
            line_index: l,
            bbox,
            word_ids: ids,
        });
    }
    let doc = Document {
        doc_id: doc_id.into(),
        page_size: (page_w, 20 + 30 * lines.len() as i64),
        lines: text_lines,
        words,
    };
    doc.validate().unwrap();
    doc
}
