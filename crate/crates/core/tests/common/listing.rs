//! The made-up column scenario: a singer/concert join where `t1.song_id`
//! does not exist.

use sqlgate::decoder::{Decoder, DecoderState};
use sqlgate::tokenizer::END_ID;

pub const VALID: &str =
    "from singer as t1 join singer_in_concert as t2 on t1.singer_id = t2.singer_id select t1.name , count ( * ) group by t1.singer_id";
pub const MADE_UP: &str =
    "from singer as t1 join singer_in_concert as t2 on t1.song_id = t2.song_id select t1.name , count ( * ) group by t1.song_id";
pub const BAD_COLUMN: &str = "t1.song_id";

/// Whether some sequence of allowed pieces from `st` spells `text`.
pub fn spellable(d: &Decoder, st: &DecoderState, text: &str) -> bool {
    if text.is_empty() {
        return true;
    }
    let Ok(ids) = d.next_token_ids(st) else { return false };
    ids.into_iter().filter(|&i| i != END_ID).any(|i| {
        let piece = d.vocab().piece(i).unwrap_or("");
        text.starts_with(piece) && d.advance(st, i, usize::MAX).is_ok_and(|next| spellable(d, &next, &text[piece.len()..]))
    })
}

/// Forces the valid query and checks, at every piece boundary after the
/// on-keyword, that the bad column is neither a next terminal nor
/// spellable. Returns the number of boundaries checked.
pub fn check_exclusion(d: &Decoder) -> Result<usize, String> {
    let mut st = d.initial_state();
    let mut checked = 0;
    for id in d.gold_pieces(VALID).map_err(|e| e.to_string())? {
        if st.p.contains(" on") {
            checked += 1;
            let step = d.step(&st);
            if step.terminals.iter().any(|t| t.text == BAD_COLUMN) {
                return Err(format!("{BAD_COLUMN} offered after {:?}", st.p));
            }
            let word = st.p.rsplit(' ').next().unwrap_or("");
            let partial = !word.is_empty() && BAD_COLUMN.starts_with(word) && word != BAD_COLUMN;
            if spellable(d, &st, &format!(" {BAD_COLUMN}")) || (partial && spellable(d, &st, &BAD_COLUMN[word.len()..])) {
                return Err(format!("{BAD_COLUMN} spellable after {:?}", st.p));
            }
        }
        st = d.advance(&st, id, usize::MAX).map_err(|e| format!("forcing failed at {:?}: {e}", st.p))?;
    }
    if !st.finished || st.p != VALID {
        return Err(format!("forced to {:?}", st.p));
    }
    Ok(checked)
}
