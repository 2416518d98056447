use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Fixed-length, right-padded id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

pub fn encode_sequence<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary, max_len: usize) -> Result<EncodedSequence> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let mut ids: Vec<usize> = doc.iter().take(max_len).map(|t| vocab.id_or_unk(t.as_ref())).collect();
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    Ok(EncodedSequence { ids, true_length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{build_vocabulary, UNK};
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        build_vocabulary(&[vec!["a", "a", "b"]], 1).unwrap()
    }

    #[test]
    fn pads_and_truncates() {
        let v = vocab();
        assert_eq!(encode_sequence(&["a"], &v, 3).unwrap(), EncodedSequence { ids: vec![2, 0, 0], true_length: 1 });
        assert_eq!(encode_sequence(&["q"], &v, 2).unwrap().ids, vec![UNK, PAD]);
        let s = encode_sequence(&["a", "b", "a", "b", "a"], &v, 3).unwrap();
        assert_eq!(s, EncodedSequence { ids: vec![2, 3, 2], true_length: 3 });
        assert!(encode_sequence(&["a"], &v, 0).is_err());
    }

    proptest! {
        #[test]
        fn length_is_always_max_len(doc in proptest::collection::vec("[ab]{1,2}", 0..20), max_len in 1usize..16) {
            let s = encode_sequence(&doc, &vocab(), max_len).unwrap();
            prop_assert_eq!(s.ids.len(), max_len);
            prop_assert_eq!(s.true_length, doc.len().min(max_len));
            prop_assert!(s.ids[s.true_length..].iter().all(|&i| i == PAD));
        }
    }
}
