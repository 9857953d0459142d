use std::collections::BTreeSet;

use crs_core::ingest::{build_base_graph, chunk_script, ScriptDocument};
use crs_testkit::gen;
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn base_graph_conserves_triplet_count(ts in vec(gen::triplet(), 0..60)) {
        let g = build_base_graph(&ts);
        g.validate().unwrap();
        let distinct = ts.iter().filter(|t| t.subject() != t.object()).count() as u64;
        prop_assert_eq!(g.total_weight(), distinct);
        let names: BTreeSet<&str> = ts.iter().flat_map(|t| [t.subject(), t.object()]).collect();
        prop_assert_eq!(g.node_count(), names.len());
        let mut reversed = ts.clone();
        reversed.reverse();
        prop_assert_eq!(build_base_graph(&reversed), g);
    }

    #[test]
    fn chunks_cover_the_script(text in "\\PC{1,2000}", size in 1usize..700) {
        let doc = ScriptDocument::new("drama", 1, text.clone()).unwrap();
        let chunks = chunk_script(&doc, size).unwrap();
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(joined, text.clone());
        let n = text.chars().count();
        prop_assert_eq!(chunks.len(), n.div_ceil(size));
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            let len = c.text.chars().count();
            prop_assert!(len == size || (i + 1 == chunks.len() && len <= size));
        }
    }
}
