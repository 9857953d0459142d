use std::fmt::Debug;

use crs_core::ingest::{read_triplets_jsonl, write_triplets_jsonl};
use crs_core::persist::{from_json_str, to_json_string};
use crs_testkit::gen;
use proptest::collection::vec;
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + Debug>(value: &T) -> Result<(), TestCaseError> {
    let text = to_json_string(value);
    let back: T = from_json_str(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, value);
    prop_assert_eq!(to_json_string(&back), text);
    Ok(())
}

proptest! {
    #[test]
    fn graph_documents(doc in gen::graph_document()) {
        round_trip(&doc)?;
    }

    #[test]
    fn crs_at_every_stage(crs in gen::any_crs()) {
        crs.validate().unwrap();
        round_trip(&crs)?;
    }

    #[test]
    fn selection_documents(doc in gen::selection_document()) {
        round_trip(&doc)?;
    }

    #[test]
    fn report_documents(doc in gen::report_document()) {
        round_trip(&doc)?;
    }

    #[test]
    fn comparison_documents(doc in gen::comparison_document()) {
        round_trip(&doc)?;
    }

    #[test]
    fn ground_truth(gt in gen::ground_truth()) {
        round_trip(&gt)?;
    }

    #[test]
    fn triplets_json_and_jsonl(ts in vec(gen::triplet(), 0..20)) {
        for t in &ts {
            round_trip(t)?;
        }
        let mut buf = Vec::new();
        write_triplets_jsonl(&mut buf, &ts).unwrap();
        prop_assert_eq!(read_triplets_jsonl(&buf[..]).unwrap(), ts);
    }
}
