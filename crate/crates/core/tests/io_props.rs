mod common;

use common::random_doc;
use layerkit::fixtures::psd_subset;
use layerkit::io::{decode_packbits, encode_packbits, read_doc, read_psd, write_doc, write_psd};
use proptest::prelude::*;

/// Byte strings mixing long runs with noise, so both packet kinds occur.
fn runny() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec((any::<u8>(), 1usize..160, any::<bool>()), 0..40).prop_map(|parts| {
        let mut out = Vec::new();
        for (b, n, run) in parts {
            if run {
                out.extend(std::iter::repeat_n(b, n));
            } else {
                out.extend((0..n).map(|i| b.wrapping_mul(31).wrapping_add((i as u8).wrapping_mul(7))));
            }
        }
        out.truncate(4095);
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn packbits_round_trip(data in prop_oneof![prop::collection::vec(any::<u8>(), 0..4096), runny()]) {
        let enc = encode_packbits(&data);
        prop_assert_eq!(decode_packbits(&enc, data.len()).unwrap(), data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_round_trip(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let bytes = write_doc(&doc).unwrap();
        let back = read_doc(&bytes).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(write_doc(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn psd_round_trip(seed in any::<u64>()) {
        let doc = psd_subset(&random_doc(seed));
        prop_assert!(doc.validate().is_empty());
        let (bytes, report) = write_psd(&doc);
        prop_assert!(report.skipped_features.is_empty(), "{:?}", report.skipped_features);
        let (back, _) = read_psd(&bytes).unwrap();
        prop_assert!(back.content_eq(&doc));
        let (again, _) = write_psd(&back);
        prop_assert_eq!(again, bytes);
    }
}
