//! Streaming decodes with arbitrary skips agree with a whole-chunk decode.

use lakegraph_core::encoding::{decode_all, encode};
use lakegraph_core::{ChunkDecoder, ColumnKind, Encoding, Value};
use proptest::prelude::*;

fn column() -> impl Strategy<Value = (ColumnKind, Encoding, Vec<Value>)> {
    prop_oneof![
        (prop::collection::vec(-5i64..5, 1..300), 0..3u8).prop_map(|(v, e)| (
            ColumnKind::Int64,
            Encoding::from_tag(e).unwrap(),
            v.into_iter().map(Value::Int64).collect()
        )),
        (prop::collection::vec("[a-c]{0,3}", 1..300), prop::bool::ANY).prop_map(|(v, dict)| (
            ColumnKind::String,
            if dict { Encoding::Dict } else { Encoding::Plain },
            v.into_iter().map(Value::Str).collect()
        )),
        prop::collection::vec(prop::bool::ANY, 1..300).prop_map(|v| (
            ColumnKind::Bool,
            Encoding::Rle,
            v.into_iter().map(Value::Bool).collect()
        )),
    ]
}

proptest! {
    #[test]
    fn skip_and_decode_interleave((kind, enc, values) in column(), steps in prop::collection::vec((0..20u64, 1..20u64), 1..40)) {
        let bytes = encode(&values, kind, enc).unwrap();
        let n = values.len() as u64;
        prop_assert_eq!(&decode_all(&bytes, kind, enc, n).unwrap(), &values);
        let mut dec = ChunkDecoder::new(&bytes, kind, enc, n).unwrap();
        for (skip, take) in steps {
            let skip = skip.min(n - dec.position());
            dec.skip(&bytes, skip).unwrap();
            let take = take.min(n - dec.position());
            let start = dec.position() as usize;
            let mut out = Vec::new();
            dec.decode_into(&bytes, take, &mut out).unwrap();
            prop_assert_eq!(&out[..], &values[start..start + take as usize]);
            if dec.position() == n {
                break;
            }
        }
    }
}
