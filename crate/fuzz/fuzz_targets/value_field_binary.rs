#![no_main]

use libfuzzer_sys::fuzz_target;
use maxplus_hjb::io::{decode_value_field, encode_value_field};

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode_value_field(data) {
        let again = decode_value_field(&encode_value_field(&field)).expect("re-encoded dump decodes");
        assert_eq!(again.grid(), field.grid());
        assert!(again
            .values()
            .iter()
            .zip(field.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
