#![no_main]

use libfuzzer_sys::fuzz_target;
use maxplus_hjb::io::{read_value_field_csv, value_field_to_csv_string};

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = read_value_field_csv(data) {
        let text = value_field_to_csv_string(&field);
        let again = read_value_field_csv(text.as_bytes()).expect("written CSV reads back");
        assert_eq!(again.grid().axes(), field.grid().axes());
        assert_eq!(again.values().len(), field.values().len());
    }
});
