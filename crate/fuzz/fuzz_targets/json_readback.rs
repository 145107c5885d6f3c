#![no_main]

use egvp::results::ResultTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = ResultTable::from_json(text) {
        let json = table.to_json().expect("accepted table serializes");
        let again = ResultTable::from_json(&json).expect("written table reads back");
        assert_eq!(again.rows.len(), table.rows.len());
        assert!(again.rows.iter().zip(&table.rows).all(|(a, b)| a.same_as(b)));
    }
});
