#![no_main]
use libfuzzer_sys::fuzz_target;

use kthprice::dists::parse_spec_offline;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(d) = parse_spec_offline(s) {
        let again = parse_spec_offline(&d.to_string()).expect("display output must reparse");
        assert_eq!(d, again);
    }
});
