#![no_main]
use libfuzzer_sys::fuzz_target;

use kthprice::simulate::SimulationReport;
use kthprice::verify::VerificationReport;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = VerificationReport::from_toml(s) {
        VerificationReport::from_toml(&r.to_toml()).expect("verification report round trip");
    }
    if let Ok(r) = SimulationReport::from_toml(s) {
        SimulationReport::from_toml(&r.to_toml()).expect("simulation report round trip");
    }
});
