#![no_main]
use libfuzzer_sys::fuzz_target;

use kthprice::dists::Expr;
use kthprice::Jet;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if s.len() > 4096 {
        return;
    }
    let Ok(e) = Expr::parse(s) else {
        return;
    };
    let printed = e.to_string();
    assert_eq!(Expr::parse(&printed).expect("display output must reparse"), e, "{printed}");
    // evaluation may fail or overflow, but must not panic
    let _ = e.eval(0.5);
    let _ = e.eval_jet(&Jet::variable(0.5, 4));
});
