#![no_main]

use admil::expr::Expr;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = Expr::parse(src) {
        let _ = e.eval(0.5);
        let _ = e.constant_value();
        let _ = Expr::parse(&e.to_string());
    }
});
