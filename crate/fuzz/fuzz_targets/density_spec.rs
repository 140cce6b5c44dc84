#![no_main]

use hlift::Density;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = text.parse::<Density>() {
        let again: Density = d.to_string().parse().expect("display output parses");
        assert_eq!(again.to_string(), d.to_string());
        for x in [0.0, 0.25, 0.5, 1.0] {
            assert!(d.pdf(x) >= 0.0);
        }
    }
});
