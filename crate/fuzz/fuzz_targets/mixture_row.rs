#![no_main]

use hlift::MixtureParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(psi) = MixtureParams::from_csv_row(text) {
        let total: f64 = psi.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        let again = MixtureParams::from_csv_row(&psi.to_csv_row()).expect("row round-trips");
        assert_eq!(again.k(), psi.k());
    }
});
