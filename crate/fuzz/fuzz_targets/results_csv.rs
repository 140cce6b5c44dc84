#![no_main]

use hlift::experiments::parse_results;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_results(data) {
        let mut text = String::from(hlift::experiments::RESULTS_HEADER);
        text.push('\n');
        for r in &rows {
            text.push_str(&r.to_csv_line());
            text.push('\n');
        }
        let again = parse_results(text.as_bytes()).expect("written rows parse");
        assert_eq!(again.len(), rows.len());
    }
});
