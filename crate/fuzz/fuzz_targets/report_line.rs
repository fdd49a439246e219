#![no_main]
use libfuzzer_sys::fuzz_target;
use mocstream::io::{parse_report_line, write_report_line};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(report) = parse_report_line(line) {
        if let Ok(again) = write_report_line(&report) {
            assert_eq!(parse_report_line(&again).unwrap(), report);
        }
    }
});
