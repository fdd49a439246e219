#![no_main]
use libfuzzer_sys::fuzz_target;
use mocstream::io::parse_archive_snapshot;

fuzz_target!(|data: &[u8]| {
    let Some((&d, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        let _ = parse_archive_snapshot(text, usize::from(d % 8) + 1);
    }
});
