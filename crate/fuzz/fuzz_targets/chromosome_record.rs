#![no_main]
use libfuzzer_sys::fuzz_target;
use mocstream::chromosome::{decode_line, format_record, parse_record_line, serialize_chromosome};

fuzz_target!(|data: &[u8]| {
    let Some((&d, rest)) = data.split_first() else { return };
    let Ok(line) = std::str::from_utf8(rest) else { return };
    let d = usize::from(d % 8) + 1;
    if let Ok(record) = parse_record_line(line) {
        assert_eq!(parse_record_line(&format_record(&record)).unwrap(), record);
    }
    if let Ok(solution) = decode_line(line, d) {
        let record = serialize_chromosome(&solution);
        assert_eq!(record.len(), solution.k() * d + 2);
    }
});
