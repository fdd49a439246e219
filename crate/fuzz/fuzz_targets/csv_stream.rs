#![no_main]
use libfuzzer_sys::fuzz_target;
use mocstream::io::{windows, CsvOptions, CsvPoints};

fuzz_target!(|data: &[u8]| {
    let Some((&flags, rest)) = data.split_first() else { return };
    let options = CsvOptions {
        delimiter: if flags & 1 == 0 { b',' } else { b';' },
        has_header: flags & 2 != 0,
        label_col: (flags & 4 != 0).then_some(usize::from(flags >> 4)),
    };
    let size = usize::from(flags >> 3 & 0x7) + 1;
    for batch in windows(CsvPoints::from_reader(rest, options), size) {
        let Ok(batch) = batch else { break };
        assert!(batch.len() <= size && !batch.is_empty());
        assert!(batch.points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())));
    }
});
