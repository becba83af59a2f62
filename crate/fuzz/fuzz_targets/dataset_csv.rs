#![no_main]

use libfuzzer_sys::fuzz_target;
use luglab_core::dataset::{Dataset, PercentMode};

fuzz_target!(|data: &[u8]| {
    for mode in [PercentMode::Auto, PercentMode::Percent, PercentMode::Proportion] {
        if let Ok(ds) = Dataset::from_reader(data, mode, "fuzz") {
            assert!(!ds.is_empty());
            for o in &ds.observations {
                assert!(o.alpha > 0.0 && o.alpha < 1.0);
                assert!((0.0..=1.0).contains(&o.use_));
            }
            // Canonical output must load back to the same observations.
            let again = Dataset::from_csv_str(&ds.to_csv_string(), PercentMode::Proportion)
                .expect("canonical CSV reloads");
            assert_eq!(again.observations, ds.observations);
        }
    }
});
