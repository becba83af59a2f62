#![no_main]

use libfuzzer_sys::fuzz_target;
use luglab_core::behavioral::ModelKind;
use luglab_core::bootstrap::WildNoise;
use luglab_core::dataset::{PercentMode, UseKind};
use luglab_core::nls::Form;
use luglab_core::population::Recorder;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = s.parse::<ModelKind>() {
        assert_eq!(m.to_string().parse::<ModelKind>().unwrap(), m);
    }
    if let Ok(k) = s.parse::<UseKind>() {
        assert_eq!(k.to_string().parse::<UseKind>().unwrap(), k);
    }
    let _ = s.parse::<Form>();
    let _ = s.parse::<WildNoise>();
    let _ = s.parse::<PercentMode>();
    let _ = s.parse::<Recorder>();
});
