#![no_main]

use admil::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ConfigFile::from_json_str(src) {
        let again = ConfigFile::from_json_str(&cfg.to_json_string()).expect("serialized config parses");
        assert_eq!(cfg.problem.breakpoints.len(), again.problem.breakpoints.len());
        let _ = cfg.problem();
        let _ = cfg.experiment_spec();
    }
});
