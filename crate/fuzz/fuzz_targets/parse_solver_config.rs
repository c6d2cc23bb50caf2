#![no_main]

use libfuzzer_sys::fuzz_target;
use memsolve::SolverConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = SolverConfig::from_json(text) {
        cfg.validate().unwrap();
        cfg.grid().unwrap();
    }
});
