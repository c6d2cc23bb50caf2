#![no_main]

use libfuzzer_sys::fuzz_target;
use memsolve::SweepConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = SweepConfig::from_json(text) {
        assert!(cfg.eps_ladder.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(cfg.solver.epsilon, cfg.eps_ladder[0]);
        cfg.validate().unwrap();
    }
});
