#![allow(dead_code)]

use dae_discovery::benchgen::{
    kick_schedule, CrnSpec, GridSpec, PendulumSpec, RunParams, SystemSpec,
};
use dae_discovery::pipeline::PipelineConfig;

fn base(library: &str, rest: &str) -> PipelineConfig {
    let text = format!(r#"{{"input": "-", "library": {library} {rest}}}"#);
    let mut cfg = PipelineConfig::from_json(&text).expect("fixture config");
    cfg.input = None;
    cfg
}

/// Five initial conditions, 400 samples each, no noise.
pub fn crn1_clean() -> PipelineConfig {
    let mut cfg = base(
        r#"{"kind": "polynomial", "degree": 2}"#,
        r#", "dynamics": {"preference": ["A", "B"]}"#,
    );
    cfg.generator = Some(SystemSpec::Crn {
        spec: CrnSpec::crn1_default(),
        run: RunParams {
            horizon: 30.0,
            samples: 400,
            noise: 0.0,
            snr_db: None,
            seed: 0,
        },
    });
    cfg
}

/// 5 % noise, smoothed with a 21-point cubic filter; two relations demanded.
pub fn crn1_noisy(seed: u64) -> PipelineConfig {
    let mut cfg = base(
        r#"{"kind": "polynomial", "degree": 2}"#,
        r#", "smoothing": {"window": 21, "polyorder": 3},
            "derivative": {"window": 21, "polyorder": 3},
            "algebraic": {"k": 2, "eps": "inf", "sparse": {"solver": "lasso_stlsq", "alpha": 1e-4, "threshold": 1.2}},
            "dynamics": {"preference": ["A", "B"]},
            "metrics": {"span_tol": 0.05, "support_tol": 0.05}"#,
    );
    cfg.generator = Some(SystemSpec::Crn {
        spec: CrnSpec::crn1_default(),
        run: RunParams {
            horizon: 30.0,
            samples: 400,
            noise: 0.05,
            snr_db: None,
            seed,
        },
    });
    cfg
}

/// Six-node network kicked every 3 s, sampled at 100 Hz, 30 dB SNR.
pub fn grid(kicks: usize, seed: u64) -> PipelineConfig {
    let mut cfg = base(
        r#"{"kind": "grid", "nodes": 6, "generators": [1, 2]}"#,
        r#", "algebraic": {"k": 1, "eps": "inf", "sparse": {"solver": "stols", "threshold": 0.2}},
            "metrics": {"span_tol": 0.05, "support_tol": 0.05}"#,
    );
    let mut spec = GridSpec::six_node();
    spec.perturbations = kick_schedule(spec.nodes, kicks, 1.0, 3.0, seed);
    let horizon = 3.0 * (kicks as f64 + 1.0);
    cfg.generator = Some(SystemSpec::Grid {
        spec,
        run: RunParams {
            horizon,
            samples: (horizon * 100.0).round() as usize,
            noise: 0.0,
            snr_db: Some(30.0),
            seed,
        },
    });
    cfg
}

pub fn single_pendulum(noise: f64, seed: u64) -> PipelineConfig {
    let mut cfg = base(
        r#"{"kind": "polynomial", "degree": 3}"#,
        r#", "smoothing": {"window": 21, "polyorder": 3}, "algebraic": {"k": 1},
            "metrics": {"span_tol": 0.05, "support_tol": 0.05}"#,
    );
    cfg.generator = Some(SystemSpec::Pendulum {
        spec: PendulumSpec::single_default(),
        run: RunParams {
            horizon: 20.0,
            samples: 1000,
            noise,
            snr_db: None,
            seed,
        },
    });
    cfg
}

pub fn double_pendulum(degree: u32) -> PipelineConfig {
    let mut cfg = base(
        &format!(r#"{{"kind": "polynomial", "degree": {degree}}}"#),
        "",
    );
    cfg.generator = Some(SystemSpec::Pendulum {
        spec: PendulumSpec::double_default(),
        run: RunParams {
            horizon: 60.0,
            samples: 3000,
            noise: 0.0,
            snr_db: None,
            seed: 0,
        },
    });
    cfg
}
