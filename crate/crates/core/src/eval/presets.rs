//! Shipped hyperparameters and published reference figures.
//!
//! Position thresholds follow scene scale: roughly 0.1 to 0.3 m for indoor
//! rooms and 1 to 2 m for outdoor city blocks.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub dataset: &'static str,
    pub scene: &'static str,
    /// Pose regressor the values were tuned for.
    pub regressor: &'static str,
    pub d_th: f64,
    pub gamma: u32,
    pub ratio: f64,
}

const fn p(
    dataset: &'static str,
    scene: &'static str,
    regressor: &'static str,
    d_th: f64,
    gamma: u32,
    ratio: f64,
) -> Preset {
    Preset {
        dataset,
        scene,
        regressor,
        d_th,
        gamma,
        ratio,
    }
}

pub const PRESETS: &[Preset] = &[
    p("7scenes", "chess", "dfnet", 0.15, 30, 0.7),
    p("7scenes", "chess", "dfnet_dm", 0.15, 30, 0.7),
    p("7scenes", "fire", "dfnet", 0.30, 40, 0.7),
    p("7scenes", "fire", "dfnet_dm", 0.30, 40, 0.7),
    p("7scenes", "heads", "dfnet", 0.20, 30, 0.7),
    p("7scenes", "heads", "dfnet_dm", 0.20, 30, 0.7),
    p("7scenes", "office", "dfnet", 0.20, 30, 0.7),
    p("7scenes", "office", "dfnet_dm", 0.25, 20, 0.7),
    p("7scenes", "pumpkin", "dfnet", 0.20, 40, 0.7),
    p("7scenes", "pumpkin", "dfnet_dm", 0.20, 20, 0.7),
    p("7scenes", "stairs", "dfnet", 0.20, 20, 0.7),
    p("7scenes", "stairs", "dfnet_dm", 0.25, 20, 0.7),
    p("cambridge", "kings", "ms-t", 1.5, 25, 0.7),
    p("cambridge", "kings", "dfnet_dm", 2.0, 30, 0.7),
    p("cambridge", "hospital", "ms-t", 1.5, 15, 0.5),
    p("cambridge", "hospital", "dfnet_dm", 2.0, 15, 0.5),
    p("cambridge", "shop", "ms-t", 1.5, 20, 0.7),
    p("cambridge", "shop", "dfnet_dm", 1.5, 20, 0.7),
    p("cambridge", "church", "ms-t", 1.5, 30, 0.7),
    p("cambridge", "church", "dfnet_dm", 1.5, 30, 0.7),
];

pub fn find(scene: &str, regressor: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| {
        p.scene.eq_ignore_ascii_case(scene) && p.regressor.eq_ignore_ascii_case(regressor)
    })
}

/// Published figures from the original real-data experiments. They need
/// pretrained regressors and the original image sets, so they serve as
/// documentation only.
pub mod reference {
    /// Largest relative reduction of median position error.
    pub const BEST_POSITION_IMPROVEMENT_PCT: f64 = 28.6;
    /// Maximum far-pair match count on the Kings training sequence at 1.5 m.
    pub const KINGS_FAR_PAIR_MAX_MATCHES: usize = 25;
    /// Chess high-accuracy percentage before and after gating.
    pub const CHESS_PCT_HIGH: (f64, f64) = (67.9, 78.8);
    /// Kings training set size used for the latency figures.
    pub const KINGS_TRAIN_SIZE: usize = 1220;
    /// Upper bounds in milliseconds: retrieval, matching, whole added overhead.
    pub const RETRIEVAL_MS: f64 = 2.0;
    pub const MATCHING_MS: f64 = 2.0;
    pub const ADDED_OVERHEAD_MS: f64 = 15.0;
}
