use crate::scenario::ToxScenario;

// Agent-B levels bottom-up; each row lists agent-A levels 1..3.
const TABLE: [[[f64; 3]; 3]; 19] = [
    [[0.30, 0.35, 0.40], [0.45, 0.50, 0.55], [0.60, 0.65, 0.70]],
    [[0.25, 0.30, 0.50], [0.35, 0.45, 0.55], [0.40, 0.60, 0.65]],
    [[0.10, 0.20, 0.30], [0.15, 0.25, 0.35], [0.40, 0.45, 0.50]],
    [[0.20, 0.25, 0.35], [0.30, 0.40, 0.50], [0.45, 0.55, 0.60]],
    [[0.15, 0.20, 0.35], [0.25, 0.30, 0.40], [0.45, 0.50, 0.55]],
    [[0.01, 0.03, 0.05], [0.10, 0.15, 0.30], [0.20, 0.25, 0.35]],
    [[0.01, 0.10, 0.15], [0.05, 0.20, 0.25], [0.30, 0.35, 0.40]],
    [[0.05, 0.20, 0.35], [0.10, 0.25, 0.40], [0.15, 0.30, 0.45]],
    [[0.01, 0.03, 0.07], [0.05, 0.15, 0.20], [0.10, 0.25, 0.30]],
    [[0.20, 0.30, 0.50], [0.30, 0.45, 0.60], [0.40, 0.55, 0.70]],
    [[0.10, 0.30, 0.45], [0.20, 0.40, 0.55], [0.30, 0.50, 0.60]],
    [[0.10, 0.20, 0.30], [0.30, 0.40, 0.55], [0.45, 0.50, 0.60]],
    [[0.05, 0.20, 0.30], [0.10, 0.30, 0.40], [0.45, 0.50, 0.60]],
    [[0.05, 0.10, 0.30], [0.15, 0.20, 0.50], [0.30, 0.40, 0.60]],
    [[0.05, 0.15, 0.30], [0.10, 0.20, 0.40], [0.25, 0.30, 0.50]],
    [[0.05, 0.20, 0.25], [0.10, 0.30, 0.40], [0.30, 0.50, 0.60]],
    [[0.05, 0.10, 0.25], [0.15, 0.20, 0.30], [0.30, 0.40, 0.60]],
    [[0.01, 0.05, 0.25], [0.10, 0.20, 0.30], [0.15, 0.30, 0.50]],
    [[0.10, 0.20, 0.30], [0.15, 0.30, 0.50], [0.30, 0.40, 0.60]],
];

/// Skeleton of the motivating 3x3 simulations.
pub const SKELETON_BASE: [f64; 9] = [0.10, 0.20, 0.30, 0.40, 0.45, 0.50, 0.54, 0.59, 0.64];
/// [`SKELETON_BASE`] amended so that every correct ordering of scenario 5
/// gives a consistent CRM.
pub const SKELETON_AMENDED: [f64; 9] = [0.10, 0.27, 0.32, 0.37, 0.45, 0.50, 0.54, 0.59, 0.64];
/// Skeleton calibrated for scenarios 1-9 jointly.
pub const SKELETON_CALIBRATED: [f64; 9] = [0.25, 0.28, 0.34, 0.36, 0.40, 0.44, 0.47, 0.53, 0.55];

/// Target toxicity level of the built-in scenarios.
pub const LIBRARY_THETA0: f64 = 0.3;

/// The 19 built-in 3x3 scenarios (ids 1..=19; index 0 holds scenario 1).
/// Scenarios 1-9 have a single MTC, 10-19 several.
pub fn scenario_library() -> Vec<ToxScenario> {
    TABLE
        .iter()
        .map(|m| {
            let rows: Vec<&[f64]> = m.iter().map(|r| r.as_slice()).collect();
            ToxScenario::from_rows(&rows, LIBRARY_THETA0).expect("built-in scenario is valid")
        })
        .collect()
}

/// Built-in scenario by 1-based id.
pub fn library_scenario(id: usize) -> Option<ToxScenario> {
    (1..=TABLE.len()).contains(&id).then(|| scenario_library().swap_remove(id - 1))
}
