//! Named population presets.
//!
//! `micron` is a whole-module average. The lettered presets model single
//! banks; their noisy fractions and bias mixtures are fitted so that a
//! 20-measurement campaign over a 1 Gbit bank followed by the default
//! [0.4, 0.6] window reproduces the published noisy and filtered cell
//! counts of the corresponding bank.

use super::{ConditionCoefficients, MixtureComponent, PatternMap, PopulationConfig};

const FRAC_PATTERN_DEPENDENT: f64 = 0.005;
const MICRON_STUCK_ONE: f64 = 0.1;
const SAMSUNG_STUCK_ONE: f64 = 0.9;

pub const PRESET_NAMES: [&str; 6] = [
    "micron",
    "micron-a",
    "micron-b",
    "micron-c",
    "samsung-a",
    "samsung-b",
];

fn bank(
    frac_noisy: f64,
    stuck_value_weight: f64,
    mixture: Vec<MixtureComponent>,
) -> PopulationConfig {
    PopulationConfig {
        frac_pattern_independent: 1.0 - frac_noisy - FRAC_PATTERN_DEPENDENT,
        frac_pattern_dependent: FRAC_PATTERN_DEPENDENT,
        frac_noisy,
        stuck_value_weight,
        noisy_bias_mixture: mixture,
        condition_coeffs: ConditionCoefficients::default(),
        pattern_dependent_map: PatternMap::Complement,
    }
}

/// Unbiased core plus two mirrored skewed lobes.
fn symmetric(center_weight: f64, lo: (f64, f64)) -> Vec<MixtureComponent> {
    let side = (1.0 - center_weight) / 2.0;
    vec![
        MixtureComponent::beta(center_weight, 8.0, 8.0),
        MixtureComponent::beta(side, lo.0, lo.1),
        MixtureComponent::beta(side, lo.1, lo.0),
    ]
}

/// Unbiased core plus one lobe skewed towards `1`.
fn skewed_to_one(center_weight: f64) -> Vec<MixtureComponent> {
    vec![
        MixtureComponent::beta(center_weight, 8.0, 8.0),
        MixtureComponent::beta(1.0 - center_weight, 140.0, 10.0),
    ]
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Option<PopulationConfig> {
    let p = match name {
        "micron" => PopulationConfig {
            frac_pattern_independent: 0.82,
            frac_pattern_dependent: FRAC_PATTERN_DEPENDENT,
            frac_noisy: 0.175,
            stuck_value_weight: MICRON_STUCK_ONE,
            noisy_bias_mixture: vec![
                MixtureComponent::beta(0.1, 8.0, 8.0),
                MixtureComponent::beta(0.45, 5.0, 15.0),
                MixtureComponent::beta(0.45, 15.0, 5.0),
            ],
            condition_coeffs: ConditionCoefficients::default(),
            pattern_dependent_map: PatternMap::Complement,
        },
        "micron-a" => bank(0.01672, MICRON_STUCK_ONE, symmetric(0.18336, (4.0, 24.0))),
        "micron-b" => bank(
            0.11526,
            MICRON_STUCK_ONE,
            symmetric(0.012206, (10.0, 140.0)),
        ),
        "micron-c" => bank(
            0.13535,
            MICRON_STUCK_ONE,
            symmetric(0.010255, (10.0, 140.0)),
        ),
        "samsung-a" => bank(0.37908, SAMSUNG_STUCK_ONE, skewed_to_one(0.0035747)),
        "samsung-b" => bank(0.54947, SAMSUNG_STUCK_ONE, skewed_to_one(0.0062321)),
        _ => return None,
    };
    Some(p)
}
