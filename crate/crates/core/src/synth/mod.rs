//! Synthetic anomalies: zone rules, seeded injection into rule-consistent
//! grids, and a generator for a rule-consistent synthetic site.

mod inject;
mod rules;
pub mod world;

pub use inject::{
    eligible_cells, generate_test_set, inject, load_synthetic, manifest_path, save_synthetic, InjectionResult,
};
pub use rules::{load_rules, parse_rules, rules_to_json, LoadedRules, RuleKind, Scenario, ZoneRule};
