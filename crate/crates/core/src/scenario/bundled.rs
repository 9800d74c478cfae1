//! Scenario files shipped with the crate.

/// `(file name, contents)` of every bundled file, fragments included.
pub const BUNDLED: &[(&str, &str)] = &[
    ("asymmetric-2km-temporal.toml", include_str!("../../scenarios/asymmetric-2km-temporal.toml")),
    ("asymmetric-2km.toml", include_str!("../../scenarios/asymmetric-2km.toml")),
    ("asymmetric-3km.toml", include_str!("../../scenarios/asymmetric-3km.toml")),
    ("asymmetric-5km.toml", include_str!("../../scenarios/asymmetric-5km.toml")),
    ("asymmetric-6km.toml", include_str!("../../scenarios/asymmetric-6km.toml")),
    ("asymmetric-base.toml", include_str!("../../scenarios/asymmetric-base.toml")),
    ("detectors.toml", include_str!("../../scenarios/detectors.toml")),
    ("fibers.toml", include_str!("../../scenarios/fibers.toml")),
    ("installed-drift.toml", include_str!("../../scenarios/installed-drift.toml")),
    ("local-benchmark.toml", include_str!("../../scenarios/local-benchmark.toml")),
    ("outlook.toml", include_str!("../../scenarios/outlook.toml")),
    ("sweep.toml", include_str!("../../scenarios/sweep.toml")),
    ("symmetric-2-2-spatial.toml", include_str!("../../scenarios/symmetric-2-2-spatial.toml")),
    ("symmetric-2-2-temporal.toml", include_str!("../../scenarios/symmetric-2-2-temporal.toml")),
    ("symmetric-2-2.toml", include_str!("../../scenarios/symmetric-2-2.toml")),
    ("symmetric-base.toml", include_str!("../../scenarios/symmetric-base.toml")),
];

pub fn source(file: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(name, _)| *name == file).map(|(_, text)| *text)
}

/// Names of the bundled files that are complete scenarios rather than
/// shared fragments.
pub fn scenario_names() -> impl Iterator<Item = &'static str> {
    BUNDLED
        .iter()
        .map(|(name, _)| name.trim_end_matches(".toml"))
        .filter(|n| !n.ends_with("-base") && *n != "fibers" && *n != "detectors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_bundled;

    #[test]
    fn every_bundled_scenario_parses() {
        for name in scenario_names() {
            if let Err(e) = load_bundled(name) {
                panic!("{name}: {e}");
            }
        }
    }
}
