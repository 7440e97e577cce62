//! Bundled graph and design fixtures used by the CLI reproduction cases,
//! the documentation and the test suites.

use crate::design::Design;
use crate::graph::BipartiteGraph;

pub const FIG1_JSON: &str = include_str!("../fixtures/fig1.json");
pub const FIG1_TRIMMED_JSON: &str = include_str!("../fixtures/fig1_trimmed.json");
pub const FIG3_JSON: &str = include_str!("../fixtures/fig3.json");
pub const DESIGN_EXAMPLE2_JSON: &str = include_str!("../fixtures/design_example2.json");
pub const DESIGN_MINSUPPORT_JSON: &str = include_str!("../fixtures/design_minsupport.json");
pub const DESIGN_SYSTEMATIC_JSON: &str = include_str!("../fixtures/design_systematic.json");
pub const WEIGHTS_HTTYPE_FIG3_JSON: &str = include_str!("../fixtures/weights_httype_fig3.json");

/// Five-by-five graph with an isolated unit on each side.
pub fn fig1() -> BipartiteGraph {
    BipartiteGraph::from_json_str(FIG1_JSON).expect("bundled fixture")
}

/// `fig1` without its isolated units.
pub fn fig1_trimmed() -> BipartiteGraph {
    BipartiteGraph::from_json_str(FIG1_TRIMMED_JSON).expect("bundled fixture")
}

/// Three sampling units, two study units; one study unit has a single
/// ancestor, the other three.
pub fn fig3() -> BipartiteGraph {
    BipartiteGraph::from_json_str(FIG3_JSON).expect("bundled fixture")
}

/// Two-sample design over `fig3`'s sampling units with probabilities
/// 1/3 and 2/3.
pub fn design_example2() -> Design {
    let graph = fig3();
    Design::from_json_str(DESIGN_EXAMPLE2_JSON, Some(graph.sampling_units()))
        .expect("bundled fixture")
}

/// Minimum-support fixed-size design over four units, three samples.
pub fn design_minsupport() -> Design {
    let graph = fig1_trimmed();
    Design::from_json_str(DESIGN_MINSUPPORT_JSON, Some(graph.sampling_units()))
        .expect("bundled fixture")
}

/// Systematic-style design over four units: two disjoint samples.
pub fn design_systematic() -> Design {
    let graph = fig1_trimmed();
    Design::from_json_str(DESIGN_SYSTEMATIC_JSON, Some(graph.sampling_units()))
        .expect("bundled fixture")
}

/// Simple random sampling of size 2 from `fig1_trimmed`'s sampling units.
pub fn srs2() -> Design {
    Design::srs(fig1_trimmed().sampling_units().to_vec(), 2).expect("bundled fixture")
}
