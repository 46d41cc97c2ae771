//! The experiment catalog printed by `diraclab list`.

use crate::config::{default_section, Experiment};
use std::fmt::Write as _;

pub struct Entry {
    pub experiment: Experiment,
    pub topic: &'static str,
    pub description: &'static str,
}

pub fn entries() -> Vec<Entry> {
    Experiment::ALL
        .into_iter()
        .map(|experiment| {
            let (topic, description) = match experiment {
                Experiment::VerifyAlgebra => (
                    "Dirac algebra and principal symbols",
                    "anticommutation, det p(η) = q(η)², kernel bases at the reference directions",
                ),
                Experiment::Expand => (
                    "cubic expansion of the solution map",
                    "ε-residual slope of the three-parameter expansion, coefficient mutations, stencils",
                ),
                Experiment::Transport => (
                    "symbol transport along null bicharacteristics",
                    "kernel invariance and determinant bounds on random rays, exponential oracle",
                ),
                Experiment::Collide => (
                    "collision of three waves in the limit c → 0",
                    "convergence of the outgoing symbol and bounds on the incoming symbols",
                ),
                Experiment::Reconstruct => (
                    "recovery of the third derivative of the nonlinearity",
                    "round trip from forward measurements back to the symmetric trilinear form",
                ),
                Experiment::Compare => (
                    "uniqueness of the nonlinearity",
                    "reconstructs two models at given points and reports same or different",
                ),
            };
            Entry {
                experiment,
                topic,
                description,
            }
        })
        .collect()
}

/// Catalog text: one header line per experiment followed by its defaults.
pub fn list_experiments() -> String {
    let mut out = String::new();
    for e in entries() {
        let _ = writeln!(out, "{:<15} [{}] {}", e.experiment.name(), e.topic, e.description);
        for line in default_section(e.experiment).lines() {
            let _ = writeln!(out, "    {line}");
        }
        out.push('\n');
    }
    out
}
