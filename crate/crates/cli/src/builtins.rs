use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::ExperimentKind;
use crate::experiments::columns;

#[derive(Debug, Clone, Serialize)]
pub struct Builtin {
    pub name: &'static str,
    pub parameters: &'static [&'static str],
    pub description: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Builtins {
    pub lagrangians: Vec<Builtin>,
    pub families: Vec<Builtin>,
    pub test_function_libraries: Vec<Builtin>,
    pub measures: Vec<Builtin>,
    pub initial_conditions: Vec<Builtin>,
    pub experiments: Vec<&'static str>,
    /// CSV header of each experiment.
    pub csv_columns: BTreeMap<&'static str, &'static [&'static str]>,
}

const fn b(name: &'static str, parameters: &'static [&'static str], description: &'static str) -> Builtin {
    Builtin {
        name,
        parameters,
        description,
    }
}

pub fn builtins() -> Builtins {
    Builtins {
        lagrangians: vec![
            b("free", &["mass"], "eta = 0"),
            b("harmonic", &["omega", "mass"], "eta = -omega^2 |q|^2 / 2"),
            b("quartic", &["lambda", "mass"], "eta = -lambda |q|^4"),
        ],
        families: vec![
            b("translation", &["direction"], "x - alpha k"),
            b("scaling", &["rate"], "exp(rate alpha) x"),
            b("rotation", &["i", "j", "rate"], "rotation by rate alpha in the (i, j) plane"),
            b("shear", &["i", "j", "rate"], "x + alpha rate x_j e_i"),
            b("sine", &["amplitude"], "x_i + alpha amplitude sin x_(i+1)"),
            b("linear", &["matrix"], "exp(alpha A) x"),
            b("pointwise", &["matrix"], "exp(alpha A) applied at every lattice node"),
        ],
        test_function_libraries: vec![b(
            "polynomial",
            &["library_size", "library_seed"],
            "random pairs with deg phi <= 4 and deg h <= 2",
        )],
        measures: vec![
            b("standard", &[], "N(0, I)"),
            b("wiener", &[], "Brownian motion on a unit-time lattice, one node per coordinate"),
            b("shifted-wiener", &[], "wiener with mean 0.5 sin(i + 1)"),
        ],
        initial_conditions: vec![
            b("gaussian", &["center", "sigma"], "exp(-|q - c|^2 / (2 sigma^2))"),
            b("constant", &["value"], "f0 = value"),
        ],
        experiments: ExperimentKind::ALL.iter().map(|k| k.name()).collect(),
        csv_columns: ExperimentKind::ALL.iter().map(|&k| (k.name(), columns(k))).collect(),
    }
}

pub fn render_text(all: &Builtins) -> String {
    let mut out = String::new();
    let mut section = |title: &str, items: &[Builtin]| {
        out.push_str(title);
        out.push_str(":\n");
        for it in items {
            let params = if it.parameters.is_empty() {
                String::new()
            } else {
                format!("({})", it.parameters.join(", "))
            };
            out.push_str(&format!("  {}{params}  {}\n", it.name, it.description));
        }
    };
    section("lagrangians", &all.lagrangians);
    section("families", &all.families);
    section("test-function libraries", &all.test_function_libraries);
    section("measures", &all.measures);
    section("initial conditions", &all.initial_conditions);
    out.push_str("experiments:\n");
    for e in &all.experiments {
        out.push_str(&format!("  {e}\n"));
    }
    out
}
