use rasterflow::geometry::Axis;
use rasterflow::netgraph::{derive_fields_with_expression, validate_fields};
use rasterflow::{FieldSpec, ModelGraph};

use crate::args::DeriveArgs;
use crate::serve::{load_model, pick_output};
use crate::{CliError, CliResult};

/// One line per input: `name: r=RxC e=RxC f=F`.
pub fn summary(spec: &FieldSpec) -> String {
    let (fr, fc) = (spec.scale(Axis::Row), spec.scale(Axis::Col));
    let f = if fr == fc { fr.to_string() } else { format!("{fr}x{fc}") };
    spec.inputs()
        .iter()
        .map(|i| {
            let mark = if i.name == spec.reference() { " (reference)" } else { "" };
            format!("{}{mark}: r={} e={} f={f}", i.name, i.receptive, spec.expression())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn reference_input(graph: &ModelGraph, requested: Option<&str>, output: &str) -> CliResult<String> {
    match requested {
        Some(n) => {
            graph.input_node(n)?;
            Ok(n.to_string())
        }
        None => graph
            .inputs_reaching(output)?
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Usage(format!("no graph input reaches `{output}`"))),
    }
}

/// Prints the derived (or declared) field spec and its validation report.
pub fn cmd_derive_fields(args: &DeriveArgs) -> CliResult<()> {
    let graph = load_model(&args.model)?;
    let output = pick_output(&graph, args.node.as_deref())?;
    let reference = reference_input(&graph, args.input.as_deref(), &output)?;
    println!("model: {}", args.model.display());
    println!("output: {output}");
    let derived = derive_fields_with_expression(&graph, &reference, &output, args.expression);
    let spec = match (&args.fields, derived) {
        (Some(text), derived) => {
            if let Ok(d) = derived {
                println!("derived: {d}");
            }
            FieldSpec::parse_with_default_input(text, &reference)?
        }
        (None, Ok(d)) => d,
        (None, Err(e)) => {
            println!("[FAIL] derivation: {e}");
            println!("validation failed");
            return Err(CliError::Validation(e.to_string()));
        }
    };
    println!("fields: {spec}");
    println!("{}", summary(&spec));
    let report = validate_fields(&graph, &spec, &output);
    println!("{report}");
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "field spec {spec} does not match the model"
        )))
    }
}
