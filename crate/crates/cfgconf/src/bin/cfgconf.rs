//! Command-line driver: spec → resolve → filter → collapse → layout → emit.
//!
//! Exit codes: 0 success, 1 spec/validation error, 2 I/O error, 3 graph too
//! large for layout. Diagnostics go to stderr; artifacts to stdout or the
//! `-o` file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use cfgconf::pipeline::{self, PipelineError, Prepared};
use cfgconf::{Diagnostic, Severity};

#[derive(Parser)]
#[command(name = "cfgconf", version, about = "Render control flow graphs from CFGConf JSON specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Default, ValueEnum)]
enum DiagFormat {
    #[default]
    Human,
    Json,
}

#[derive(Clone, Copy, PartialEq, Default, ValueEnum)]
enum RenderFormat {
    #[default]
    Svg,
    Dot,
    DotAnnotated,
}

#[derive(Clone, Copy, PartialEq, Default, ValueEnum)]
enum FilterFormat {
    #[default]
    Json,
    Dot,
}

#[derive(clap::Args)]
struct Common {
    /// CFGConf JSON specification.
    spec: PathBuf,
    /// Override a spec field: <json-pointer>=<value>, e.g. /filtering/maxHops=5.
    #[arg(long = "set", value_name = "POINTER=VALUE")]
    set: Vec<String>,
    /// Diagnostic output format (stderr).
    #[arg(long, value_enum, default_value_t = DiagFormat::Human)]
    diagnostics: DiagFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Render the graph described by a spec.
    Render {
        #[command(flatten)]
        common: Common,
        /// Output file (stdout when absent).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RenderFormat::Svg)]
        format: RenderFormat,
        /// Print a JSON dump of the pipeline stages to stderr.
        #[arg(long)]
        debug_dump: bool,
    },
    /// Check a spec and report every diagnostic.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run only the filtering stage and print the result.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FilterFormat::Json)]
        format: FilterFormat,
    },
    /// Emit the drawn graph as dot text.
    EmitDot {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Add layout hints: back-edge ports, constraint=false, invisible
        /// header-to-latch edges.
        #[arg(long)]
        annotated: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Render { common, output, format, debug_dump } => {
            run(&common, |prepared| {
                let text = match format {
                    RenderFormat::Svg => match pipeline::render(prepared) {
                        Ok(svg) => svg,
                        Err(e) => return Err(e),
                    },
                    RenderFormat::Dot => pipeline::emit_dot(prepared, false),
                    RenderFormat::DotAnnotated => pipeline::emit_dot(prepared, true),
                };
                if debug_dump {
                    eprintln!("{}", pipeline::debug_dump(prepared));
                }
                write_artifact(&output, &text)
            })
        }
        Command::Validate { common } => run(&common, |_| Ok(())),
        Command::Filter { common, output, format } => run(&common, |prepared| {
            let text = match format {
                FilterFormat::Json => pipeline::filter_json(prepared),
                FilterFormat::Dot => pipeline::filter_dot(prepared),
            };
            write_artifact(&output, &text)
        }),
        Command::EmitDot { common, output, annotated } => run(&common, |prepared| {
            write_artifact(&output, &pipeline::emit_dot(prepared, annotated))
        }),
    }
}

fn run(common: &Common, emit: impl FnOnce(&mut Prepared) -> Result<(), PipelineError>) -> ExitCode {
    let spec_text = match fs::read_to_string(&common.spec) {
        Ok(t) => t,
        Err(e) => {
            report(
                &[Diagnostic::error(common.spec.display().to_string(), e.to_string())],
                common.diagnostics,
            );
            return ExitCode::from(2);
        }
    };
    let spec_text = match apply_overrides(&spec_text, &common.set) {
        Ok(t) => t,
        Err(d) => {
            report(&[d], common.diagnostics);
            return ExitCode::from(1);
        }
    };
    let base = common.spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let loader = |path: &str| fs::read_to_string(base.join(path));
    match pipeline::prepare(&spec_text, &loader) {
        Ok(mut prepared) => {
            let code = match emit(&mut prepared) {
                Ok(()) => 0,
                Err(e) => {
                    let mut all = prepared.diagnostics.clone().into_vec();
                    all.extend(e.diagnostics());
                    report(&all, common.diagnostics);
                    return ExitCode::from(exit_code(&e));
                }
            };
            report(&prepared.diagnostics.clone().into_vec(), common.diagnostics);
            ExitCode::from(code)
        }
        Err(e) => {
            report(&e.diagnostics(), common.diagnostics);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Validation(_) => 1,
        PipelineError::Io { .. } => 2,
        PipelineError::TooLarge(_) => 3,
    }
}

fn write_artifact(output: &Option<PathBuf>, text: &str) -> Result<(), PipelineError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report(diags: &[Diagnostic], format: DiagFormat) {
    if diags.is_empty() {
        return;
    }
    match format {
        DiagFormat::Human => {
            for d in diags {
                eprintln!("{d}");
            }
        }
        DiagFormat::Json => {
            let items: Vec<Value> = diags
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "severity": match d.severity {
                            Severity::Error => "error",
                            Severity::Warning => "warning",
                        },
                        "path": d.path,
                        "message": d.message,
                    })
                })
                .collect();
            eprintln!("{}", Value::Array(items));
        }
    }
}

/// Apply `--set <pointer>=<value>` overrides to the raw spec JSON. Values
/// parse as JSON when possible, else as strings; missing objects along the
/// pointer are created.
fn apply_overrides(text: &str, sets: &[String]) -> Result<String, Diagnostic> {
    if sets.is_empty() {
        return Ok(text.to_string());
    }
    let mut root: Value = serde_json::from_str(text)
        .map_err(|e| Diagnostic::error("", format!("malformed JSON: {e}")))?;
    for s in sets {
        let (pointer, raw) = s
            .split_once('=')
            .ok_or_else(|| Diagnostic::error("", format!("--set needs <pointer>=<value>, got \"{s}\"")))?;
        if !pointer.starts_with('/') {
            return Err(Diagnostic::error(
                pointer,
                "override pointer must start with '/' (e.g. /filtering/maxHops)",
            ));
        }
        let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
        set_pointer(&mut root, pointer, value)
            .map_err(|m| Diagnostic::error(pointer, m))?;
    }
    Ok(root.to_string())
}

fn set_pointer(root: &mut Value, pointer: &str, value: Value) -> Result<(), String> {
    let tokens: Vec<String> = pointer
        .split('/')
        .skip(1)
        .map(|t| t.replace("~1", "/").replace("~0", "~"))
        .collect();
    let mut cur = root;
    for (i, tok) in tokens.iter().enumerate() {
        let last = i == tokens.len() - 1;
        match cur {
            Value::Object(map) => {
                if last {
                    map.insert(tok.clone(), value);
                    return Ok(());
                }
                cur = map
                    .entry(tok.clone())
                    .or_insert_with(|| Value::Object(Default::default()));
            }
            Value::Array(items) => {
                let idx: usize = tok
                    .parse()
                    .map_err(|_| format!("\"{tok}\" is not an array index"))?;
                if idx >= items.len() {
                    return Err(format!("index {idx} out of bounds (array length {})", items.len()));
                }
                if last {
                    items[idx] = value;
                    return Ok(());
                }
                cur = &mut items[idx];
            }
            other => {
                return Err(format!(
                    "cannot descend into {} at \"{tok}\"",
                    match other {
                        Value::Null => "null",
                        Value::Bool(_) => "a boolean",
                        Value::Number(_) => "a number",
                        Value::String(_) => "a string",
                        _ => "a value",
                    }
                ));
            }
        }
    }
    Err("empty pointer".to_string())
}
