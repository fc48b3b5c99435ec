//! `tdz`: compress, verify, inspect and MAC-benchmark TDZ1 tensor
//! containers.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 I/O, format or computation failure. Diagnostics go to stderr.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use tdz_core::container::{self, CompressionPolicy};
use tdz_core::format;
use tdz_core::layers::mac_report;
use tdz_core::planner::Method;
use tdz_core::synth;

const USAGE: &str = "\
tdz: low-rank tensor compression for model containers

USAGE:
    tdz <COMMAND> [FLAGS]

COMMANDS:
    gen       Synthesize a container from a shape-inventory JSON
              --shapes <file.json> --output <model.tdz> [--seed <u64>]
    compress  Factor every linear/convolution weight per the policy
              --input <in.tdz> --output <out.tdz>
              --encoder-ratio <r> --decoder-ratio <r> [--other-ratio <r>]
              [--conv-method tucker|cp|tt] [--report <report.json>]
    verify    Reconstruct and compare against an original container
              --original <in.tdz> --compressed <out.tdz>
              [--tol <f64>] [--seed <u64>] [--json]
    info      Print the container header
              --input <model.tdz> [--json]
    bench     Report dense vs factored MAC counts for a policy
              --input <model.tdz> --encoder-ratio <r> --decoder-ratio <r>
              [--other-ratio <r>] [--conv-method tucker|cp|tt] [--json]
";

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
        }
    }
}

impl From<tdz_core::Error> for CliError {
    fn from(e: tdz_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<format::FormatError> for CliError {
    fn from(e: format::FormatError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("usage error: {msg}\n\n{USAGE}"),
                CliError::Runtime(msg) => eprintln!("error: {msg}"),
            }
            e.exit_code()
        }
    }
}

fn run(args: &[String]) -> Result<ExitCode, CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    let rest = &args[1..];
    match command.as_str() {
        "gen" => cmd_gen(rest),
        "compress" => cmd_compress(rest),
        "verify" => cmd_verify(rest),
        "info" => cmd_info(rest),
        "bench" => cmd_bench(rest),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(ExitCode::SUCCESS)
        }
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}

/// Flag parser: every flag takes a value except the listed switches.
struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str], allowed_switches: &[&str]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut switches = Vec::new();
        let mut iter = args.iter();
        while let Some(arg) = iter.next() {
            let name = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Usage(format!("unexpected argument '{arg}'")))?;
            if allowed_switches.contains(&name) {
                switches.push(name.to_string());
                continue;
            }
            if !allowed.contains(&name) {
                return Err(CliError::Usage(format!("unknown flag '--{name}'")));
            }
            let value = iter
                .next()
                .ok_or_else(|| CliError::Usage(format!("flag '--{name}' needs a value")))?;
            values.insert(name.to_string(), value.clone());
        }
        Ok(Self { values, switches })
    }

    fn required(&self, name: &str) -> Result<&str, CliError> {
        self.values
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| CliError::Usage(format!("missing required flag '--{name}'")))
    }

    fn optional(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    fn parse_f64(&self, name: &str) -> Result<Option<f64>, CliError> {
        self.optional(name)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("flag '--{name}' wants a number, got '{v}'")))
            })
            .transpose()
    }

    fn parse_u64(&self, name: &str, default: u64) -> Result<u64, CliError> {
        Ok(self
            .optional(name)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| CliError::Usage(format!("flag '--{name}' wants an integer, got '{v}'")))
            })
            .transpose()?
            .unwrap_or(default))
    }

    fn has(&self, switch: &str) -> bool {
        self.switches.iter().any(|s| s == switch)
    }
}

fn policy_from_flags(flags: &Flags) -> Result<CompressionPolicy, CliError> {
    let encoder = flags
        .parse_f64("encoder-ratio")?
        .ok_or_else(|| CliError::Usage("missing required flag '--encoder-ratio'".into()))?;
    let decoder = flags
        .parse_f64("decoder-ratio")?
        .ok_or_else(|| CliError::Usage("missing required flag '--decoder-ratio'".into()))?;
    let mut policy = CompressionPolicy::new(encoder, decoder)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(other) = flags.parse_f64("other-ratio")? {
        policy = policy
            .with_other_ratio(other)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(method) = flags.optional("conv-method") {
        let method: Method = method
            .parse()
            .map_err(|e: String| CliError::Usage(e))?;
        policy = policy
            .with_conv_method(method)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(policy)
}

fn cmd_gen(args: &[String]) -> Result<ExitCode, CliError> {
    let flags = Flags::parse(args, &["shapes", "output", "seed"], &[])?;
    let shapes_path = flags.required("shapes")?;
    let output = flags.required("output")?;
    let seed = flags.parse_u64("seed", 42)?;

    let json = std::fs::read_to_string(shapes_path)
        .map_err(|e| CliError::Runtime(format!("reading {shapes_path}: {e}")))?;
    let inventory: synth::ShapeInventory = serde_json::from_str(&json)
        .map_err(|e| CliError::Runtime(format!("parsing {shapes_path}: {e}")))?;
    let container = synth::container_from_inventory(&inventory, seed)?;
    format::save(&container, Path::new(output))?;
    println!(
        "wrote {} ({} tensors, {} parameters)",
        output,
        container.len(),
        container.total_params()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compress(args: &[String]) -> Result<ExitCode, CliError> {
    let flags = Flags::parse(
        args,
        &[
            "input",
            "output",
            "report",
            "encoder-ratio",
            "decoder-ratio",
            "other-ratio",
            "conv-method",
        ],
        &[],
    )?;
    let input = flags.required("input")?;
    let output = flags.required("output")?;
    let policy = policy_from_flags(&flags)?;

    let original = format::load(Path::new(input))?;
    let (compressed, report) = container::compress(&original, &policy)?;
    format::save(&compressed, Path::new(output))?;

    for row in &report.tensors {
        match &row.method {
            Some(method) => println!(
                "{:<28} {:>7} -> {:>7} params  ratio {:.4}  recon_err {:.4}  macs x{:.4}{}  [{} {:?}]",
                row.name,
                row.original_params,
                row.factored_params,
                row.achieved_ratio,
                row.recon_error,
                row.mac_ratio,
                if row.mac_no_speedup { " (no speedup)" } else { "" },
                method,
                row.ranks.as_deref().unwrap_or(&[]),
            ),
            None => println!("{:<28} {:>7} params  (kept dense)", row.name, row.original_params),
        }
    }
    println!(
        "total: {} -> {} params (ratio {:.4})",
        report.total_params_before, report.total_params_after, report.global_ratio
    );

    if let Some(report_path) = flags.optional("report") {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(report_path, json)
            .map_err(|e| CliError::Runtime(format!("writing {report_path}: {e}")))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &[String]) -> Result<ExitCode, CliError> {
    let flags = Flags::parse(args, &["original", "compressed", "tol", "seed"], &["json"])?;
    let original_path = flags.required("original")?;
    let compressed_path = flags.required("compressed")?;
    let tol = flags.parse_f64("tol")?.unwrap_or(1e-4);
    let seed = flags.parse_u64("seed", 0)?;

    let original = format::load(Path::new(original_path))?;
    let compressed = format::load(Path::new(compressed_path))?;
    let report = container::verify(&original, &compressed, tol, seed)?;

    if flags.has("json") {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?
        );
    } else {
        for outcome in &report.tensors {
            let probe = outcome
                .probe_error
                .map(|p| format!("  probe_err {p:.2e}"))
                .unwrap_or_default();
            println!(
                "{:<28} {}  recon_err {:.6}{}",
                outcome.name,
                if outcome.passed { "PASS" } else { "FAIL" },
                outcome.recon_error,
                probe
            );
        }
        println!(
            "{} of {} tensors passed at tol {tol}",
            report.tensors.iter().filter(|o| o.passed).count(),
            report.tensors.len()
        );
    }
    if report.all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_info(args: &[String]) -> Result<ExitCode, CliError> {
    let flags = Flags::parse(args, &["input"], &["json"])?;
    let input = flags.required("input")?;
    let container = format::load(Path::new(input))?;

    if flags.has("json") {
        #[derive(serde::Serialize)]
        struct InfoRow<'a> {
            name: &'a str,
            role: &'static str,
            group: &'static str,
            kind: &'static str,
            shape: Vec<usize>,
            ranks: Option<Vec<usize>>,
            params: u64,
        }
        #[derive(serde::Serialize)]
        struct Info<'a> {
            tensors: Vec<InfoRow<'a>>,
            total_params: u64,
        }
        let info = Info {
            tensors: container
                .entries()
                .iter()
                .map(|e| InfoRow {
                    name: &e.name,
                    role: e.role.as_str(),
                    group: e.group.as_str(),
                    kind: e.payload.kind(),
                    shape: e.payload.original_shape(),
                    ranks: e.payload.ranks(),
                    params: e.payload.param_count(),
                })
                .collect(),
            total_params: container.total_params(),
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&info).map_err(|e| CliError::Runtime(e.to_string()))?
        );
    } else {
        let header = format!(
            "{:<28} {:<13} {:<8} {:<7} {:<18} {:<14} params",
            "name", "role", "group", "kind", "shape", "ranks"
        );
        println!("{header}");
        for e in container.entries() {
            println!(
                "{:<28} {:<13} {:<8} {:<7} {:<18} {:<14} {}",
                e.name,
                e.role.as_str(),
                e.group.as_str(),
                e.payload.kind(),
                format!("{:?}", e.payload.original_shape()),
                e.payload
                    .ranks()
                    .map(|r| format!("{r:?}"))
                    .unwrap_or_else(|| "-".into()),
                e.payload.param_count()
            );
        }
        println!("total parameters: {}", container.total_params());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: &[String]) -> Result<ExitCode, CliError> {
    let flags = Flags::parse(
        args,
        &[
            "input",
            "encoder-ratio",
            "decoder-ratio",
            "other-ratio",
            "conv-method",
        ],
        &["json"],
    )?;
    let input = flags.required("input")?;
    let policy = policy_from_flags(&flags)?;

    let container = format::load(Path::new(input))?;
    let plans = container::plan_compression(&container, &policy)?;

    #[derive(serde::Serialize)]
    struct BenchRow {
        name: String,
        method: Method,
        ranks: Vec<usize>,
        dense_macs: u64,
        factored_macs: u64,
        ratio: f64,
        no_speedup: bool,
    }
    let mut rows = Vec::new();
    for entry in container.entries() {
        let Some(plan) = plans.get(&entry.name) else {
            continue;
        };
        let mac = mac_report(plan, &entry.payload.original_shape())?;
        rows.push(BenchRow {
            name: entry.name.clone(),
            method: plan.method,
            ranks: plan.ranks.clone(),
            dense_macs: mac.dense_macs,
            factored_macs: mac.factored_macs,
            ratio: mac.ratio,
            no_speedup: mac.no_speedup,
        });
    }

    if flags.has("json") {
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).map_err(|e| CliError::Runtime(e.to_string()))?
        );
    } else {
        for row in &rows {
            println!(
                "{:<28} {:<7} {:<14} dense {:>12} MACs  factored {:>12} MACs  ratio {:.4}{}",
                row.name,
                row.method,
                format!("{:?}", row.ranks),
                row.dense_macs,
                row.factored_macs,
                row.ratio,
                if row.no_speedup { "  (no speedup)" } else { "" }
            );
        }
        if rows.is_empty() {
            println!("no compressible tensors under this policy");
        }
    }
    Ok(ExitCode::SUCCESS)
}
