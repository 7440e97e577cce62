//! Command-line front end: fixture loading, estimator construction, moment
//! reports, Rao-Blackwell transforms, classification, rank reports, and
//! one-shot reproduction of the bundled worked examples.
//!
//! Output is deterministic: identical inputs produce byte-identical output.
//! Exit codes: 0 success, 1 reproduction mismatch, 2 input error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::design::{parse_sample_label, sample_label, Design};
use crate::error::{Error, Result};
use crate::estimator::{
    build_hte, build_iwe, build_lexicographic, build_multiplicity, check_zero_invariant,
    LinearEstimator, WeightScheme,
};
use crate::fixtures;
use crate::graph::{BipartiteGraph, UnitId};
use crate::moments;
use crate::raoblackwell;
use crate::ratio::{format_ratio, parse_ratio, Ratio};
use crate::spectra;

#[derive(Parser)]
#[command(
    name = "bigs",
    version,
    about = "Exact estimator analysis for bipartite incidence graph sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FixtureArgs {
    /// Graph fixture file (JSON)
    #[arg(long)]
    graph: PathBuf,

    /// Design fixture file, or `srs:<n>` over the graph's sampling units
    #[arg(long)]
    design: String,

    /// `hte` | `multiplicity` | `iwe:<weights file>` | `lex:<order>` |
    /// path to an estimator dump. Orders: `forward`, `reverse`, or
    /// samples like `i2+i4;i3+i4;...`
    #[arg(long)]
    estimator: String,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate an estimator on every support sample at a value vector
    Eval {
        #[command(flatten)]
        fixtures: FixtureArgs,
        /// Value vector `a/b,c/d,...`, one entry per study unit
        #[arg(long)]
        y: String,
        #[arg(long)]
        json: bool,
    },
    /// Exact expectation, variance, target and bias at a value vector
    Moments {
        #[command(flatten)]
        fixtures: FixtureArgs,
        #[arg(long)]
        y: String,
        #[arg(long)]
        json: bool,
    },
    /// Rao-Blackwellize an estimator and dump the result
    Rb {
        #[command(flatten)]
        fixtures: FixtureArgs,
        /// Write the transformed dump to a file as well
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Zero-invariant Rao-Blackwellization; all branches or one pattern
    Zrb {
        #[command(flatten)]
        fixtures: FixtureArgs,
        /// Zero pattern `k1,k2` selecting a single branch
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Admissibility classification of an unbiased estimator
    Classify {
        #[command(flatten)]
        fixtures: FixtureArgs,
        #[arg(long)]
        json: bool,
    },
    /// Support size, rank, kernel dimension and full-rank verdict
    Rank {
        /// Design fixture file, or `srs:<n>` (then `--graph` is required)
        #[arg(long)]
        design: String,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Re-run a bundled worked example and compare against expected values
    Repro {
        #[arg(value_enum)]
        case: ReproCase,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReproCase {
    /// Multiplicity rows, Rao-Blackwell merge and zero-invariant branch
    Example2,
    /// The 24 indicator-estimator cells under simple random sampling
    Table1,
    /// Full-rank verdicts of the bundled designs
    Ranks,
    /// The strict variance chain at a zero pattern
    VarianceChain,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = vec![OsString::from("bigs")];
    argv.extend(args.into_iter().map(Into::into));
    let cli = Cli::parse_from(argv);
    match cli.command {
        Command::Eval { fixtures, y, json } => cmd_eval(&fixtures, &y, json),
        Command::Moments { fixtures, y, json } => cmd_moments(&fixtures, &y, json),
        Command::Rb {
            fixtures,
            out,
            json,
        } => cmd_rb(&fixtures, out.as_deref(), json),
        Command::Zrb {
            fixtures,
            pattern,
            out,
            json,
        } => cmd_zrb(&fixtures, pattern.as_deref(), out.as_deref(), json),
        Command::Classify { fixtures, json } => cmd_classify(&fixtures, json),
        Command::Rank {
            design,
            graph,
            json,
        } => cmd_rank(&design, graph.as_deref(), json),
        Command::Repro { case, json } => cmd_repro(case, json),
    }
}

fn load_graph(path: &Path) -> Result<BipartiteGraph> {
    BipartiteGraph::from_json_str(&std::fs::read_to_string(path)?)
}

fn load_design(spec: &str, graph: Option<&BipartiteGraph>) -> Result<Design> {
    if let Some(n) = spec.strip_prefix("srs:") {
        let graph = graph.ok_or_else(|| {
            Error::BadEstimatorSpec("`srs:<n>` designs need --graph for the unit list".into())
        })?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::BadEstimatorSpec(format!("bad sample size in `{spec}`")))?;
        return Design::srs(graph.sampling_units().to_vec(), n);
    }
    let text = std::fs::read_to_string(spec)?;
    Design::from_json_str(&text, graph.map(|g| g.sampling_units()))
}

/// A resolved estimator together with a rebuildable constructor when the
/// spec names one (used to report zero-invariance in `classify`).
struct ResolvedEstimator {
    estimator: LinearEstimator,
    builder: Option<Box<crate::estimator::Builder<'static>>>,
}

fn parse_order(design: &Design, order: &str) -> Result<Vec<usize>> {
    match order {
        "forward" => Ok((0..design.support_len()).collect()),
        "reverse" => Ok((0..design.support_len()).rev().collect()),
        samples => samples
            .split(';')
            .map(|sample| {
                let key: Vec<UnitId> = sample.split('+').map(|u| UnitId::new(u.trim())).collect();
                design.sample_row(&key)
            })
            .collect(),
    }
}

fn resolve_estimator(
    spec: &str,
    design: &Design,
    graph: &BipartiteGraph,
) -> Result<ResolvedEstimator> {
    if spec == "hte" {
        return Ok(ResolvedEstimator {
            estimator: build_hte(design, graph)?,
            builder: Some(Box::new(build_hte)),
        });
    }
    if spec == "multiplicity" {
        return Ok(ResolvedEstimator {
            estimator: build_multiplicity(design, graph)?,
            builder: Some(Box::new(build_multiplicity)),
        });
    }
    if let Some(path) = spec.strip_prefix("iwe:") {
        let weights = WeightScheme::from_json_str(&std::fs::read_to_string(path)?);
        let weights = weights?;
        let estimator = build_iwe(design, graph, &weights)?;
        let builder = weights.is_constant().then(|| {
            let weights = weights.clone();
            Box::new(move |d: &Design, g: &BipartiteGraph| {
                build_iwe(d, g, &restrict_weights(&weights, g))
            }) as Box<crate::estimator::Builder<'static>>
        });
        return Ok(ResolvedEstimator { estimator, builder });
    }
    if let Some(order) = spec.strip_prefix("lex:") {
        let order = parse_order(design, order)?;
        let label = format!(
            "lex({})",
            order
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let estimator = build_lexicographic(design, graph, &order, label.clone())?;
        let builder_order = order.clone();
        return Ok(ResolvedEstimator {
            estimator,
            builder: Some(Box::new(move |d, g| {
                build_lexicographic(d, g, &builder_order, label.clone())
            })),
        });
    }
    // fall back to a dump file
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(spec)?)?;
    Ok(ResolvedEstimator {
        estimator: LinearEstimator::from_json_value(&value)?,
        builder: None,
    })
}

/// Drops weight entries whose edge no longer exists, so that constant
/// weight schemes restrict naturally to reduced graphs.
fn restrict_weights(weights: &WeightScheme, graph: &BipartiteGraph) -> WeightScheme {
    let edge_exists = |i: &UnitId, k: &UnitId| {
        matches!(
            (graph.sampling_index(i), graph.study_index(k)),
            (Ok(gi), Ok(gk)) if graph.has_edge(gi, gk)
        )
    };
    match weights {
        WeightScheme::Constant(map) => WeightScheme::Constant(
            map.iter()
                .filter(|((i, k), _)| edge_exists(i, k))
                .map(|(key, w)| (key.clone(), w.clone()))
                .collect(),
        ),
        WeightScheme::Variable(map) => WeightScheme::Variable(
            map.iter()
                .map(|(sample, edges)| {
                    (
                        sample.clone(),
                        edges
                            .iter()
                            .filter(|((i, k), _)| edge_exists(i, k))
                            .map(|(key, w)| (key.clone(), w.clone()))
                            .collect(),
                    )
                })
                .collect(),
        ),
    }
}

fn parse_y(text: &str, graph: &BipartiteGraph) -> Result<Vec<Ratio>> {
    let values: Vec<Ratio> = text.split(',').map(parse_ratio).collect::<Result<_>>()?;
    if values.len() != graph.study_units().len() {
        return Err(Error::DimensionMismatch {
            expected: graph.study_units().len(),
            got: values.len(),
        });
    }
    Ok(values)
}

fn aligned_table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(String::len)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c + 1 == row.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<width$}  ", width = widths[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn y_json(graph: &BipartiteGraph, y: &[Ratio]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (unit, value) in graph.study_units().iter().zip(y) {
        map.insert(unit.to_string(), json!(format_ratio(value)));
    }
    serde_json::Value::Object(map)
}

fn cmd_eval(args: &FixtureArgs, y_text: &str, as_json: bool) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let design = load_design(&args.design, Some(&graph))?;
    let resolved = resolve_estimator(&args.estimator, &design, &graph)?;
    let y = parse_y(y_text, &graph)?;

    let mut values = Vec::new();
    for row in 0..design.support_len() {
        let key = design.sample_key(row);
        let value = resolved.estimator.evaluate(&key, &y)?;
        values.push((sample_label(&key), format_ratio(&value)));
    }

    if as_json {
        let output = json!({
            "format": 1,
            "command": "eval",
            "estimator": resolved.estimator.label(),
            "y": y_json(&graph, &y),
            "values": values
                .iter()
                .map(|(sample, value)| json!({"sample": sample, "value": value}))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!("estimator: {}", resolved.estimator.label());
        let y_line: Vec<String> = graph
            .study_units()
            .iter()
            .zip(&y)
            .map(|(u, v)| format!("{u}={}", format_ratio(v)))
            .collect();
        println!("y: {}", y_line.join(", "));
        let mut rows = vec![vec!["sample".to_string(), "value".to_string()]];
        rows.extend(values.into_iter().map(|(s, v)| vec![s, v]));
        print!("{}", aligned_table(&rows));
    }
    Ok(0)
}

fn cmd_moments(args: &FixtureArgs, y_text: &str, as_json: bool) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let design = load_design(&args.design, Some(&graph))?;
    let resolved = resolve_estimator(&args.estimator, &design, &graph)?;
    let y = parse_y(y_text, &graph)?;
    let report = moments::moment_report(&design, &resolved.estimator, &y)?;

    if as_json {
        let output = json!({
            "format": 1,
            "command": "moments",
            "estimator": resolved.estimator.label(),
            "y": y_json(&graph, &y),
            "expectation": format_ratio(&report.expectation),
            "variance": format_ratio(&report.variance),
            "theta": format_ratio(&report.theta),
            "bias": format_ratio(&report.bias),
        });
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        let rows = vec![
            vec![
                "estimator".to_string(),
                resolved.estimator.label().to_string(),
            ],
            vec!["expectation".to_string(), format_ratio(&report.expectation)],
            vec!["variance".to_string(), format_ratio(&report.variance)],
            vec!["theta".to_string(), format_ratio(&report.theta)],
            vec!["bias".to_string(), format_ratio(&report.bias)],
        ];
        print!("{}", aligned_table(&rows));
    }
    Ok(0)
}

fn linear_text(est: &LinearEstimator) -> String {
    let mut out = String::new();
    out.push_str(&format!("label      {}\n", est.label()));
    out.push_str(&format!("knowledge  {}\n", est.knowledge()));
    let mut rows = Vec::new();
    let mut header = vec!["sample".to_string()];
    header.extend(est.study_units().iter().map(ToString::to_string));
    rows.push(header);
    for (row, key) in est.sample_keys().iter().enumerate() {
        let mut line = vec![sample_label(key)];
        line.extend(est.row(row).iter().map(format_ratio));
        rows.push(line);
    }
    out.push_str(&aligned_table(&rows));
    out
}

fn write_out(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(value)?))?;
    }
    Ok(())
}

fn cmd_rb(args: &FixtureArgs, out: Option<&Path>, as_json: bool) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let design = load_design(&args.design, Some(&graph))?;
    let resolved = resolve_estimator(&args.estimator, &design, &graph)?;
    let rb = raoblackwell::rao_blackwellize(&design, &graph, &resolved.estimator)?;
    let dump = rb.to_json_value();
    write_out(out, &dump)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&dump)?);
    } else {
        print!("{}", linear_text(&rb));
    }
    Ok(0)
}

fn cmd_zrb(
    args: &FixtureArgs,
    pattern: Option<&str>,
    out: Option<&Path>,
    as_json: bool,
) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let design = load_design(&args.design, Some(&graph))?;
    let resolved = resolve_estimator(&args.estimator, &design, &graph)?;

    if let Some(pattern) = pattern {
        let units = parse_sample_label(pattern);
        let branch = raoblackwell::zrb_branch(&design, &graph, &resolved.estimator, &units)?;
        let dump = branch.to_json_value();
        write_out(out, &dump)?;
        if as_json {
            println!("{}", serde_json::to_string_pretty(&dump)?);
        } else {
            println!("zero pattern: {{{}}}", sample_label(&units));
            print!("{}", linear_text(&branch));
        }
        return Ok(0);
    }

    let zrb = raoblackwell::zrb(&design, &graph, &resolved.estimator)?;
    let dump = zrb.to_json_value();
    write_out(out, &dump)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&dump)?);
    } else {
        println!("label      {}", zrb.label());
        println!("knowledge  {}", zrb.knowledge());
        for (pattern, branch) in zrb.branches() {
            let units: Vec<UnitId> = pattern
                .iter()
                .map(|&k| zrb.study_units()[k].clone())
                .collect();
            println!("branch {{{}}}", sample_label(&units));
            let mut rows = Vec::new();
            let mut header = vec!["sample".to_string()];
            header.extend(branch.study_units().iter().map(ToString::to_string));
            rows.push(header);
            for (row, key) in branch.sample_keys().iter().enumerate() {
                let mut line = vec![sample_label(key)];
                line.extend(branch.row(row).iter().map(format_ratio));
                rows.push(line);
            }
            print!("{}", aligned_table(&rows));
        }
    }
    Ok(0)
}

fn cmd_classify(args: &FixtureArgs, as_json: bool) -> Result<i32> {
    let graph = load_graph(&args.graph)?;
    let design = load_design(&args.design, Some(&graph))?;
    let resolved = resolve_estimator(&args.estimator, &design, &graph)?;
    let classification = spectra::classify(&design, &graph, &resolved.estimator)?;

    // zero-invariance can only be certified against a constructor
    let zero_invariant: Option<bool> = match &resolved.builder {
        Some(builder) => {
            Some(check_zero_invariant(&design, &graph, builder.as_ref())?.zero_invariant)
        }
        None => None,
    };

    if as_json {
        let evidence = match &classification.evidence {
            spectra::Evidence::Sufficient { blocks } => json!({
                "kind": "sufficient",
                "distinct_study_samples": blocks,
            }),
            spectra::Evidence::Spanned { coefficients } => json!({
                "kind": "sample-space-spanned",
                "unit_contributions": coefficients
                    .iter()
                    .map(|row| row.iter().map(format_ratio).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
            spectra::Evidence::KernelPerturbed {
                dominating,
                witness_y,
                variance_gap,
            } => json!({
                "kind": "kernel-perturbed",
                "dominating": dominating.to_json_value(),
                "witness_y": witness_y.iter().map(format_ratio).collect::<Vec<_>>(),
                "variance_gap": format_ratio(variance_gap),
            }),
            spectra::Evidence::Outside { detail } => json!({
                "kind": "outside-decomposable-class",
                "detail": detail,
            }),
        };
        let output = json!({
            "format": 1,
            "command": "classify",
            "estimator": resolved.estimator.label(),
            "verdict": classification.verdict.to_string(),
            "zero_invariant": zero_invariant,
            "evidence": evidence,
        });
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!("estimator       {}", resolved.estimator.label());
        println!("verdict         {}", classification.verdict);
        match zero_invariant {
            Some(flag) => println!("zero-invariant  {flag}"),
            None => println!("zero-invariant  assumed (table-only input)"),
        }
        match &classification.evidence {
            spectra::Evidence::Sufficient { blocks } => {
                println!("evidence        constant on each of {blocks} distinct study samples");
            }
            spectra::Evidence::Spanned { .. } => {
                println!("evidence        value vectors lie in the sample-space row space");
            }
            spectra::Evidence::KernelPerturbed {
                dominating,
                witness_y,
                variance_gap,
            } => {
                let witness: Vec<String> = witness_y.iter().map(format_ratio).collect();
                println!("evidence        dominated by `{}`", dominating.label());
                println!("witness y       {}", witness.join(","));
                println!("variance gap    {}", format_ratio(variance_gap));
            }
            spectra::Evidence::Outside { detail } => {
                println!("evidence        {detail}");
            }
        }
    }
    Ok(0)
}

fn cmd_rank(design_spec: &str, graph: Option<&Path>, as_json: bool) -> Result<i32> {
    let graph = graph.map(load_graph).transpose()?;
    let design = load_design(design_spec, graph.as_ref())?;
    let matrix = spectra::sample_space_matrix(&design);
    let kernel_dim = matrix.kernel_basis.len();
    let full_rank = matrix.rank == design.support_len();

    if as_json {
        let output = json!({
            "format": 1,
            "command": "rank",
            "support": design.support_len(),
            "rank": matrix.rank,
            "kernel_dim": kernel_dim,
            "full_rank": full_rank,
        });
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!(
            "rank {} of {}; full_rank={}; kernel_dim={}",
            matrix.rank,
            design.support_len(),
            full_rank,
            kernel_dim
        );
    }
    Ok(0)
}

/// One compared cell of a reproduction case.
struct ReproCell {
    name: String,
    expected: String,
    computed: String,
}

impl ReproCell {
    fn passes(&self) -> bool {
        self.expected == self.computed
    }
}

struct ReproReport {
    case: &'static str,
    preamble: Vec<String>,
    cells: Vec<ReproCell>,
}

impl ReproReport {
    fn passes(&self) -> bool {
        self.cells.iter().all(ReproCell::passes)
    }
}

fn row_string(est: &LinearEstimator, row: usize) -> String {
    est.row(row)
        .iter()
        .map(format_ratio)
        .collect::<Vec<_>>()
        .join(",")
}

fn repro_example2() -> Result<ReproReport> {
    let graph = fixtures::fig3();
    let design = fixtures::design_example2();
    let reduced = graph.remove_units(&["k1".into()])?;

    let full = build_multiplicity(&design, &graph)?;
    let dropped = build_multiplicity(&design, &reduced)?;
    let rb = raoblackwell::rao_blackwellize(&design, &reduced, &dropped)?;
    let zrb = raoblackwell::zrb(&design, &graph, &full)?;
    let branch = zrb.branch(&["k1".into()])?;

    let mut cells = Vec::new();
    let mut push = |name: &str, expected: &str, computed: String| {
        cells.push(ReproCell {
            name: name.to_string(),
            expected: expected.to_string(),
            computed,
        });
    };
    push(
        "multiplicity {i1,i2} given full graph",
        "3/1,4/3",
        row_string(&full, 0),
    );
    push(
        "multiplicity {i2,i3} given full graph",
        "0/1,5/6",
        row_string(&full, 1),
    );
    push(
        "multiplicity {i1,i2} given k1 removed",
        "4/3",
        row_string(&dropped, 0),
    );
    push(
        "multiplicity {i2,i3} given k1 removed",
        "5/6",
        row_string(&dropped, 1),
    );
    push(
        "block average {i1,i2} given k1 removed",
        "1/1",
        row_string(&rb, 0),
    );
    push(
        "block average {i2,i3} given k1 removed",
        "1/1",
        row_string(&rb, 1),
    );
    push(
        "zero-pattern {k1} branch, row {i1,i2}",
        "1/1",
        row_string(&branch, 0),
    );
    push(
        "zero-pattern {k1} branch, row {i2,i3}",
        "1/1",
        row_string(&branch, 1),
    );

    Ok(ReproReport {
        case: "example2",
        preamble: Vec::new(),
        cells,
    })
}

fn repro_table1() -> Result<ReproReport> {
    let graph = fixtures::fig1_trimmed();
    let design = fixtures::srs2();
    let e0 = build_lexicographic(&design, &graph, &(0..6).collect::<Vec<_>>(), "e0")?;
    let e1 = build_lexicographic(&design, &graph, &(0..6).rev().collect::<Vec<_>>(), "e1")?;
    let e2 = build_lexicographic(&design, &graph, &[4, 5, 3, 2, 1, 0], "e2")?;
    let d = e2.sub(&e1)?.with_label("d");

    const EXPECTED: [[&str; 6]; 4] = [
        // e0
        [
            "3/1,3/1,3/1,0/1",
            "0/1,3/1,3/1,0/1",
            "3/1,0/1,0/1,6/1",
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
        ],
        // e1
        [
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "3/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "0/1,3/1,3/1,0/1",
            "3/1,3/1,3/1,6/1",
        ],
        // e2
        [
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "3/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "3/1,3/1,3/1,6/1",
            "0/1,3/1,3/1,0/1",
        ],
        // d = e2 - e1
        [
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "0/1,0/1,0/1,0/1",
            "3/1,0/1,0/1,6/1",
            "-3/1,0/1,0/1,-6/1",
        ],
    ];

    let estimators = [(&e0, "e0"), (&e1, "e1"), (&e2, "e2"), (&d, "d")];
    let mut cells = Vec::new();
    for (idx, (est, name)) in estimators.iter().enumerate() {
        for (row, expected) in EXPECTED[idx].iter().enumerate() {
            cells.push(ReproCell {
                name: format!("{name} row {{{}}}", sample_label(&design.sample_key(row))),
                expected: expected.to_string(),
                computed: row_string(est, row),
            });
        }
    }
    Ok(ReproReport {
        case: "table1",
        preamble: Vec::new(),
        cells,
    })
}

fn repro_ranks() -> Result<ReproReport> {
    let srs = fixtures::srs2();
    let systematic = fixtures::design_systematic();
    let minsupport = fixtures::design_minsupport();
    let srs_matrix = spectra::sample_space_matrix(&srs);

    let cells = vec![
        ReproCell {
            name: "simple random sampling n=2 of 4 is full rank".to_string(),
            expected: "false".to_string(),
            computed: spectra::is_full_rank(&srs).to_string(),
        },
        ReproCell {
            name: "systematic-style design is full rank".to_string(),
            expected: "true".to_string(),
            computed: spectra::is_full_rank(&systematic).to_string(),
        },
        ReproCell {
            name: "minimum-support design is full rank".to_string(),
            expected: "true".to_string(),
            computed: spectra::is_full_rank(&minsupport).to_string(),
        },
    ];
    Ok(ReproReport {
        case: "ranks",
        preamble: vec![format!(
            "simple random sampling n=2 of 4: rank {} of {}, kernel dimension {}",
            srs_matrix.rank,
            srs.support_len(),
            srs_matrix.kernel_basis.len()
        )],
        cells,
    })
}

fn repro_variance_chain() -> Result<ReproReport> {
    let graph = fixtures::fig3();
    let design = fixtures::design_example2();
    let est = build_multiplicity(&design, &graph)?;
    let rb = raoblackwell::rao_blackwellize(&design, &graph, &est)?;
    let zrb = raoblackwell::zrb(&design, &graph, &est)?;
    let y = vec![crate::ratio::zero(), crate::ratio::one()];

    let v_est = moments::variance(&design, &est, &y)?;
    let v_rb = moments::variance(&design, &rb, &y)?;
    let v_zrb = moments::variance(&design, &zrb, &y)?;

    let cells = vec![
        ReproCell {
            name: "V(zrb) < V(rb) at y=(0/1,1/1)".to_string(),
            expected: "true".to_string(),
            computed: (v_zrb < v_rb).to_string(),
        },
        ReproCell {
            name: "V(rb) <= V(multiplicity) at y=(0/1,1/1)".to_string(),
            expected: "true".to_string(),
            computed: (v_rb <= v_est).to_string(),
        },
    ];
    Ok(ReproReport {
        case: "variance_chain",
        preamble: vec![format!(
            "V(multiplicity) = {}, V(rb) = {}, V(zrb) = {}",
            format_ratio(&v_est),
            format_ratio(&v_rb),
            format_ratio(&v_zrb)
        )],
        cells,
    })
}

fn cmd_repro(case: ReproCase, as_json: bool) -> Result<i32> {
    let report = match case {
        ReproCase::Example2 => repro_example2()?,
        ReproCase::Table1 => repro_table1()?,
        ReproCase::Ranks => repro_ranks()?,
        ReproCase::VarianceChain => repro_variance_chain()?,
    };
    let pass = report.passes();

    if as_json {
        let output = json!({
            "format": 1,
            "command": "repro",
            "case": report.case,
            "pass": pass,
            "notes": report.preamble,
            "cells": report
                .cells
                .iter()
                .map(|c| json!({
                    "name": c.name,
                    "expected": c.expected,
                    "computed": c.computed,
                    "pass": c.passes(),
                }))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!("case: {}", report.case);
        for note in &report.preamble {
            println!("{note}");
        }
        let mut rows = vec![vec![
            "status".to_string(),
            "cell".to_string(),
            "expected".to_string(),
            "computed".to_string(),
        ]];
        for cell in &report.cells {
            rows.push(vec![
                if cell.passes() { "PASS" } else { "FAIL" }.to_string(),
                cell.name.clone(),
                cell.expected.clone(),
                cell.computed.clone(),
            ]);
        }
        print!("{}", aligned_table(&rows));
        let passed = report.cells.iter().filter(|c| c.passes()).count();
        println!(
            "{}: {passed}/{} cells pass",
            report.case,
            report.cells.len()
        );
    }
    Ok(if pass { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repro_cases_all_pass() {
        for report in [
            repro_example2().unwrap(),
            repro_table1().unwrap(),
            repro_ranks().unwrap(),
            repro_variance_chain().unwrap(),
        ] {
            for cell in &report.cells {
                assert!(
                    cell.passes(),
                    "case {} cell `{}`: expected {}, computed {}",
                    report.case,
                    cell.name,
                    cell.expected,
                    cell.computed
                );
            }
        }
        assert_eq!(repro_example2().unwrap().cells.len(), 8);
        assert_eq!(repro_table1().unwrap().cells.len(), 24);
    }

    #[test]
    fn order_parsing() {
        let design = fixtures::srs2();
        assert_eq!(
            parse_order(&design, "forward").unwrap(),
            vec![0, 1, 2, 3, 4, 5]
        );
        assert_eq!(
            parse_order(&design, "reverse").unwrap(),
            vec![5, 4, 3, 2, 1, 0]
        );
        assert_eq!(
            parse_order(&design, "i2+i4;i3+i4;i2+i3;i1+i4;i1+i3;i1+i2").unwrap(),
            vec![4, 5, 3, 2, 1, 0]
        );
        assert!(parse_order(&design, "i9+i4").is_err());
    }
}
