//! The `wcec` command line tool.
//!
//! Exit status: 0 on success, 1 when a bound fails validation or a run
//! fails, 2 on usage, parse and file errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wcec_core::bench::{fir_source, thread_inputs, ExperimentConfig, FirSpec, TableId};
use wcec_core::energy::{Pattern, DEFAULT_BASE_POWER_MW, DEFAULT_CYCLE_TIME_NS};
use wcec_core::sim::{dynamic_taint_report, run, SimConfig, ThreadConfig};
use wcec_core::wcec::{analyze_all, input_demand, max_counts};
use wcec_core::{build_cfg, parse_threads, pretty_print, EnergyModel, Opcode, Program};

use crate::{harness, model_file, reports, tables, Error};

pub const DEFAULT_SEED: u64 = 0xC0FFEE;

#[derive(Debug, Parser)]
#[command(name = "wcec", version, about = "Instruction-level energy modelling and worst-case energy bounds")]
pub struct Cli {
    /// Seed for every random choice (decimal or 0x hex).
    #[arg(long, global = true, default_value = "0xC0FFEE", value_parser = parse_u64)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a program and print it with its control-flow graph.
    Asm { file: PathBuf },
    /// Simulate a program and report its energy.
    Run {
        program: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// A pattern name (zeros, rand8, rand16, rand24, rand32, signal) or a
        /// file of input words.
        #[arg(long)]
        inputs: String,
        /// Copies of a single-program file sharing the pipeline.
        #[arg(long)]
        threads: Option<usize>,
        /// Write the per-instruction trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit an energy model to a measurement table.
    Fit {
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = DEFAULT_BASE_POWER_MW)]
        base_power: f64,
        #[arg(long, default_value_t = DEFAULT_CYCLE_TIME_NS)]
        cycle_time: f64,
    },
    /// Print the port classification of every reachable instruction as JSON.
    Analyze { program: PathBuf },
    /// Compute a worst-case energy bound, optionally checking it by simulation.
    Wcec {
        program: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Random trials to run besides the all-zero and alternating ones.
        #[arg(long)]
        validate: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rerun one of the experiment tables on the simulator.
    Bench {
        #[arg(long, value_parser = parse_table)]
        table: TableId,
        #[arg(long)]
        model: PathBuf,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        experiment: ExperimentArgs,
    },
    /// Print the FIR benchmark source for one configuration.
    Fir {
        #[arg(long, value_parser = parse_opcode)]
        op: Opcode,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Core op reads the loop iterator instead of the loaded data.
        #[arg(long)]
        no_dpath: bool,
        #[arg(long, default_value_t = 18)]
        elements: u32,
        #[arg(long, default_value_t = 64)]
        samples: u32,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Benchmark threads sharing the pipeline.
    #[arg(long, default_value_t = 7)]
    pub threads: usize,
    /// Cycles averaged per run.
    #[arg(long, default_value_t = 16_000)]
    pub window: u64,
    /// Runs averaged per cell.
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        if self.threads == 0 || self.runs == 0 || self.window == 0 {
            return Err(Error::Usage("threads, window and runs must be positive".into()));
        }
        Ok(ExperimentConfig { threads: self.threads, window_cycles: self.window, runs: self.runs })
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| e.to_string())
}

fn parse_table(s: &str) -> Result<TableId, String> {
    s.parse().ok().and_then(TableId::from_number).ok_or_else(|| format!("no table `{s}`; expected 1, 2 or 3"))
}

fn parse_opcode(s: &str) -> Result<Opcode, String> {
    Opcode::from_name(s).ok_or_else(|| format!("unknown opcode `{s}`"))
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `out` and diagnostics to `err`. Returns the exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code as u8;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_programs(path: &std::path::Path) -> Result<Vec<Program>, Error> {
    let text = crate::read_file(path)?;
    parse_threads(&text).map_err(|e| Error::Format(format!("{}:{}", path.display(), e)))
}

/// Which program each thread runs: one per program of a multi-thread file,
/// or `threads` copies of a single program.
fn thread_layout(programs: &[Program], threads: Option<usize>) -> Result<Vec<usize>, Error> {
    match (programs.len(), threads) {
        (1, Some(0)) => Err(Error::Usage("--threads must be positive".into())),
        (1, n) => Ok(vec![0; n.unwrap_or(1)]),
        (k, Some(n)) if n != k => Err(Error::Usage(format!("file defines {k} threads but --threads is {n}"))),
        (k, _) => Ok((0..k).collect()),
    }
}

fn load_model(path: &std::path::Path, err: &mut dyn Write) -> Result<EnergyModel, Error> {
    let loaded = model_file::load_model(path)?;
    for w in &loaded.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(loaded.model)
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

fn print_text(out: &mut dyn Write, text: &str) -> Result<(), Error> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

fn cfg_listing(program: &Program) -> Result<String, Error> {
    let cfg = build_cfg(program)?;
    let mut s = String::new();
    for (b, block) in cfg.blocks.iter().enumerate() {
        let reach = if cfg.is_reachable(b) { "" } else { " (unreachable)" };
        let _ = writeln!(s, "# block {b}: sites {}..={} -> {:?}{reach}", block.start, block.last(), cfg.succs[b]);
    }
    for lp in cfg.loops().loops {
        let bound = cfg.loop_bound(program, &lp).map_or("none".to_string(), |b| b.to_string());
        let _ = writeln!(s, "# loop: header block {}, depth {}, bound {bound}", lp.header, lp.depth);
    }
    Ok(s)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, Error> {
    match &cli.command {
        Command::Asm { file } => {
            let programs = load_programs(file)?;
            let mut text = String::new();
            for (k, p) in programs.iter().enumerate() {
                if programs.len() > 1 {
                    let _ = writeln!(text, ".thread {k}");
                }
                text.push_str(&pretty_print(p));
                text.push_str(&cfg_listing(p)?);
            }
            print_text(out, &text)?;
        }
        Command::Run { program, model, inputs, threads, trace } => {
            let programs = load_programs(program)?;
            let layout = thread_layout(&programs, *threads)?;
            let model = load_model(model, err)?;
            let streams = thread_streams(&programs, &layout, inputs, cli.seed)?;
            let config = SimConfig {
                max_cycles: 1 << 32,
                threads: layout.iter().zip(streams).map(|(&program, input)| ThreadConfig { program, input }).collect(),
                record_trace: true,
            };
            let result = run(&config, &programs, &model)?;
            let events = result.trace.unwrap_or_default();
            if let Some(path) = trace {
                let mut buf = Vec::new();
                tables::write_trace(&events, &mut buf)?;
                crate::write_file(path, &String::from_utf8_lossy(&buf))?;
            }
            let tainted = dynamic_taint_report(&events).into_iter().collect();
            print_json(out, &reports::run_json(&result.report, tainted))?;
        }
        Command::Fit { measurements, out: path, experiment, base_power, cycle_time } => {
            let text = crate::read_file(measurements)?;
            let table = tables::read_measurements(text.as_bytes())
                .map_err(|e| Error::Format(format!("{}: {e}", measurements.display())))?;
            let (model, report) = harness::calibrate(&table, &experiment.config()?, cli.seed, *base_power, *cycle_time)?;
            model_file::save_model(path, &model)?;
            print_text(out, &reports::fit_summary(&report))?;
        }
        Command::Analyze { program } => {
            let programs = load_programs(program)?;
            let analyzed = analyze_all(&programs)?;
            print_json(out, &reports::classification_json(&programs, &analyzed.classes))?;
        }
        Command::Wcec { program, model, validate, threads } => {
            let programs = load_programs(program)?;
            let layout = thread_layout(&programs, *threads)?;
            let model = load_model(model, err)?;
            let check = harness::check_bound(&programs, &layout, &model, *validate, cli.seed)?;
            print_json(out, &reports::wcec_json(&programs, &layout, &check.bound, check.validation.as_ref()))?;
            if let Some(v) = &check.validation {
                let _ = writeln!(
                    err,
                    "{}: {} trials, max observed {:.3} nJ, bound {:.3} nJ",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.trials.len(),
                    v.max_observed_nj,
                    v.bound_nj
                );
                if !v.pass {
                    return Ok(1);
                }
            }
        }
        Command::Bench { table, model, out: path, experiment } => {
            let model = load_model(model, err)?;
            let result = harness::run_table(*table, &model, &experiment.config()?, cli.seed)?;
            let mut buf = Vec::new();
            tables::write_table(&result, &mut buf)?;
            let text = String::from_utf8_lossy(&buf);
            match path {
                Some(p) => crate::write_file(p, &text)?,
                None => print_text(out, &text)?,
            }
        }
        Command::Fir { op, reps, no_dpath, elements, samples } => {
            let spec = FirSpec { core_op: *op, repetitions: *reps, dpath: !no_dpath, elements: *elements, samples: *samples };
            let src = fir_source(&spec).map_err(|e| Error::Usage(e.to_string()))?;
            print_text(out, &src)?;
        }
    }
    Ok(0)
}

/// Input words for every thread. A pattern is generated long enough for the
/// most input any path can read, and thread `k` starts `k` samples in. A
/// file is read whole by every thread.
fn thread_streams(programs: &[Program], layout: &[usize], inputs: &str, seed: u64) -> Result<Vec<Vec<u32>>, Error> {
    if let Some(pattern) = Pattern::from_name(inputs) {
        let analyzed = analyze_all(programs)?;
        let mut longest = 0;
        for (p, a) in programs.iter().zip(&analyzed.programs) {
            longest = longest.max(input_demand(p, &max_counts(p, &a.cfg)?));
        }
        return Ok(thread_inputs(pattern, longest, layout.len(), seed));
    }
    let path = PathBuf::from(inputs);
    if !path.exists() {
        return Err(Error::Usage(format!("`{inputs}` is neither an input pattern nor a file")));
    }
    let words = tables::parse_words(&crate::read_file(&path)?)?;
    Ok(vec![words; layout.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with(std::iter::once("wcec").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn seeds_accept_hex() {
        assert_eq!(parse_u64("0xC0FFEE"), Ok(0xC0FFEE));
        assert_eq!(parse_u64("12"), Ok(12));
        assert!(parse_u64("zz").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["bench", "--table", "4", "--model", "m.json"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("wcec"));
    }

    #[test]
    fn fir_prints_source() {
        let (code, out, _) = call(&["fir", "--op", "lmul", "--reps", "2", "--no-dpath"]);
        assert_eq!(code, 0);
        assert_eq!(out.matches("lmul r3, r9, r9").count(), 4);
        assert_eq!(call(&["fir", "--op", "ldw"]).0, 2);
        assert_eq!(call(&["fir", "--op", "add", "--reps", "9"]).0, 2);
    }

    #[test]
    fn missing_file_exits_2() {
        let (code, _, err) = call(&["asm", "/nonexistent/x.asm"]);
        assert_eq!(code, 2);
        assert!(err.contains("/nonexistent/x.asm"), "{err}");
    }

    #[test]
    fn layouts() {
        let p = wcec_core::parse_program("halt").unwrap();
        assert_eq!(thread_layout(std::slice::from_ref(&p), Some(3)).unwrap(), [0, 0, 0]);
        assert_eq!(thread_layout(&[p.clone(), p.clone()], None).unwrap(), [0, 1]);
        assert!(thread_layout(&[p.clone(), p], Some(3)).is_err());
    }
}
