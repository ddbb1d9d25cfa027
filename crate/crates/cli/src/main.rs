mod args;

use std::path::Path;
use std::process::ExitCode;

use boxcox_core::io::{
    emit_report, load_csv, parse_hypothesis_config, parse_lambda, run_fit, run_quantile, run_test, Format,
    QuantileInput, Report,
};
use boxcox_core::penalty::PenaltySpec;
use boxcox_core::simulation::{run_rejection_curve, run_rejection_study, SimSetting};
use boxcox_core::{Error, Result};
use clap::Parser;

use args::{Cli, Command, DataArgs, FitArgs, OutputArgs, QuantileArgs, SimulateArgs, TestArgs};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn write_output(text: &str, out: &OutputArgs) -> Result<()> {
    match &out.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn format_of(out: &OutputArgs) -> Format {
    out.format
        .or_else(|| out.out.as_deref().and_then(Format::from_path))
        .unwrap_or(Format::Json)
}

fn load(data: &DataArgs) -> Result<boxcox_core::Dataset> {
    load_csv(&data.data, data.response_col, !data.no_header)
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let run = args.run.resolve()?;
    let data = load(&args.data)?;
    let hyp = match &args.hypothesis {
        Some(path) => Some(parse_hypothesis_config(&read_text(path)?, data.p())?),
        None => None,
    };
    let report = run_fit(&data, hyp.as_ref(), &run)?;
    warn_all(&report.warnings);
    write_output(&emit_report(Report::Fit(&report), format_of(&args.output)), &args.output)
}

fn test(args: &TestArgs) -> Result<()> {
    let run = args.run.resolve()?;
    let data = load(&args.data)?;
    let hyp = parse_hypothesis_config(&read_text(&args.hypothesis)?, data.p())?;
    let report = run_test(&data, &hyp, &run)?;
    warn_all(&report.warnings);
    write_output(&emit_report(Report::Test(&report), format_of(&args.output)), &args.output)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut setting: SimSetting = serde_json::from_str(&read_text(&args.setting)?)?;
    if let Some(r) = args.replicates {
        setting.replicates = r;
    }
    if let Some(s) = args.seed {
        setting.seed = s;
    }
    if let Some(g) = args.g_id {
        setting.g_id = g;
    }
    if let Some(h) = args.hypothesis_id {
        setting.hypothesis_id = h;
    }
    if let Some(a) = args.alpha {
        setting.alpha = a;
    }
    setting.baseline |= args.baseline;
    let test = &mut setting.test;
    if args.penalty.is_some() || args.penalty_a.is_some() {
        let family = args.penalty.unwrap_or(test.solver.penalty.family);
        let a = args.penalty_a.unwrap_or(test.solver.penalty.a);
        test.solver.penalty = PenaltySpec::new(family, a, 0.0)?;
    }
    if let Some(l) = &args.lambda {
        test.lambda = parse_lambda(l)?;
    }
    if let Some(v) = args.path_len {
        test.tuning.path_len = v;
    }
    if let Some(v) = args.lambda_min_ratio {
        test.tuning.lambda_min_ratio = v;
    }
    if let Some(v) = args.thresholds {
        test.thresholds = v;
    }
    if let Some(v) = args.mc_draws {
        test.mc_draws = v;
    }
    test.solver.standardize |= args.standardize;
    test.godambe |= args.godambe;
    let mut table = match &args.h1 {
        Some(values) => run_rejection_curve(&setting, values)?,
        None => run_rejection_study(&setting)?,
    };
    if table.failures > 0 {
        log::warn!(
            "{} replicate(s) failed{}",
            table.failures,
            if table.flagged { "; more than 5% of the study" } else { "" }
        );
    }
    if !args.keep_replicates {
        table.outcomes.clear();
    }
    write_output(&emit_report(Report::Table(&table), format_of(&args.output)), &args.output)
}

fn quantile(args: &QuantileArgs) -> Result<()> {
    let input: QuantileInput = serde_json::from_str(&read_text(&args.input)?)?;
    let report = run_quantile(&input, args.alpha, args.mc_draws, args.seed, args.statistic)?;
    write_output(&emit_report(Report::Quantile(&report), format_of(&args.output)), &args.output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_env("RUST_LOG")
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Test(a) => test(a),
        Command::Simulate(a) => simulate(a),
        Command::Quantile(a) => quantile(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}
