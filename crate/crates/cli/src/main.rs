mod cli;
mod commands;
mod manifest;

use clap::Parser;
use cli::{Cli, Command};
use gridvolt::opf::OpfError;
use gridvolt::powerflow::PowerFlowError;
use gridvolt::sim::SimError;
use std::process::ExitCode;

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

fn sim_is_solver(e: &SimError) -> bool {
    match e {
        SimError::Opf(o) => opf_is_solver(o),
        SimError::Day { source, .. } => sim_is_solver(source),
        _ => false,
    }
}

fn opf_is_solver(e: &OpfError) -> bool {
    matches!(e, OpfError::Solver(_) | OpfError::PowerFlow(_))
}

/// Solver and power-flow failures map to their own code; everything else
/// is an input problem.
fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err.chain().any(|c| {
        c.downcast_ref::<SimError>().is_some_and(sim_is_solver)
            || c.downcast_ref::<OpfError>().is_some_and(opf_is_solver)
            || c.downcast_ref::<PowerFlowError>().is_some()
            || c.downcast_ref::<gridvolt::opf::SolverError>().is_some()
    });
    if solver {
        EXIT_SOLVER
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pf(a) => commands::pf(a),
        Command::Opf(a) => commands::opf(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Settle(a) => commands::settle(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(o) if o.violation => {
            eprintln!("warning: the dispatch violates network limits; outputs were written");
            ExitCode::from(EXIT_VIOLATION)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
