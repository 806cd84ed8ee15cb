use std::io;
use std::process::ExitCode;

use crl::ProcessRunner;
use crl_cli::{run_cli, CliEnv, TerminalPrompt};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = run_cli(
        &args,
        &CliEnv::from_process(),
        &ProcessRunner,
        &mut TerminalPrompt,
        &mut io::stdout(),
        &mut io::stderr(),
    );
    ExitCode::from(code as u8)
}
