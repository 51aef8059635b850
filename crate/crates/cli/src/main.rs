use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = treerecon_cli::execute(std::env::args_os());
    let _ = std::io::stdout().write_all(&outcome.stdout);
    let _ = std::io::stderr().write_all(&outcome.stderr);
    ExitCode::from(outcome.code)
}
