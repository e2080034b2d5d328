use std::process::ExitCode;

fn main() -> ExitCode {
    skillstack_cli::run(std::env::args_os())
}
