use std::process::ExitCode;

fn main() -> ExitCode {
    fbc_core::cli::main_with_args(std::env::args_os())
}
