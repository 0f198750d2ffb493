use std::process::ExitCode;

fn main() -> ExitCode {
    wordvec::cli::main_with_args(std::env::args_os())
}
