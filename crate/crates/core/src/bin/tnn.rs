use std::process::ExitCode;

fn main() -> ExitCode {
    tnn::cli::main_with(std::env::args_os())
}
