use std::process::ExitCode;

fn main() -> ExitCode {
    shape_instantiation::cli::run(std::env::args_os())
}
