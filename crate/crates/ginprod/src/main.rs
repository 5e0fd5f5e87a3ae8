use std::process::ExitCode;

fn main() -> ExitCode {
    ginprod::cli::run()
}
