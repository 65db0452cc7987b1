use std::process::ExitCode;

fn main() -> ExitCode {
    fdrv::cli::main()
}
