use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(seqbayes::cli::main_entry())
}
