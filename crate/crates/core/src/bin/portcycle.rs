use std::process::ExitCode;

fn main() -> ExitCode {
    match portcycle::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(portcycle::cli::exit_code(&e) as u8)
        }
    }
}
