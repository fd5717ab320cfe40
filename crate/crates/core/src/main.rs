use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let result = rigkit::cli::run(std::env::args_os());
    let text = result.report.as_bytes();
    let written = if result.exit_code == 0 {
        std::io::stdout().write_all(text)
    } else {
        std::io::stderr().write_all(text)
    };
    if written.is_err() {
        return ExitCode::from(1);
    }
    ExitCode::from(result.exit_code as u8)
}
