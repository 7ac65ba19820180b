use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("VENDI_THREADS") {
        match value.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: invalid arguments: VENDI_THREADS must be a positive integer, got '{value}'");
                return ExitCode::from(4);
            }
        }
    }
    let code = vendi_cli::run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
