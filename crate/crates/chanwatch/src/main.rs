use chanwatch::cli::{self, LogFormat};
use tracing_subscriber::EnvFilter;

fn init_logging(format: LogFormat) {
    let filter = EnvFilter::try_from_env("CHANWATCH_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(false);
    match format {
        LogFormat::Json => builder.json().flatten_event(true).init(),
        LogFormat::Text => builder.init(),
    }
}

fn main() {
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let code = match cli::parse(std::env::args_os(), &mut stdout, &mut stderr) {
        Ok(args) => {
            init_logging(args.log_format);
            cli::execute(args, &mut stdout, &mut stderr)
        }
        Err(code) => code,
    };
    std::process::exit(code);
}
