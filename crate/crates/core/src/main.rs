use std::io;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = haabsa_core::pipeline::cli::run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr());
    std::process::exit(code);
}
