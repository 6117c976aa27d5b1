fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = subgam::cli::run(std::env::args_os());
    subgam::cli::flush_stdout();
    std::process::exit(code);
}
