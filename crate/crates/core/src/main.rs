fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = npc::cli::run(std::env::args_os()) {
        eprintln!("npc: {e}");
        std::process::exit(e.exit_code());
    }
}
