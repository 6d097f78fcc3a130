use clap::Parser;
use itlrr::cli::{run, Cli};

fn main() {
    env_logger::init();
    if let Ok(v) = std::env::var("ITLRR_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(0) => {}
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            Err(_) => {
                eprintln!("E_INPUT: ITLRR_THREADS must be a non-negative integer, got {v:?}");
                std::process::exit(2);
            }
        }
    }
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
