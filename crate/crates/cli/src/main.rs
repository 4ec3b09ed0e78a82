use clap::Parser;

use edgefbg_cli::commands::{run, Cli};
use edgefbg_cli::thread_count;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = thread_count().and_then(|n| {
        if let Some(n) = n {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| edgefbg_cli::CliError::Config(e.to_string()))?;
        }
        run(cli)
    });
    if let Err(e) = result {
        eprintln!("edgefbg: {e}");
        std::process::exit(e.exit_code());
    }
}
