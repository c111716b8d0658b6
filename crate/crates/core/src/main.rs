use clap::Parser;

use lowrank_explain::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    if let Err(e) = cli::run(&args) {
        let report = cli::error_json(&args.command, &e);
        let text = serde_json::to_string(&report).unwrap_or_else(|_| e.to_string());
        eprintln!("{text}");
        if let Some(out) = args.command.out_dir() {
            if std::fs::create_dir_all(out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), format!("{text}\n"));
            }
        }
        std::process::exit(cli::exit_code(&e));
    }
}
