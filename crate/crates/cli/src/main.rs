use std::process::ExitCode;

use clap::Parser;
use cnet_cli::{error_json, exit_code, run_to, RunConfig};

fn init_threads() {
    if let Some(n) = std::env::var("CNET_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let config = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = cnet::CnetError::Validation(e.to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return ExitCode::from(2);
        }
    };
    init_threads();
    match run_to(&config, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
