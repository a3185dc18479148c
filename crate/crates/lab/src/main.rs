use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use riesz_lab::{io, run, Cli, ErrorReport};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_out = std::env::var_os("RIESZ_LAB_OUT").map(PathBuf::from);
    match run(&cli, env_out.clone()) {
        Ok(m) => {
            let dir = m.outputs.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", ");
            eprintln!("{}: wrote {dir} in {:.2} s", m.subcommand, m.wall_time_s);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = ErrorReport::new(cli.command.name(), &e);
            let json = io::to_json(&report).unwrap_or_else(|_| format!("{{\"message\": {:?}}}\n", e.to_string()));
            eprint!("{json}");
            // best effort: the output directory may be the thing that failed
            if let Some(dir) = env_out.or(cli.out) {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), &json);
                }
            }
            ExitCode::FAILURE
        }
    }
}
