use clap::Parser;

fn main() {
    let cli = match eccl_cli::commands::Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return;
        }
        Err(e) => {
            let msg = serde_json::json!({"error": "usage", "message": e.to_string().trim()});
            eprintln!("{msg}");
            std::process::exit(2);
        }
    };
    match eccl_cli::commands::run(cli) {
        Ok(Some(summary)) => println!("{summary}"),
        Ok(None) => {}
        Err(e) => {
            let msg = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{msg}");
            std::process::exit(1);
        }
    }
}
