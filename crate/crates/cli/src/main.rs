use clap::Parser;
use specloc_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(m)) => {
            for o in &m.outputs {
                println!("{}", cli.out.join(&o.path).display());
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
