use clap::Parser;

fn main() {
    let cli = cnma_cli::Cli::parse();
    match cnma_cli::run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
