use clap::Parser;

fn main() {
    let cli = infgcn::cli::Cli::parse();
    match infgcn::cli::run(cli) {
        Ok(report) => println!("{report}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
