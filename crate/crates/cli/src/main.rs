use clap::Parser;

fn main() {
    let args = gmtlab::Args::parse();
    let code = match gmtlab::run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            gmtlab::EXIT_ERROR
        }
    };
    std::process::exit(code);
}
