fn main() {
    std::process::exit(flowsurrogate_cli::run(std::env::args()));
}
