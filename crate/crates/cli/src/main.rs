fn main() {
    std::process::exit(voicegate_cli::run(std::env::args().skip(1).collect()));
}
