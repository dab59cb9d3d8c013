fn main() {
    std::process::exit(mixprompt::cli::run(std::env::args_os()));
}
