fn main() {
    std::process::exit(renewal_lab::cli::run(std::env::args_os()));
}
