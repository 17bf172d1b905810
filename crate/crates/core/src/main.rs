fn main() {
    std::process::exit(learning_diagrams::cli::run(std::env::args_os()));
}
