fn main() {
    std::process::exit(simtext::cli::main_from_env());
}
