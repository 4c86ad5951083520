fn main() {
    std::process::exit(relct_gateway::cli::main_with_env());
}
