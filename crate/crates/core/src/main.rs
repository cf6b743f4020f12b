fn main() {
    std::process::exit(cluster_limits::cli::main_with_args(std::env::args_os()));
}
