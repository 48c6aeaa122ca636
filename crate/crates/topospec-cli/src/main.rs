fn main() {
    std::process::exit(topospec_cli::run() as i32);
}
