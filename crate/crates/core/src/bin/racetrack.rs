fn main() {
    std::process::exit(racetrack::cli::run(std::env::args_os()));
}
