fn main() {
    cobel::numeric::silence_overflow_panics();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = cobel::cli::run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code);
}
