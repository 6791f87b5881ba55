use std::io;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("VDMDP_LOG")).init();
    let code = vdmdp::cli::run(
        std::env::args_os(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
