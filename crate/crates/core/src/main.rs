use clap::Parser;
use collider_bias::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("COLLIDER_BIAS_LOG")).init();
    std::process::exit(run(Cli::parse()));
}
