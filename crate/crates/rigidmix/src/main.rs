use clap::Parser;

fn main() -> anyhow::Result<()> {
    rigidmix::cli::run(rigidmix::cli::Cli::parse())
}
