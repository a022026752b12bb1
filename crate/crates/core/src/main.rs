use sparsejsr::cli;

#[global_allocator]
static ALLOC: cli::CountingAlloc = cli::CountingAlloc;

fn main() {
    std::process::exit(cli::run(std::env::args()));
}
