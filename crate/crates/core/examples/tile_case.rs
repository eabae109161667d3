//! Writes `data/case300_tiled.m`: ten copies of the 30-bus case chained
//! through tie lines between their slack buses.

use gridnewton::grid::{parse_case, tile_network, write_case};

fn main() -> gridnewton::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let base = parse_case(&std::fs::read_to_string(format!("{dir}/case30.m"))?)?;
    let tiled = tile_network(&base, 10, 0.002, 0.02)?;
    std::fs::write(format!("{dir}/case300_tiled.m"), write_case(&tiled))?;
    println!(
        "{} buses, {} generators, hash {}",
        tiled.n_bus(),
        tiled.n_gen(),
        tiled.case_hash()
    );
    Ok(())
}
