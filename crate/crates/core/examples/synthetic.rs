//! Writes a planted-cluster dataset as `user<TAB>item` lines.
//!
//! cargo run --release --example synthetic -- out.tsv [users] [items] [clusters] [seed]

use std::fs::File;
use std::io::BufWriter;

use partsim::data::write_pairs;
use partsim::synth::{planted, PlantedConfig};

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: synthetic OUT.tsv [users] [items] [clusters] [seed]");
        std::process::exit(2);
    };
    let num = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().expect("integer argument"));
    let cfg = PlantedConfig {
        n_users: num(1, 2000) as usize,
        n_items: num(2, 400) as usize,
        clusters: num(3, 8) as usize,
        seed: num(4, 0),
        popularity_skew: 0.8,
        ..Default::default()
    };
    let d = planted(&cfg);
    write_pairs(&d.matrix, BufWriter::new(File::create(path)?))?;
    eprintln!("{} users, {} items, {} interactions", d.matrix.n_users(), d.matrix.n_items(), d.matrix.nnz());
    Ok(())
}
