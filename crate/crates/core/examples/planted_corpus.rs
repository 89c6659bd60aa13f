//! Writes the synthetic planted-family corpus to a directory so the CLI can be
//! tried without crawling anything.
//!
//! Usage: cargo run -p scriptclique-core --example planted_corpus -- <out-dir> [seed]

use scriptclique_core::{synth, write_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or("usage: planted_corpus <out-dir> [seed]")?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let corpus = synth::planted_corpus(seed);
    write_corpus(&out, &corpus.data)?;
    for fam in &corpus.families {
        println!(
            "family {} ({:?}, {}): {} sites",
            fam.index,
            fam.flavor,
            fam.kind.as_str(),
            fam.sites.len()
        );
    }
    println!("{} scripts written to {out}", corpus.data.manifest.scripts.len());
    Ok(())
}
