//! Writes a synthetic FER-format CSV: `synthetic_csv OUT [PER_CLASS] [SEED]`.

use insideout::synthetic::{synthetic_dataset, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or_else(|| anyhow::anyhow!("usage: synthetic_csv OUT [PER_CLASS] [SEED]"))?;
    let per_class = args.next().map_or(Ok(30), |s| s.parse())?;
    let seed = args.next().map_or(Ok(0), |s| s.parse())?;
    synthetic_dataset(&SyntheticSpec::balanced(per_class, seed))?.write_csv(&out)?;
    Ok(())
}
