//! Samples one learned univariate map of a freshly initialised KAND block.
//! At initialisation the spline mix is small and the curve is dominated by
//! the SiLU base branch.

use kang::basis::BasisSpec;
use kang::diffcore::{ParamStore, Session, Tape};
use kang::kand::{KandConfig, KandLayer, KandStack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kang::Result<()> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let first = KandLayer::new(
        &mut store,
        "first",
        KandConfig::new(4, 8, BasisSpec::default()),
        &mut rng,
    )?;
    let head = KandConfig {
        apply_output_ln: false,
        ..KandConfig::new(8, 2, BasisSpec::default())
    };
    let second = KandLayer::new(&mut store, "second", head, &mut rng)?;

    for (t, v) in first.snapshot_activation(&store, 0, 0, -3.0, 3.0, 13)? {
        println!("{t:+.2}  {v:+.4}");
    }

    let stack = KandStack::new(vec![first, second])?;
    let tape = Tape::new();
    let s = Session::new(&tape, &store, false, 0);
    let x = tape.constant(3, 4, (0..12).map(|i| i as f64 / 6.0 - 1.0).collect())?;
    let y = stack.forward(&s, x)?;
    println!("stack output {:?}: {:?}", y.shape(), y.value());
    Ok(())
}
