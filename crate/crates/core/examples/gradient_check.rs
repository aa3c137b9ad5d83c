//! Checks tape gradients against central differences, first for a small
//! hand-built expression and then for a whole KAND block.

use kang::basis::BasisSpec;
use kang::diffcore::{check_params, finite_difference_check, Mat, ParamStore, Session};
use kang::kand::{KandConfig, KandLayer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kang::Result<()> {
    // loss = mean(silu(x W) ⊙ x W)
    let x = Mat::new(3, 2, vec![0.5, -1.0, 2.0, 0.1, -0.3, 0.8])?;
    let w = Mat::new(2, 2, vec![0.2, -0.4, 0.7, 0.1])?;
    let err = finite_difference_check(
        |_, p| {
            let h = p[0].matmul(&p[1])?;
            h.silu().mul(&h).map(|t| t.mean())
        },
        &[x, w],
        1e-6,
    )?;
    println!("expression: max relative error {err:.2e}");

    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = KandLayer::new(
        &mut store,
        "demo",
        KandConfig::new(3, 4, BasisSpec::default()),
        &mut rng,
    )?;
    let input: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
    let err = check_params(&store, 1e-6, |s: &Session| {
        let x = s.tape().constant(5, 3, input.clone())?;
        Ok(layer.forward(s, x)?.square().mean())
    })?;
    println!("KAND block: max relative error {err:.2e}");
    Ok(())
}
