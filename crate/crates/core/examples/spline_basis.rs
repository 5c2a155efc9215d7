//! Knot placement and the radial cubic spline basis `|x − κ|³ Ω^(−1/2)`.
//!
//! cargo run --release --example spline_basis

use glmm_smc::design::{radial_cubic_basis, select_knots, SplineBasisSpec, Standardisation};

fn main() -> glmm_smc::Result<()> {
    let x: Vec<f64> = (0..=100).map(|i| (i as f64 / 100.0).powi(2)).collect();
    let st = Standardisation::fit(&x)?;
    let xs = st.apply_all(&x);
    let knots = select_knots(&xs, 5)?;
    println!("knots (raw scale): {:?}", knots.iter().map(|k| (st.invert(*k) * 1e4).round() / 1e4).collect::<Vec<_>>());
    let spec = SplineBasisSpec::new(knots)?;
    println!("Omega^(-1/2):\n{:.4}", spec.omega_inv_sqrt());
    let z = radial_cubic_basis(&xs[..5], &spec);
    println!("first rows of Z:\n{z:.4}");
    Ok(())
}
