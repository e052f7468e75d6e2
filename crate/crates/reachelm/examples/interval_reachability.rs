//! Propagate an input box through a small network and check the bounds
//! against random samples from inside the box.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachelm::reach::network_reach;
use reachelm::{Activation, IntervalVector, ShallowNet};

fn main() -> reachelm::Result<()> {
    let w1 = DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 0.3, 0.8, -1.2, 0.4]);
    let b1 = DVector::from_vec(vec![0.1, -0.2, 0.0]);
    let w2 = DMatrix::from_row_slice(2, 3, &[0.7, -0.3, 0.5, 0.2, 0.9, -0.6]);
    let b2 = DVector::from_vec(vec![0.0, 0.05]);
    let net = ShallowNet::new(w1, b1, w2, b2, Activation::Sigmoid, Activation::Identity)?;

    let center = DVector::from_vec(vec![0.4, -0.1]);
    let radius = DVector::from_vec(vec![0.05, 0.08]);
    let x0 = IntervalVector::from_center_radius(&center, &radius)?;

    let (hidden, output) = network_reach(&net, &x0)?;
    println!("input box:");
    for iv in x0.iter() {
        println!("  [{:+.4}, {:+.4}]", iv.lo(), iv.hi());
    }
    println!("hidden reach set:");
    for iv in hidden.iter() {
        println!("  [{:+.4}, {:+.4}]  width {:.4}", iv.lo(), iv.hi(), iv.width());
    }
    println!("output reach set:");
    for iv in output.iter() {
        println!("  [{:+.4}, {:+.4}]  width {:.4}", iv.lo(), iv.hi(), iv.width());
    }

    // Sample the box; every forward pass must land inside the output set.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut widest_seen = vec![f64::NEG_INFINITY; 2];
    let mut narrowest_seen = vec![f64::INFINITY; 2];
    for _ in 0..20_000 {
        let u = DVector::from_fn(2, |i, _| {
            let iv = x0.get(i);
            rng.random_range(iv.lo()..=iv.hi())
        });
        let y = net.forward(&u)?;
        assert!(output.contains_point(&y), "bound violated at {u:?}");
        for k in 0..2 {
            widest_seen[k] = widest_seen[k].max(y[k]);
            narrowest_seen[k] = narrowest_seen[k].min(y[k]);
        }
    }
    println!("20000 random samples stayed inside the output set");
    println!("tightness (sampled extent / certified extent):");
    for k in 0..2 {
        let iv = output.get(k);
        let ratio = (widest_seen[k] - narrowest_seen[k]) / iv.width();
        println!("  output {k}: {ratio:.4}");
    }
    Ok(())
}
