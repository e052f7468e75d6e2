//! Train an extreme learning machine on arm kinematics: random hidden
//! layer, least-squares output layer. Shows the fit quality and that the
//! whole procedure replays exactly from the seed.

use nalgebra::DVector;
use reachelm::elm::{fit_output_layer, init_random, mse, ElmConfig};
use reachelm::robotarm::{forward_kinematics, sample_dataset, ArmGeometry, Zone};

fn main() -> reachelm::Result<()> {
    let geom = ArmGeometry::default();
    let train = sample_dataset(&geom, Zone::Normal, 200, 42)?;
    let test = sample_dataset(&geom, Zone::Normal, 500, 43)?;

    let cfg = ElmConfig {
        n_hidden: 20,
        seed: 42,
        ..ElmConfig::default()
    };
    let net0 = init_random(&cfg, 2, 2)?;
    let net = fit_output_layer(&net0, &train, cfg.ridge)?;

    println!(
        "train mse {:.3e}   test mse {:.3e}",
        mse(&net, &train.inputs, &train.targets)?,
        mse(&net, &test.inputs, &test.targets)?,
    );

    // A few point predictions against the true kinematics.
    for &(t1, t2) in &[(1.4, 1.5), (1.6, 1.3), (1.5, 1.8)] {
        let (x, y) = forward_kinematics(&geom, t1, t2);
        let pred = net.forward(&DVector::from_vec(vec![t1, t2]))?;
        println!(
            "theta=({t1:.2},{t2:.2})  true=({x:+.4},{y:+.4})  pred=({:+.4},{:+.4})",
            pred[0], pred[1]
        );
    }

    // Same seed, same model, down to the last bit.
    let again = fit_output_layer(&init_random(&cfg, 2, 2)?, &train, cfg.ridge)?;
    assert_eq!(net.w1(), again.w1());
    assert_eq!(net.w2(), again.w2());
    println!("retraining with the same seed reproduced the weights exactly");
    Ok(())
}
