//! The full benchmark through library calls: sample arm poses from the
//! normal working zone, train the output layer twice from one shared
//! random hidden layer, and compare reachable-set radius and fit error.

use reachelm::elm::{fit_output_layer, init_random, mse, ElmConfig};
use reachelm::reach::output_radius;
use reachelm::robotarm::{sample_dataset, ArmGeometry, Zone};
use reachelm::robust::{train_robust, RobustTrainConfig};
use reachelm::UncertainDataset;

fn main() -> reachelm::Result<()> {
    let n = 50;
    let delta = 0.01;

    println!("{:<6}{:<14}{:<14}{:<14}{}", "seed", "elm radius", "rob radius", "elm mse", "rob mse");
    for seed in 0..5u64 {
        let data = sample_dataset(&ArmGeometry::default(), Zone::Normal, n, seed)?;
        let udata = UncertainDataset::from_uniform_delta(&data, delta)?;

        let cfg = ElmConfig {
            n_hidden: 10,
            seed,
            ..ElmConfig::default()
        };
        let net0 = init_random(&cfg, 2, 2)?;

        let elm_net = fit_output_layer(&net0, &data, cfg.ridge)?;
        let (rob_net, _) = train_robust(&net0, &udata, &RobustTrainConfig::default())?;

        println!(
            "{seed:<6}{:<14.6}{:<14.6}{:<14.3e}{:.3e}",
            output_radius(&elm_net, &udata)?,
            output_radius(&rob_net, &udata)?,
            mse(&elm_net, &data.inputs, &data.targets)?,
            mse(&rob_net, &data.inputs, &data.targets)?,
        );
    }
    println!();
    println!("robust training shrinks the reachable sets and pays for it");
    println!("with a larger nominal fit error, the expected trade");
    Ok(())
}
