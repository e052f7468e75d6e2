//! Robust output-layer training. The hidden features of each sample are
//! intervals (the input may move inside a box), and the SDP returns
//! weights with a certificate: no realization of the features can push
//! the squared residual above gamma.

use reachelm::elm::{fit_output_layer, init_random, ElmConfig};
use reachelm::reach::{hidden_interval_matrix, output_radius};
use reachelm::robotarm::{sample_dataset, ArmGeometry, Zone};
use reachelm::robust::{
    decompose, train_robust, worst_case_residual_bruteforce, RobustTrainConfig,
};
use reachelm::UncertainDataset;

fn main() -> reachelm::Result<()> {
    // Kept tiny so the exhaustive check below stays under 2^18 cases.
    let data = sample_dataset(&ArmGeometry::default(), Zone::Normal, 6, 11)?;
    let udata = UncertainDataset::from_uniform_delta(&data, 0.05)?;

    let cfg = ElmConfig {
        n_hidden: 3,
        seed: 11,
        ..ElmConfig::default()
    };
    let net0 = init_random(&cfg, 2, 2)?;

    let plain = fit_output_layer(&net0, &data, cfg.ridge)?;
    let (robust, result) = train_robust(&net0, &udata, &RobustTrainConfig::default())?;

    println!(
        "plain  radius {:.4}",
        output_radius(&plain, &udata)?
    );
    println!(
        "robust radius {:.4}   gamma {:.6}",
        output_radius(&robust, &udata)?,
        result.gamma
    );
    if let Some(report) = &result.solver_report {
        println!(
            "solver: {:?} in {} iterations, duality gap {:.2e}",
            report.status, report.iterations, report.duality_gap
        );
    }

    // The problem here is small enough to enumerate every extreme feature
    // matrix, so the certificate can be checked directly.
    let dec = decompose(&hidden_interval_matrix(&robust, &udata)?);
    println!("{} uncertain feature entries", dec.deviations().len());
    let worst = worst_case_residual_bruteforce(&result.w2, &dec, udata.targets())?;
    println!("enumerated worst-case squared residual {worst:.6} <= gamma {:.6}", result.gamma);
    assert!(worst <= result.gamma * (1.0 + 1e-9));

    // The same weights under the plain fit have a smaller nominal residual
    // but a worse extreme case; that is the trade the SDP makes.
    let plain_worst = worst_case_residual_bruteforce(plain.w2(), &dec, udata.targets())?;
    println!("plain weights, same enumeration: {plain_worst:.6}");
    Ok(())
}
