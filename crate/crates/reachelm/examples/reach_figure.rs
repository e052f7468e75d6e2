//! Reproduce the reachable-set picture: train both models on the same
//! data, compute one output box per sample, and write two SVG figures
//! side by side (plain fit vs robust fit) plus the box CSVs.

use reachelm::cli::{write_boxes_csv, write_boxes_svg};
use reachelm::elm::{fit_output_layer, init_random, ElmConfig};
use reachelm::reach::{network_reach, output_radius};
use reachelm::robotarm::{sample_dataset, ArmGeometry, Zone};
use reachelm::robust::{train_robust, RobustTrainConfig};
use reachelm::{ShallowNet, UncertainDataset};

fn boxes_of(net: &ShallowNet, udata: &UncertainDataset) -> reachelm::Result<Vec<[f64; 4]>> {
    let mut boxes = Vec::new();
    for i in 0..udata.n_samples() {
        let (_, out) = network_reach(net, &udata.input_box(i)?)?;
        let (c, r) = (out.center(), out.radius());
        boxes.push([c[0], c[1], r[0], r[1]]);
    }
    Ok(boxes)
}

fn main() -> reachelm::Result<()> {
    let data = sample_dataset(&ArmGeometry::default(), Zone::Normal, 40, 4)?;
    let udata = UncertainDataset::from_uniform_delta(&data, 0.02)?;
    let targets: Vec<[f64; 2]> = (0..data.n_samples())
        .map(|i| [data.targets[(i, 0)], data.targets[(i, 1)]])
        .collect();

    let cfg = ElmConfig {
        n_hidden: 10,
        seed: 4,
        ..ElmConfig::default()
    };
    let net0 = init_random(&cfg, 2, 2)?;
    let elm_net = fit_output_layer(&net0, &data, cfg.ridge)?;
    let (rob_net, _) = train_robust(&net0, &udata, &RobustTrainConfig::default())?;

    for (name, net) in [("elm", &elm_net), ("robust", &rob_net)] {
        let boxes = boxes_of(net, &udata)?;
        let csv = format!("reach_{name}.csv");
        let svg = format!("reach_{name}.svg");
        write_boxes_csv(csv.as_ref(), &boxes)?;
        write_boxes_svg(svg.as_ref(), &boxes, &targets)?;
        println!(
            "{name}: radius {:.4}, wrote {csv} and {svg}",
            output_radius(net, &udata)?
        );
    }
    Ok(())
}
