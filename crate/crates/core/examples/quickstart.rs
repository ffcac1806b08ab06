//! Fits R-LOCO on the first-order synthetic model and explains one test row.

use rloco::pwl::{generate, ModelId, SyntheticSpec};
use rloco::regions::{RlocoConfig, RlocoPipeline};

fn main() -> rloco::Result<()> {
    let (data, _model, _truth) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 2000, 1))?;
    let split = data.split(2)?;
    let pipeline = RlocoPipeline::fit(&split.fit, &split.calibration, &RlocoConfig::default(), None)?;

    let x = split.test.row(0).to_vec();
    let e = pipeline.explain(&x, Some(split.test.target()[0]))?;
    println!("{} regions; row 0 falls in region {}", pipeline.n_regions(), e.region);
    println!("scores: {:?}", e.attribution.scores);
    Ok(())
}
