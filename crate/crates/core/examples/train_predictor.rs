//! Fits the regressor on the synthetic embedding-to-profile task and compares
//! it with always predicting the mean profile.

use std::time::Instant;

use dnaplan::predictor::{benchmark, mean_predictor_cosine, train, LayerWidths, RegressorParams, SyntheticTask, TrainConfig};

fn main() -> dnaplan::Result<()> {
    let task = SyntheticTask::standard(0);
    let data = task.generate(2000, 1)?;
    let cfg = TrainConfig::default();

    let started = Instant::now();
    let out = train(&data, &cfg)?;
    let elapsed = started.elapsed();

    println!("pairs            {} train / {} held out", out.train_size, out.holdout_size);
    println!("epochs           {} in {:.1?}", cfg.epochs, elapsed);
    println!("loss             {:.5} -> {:.5}", out.loss_history[0], out.loss_history.last().unwrap());
    println!("mean baseline    {:.4}", mean_predictor_cosine(&data, cfg.holdout_fraction));
    println!("held-out mean    {:.4}", out.holdout_mean_cosine.unwrap());
    println!("held-out median  {:.4}", out.holdout_median_cosine.unwrap());

    // the loss ignores scale, so compare shapes only
    let probe = &data[0];
    let dna = out.params.predict_dna(&probe.embedding)?;
    let cos = dnaplan::predictor::cosine_similarity(dna.values(), &probe.dna.values)?;
    println!("probe cosine     {cos:.4}");

    let desk = benchmark(&out.params, 2000);
    println!("desk  {:>9} params {:>9} flops {:.4} ms/call", desk.param_count, desk.flops, desk.mean_latency_ms);
    let big = benchmark(&RegressorParams::init(LayerWidths::LARGE, 0), 200);
    println!("large {:>9} params {:>9} flops {:.4} ms/call", big.param_count, big.flops, big.mean_latency_ms);
    Ok(())
}
