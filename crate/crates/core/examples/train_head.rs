//! Trains an embedding head on synthetic scenes and prints the loss curve.

use pcinst::loss::inverse_frequency_weights;
use pcinst::pipeline::{generate_scenes, margin_loss};
use pcinst::trainer::{train, EmbeddingHead, TrainConfig};
use pcinst::SyntheticSceneSpec;

fn main() -> pcinst::Result<()> {
    let spec = SyntheticSceneSpec::default();
    let scenes = generate_scenes(&spec, 1..=4)?;
    let mut cfg = TrainConfig {
        total_steps: 600,
        lr_drop_step: 450,
        ..TrainConfig::default()
    };
    cfg.loss.class_weights = inverse_frequency_weights(scenes.iter().map(|(_, l)| l.semantic.as_slice()), spec.n_categories);

    let d_in = scenes[0].0.feature_dim() + 3;
    let init = EmbeddingHead::init(d_in, 32, spec.n_categories, false, 0);
    println!("margin loss before training: {:.4}", margin_loss(&init, &scenes, &cfg)?);
    let (head, history) = train(&init, &scenes, &cfg)?;
    for (step, loss) in history.iter().enumerate().step_by(100) {
        println!("step {step:>4}: loss {loss:.4}");
    }
    println!("margin loss after training: {:.4}", margin_loss(&head, &scenes, &cfg)?);
    Ok(())
}
