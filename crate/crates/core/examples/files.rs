//! On-disk formats: a generated dataset directory, a run configuration and a
//! checkpoint, each read back and compared.

use gridsampler::geometry::ShapeFamily;
use gridsampler::io::{
    generate_dataset, load_checkpoint, load_dataset, save_checkpoint, Checkpoint, RunConfig,
};
use gridsampler::model::Model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let entries = generate_dataset(&dir.path().join("data"), &ShapeFamily::ALL, 2, 16, 11)?;
    for e in &entries {
        let analytic = e.analytic_area.map_or("-".into(), |a| format!("{a:.4}"));
        println!("{} {} mesh area {:.4} analytic {analytic}", e.path.display(), e.family, e.mesh_area);
    }
    let data = load_dataset(&dir.path().join("data"))?;
    println!("reloaded {} shapes", data.len());

    let cfg = RunConfig::default();
    let text = cfg.serialize();
    assert_eq!(RunConfig::parse(&text, "inline")?, cfg);
    print!("{text}");

    let model = Model::new(cfg.train.model.clone(), 1)?;
    let path = dir.path().join("model.nsck");
    save_checkpoint(&path, &Checkpoint { config: text, params: model.params().clone() })?;
    let back = load_checkpoint(&path)?;
    println!(
        "checkpoint: {} tensors, {} bytes, identical {}",
        back.params.len(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        back.params == *model.params()
    );
    Ok(())
}
