//! Builds a toy base checkpoint plus three experts, merges them with
//! each of the four methods, and round-trips the result through the
//! on-disk container format.

use mergelaw::{
    load_checkpoint, merge, save_checkpoint, Checkpoint, MergeKind, MergeRecipe, Result, Tensor,
};

fn checkpoint(scale: f32) -> Checkpoint {
    let mut c = Checkpoint::default();
    c.insert(
        "layer.weight",
        Tensor::new(vec![2, 3], (0..6).map(|i| scale * i as f32).collect()),
    );
    c.insert("layer.bias", Tensor::new(vec![3], vec![scale; 3]));
    c
}

fn main() -> Result<()> {
    let base = checkpoint(1.0);
    let experts = [checkpoint(1.2), checkpoint(0.9), checkpoint(1.5)];
    let refs: Vec<&Checkpoint> = experts.iter().collect();

    for (label, recipe) in [
        ("average", MergeRecipe::new(MergeKind::Average)),
        ("task arithmetic", MergeRecipe::new(MergeKind::Ta)),
        (
            "trim/elect/disjoint",
            MergeRecipe::new(MergeKind::Ties).with_density(0.7),
        ),
        (
            "drop-and-rescale",
            MergeRecipe::new(MergeKind::Dare).with_drop_rate(0.2).with_seed(7),
        ),
    ] {
        let merged = merge(&base, &refs, &recipe)?;
        let w = &merged.checkpoint.tensors["layer.weight"];
        println!(
            "{label:>20}: k={} first row = {:?}",
            merged.k,
            &w.data[..3]
        );
    }

    // canonical serialization is byte-stable
    let merged = merge(&base, &refs, &MergeRecipe::new(MergeKind::Average))?;
    let dir = std::env::temp_dir();
    let path = dir.join("mergelaw_example_merged.safetensors");
    save_checkpoint(&merged.checkpoint, &path)?;
    let reloaded = load_checkpoint(&path)?;
    assert_eq!(reloaded.tensors, merged.checkpoint.tensors);
    println!("round-tripped {} tensors via {}", reloaded.tensors.len(), path.display());
    std::fs::remove_file(&path).ok();
    Ok(())
}
