//! Groups blob-shaped embeddings with flat-kernel mean-shift and votes a
//! class for each group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asis::grouping::{assign_instance_classes, mean_shift, MeanShiftConfig};
use asis::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let centers = [[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 1.0]];
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..40 {
            rows.push(center.map(|v| v + rng.gen_range(-0.15..0.15)));
            classes.push(if rng.gen_bool(0.9) { c } else { (c + 1) % 3 });
        }
    }
    let cfg = MeanShiftConfig::default();
    let ids = mean_shift(&Tensor::from_rows(&rows)?, &cfg);
    let seg = assign_instance_classes(&ids, &classes)?;
    println!("bandwidth {} -> {} clusters", cfg.bandwidth, seg.instance_count());
    for (k, class) in seg.classes.iter().enumerate() {
        let size = seg.instance_ids.iter().filter(|&&i| i == k).count();
        println!("instance {k}: {size} points, class {class}");
    }
    Ok(())
}
