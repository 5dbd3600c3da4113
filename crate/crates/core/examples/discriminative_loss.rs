//! Evaluates the discriminative embedding loss and cross entropy on a toy
//! block and prints each term with its gradient.

use asis::losses::{cross_entropy, discriminative_loss, DiscriminativeParams, InstanceGroups};
use asis::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let embeddings = Tensor::from_rows(&[[0.0, 0.2], [0.3, -0.1], [1.2, 1.0], [2.5, 0.9]])?;
    let groups = InstanceGroups::from_instance_ids(&[0, 0, 1, 1]);
    let p = DiscriminativeParams::default();
    let l = discriminative_loss(&embeddings, &groups, &p)?;
    println!("L_var {:.6}  L_dist {:.6}  L_reg {:.6}  total {:.6}", l.l_var, l.l_dist, l.l_reg, l.total);
    for r in 0..l.gradient.rows() {
        println!("d/de[{r}] = {:+.5?}", l.gradient.row(r));
    }

    let logits = Tensor::from_rows(&[[2.0, 0.5, -1.0], [0.1, 0.2, 0.3]])?;
    let ce = cross_entropy(&logits, &[Some(0), Some(2)])?;
    println!("cross entropy {:.6} over {} labeled points", ce.value, ce.labeled);
    Ok(())
}
