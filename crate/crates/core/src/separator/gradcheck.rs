use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{LossExample, SeparatorModel};
use crate::error::Result;

/// Central-difference check of one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over the probed
    /// elements; 0 when both vanish.
    pub rel_error: f64,
    pub probed: usize,
}

/// Relative error of two vectors by L2 norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares analytic gradients of the loss with central differences at
/// step `h`. Groups larger than `max_probe` are probed at their
/// `max_probe * 2/3` largest-gradient elements plus random ones.
pub fn check_gradients(model: &SeparatorModel, examples: &[LossExample], h: f64, max_probe: usize, seed: u64) -> Result<Vec<GroupCheck>> {
    let (_, grads) = model.loss_and_grads(examples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(grads.len());
    for (gi, name) in model.names().iter().enumerate() {
        let g = grads[gi].as_slice().expect("contiguous gradient");
        let n = g.len();
        let mut picks: Vec<usize> = (0..n).collect();
        if n > max_probe {
            let top = max_probe * 2 / 3;
            picks.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
            picks.truncate(top);
            picks.extend((top..max_probe).map(|_| rng.gen_range(0..n)));
        }
        let mut analytic = Vec::with_capacity(picks.len());
        let mut numeric = Vec::with_capacity(picks.len());
        let mut probe = model.clone();
        for &k in &picks {
            let orig = probe.params[gi].as_slice().expect("contiguous")[k];
            probe.params[gi].as_slice_mut().expect("contiguous")[k] = orig + h;
            let up = probe.loss(examples)?;
            probe.params[gi].as_slice_mut().expect("contiguous")[k] = orig - h;
            let down = probe.loss(examples)?;
            probe.params[gi].as_slice_mut().expect("contiguous")[k] = orig;
            analytic.push(g[k]);
            numeric.push((up - down) / (2.0 * h));
        }
        out.push(GroupCheck { name: name.clone(), rel_error: relative_error(&analytic, &numeric), probed: picks.len() });
    }
    Ok(out)
}
