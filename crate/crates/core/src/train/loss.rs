use crate::error::{check_dim, Result};
use crate::render::Image;

/// Mean absolute error over all pixels and channels, with its gradient
/// `sign(pred − target) / (W·H·3)` (zero where they agree).
pub fn l1_loss(pred: &Image, target: &Image) -> Result<(f64, Image)> {
    check_dim("image width", pred.width as usize, target.width as usize)?;
    check_dim("image height", pred.height as usize, target.height as usize)?;
    check_dim("image pixels", pred.data.len(), target.data.len())?;
    let count = (pred.data.len() * 3) as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.data.len());
    for (p, t) in pred.data.iter().zip(&target.data) {
        let mut g = [0.0; 3];
        for ch in 0..3 {
            let d = p[ch] - t[ch];
            sum += d.abs();
            g[ch] = if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            };
        }
        grad.push(g);
    }
    let grad = Image {
        width: pred.width,
        height: pred.height,
        data: grad,
    };
    Ok((sum / count, grad))
}
