use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

/// Inverted dropout. Kept entries are scaled by `1 / (1 − rate)` so the
/// expectation is preserved; with `training == false` this is the identity and
/// the rng is not touched.
///
/// Returns the output and the kept mask (1.0 kept, 0.0 dropped).
pub fn dropout_forward(input: &Tensor, rate: f64, rng: &mut SeededRng, training: bool) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), Tensor::full(input.shape(), 1.0)));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut out = input.clone();
    let mut mask = Tensor::zeros(input.shape());
    for (o, m) in out.data_mut().iter_mut().zip(mask.data_mut()) {
        if rng.uniform() >= rate {
            *o *= keep_scale;
            *m = 1.0;
        } else {
            *o = 0.0;
        }
    }
    Ok((out, mask))
}
