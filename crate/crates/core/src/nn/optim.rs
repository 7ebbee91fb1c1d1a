use super::{Grads, Parameters};

/// Rescales `grads` so its global norm is at most `max_norm` and returns the norm
/// before rescaling. `max_norm = 0` leaves the gradients untouched.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// SGD with heavy-ball momentum: `v ← μ v + g; w ← w − lr v`, then gradients are zeroed.
pub fn sgd_step(params: &mut Parameters, lr: f64, momentum: f64) {
    sgd_step_with_decay(params, lr, momentum, 0.0);
}

/// As [`sgd_step`] with L2 weight decay folded into the gradient (`g + λ w`).
pub fn sgd_step_with_decay(params: &mut Parameters, lr: f64, momentum: f64, weight_decay: f64) {
    for p in params.iter_mut() {
        let (w, g, v) = p.velocity_mut();
        for ((wi, gi), vi) in w.iter_mut().zip(g.iter_mut()).zip(v.iter_mut()) {
            let grad = *gi + weight_decay * *wi;
            *vi = momentum * *vi + grad;
            *wi -= lr * *vi;
            *gi = 0.0;
        }
    }
}
