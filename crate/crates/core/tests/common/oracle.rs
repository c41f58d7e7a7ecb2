//! Brute-force reference implementations shared by the oracle tests and the
//! acceptance suite.

use fedbench::strategy::{ClientUpdate, StrategyConfig};

pub fn loop_weighted_mean(updates: &[ClientUpdate], len: usize) -> Vec<f64> {
    let n: usize = updates.iter().map(|u| u.num_samples).sum();
    let mut out = vec![0.0; len];
    for i in 0..len {
        let mut acc = 0.0;
        for u in updates {
            acc += u.num_samples as f64 * u.new_params[i];
        }
        out[i] = acc / n as f64;
    }
    out
}

pub fn sort_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

/// One coordinate of the adaptive server optimizers, written out by hand.
pub struct ScalarAdaptive {
    pub m: f64,
    pub v: f64,
    pub w: f64,
    pub adagrad: bool,
}

impl ScalarAdaptive {
    pub fn step(&mut self, clients: &[(f64, usize)], cfg: &StrategyConfig) {
        let n: usize = clients.iter().map(|c| c.1).sum();
        let mut delta = 0.0;
        for &(w_k, n_k) in clients {
            delta += (n_k as f64 / n as f64) * (w_k - self.w);
        }
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * delta;
        self.v = if self.adagrad {
            self.v + delta * delta
        } else {
            cfg.beta2 * self.v + (1.0 - cfg.beta2) * delta * delta
        };
        self.w += cfg.server_lr * self.m / (self.v.sqrt() + cfg.tau);
    }
}

/// Independent forward pass of a one-hidden-layer ReLU network with the
/// library's flat layout: W1 (in x hidden, row-major), b1, W2 (hidden x out), b2.
/// Also returns the smallest |pre-activation| seen, to avoid ReLU kinks.
pub fn scalar_loss(p: &[f64], x: &[f64], y: &[usize], d: usize, h: usize, c: usize) -> (f64, f64) {
    let (w1, rest) = p.split_at(d * h);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h * c);
    let mut total = 0.0;
    let mut closest = f64::INFINITY;
    for (row, &label) in x.chunks(d).zip(y) {
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let mut z = b1[j];
            for i in 0..d {
                z += row[i] * w1[i * h + j];
            }
            closest = closest.min(z.abs());
            hidden[j] = z.max(0.0);
        }
        let mut logits = vec![0.0; c];
        for k in 0..c {
            let mut z = b2[k];
            for j in 0..h {
                z += hidden[j] * w2[j * c + k];
            }
            logits[k] = z;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[label];
    }
    (total / y.len() as f64, closest)
}
