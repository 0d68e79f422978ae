use crate::error::{Error, Result};

/// L2-regularized binary logistic regression. The intercept is not
/// penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticConfig {
    pub lambda: f64,
    /// Stop once the gradient norm of the mean objective falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1.0,
            tolerance: 1e-6,
            max_iter: 20_000,
        }
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [bool],
    p: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    /// Mean log loss plus lambda/(2n) |w|^2; params = [w..., b].
    fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n() as f64;
        let (w, b) = params.split_at(self.p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let xi = &self.x[i * self.p..(i + 1) * self.p];
            let z = xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b[0];
            let (l, r) = if yi {
                (log1p_exp(-z), sigmoid(z) - 1.0)
            } else {
                (log1p_exp(z), sigmoid(z))
            };
            loss += l;
            for (g, x) in grad[..self.p].iter_mut().zip(xi) {
                *g += r * x;
            }
            grad[self.p] += r;
        }
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * self.lambda / 2.0;
        for (g, v) in grad[..self.p].iter_mut().zip(w) {
            *g += self.lambda * v;
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss + reg) / n
    }
}

impl Logistic {
    /// Gradient descent with Barzilai-Borwein step proposals and Armijo
    /// backtracking. `x` is row-major with `y.len()` rows.
    pub fn fit(x: &[f64], y: &[bool], cfg: &LogisticConfig) -> Result<Logistic> {
        let n = y.len();
        if n == 0 || x.len() % n != 0 {
            return Err(Error::Eval("feature matrix does not match labels".into()));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(Error::Eval("training labels contain a single class".into()));
        }
        let prob = Problem {
            x,
            y,
            p: x.len() / n,
            lambda: cfg.lambda,
        };
        let m = prob.p + 1;
        let mut params = vec![0.0; m];
        let mut grad = vec![0.0; m];
        let mut f = prob.value_grad(&params, &mut grad);
        let mut step = 1.0;
        let mut trial = vec![0.0; m];
        let mut trial_grad = vec![0.0; m];
        for _ in 0..cfg.max_iter {
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2.sqrt() <= cfg.tolerance {
                break;
            }
            let mut t = step;
            let f_new = loop {
                for ((tr, p), g) in trial.iter_mut().zip(&params).zip(&grad) {
                    *tr = p - t * g;
                }
                let f_new = prob.value_grad(&trial, &mut trial_grad);
                if f_new <= f - 1e-4 * t * gnorm2 || t < 1e-12 {
                    break f_new;
                }
                t *= 0.5;
            };
            let (mut sy, mut ss) = (0.0, 0.0);
            for i in 0..m {
                let s = trial[i] - params[i];
                sy += s * (trial_grad[i] - grad[i]);
                ss += s * s;
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-8, 1e8) } else { 1.0 };
            std::mem::swap(&mut params, &mut trial);
            std::mem::swap(&mut grad, &mut trial_grad);
            if (f - f_new).abs() <= f64::EPSILON * f.abs() && t < 1e-12 {
                break;
            }
            f = f_new;
        }
        let bias = params[prob.p];
        params.truncate(prob.p);
        Ok(Logistic { weights: params, bias })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_line() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [false, false, true, true];
        let m = Logistic::fit(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.probability(&[3.0]) > 0.5 && m.probability(&[-3.0]) < 0.5);
        assert!(m.bias.abs() < 1e-6);
    }

    #[test]
    fn stationary_point() {
        // symmetric 1-D data: optimum must zero the gradient
        let x = [-1.0, 0.5, 1.0, -0.5, 2.0, 0.0];
        let y = [false, true, true, false, true, false];
        let cfg = LogisticConfig::default();
        let m = Logistic::fit(&x, &y, &cfg).unwrap();
        let prob = Problem {
            x: &x,
            y: &y,
            p: 1,
            lambda: cfg.lambda,
        };
        let mut g = [0.0; 2];
        prob.value_grad(&[m.weights[0], m.bias], &mut g);
        assert!((g[0] * g[0] + g[1] * g[1]).sqrt() <= 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        assert!(Logistic::fit(&[1.0, 2.0], &[true, true], &LogisticConfig::default()).is_err());
    }
}
