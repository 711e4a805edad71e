//! Shape-preserving cubic Hermite interpolation.

/// Fritsch-Carlson slopes for a monotone cubic Hermite interpolant.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2, "need at least two nodes");
    let delta: Vec<f64> = (0..n - 1)
        .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

/// Evaluates the Hermite cubic on `[x[i], x[i+1]]` at `t`.
pub fn hermite(x: &[f64], y: &[f64], m: &[f64], i: usize, at: f64) -> f64 {
    let h = x[i + 1] - x[i];
    let t = (at - x[i]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y[i]
        + (t3 - 2.0 * t2 + t) * h * m[i]
        + (-2.0 * t3 + 3.0 * t2) * y[i + 1]
        + (t3 - t2) * h * m[i + 1]
}

/// Uniform-grid interpolant, used for tables in a log variable.
#[derive(Debug, Clone)]
pub struct UniformPchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformPchip {
    pub fn new(x0: f64, step: f64, y: Vec<f64>) -> Self {
        let x: Vec<f64> = (0..y.len()).map(|i| x0 + step * i as f64).collect();
        let m = pchip_slopes(&x, &y);
        Self { x, y, m }
    }

    pub fn first(&self) -> f64 {
        self.x[0]
    }

    pub fn last(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Value at `at`, clamped to the end nodes outside the table.
    pub fn eval(&self, at: f64) -> f64 {
        if at <= self.first() {
            return self.y[0];
        }
        if at >= self.last() {
            return self.y[self.y.len() - 1];
        }
        let step = self.x[1] - self.x[0];
        let i = (((at - self.x[0]) / step) as usize).min(self.x.len() - 2);
        hermite(&self.x, &self.y, &self.m, i, at)
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_cubics_closely() {
        let f = |x: f64| x.sin();
        let t = UniformPchip::new(0.0, 0.01, (0..=300).map(|i| f(0.01 * i as f64)).collect());
        for i in 0..=300 {
            let x = 0.01 * i as f64;
            assert!((t.eval(x) - f(x)).abs() < 1e-14);
        }
        assert!((t.eval(1.234_5) - f(1.234_5)).abs() < 1e-7);
    }

    #[test]
    fn preserves_monotonicity_of_data() {
        let y = vec![0.0, 0.0, 1.0, 1.0, 5.0];
        let t = UniformPchip::new(0.0, 1.0, y);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let v = t.eval(k as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
