//! Warmup adaptation: dual-averaging step-size control and windowed diagonal
//! mass-matrix estimation (expanding slow windows between fast buffers).

/// Nesterov dual averaging on `log eps` targeting a given acceptance
/// statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: u64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    pub fn new(eps0: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn restart(&mut self, eps0: f64) {
        *self = Self::new(eps0, self.target);
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.count += 1;
        let m = self.count as f64;
        let eta = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let w = m.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    /// Step size to use for the next warmup transition.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Smoothed step size for the sampling phase.
    pub fn adapted(&self) -> f64 {
        if self.count == 0 {
            self.current()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Streaming mean/variance accumulator.
#[derive(Debug, Clone)]
pub struct Welford {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Regularized variance estimate for the inverse mass matrix.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|m2| {
                let var = if self.n > 1 { m2 / (n - 1.0) } else { 1.0 };
                let v = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                v.max(1e-10)
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}

/// Warmup phase schedule: an initial fast buffer (step size only), expanding
/// slow windows (mass matrix), and a terminal fast buffer.
#[derive(Debug, Clone)]
pub struct WarmupSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            // too short for mass adaptation: step size only
            return Self { warmup, init_buffer: warmup, term_buffer: 0, window_ends: Vec::new() };
        }
        let (init_buffer, term_buffer, base_window) = if warmup >= 150 {
            (75usize, 50usize, 25usize)
        } else {
            // proportional fallback for short warmups
            let init = ((0.15 * warmup as f64) as usize).max(1);
            let term = ((0.10 * warmup as f64) as usize).max(1);
            (init, term, warmup.saturating_sub(init + term).max(1))
        };
        let mut window_ends = Vec::new();
        let slow_end = warmup.saturating_sub(term_buffer);
        let mut start = init_buffer;
        let mut size = base_window;
        while start < slow_end {
            let mut end = start + size;
            // absorb a final stub window
            if end + size / 2 >= slow_end {
                end = slow_end;
            }
            window_ends.push(end.min(slow_end));
            start = end;
            size *= 2;
        }
        Self { warmup, init_buffer, term_buffer, window_ends }
    }

    /// Is iteration `it` inside a slow (variance-collecting) window?
    pub fn in_slow_window(&self, it: usize) -> bool {
        it >= self.init_buffer && it < self.warmup.saturating_sub(self.term_buffer)
    }

    /// Does a slow window end after iteration `it`?
    pub fn window_ends_at(&self, it: usize) -> bool {
        self.window_ends.contains(&(it + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.5, 0.8);
        // persistently low acceptance drives the step size down
        for _ in 0..200 {
            da.update(0.2);
        }
        assert!(da.adapted() < 0.5);
        let mut da = DualAveraging::new(0.5, 0.8);
        for _ in 0..200 {
            da.update(1.0);
        }
        assert!(da.adapted() > 0.5);
    }

    #[test]
    fn welford_variance() {
        let mut w = Welford::new(1);
        for x in [1.0, 2.0, 3.0, 4.0] {
            w.add(&[x]);
        }
        let v = w.regularized_variance()[0];
        let expect = (4.0 / 9.0) * (5.0 / 3.0) + 1e-3 * (5.0 / 9.0);
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn schedule_covers_standard_warmup() {
        let s = WarmupSchedule::new(1000);
        assert!(s.in_slow_window(75));
        assert!(!s.in_slow_window(74));
        assert!(!s.in_slow_window(950));
        assert_eq!(s.window_ends.last(), Some(&950));
        // windows 25, 50, 100, 200, then the remainder
        assert_eq!(s.window_ends, vec![100, 150, 250, 450, 950]);
    }

    #[test]
    fn schedule_handles_short_warmup() {
        let s = WarmupSchedule::new(60);
        assert!(s.window_ends.iter().all(|&e| e <= 60));
        assert!(!s.window_ends.is_empty());
    }
}
