use super::InputMode;

/// Fixed-capacity ring buffer of recent observations, oldest evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingBuffer {
    data: Vec<f64>,
    head: usize,
    len: usize,
}

impl RollingBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "rolling buffer needs a positive capacity");
        Self {
            data: vec![0.0; capacity],
            head: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, value: f64) {
        self.data[self.head] = value;
        self.head = (self.head + 1) % self.data.len();
        self.len = (self.len + 1).min(self.data.len());
    }

    /// Value pushed `k` pushes ago (`k = 1` is the most recent).
    pub fn lag(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.len {
            return None;
        }
        let cap = self.data.len();
        Some(self.data[(self.head + cap - k) % cap])
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.len).rev().filter_map(move |k| self.lag(k))
    }

    pub fn mean(&self) -> Option<f64> {
        (self.len > 0).then(|| self.iter().sum::<f64>() / self.len as f64)
    }
}

/// Per-household controller memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Last day of household consumption, one entry per step.
    pub household: RollingBuffer,
    /// Last day of grid consumption; only kept for grid-aware controllers.
    pub grid: Option<RollingBuffer>,
    /// Reservoir activation; empty for non-ESN controllers.
    pub reservoir: Vec<f64>,
    /// Previous output of the low-pass filter, kW.
    pub last_output: f64,
}

impl ControllerState {
    pub fn new(steps_per_day: usize, mode: InputMode, reservoir_size: usize) -> Self {
        Self {
            household: RollingBuffer::new(steps_per_day),
            grid: (mode == InputMode::All).then(|| RollingBuffer::new(steps_per_day)),
            reservoir: vec![0.0; reservoir_size],
            last_output: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_buffer_evicts_oldest() {
        let mut b = RollingBuffer::new(3);
        assert!(b.mean().is_none());
        for v in [1.0, 2.0, 3.0, 4.0] {
            b.push(v);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.lag(1), Some(4.0));
        assert_eq!(b.lag(3), Some(2.0));
        assert_eq!(b.lag(4), None);
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        assert_eq!(b.mean(), Some(3.0));
    }

    #[test]
    fn state_starts_at_zero() {
        let s = ControllerState::new(96, InputMode::All, 100);
        assert_eq!(s.household.capacity(), 96);
        assert!(s.grid.is_some());
        assert!(s.reservoir.iter().all(|v| *v == 0.0));
        assert_eq!(s.last_output, 0.0);
        assert!(ControllerState::new(96, InputMode::Household, 0).grid.is_none());
    }
}
