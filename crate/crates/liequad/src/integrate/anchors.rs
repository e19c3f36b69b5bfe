//! Sorted anchor stores for incremental quadrature: each accepted value is
//! kept keyed by time so later queries only integrate the missing stretch.
//! Lookup is a binary search; the store thins itself when it grows large.

#[derive(Debug, Clone)]
pub struct AnchorMap<V: Clone> {
    entries: Vec<(f64, V)>,
}

impl<V: Clone> AnchorMap<V> {
    pub fn new(t0: f64, v0: V) -> AnchorMap<V> {
        AnchorMap {
            entries: vec![(t0, v0)],
        }
    }

    /// Entry with key closest to `t`.
    pub fn nearest(&self, t: f64) -> (f64, V) {
        let idx = self
            .entries
            .partition_point(|(key, _)| *key < t)
            .min(self.entries.len() - 1);
        let right = &self.entries[idx];
        if idx > 0 {
            let left = &self.entries[idx - 1];
            if (left.0 - t).abs() <= (right.0 - t).abs() {
                return (left.0, left.1.clone());
            }
        }
        (right.0, right.1.clone())
    }

    pub fn insert(&mut self, t: f64, v: V) {
        let idx = self.entries.partition_point(|(key, _)| *key < t);
        if idx < self.entries.len() && self.entries[idx].0 == t {
            return;
        }
        self.entries.insert(idx, (t, v));
        if self.entries.len() > 4000 {
            // keep every other anchor; incremental queries just integrate a
            // slightly longer stretch afterwards
            let mut kept = Vec::with_capacity(self.entries.len() / 2 + 1);
            for (i, e) in self.entries.iter().enumerate() {
                if i % 2 == 0 {
                    kept.push(e.clone());
                }
            }
            self.entries = kept;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_picks_the_closest_key() {
        let mut m = AnchorMap::new(0.0, 0);
        m.insert(1.0, 1);
        m.insert(2.0, 2);
        assert_eq!(m.nearest(0.4).1, 0);
        assert_eq!(m.nearest(0.6).1, 1);
        assert_eq!(m.nearest(5.0).1, 2);
        assert_eq!(m.nearest(-3.0).1, 0);
    }

    #[test]
    fn thinning_keeps_order() {
        let mut m = AnchorMap::new(0.0, 0usize);
        for i in 1..5000 {
            m.insert(i as f64 * 0.001, i);
        }
        let (k, _) = m.nearest(2.5);
        assert!((k - 2.5).abs() < 0.01);
    }
}
