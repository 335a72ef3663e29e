use std::collections::HashMap;

/// Bijection between `module.name` state labels and vector positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateRegistry {
    labels: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl StateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a state and return its index. Panics on a duplicate label.
    pub fn push(&mut self, module: &str, name: &str) -> usize {
        let k = self.labels.len();
        let label = format!("{module}.{name}");
        assert!(
            self.index.insert(label.clone(), k).is_none(),
            "duplicate state {label}"
        );
        self.labels.push((module.to_string(), name.to_string()));
        k
    }

    /// Append every name under `module`; returns the first index.
    pub fn push_all(&mut self, module: &str, names: &[&str]) -> usize {
        let first = self.labels.len();
        for n in names {
            self.push(module, n);
        }
        first
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, k: usize) -> String {
        let (m, n) = &self.labels[k];
        format!("{m}.{n}")
    }

    pub fn module(&self, k: usize) -> &str {
        &self.labels[k].0
    }

    pub fn labels(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.len()).map(|k| self.label(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_a_bijection() {
        let mut r = StateRegistry::new();
        r.push_all("sg1", &["delta", "d_omega"]);
        r.push("pll", "theta");
        assert_eq!(r.len(), 3);
        for k in 0..r.len() {
            assert_eq!(r.get(&r.label(k)), Some(k));
        }
        assert_eq!(r.module(2), "pll");
        assert_eq!(r.get("pll.omega"), None);
    }

    #[test]
    #[should_panic]
    fn duplicate_labels_panic() {
        let mut r = StateRegistry::new();
        r.push("a", "x");
        r.push("a", "x");
    }
}
