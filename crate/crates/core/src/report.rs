//! Named residuals with thresholds and verdicts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Entry {
    pub fn is_vacuous(&self) -> bool {
        self.detail.as_deref().is_some_and(|d| d.starts_with("vacuous"))
    }
}

/// Overall pass holds exactly when every entry passes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub entries: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConsistencyReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `residual <= threshold`. A NaN residual fails.
    pub fn check(&mut self, name: impl Into<String>, residual: f64, threshold: f64) -> &mut Entry {
        let pass = residual <= threshold;
        self.entries.push(Entry {
            name: name.into(),
            residual,
            threshold,
            pass,
            detail: None,
        });
        self.entries.last_mut().expect("just pushed")
    }

    /// Adds a condition that holds trivially in this configuration.
    pub fn vacuous(&mut self, name: impl Into<String>, why: impl Into<String>) {
        self.entries.push(Entry {
            name: name.into(),
            residual: 0.0,
            threshold: 0.0,
            pass: true,
            detail: Some(format!("vacuous: {}", why.into())),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failing(&self) -> Vec<&Entry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    /// Appends entries of `other` with `prefix` prepended to their names.
    pub fn merge(&mut self, prefix: &str, other: ConsistencyReport) {
        for mut e in other.entries {
            e.name = format!("{prefix}{}", e.name);
            self.entries.push(e);
        }
        for n in other.notes {
            self.notes.push(format!("{prefix}{n}"));
        }
    }

    /// Largest entry by name across several per-item reports, keeping the
    /// first threshold seen. Used to aggregate per-vertex checks.
    pub fn worst_of(reports: &[ConsistencyReport]) -> ConsistencyReport {
        let mut out = ConsistencyReport::new();
        for r in reports {
            for e in &r.entries {
                match out.entries.iter_mut().find(|x| x.name == e.name) {
                    Some(x) => {
                        if e.residual > x.residual || e.residual.is_nan() {
                            x.residual = e.residual;
                            x.detail = e.detail.clone().or(x.detail.take());
                        }
                        x.pass &= e.pass;
                    }
                    None => out.entries.push(e.clone()),
                }
            }
            for n in &r.notes {
                if !out.notes.contains(n) {
                    out.notes.push(n.clone());
                }
            }
        }
        out
    }

    /// Scales every threshold, re-deriving verdicts.
    pub fn rescale(&mut self, factor: f64) {
        for e in &mut self.entries {
            if e.detail.as_deref().is_some_and(|d| d.starts_with("vacuous")) {
                continue;
            }
            e.threshold *= factor;
            e.pass = e.residual <= e.threshold;
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let w = self.entries.iter().map(|e| e.name.len()).max().unwrap_or(4).max(5);
        s.push_str(&format!("{:<w$}  {:>12}  {:>12}  verdict\n", "check", "residual", "threshold"));
        for e in &self.entries {
            s.push_str(&format!(
                "{:<w$}  {:>12.4e}  {:>12.4e}  {}{}\n",
                e.name,
                e.residual,
                e.threshold,
                if e.pass { "pass" } else { "FAIL" },
                e.detail.as_deref().map(|d| format!("  ({d})")).unwrap_or_default()
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s.push_str(&format!("overall: {}\n", if self.pass() { "pass" } else { "FAIL" }));
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("name,residual,threshold,pass\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:e},{:e},{}\n", e.name, e.residual, e.threshold, e.pass));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_pass_iff_all_entries_pass() {
        let mut r = ConsistencyReport::new();
        assert!(r.pass());
        r.check("a", 1e-6, 1e-4);
        r.vacuous("b", "n = 2");
        assert!(r.pass());
        r.check("c", f64::NAN, 1.0);
        assert!(!r.pass());
        assert_eq!(r.failing().len(), 1);
    }

    #[test]
    fn worst_of_takes_maximum() {
        let mut a = ConsistencyReport::new();
        a.check("x", 1.0, 2.0);
        let mut b = ConsistencyReport::new();
        b.check("x", 3.0, 2.0);
        let w = ConsistencyReport::worst_of(&[a, b]);
        assert_eq!(w.entries.len(), 1);
        assert_eq!(w.entries[0].residual, 3.0);
        assert!(!w.pass());
    }
}
