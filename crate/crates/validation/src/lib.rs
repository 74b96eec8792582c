//! Fixtures shared by the acceptance suite.

use std::time::Duration;

/// States where the three desirability solvers are compared.
pub const PROBES: [[f64; 2]; 10] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [0.5, 0.5],
    [-0.5, 0.5],
    [0.5, -0.5],
    [-0.5, -0.5],
    [1.0, 1.0],
    [1.0, -1.0],
    [-1.0, 0.0],
    [0.0, 1.0],
];

/// Feynman–Kac seed for probe `k`.
pub fn fk_seed(k: usize) -> u64 {
    1 + k as u64
}

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "criterion {} [{}] {} ({:.1} s): {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_line() {
        let v = Verdict {
            id: 3,
            title: "demo",
            pass: false,
            detail: "x".into(),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(v.line(), "criterion 3 [FAIL] demo (1.5 s): x");
    }

    #[test]
    fn probes_are_distinct_and_seeds_follow_them() {
        for (i, a) in PROBES.iter().enumerate() {
            assert!(PROBES[i + 1..].iter().all(|b| b != a));
        }
        assert_eq!(fk_seed(0), 1);
        assert_eq!(fk_seed(9), 10);
    }
}
