use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::measures::DiscreteMeasure;

/// Pass tolerance `slack ≥ -abs - rel·|rhs|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-8, rel: 1e-4 }
    }
}

impl Tolerance {
    pub fn allowance(&self, rhs: f64) -> f64 {
        self.abs + self.rel * rhs.abs()
    }
}

/// Largest negative round-off tolerated under a square root before it is flagged.
pub const SQRT_CLAMP: f64 = 1e-8;

/// Both sides of one inequality `lhs ≤ rhs`, with the verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    #[serde(with = "real")]
    pub lhs: f64,
    #[serde(with = "real")]
    pub rhs: f64,
    #[serde(with = "real")]
    pub slack: f64,
    #[serde(with = "real")]
    pub relative_slack: f64,
    pub pass: bool,
    /// `rhs = +inf`: passes, but says nothing.
    pub vacuous: bool,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub inputs_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, with = "real_map")]
    pub terms: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn evaluate(name: &str, lhs: f64, rhs: f64, tol: Tolerance) -> Self {
        let mut r = InequalityReport {
            name: name.to_string(),
            lhs,
            rhs,
            slack: 0.0,
            relative_slack: 0.0,
            pass: false,
            vacuous: false,
            tol_abs: tol.abs,
            tol_rel: tol.rel,
            inputs_digest: String::new(),
            notes: Vec::new(),
            terms: BTreeMap::new(),
        };
        r.judge();
        r
    }

    /// Recompute slack and verdict from `lhs`, `rhs` and the stored tolerances.
    pub fn judge(&mut self) {
        let (lhs, rhs) = (self.lhs, self.rhs);
        self.slack = rhs - lhs;
        self.relative_slack = relative(self.slack, rhs);
        self.vacuous = false;
        if lhs.is_nan() || rhs.is_nan() {
            self.pass = false;
            self.slack = f64::NAN;
            self.relative_slack = f64::NAN;
            self.note("non-finite side");
            return;
        }
        if rhs == f64::INFINITY {
            self.vacuous = lhs < f64::INFINITY;
            self.pass = self.vacuous;
            if self.vacuous {
                self.note("vacuous: rhs is infinite");
            }
            return;
        }
        let tol = Tolerance { abs: self.tol_abs, rel: self.tol_rel };
        self.pass = self.slack >= -tol.allowance(rhs);
    }

    /// Forces a failure, keeping the numbers.
    pub fn flag(&mut self, why: impl Into<String>) {
        self.pass = false;
        self.notes.push(why.into());
    }

    pub fn note(&mut self, s: impl Into<String>) {
        let s = s.into();
        if !self.notes.contains(&s) {
            self.notes.push(s);
        }
    }

    pub fn set_term(&mut self, key: &str, value: f64) {
        self.terms.insert(key.to_string(), value);
    }

    pub fn term(&self, key: &str) -> Option<f64> {
        self.terms.get(key).copied()
    }

    /// Pass that counts as evidence.
    pub fn passes_strictly(&self) -> bool {
        self.pass && !self.vacuous
    }

    pub fn digest_measures(&mut self, ms: &[&DiscreteMeasure]) {
        let d = measures_digest(ms);
        self.set_digest_part("sha256", &d);
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.set_digest_part("seed", &seed.to_string());
        self
    }

    /// Upserts `key=value` in the `;`-separated digest string.
    pub fn set_digest_part(&mut self, key: &str, value: &str) {
        let mut parts: Vec<String> = self
            .inputs_digest
            .split(';')
            .filter(|p| !p.is_empty() && !p.starts_with(&format!("{key}=")))
            .map(str::to_string)
            .collect();
        parts.push(format!("{key}={value}"));
        parts.sort();
        self.inputs_digest = parts.join(";");
    }
}

fn relative(slack: f64, rhs: f64) -> f64 {
    if rhs.abs() > 0.0 && rhs.is_finite() {
        slack / rhs.abs()
    } else if slack == 0.0 {
        0.0
    } else {
        slack.signum() * f64::INFINITY
    }
}

/// First 16 hex digits of SHA-256 over grid shapes, nodes and weights.
pub fn measures_digest(ms: &[&DiscreteMeasure]) -> String {
    let mut h = Sha256::new();
    for m in ms {
        for &s in &m.grid().shape() {
            h.update((s as u64).to_le_bytes());
        }
        for a in 0..m.grid().dim() {
            for x in m.grid().axis(a) {
                h.update(x.to_le_bytes());
            }
        }
        for w in m.weights() {
            h.update(w.to_le_bytes());
        }
    }
    let out = h.finalize();
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `√x` for an argument the theory says is nonnegative.
#[derive(Clone, Debug, Default)]
pub struct RootGuard {
    pub notes: Vec<String>,
    pub flagged: bool,
}

impl RootGuard {
    pub fn root(&mut self, label: &str, x: f64) -> f64 {
        if x >= 0.0 {
            x.sqrt()
        } else if x >= -SQRT_CLAMP {
            self.notes.push(format!("{label} = {x:.3e} clamped to 0"));
            0.0
        } else if x.is_nan() {
            self.flagged = true;
            self.notes.push(format!("{label} is NaN"));
            f64::NAN
        } else {
            self.flagged = true;
            self.notes.push(format!("{label} = {x:.3e} is negative"));
            0.0
        }
    }

    pub fn apply(self, r: &mut InequalityReport) {
        for n in self.notes {
            r.note(n);
        }
        if self.flagged {
            r.flag("negative square-root argument");
        }
    }
}

/// Non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub(crate) mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(crate) fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::Num(x)
        } else if x.is_nan() {
            Repr::Text("nan".into())
        } else if x > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub(crate) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub(crate) mod real_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::real::{from_repr, to_repr, Repr};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let r: BTreeMap<&String, Repr> = m.iter().map(|(k, v)| (k, to_repr(*v))).collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let r = BTreeMap::<String, Repr>::deserialize(d)?;
        r.into_iter().map(|(k, v)| Ok((k, from_repr(v)?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        let t = Tolerance::default();
        assert!(InequalityReport::evaluate("a", 1.0, 1.0, t).pass);
        assert!(InequalityReport::evaluate("a", 1.00005, 1.0, t).pass);
        assert!(!InequalityReport::evaluate("a", 1.001, 1.0, t).pass);
        let v = InequalityReport::evaluate("a", 3.0, f64::INFINITY, t);
        assert!(v.pass && v.vacuous && !v.passes_strictly());
        let z = InequalityReport::evaluate("a", 0.0, 0.0, t);
        assert!(z.pass && z.relative_slack == 0.0);
        assert!(!InequalityReport::evaluate("a", f64::NAN, 0.0, t).pass);
    }

    #[test]
    fn json_roundtrip_with_infinities() {
        let mut r = InequalityReport::evaluate("x", 0.5, f64::INFINITY, Tolerance::default());
        r.set_term("norm", f64::INFINITY);
        r = r.with_seed(7);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"rhs\":\"inf\""));
        let back: InequalityReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.rhs, f64::INFINITY);
        assert_eq!(back.term("norm"), Some(f64::INFINITY));
        assert_eq!(back.inputs_digest, "seed=7");
    }

    #[test]
    fn root_guard_clamps_and_flags() {
        let mut g = RootGuard::default();
        assert_eq!(g.root("a", -1e-10), 0.0);
        assert!(!g.flagged);
        g.root("b", -1e-3);
        assert!(g.flagged);
        let mut r = InequalityReport::evaluate("x", 0.0, 1.0, Tolerance::default());
        g.apply(&mut r);
        assert!(!r.pass);
    }
}
