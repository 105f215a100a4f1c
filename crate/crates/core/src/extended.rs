//! Extended-real conventions.
//!
//! Rate values, boundaries and derivatives live in `[-inf, +inf]`. They are
//! carried as plain `f64` using the IEEE infinities; NaN never appears in a
//! valid result. The helpers here fix the few rules the rest of the crate
//! relies on:
//!
//! * `t - inf = -inf` for finite `t` (an infinite penalty wins),
//! * `min(inf, x) = x`,
//! * `inf - inf` is never formed: callers go through [`penalized`] instead.

/// Positive infinity, the value of a rate function outside its domain.
pub const INF: f64 = f64::INFINITY;

/// `gain - penalty`, with an infinite penalty always giving `-inf`.
pub fn penalized(gain: f64, penalty: f64) -> f64 {
    if penalty == INF {
        f64::NEG_INFINITY
    } else {
        gain - penalty
    }
}

/// `min(1, x)` over the extended reals.
pub fn cap_one(x: f64) -> f64 {
    if x >= 1.0 {
        1.0
    } else {
        x
    }
}

/// Minimum where an infinite argument never beats a finite one.
pub fn emin(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        b
    } else if b.is_nan() {
        a
    } else {
        a.min(b)
    }
}

/// Maximum treating NaN as absent.
pub fn emax(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        b
    } else if b.is_nan() {
        a
    } else {
        a.max(b)
    }
}

/// Formats an extended real for tables and CSV output.
pub fn format_ext(x: f64) -> String {
    if x == INF {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{:.16e}", x)
    }
}

/// Serde helpers that write infinities as the strings `"inf"` / `"-inf"`.
pub mod serde_ext {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number or \"inf\", got {other:?}"
                ))),
            },
        }
    }
}

/// Same as [`serde_ext`] for `Option<f64>`.
pub mod serde_ext_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => super::serde_ext::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super::serde_ext")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}
