//! Serialize reals that may be infinite as the string `"inf"` instead of JSON `null`.

use serde::Serializer;

pub fn f64_inf<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else {
        s.serialize_f64(*v)
    }
}

pub fn vec_f64_inf<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Inf(*x))?;
    }
    seq.end()
}

pub fn opt_f64_inf<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => f64_inf(x, s),
        None => s.serialize_none(),
    }
}

struct Inf(f64);

impl serde::Serialize for Inf {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        f64_inf(&self.0, s)
    }
}
