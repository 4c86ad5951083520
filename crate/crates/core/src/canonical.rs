//! Canonical JSON: sorted object keys, no insignificant whitespace.
//!
//! Values are routed through `serde_json::Value`, whose map type keeps keys
//! ordered, so the same data always yields the same bytes.

use serde::Serialize;

pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("value serializes to json")
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    to_canonical_value(value).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Unsorted {
        zeta: u8,
        alpha: Vec<u8>,
    }

    #[test]
    fn keys_sorted_and_compact() {
        let s = to_canonical_string(&Unsorted { zeta: 1, alpha: vec![2, 3] });
        assert_eq!(s, r#"{"alpha":[2,3],"zeta":1}"#);
    }
}
