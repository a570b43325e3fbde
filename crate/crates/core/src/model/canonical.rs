use serde_json::{Number, Value};

/// Canonical form of a literal, used wherever values are compared.
///
/// Strings are trimmed (case kept), every number becomes an `f64` so that
/// `5`, `5.0` and `5.00` coincide, arrays keep their order, and objects come
/// out key-sorted. Kinds are never crossed: `"5%"` stays a string.
pub fn canonicalize_value(value: &Value) -> Value {
    match value {
        Value::String(s) => Value::String(s.trim().to_string()),
        Value::Number(n) => canonical_number(n),
        Value::Array(items) => Value::Array(items.iter().map(canonicalize_value).collect()),
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                    .collect(),
            )
        }
        Value::Null | Value::Bool(_) => value.clone(),
    }
}

fn canonical_number(n: &Number) -> Value {
    match n.as_f64() {
        Some(f) => {
            // -0.0 and 0.0 are the same value
            let f = if f == 0.0 { 0.0 } else { f };
            Number::from_f64(f).map_or_else(|| Value::Number(n.clone()), Value::Number)
        }
        None => Value::Number(n.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn trims_strings() {
        assert_eq!(canonicalize_value(&json!("  Paris ")), json!("Paris"));
        assert_eq!(canonicalize_value(&json!("Paris")), json!("Paris"));
    }

    #[test]
    fn numbers_share_one_representation() {
        assert_eq!(canonicalize_value(&json!(5)), canonicalize_value(&json!(5.00)));
        assert_eq!(canonicalize_value(&json!(-0.0)), canonicalize_value(&json!(0)));
        assert_ne!(canonicalize_value(&json!(5)), canonicalize_value(&json!("5")));
    }

    #[test]
    fn sorts_object_keys() {
        let v = canonicalize_value(&json!({"b": 1, "a": 2}));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"a":2.0,"b":1.0}"#);
    }

    #[test]
    fn no_cross_kind_coercion() {
        assert_eq!(canonicalize_value(&json!("5%")), json!("5%"));
        assert_eq!(canonicalize_value(&json!(true)), json!(true));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i32>().prop_map(|i| json!(i)),
            (-1e6f64..1e6).prop_map(|f| json!(f)),
            "[ a-zA-Z0-9%]{0,8}".prop_map(Value::String),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-d]", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn idempotent(v in arb_value()) {
            let once = canonicalize_value(&v);
            prop_assert_eq!(canonicalize_value(&once), once);
        }
    }
}
