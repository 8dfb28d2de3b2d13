//! Deterministic JSON rendering for command output: keys stay in insertion
//! order and floats print at a fixed 12 significant digits, so identical
//! runs produce byte-identical stdout.

use kpdiff_core::pipeline::fmt_sig12;

pub enum Val {
    F(f64),
    U(u64),
    S(String),
    ListF(Vec<f64>),
    ListU(Vec<usize>),
}

pub fn render(fields: &[(&str, Val)]) -> String {
    let mut out = String::from("{");
    for (i, (key, val)) in fields.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{:?}: ", key));
        match val {
            Val::F(x) => out.push_str(&fmt_sig12(*x)),
            Val::U(x) => out.push_str(&x.to_string()),
            Val::S(s) => out.push_str(&format!("{s:?}")),
            Val::ListF(xs) => {
                out.push('[');
                for (j, x) in xs.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&fmt_sig12(*x));
                }
                out.push(']');
            }
            Val::ListU(xs) => {
                out.push('[');
                for (j, x) in xs.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&x.to_string());
                }
                out.push(']');
            }
        }
    }
    out.push('}');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_stable_json() {
        let s = render(&[
            ("cd", Val::F(0.0)),
            ("n", Val::U(3)),
            ("name", Val::S("x".into())),
        ]);
        assert_eq!(s, r#"{"cd": 0.0, "n": 3, "name": "x"}"#);
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["n"], 3);
    }

    #[test]
    fn floats_are_fixed_width() {
        let s = render(&[("v", Val::F(1.5))]);
        assert_eq!(s, r#"{"v": 1.50000000000e0}"#);
    }
}
