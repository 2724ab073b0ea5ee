//! Number formatting shared by every text artifact.

use num_complex::Complex64;

/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_complex(z: Complex64) -> (String, String) {
    (fmt(z.re), fmt(z.im))
}
