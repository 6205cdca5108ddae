/// 17 significant digits: enough for any f64 to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0, -2.5e17] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
