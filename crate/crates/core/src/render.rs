//! Table-style formatting shared by results and reports: hex digits in
//! blocks of eight, decimal positions with thousands separators.

/// Inserts a space after every eighth hex digit.
pub fn hex_blocks(digits: &str) -> String {
    let mut out = String::with_capacity(digits.len() + digits.len() / 8);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && i % 8 == 0 {
            out.push(' ');
        }
        out.push(c);
    }
    out
}

/// Removes block spacing again (for machine comparison of hex output).
pub fn strip_blocks(hex: &str) -> String {
    hex.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Decimal rendering with `,` thousands separators.
pub fn thousands(value: u64) -> String {
    let s = value.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    let lead = s.len() % 3;
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (i + 3 - lead).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
