//! Shared CSV helpers: fixed float formatting and LF line endings.

use std::io::Write;

use crate::error::Result;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and rows of preformatted fields.
pub fn write_rows<W: Write, I>(mut w: W, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
