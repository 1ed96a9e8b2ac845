use std::io::{self, Write};

use crate::scalar::Scalar;
use crate::tv::ImageVec;

/// Binary 16-bit PGM (`P5`, big-endian). Values are mapped linearly from
/// `[0, peak]` to `[0, 65535]` and clipped.
pub fn write_pgm16<T: Scalar, W: Write>(img: &ImageVec<T>, peak: f64, mut w: W) -> io::Result<()> {
    if !(peak > 0.0) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "peak must be positive"));
    }
    let n = img.side();
    write!(w, "P5\n{n} {n}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let v = (img.get(i, j).as_f64() / peak).clamp(0.0, 1.0);
            let q = (v * 65535.0).round() as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
    }
    w.write_all(&buf)
}

/// One image row per line, comma separated.
pub fn write_csv<T: Scalar, W: Write>(img: &ImageVec<T>, mut w: W) -> io::Result<()> {
    for row in img.to_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.as_f64())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
