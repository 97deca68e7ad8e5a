use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::IoError;
use crate::dynamics::SystemState;
use crate::spectral::{FourierGrid, ScalarField, VectorField};

pub const MAGIC: &[u8; 8] = b"ECSPDE01";
pub const VERSION: u32 = 1;

/// Largest Hermitian residual accepted on load, relative to the largest
/// coefficient.
const HERMITIAN_TOL: f64 = 1e-12;

/// Named spectral fields at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub fields: Vec<(String, ScalarField)>,
}

impl Snapshot {
    pub fn of_state(s: &SystemState) -> Self {
        Snapshot {
            t: s.t,
            fields: vec![
                ("q".into(), s.q.clone()),
                ("u1".into(), s.u.x.clone()),
                ("u2".into(), s.u.y.clone()),
            ],
        }
    }

    pub fn field(&self, name: &str) -> Result<&ScalarField, IoError> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| IoError::MissingField(name.into()))
    }

    pub fn to_state(&self) -> Result<SystemState, IoError> {
        let q = self.field("q")?.clone();
        let u = VectorField::new(self.field("u1")?.clone(), self.field("u2")?.clone())?;
        q.same_grid(&u.x)?;
        Ok(SystemState { q, u, t: self.t })
    }
}

/// Wavenumbers per axis in file order.
fn axis(n: usize) -> impl Iterator<Item = i64> + Clone {
    let h = (n / 2) as i64;
    -h + 1..=h
}

pub fn write_snapshot(mut w: impl Write, snap: &Snapshot) -> Result<(), IoError> {
    let n = snap.fields.first().map(|(_, f)| f.grid().n()).unwrap_or(0);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&snap.t.to_le_bytes());
    buf.extend_from_slice(&(snap.fields.len() as u32).to_le_bytes());
    for (name, f) in &snap.fields {
        if f.grid().n() != n {
            return Err(IoError::Config(format!("field {name:?} is on a different grid")));
        }
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        for k1 in axis(n) {
            for k2 in axis(n) {
                let c = f.coeff(k1, k2);
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8], IoError> {
        if self.0.len() < k {
            return Err(IoError::Truncated);
        }
        let (a, b) = self.0.split_at(k);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads a whole snapshot; nothing is returned unless every field parses
/// and passes the Hermitian check.
pub fn read_snapshot(mut r: impl Read) -> Result<Snapshot, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor(&bytes);
    if c.take(8).map_err(|_| IoError::Magic)? != MAGIC {
        return Err(IoError::Magic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IoError::Version(version));
    }
    let n = c.u32()? as usize;
    let t = c.f64()?;
    let count = c.u32()?;
    let grid: Arc<FourierGrid> = FourierGrid::new(n)?;
    let mut fields = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|e| IoError::Config(e.to_string()))?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        for k1 in axis(n) {
            for k2 in axis(n) {
                let re = c.f64()?;
                let im = c.f64()?;
                let idx = grid.index_of(k1, k2).ok_or(IoError::Truncated)?;
                coeffs[idx] = Complex64::new(re, im);
            }
        }
        let f = ScalarField::from_coeffs(&grid, coeffs)?;
        let residual = f.hermitian_residual();
        if !(residual <= HERMITIAN_TOL * f.max_abs_coeff().max(1.0)) {
            return Err(IoError::NotHermitian { name, residual });
        }
        fields.push((name, f));
    }
    if !c.0.is_empty() {
        return Err(IoError::Trailing);
    }
    Ok(Snapshot { t, fields })
}

pub fn write_state(path: &std::path::Path, s: &SystemState) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &Snapshot::of_state(s))?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_state(path: &std::path::Path) -> Result<SystemState, IoError> {
    read_snapshot(std::fs::File::open(path)?)?.to_state()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{random_state, InitialData};

    fn state() -> SystemState {
        let g = FourierGrid::new(16).unwrap();
        let mut s = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 2.0, seed: 3, ..Default::default() });
        s.t = 0.75;
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = state();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &Snapshot::of_state(&s)).unwrap();
        let back = read_snapshot(&buf[..]).unwrap().to_state().unwrap();
        assert_eq!(back, s);
        let mut again = Vec::new();
        write_snapshot(&mut again, &Snapshot::of_state(&back)).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &Snapshot::of_state(&state())).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), VERSION);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 0.75);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 28 + 3 * 4 + 5 + 3 * 16 * 16 * 16);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &Snapshot::of_state(&state())).unwrap();
        assert!(matches!(read_snapshot(&buf[..buf.len() - 1]), Err(IoError::Truncated)));
        assert!(matches!(read_snapshot(&buf[..5]), Err(IoError::Magic)));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad[..]), Err(IoError::Magic)));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_snapshot(&bad[..]), Err(IoError::Version(9))));
        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_snapshot(&bad[..]), Err(IoError::Trailing)));
        // first coefficient of the first field is k = (−7, −7); break its imaginary part
        let mut bad = buf;
        let off = 28 + 4 + 1 + 8;
        bad[off..off + 8].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(read_snapshot(&bad[..]), Err(IoError::NotHermitian { .. })));
    }
}
