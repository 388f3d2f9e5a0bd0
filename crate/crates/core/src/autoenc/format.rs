//! Binary model file: `ADAE` magic, little-endian header, then all six
//! layers' f32 parameters (weights then bias, in layer order). Strict on
//! load: bad magic, unknown version, or a length mismatch is an error.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{AEModel, ArchDescriptor, ConvLayer, Real};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ADAE";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the model. Parameters are stored as f32 regardless of the
/// in-memory scalar type.
pub fn save_model<T: Real>(model: &AEModel<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes);
    let arch = &model.arch;
    put(MAGIC)
        .and_then(|_| put(&VERSION.to_le_bytes()))
        .and_then(|_| put(&(arch.side as u32).to_le_bytes()))
        .and_then(|_| put(&(arch.channels as u32).to_le_bytes()))
        .and_then(|_| put(&(arch.widths[0] as u32).to_le_bytes()))
        .and_then(|_| put(&(arch.widths[1] as u32).to_le_bytes()))
        .and_then(|_| put(&(arch.widths[2] as u32).to_le_bytes()))
        .and_then(|_| put(&model.epochs_trained.to_le_bytes()))
        .and_then(|_| put(&(model.final_loss as f32).to_le_bytes()))
        .map_err(|e| io_err(path, e))?;
    for layer in &model.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())
                .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::ModelFormat {
                detail: format!("file truncated reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Loads a model saved by [`save_model`]. The byte length must match the
/// header-declared architecture exactly.
pub fn load_model(path: &Path) -> Result<AEModel<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::ModelFormat {
            detail: "bad magic; not a model file".to_string(),
        });
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::ModelFormat {
            detail: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let side = cur.u32("side")? as usize;
    let channels = cur.u32("channels")? as usize;
    let widths = [
        cur.u32("width 0")? as usize,
        cur.u32("width 1")? as usize,
        cur.u32("width 2")? as usize,
    ];
    let arch = ArchDescriptor { side, channels, widths };
    arch.validate()?;
    let epochs_trained = cur.u32("epochs")?;
    let final_loss = cur.f32("final loss")? as f64;

    let mut layers = Vec::with_capacity(6);
    for st in arch.stages() {
        let n_w = st.out_c * st.in_c * 9;
        let mut weights = Vec::with_capacity(n_w);
        for _ in 0..n_w {
            weights.push(cur.f32("weights")?);
        }
        let mut bias = Vec::with_capacity(st.out_c);
        for _ in 0..st.out_c {
            bias.push(cur.f32("bias")?);
        }
        layers.push(ConvLayer {
            in_c: st.in_c,
            out_c: st.out_c,
            weights,
            bias,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::ModelFormat {
            detail: format!("{} trailing bytes after parameters", bytes.len() - cur.pos),
        });
    }
    Ok(AEModel {
        arch,
        layers,
        epochs_trained,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::init_model;

    fn sample_model() -> AEModel<f32> {
        let arch = ArchDescriptor {
            side: 8,
            channels: 3,
            widths: [2, 3, 2],
        };
        let mut model: AEModel<f32> = init_model(&arch, 42).unwrap();
        model.epochs_trained = 17;
        model.final_loss = 0.0123;
        model
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.adae");
        let model = sample_model();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.arch, model.arch);
        assert_eq!(back.layers, model.layers);
        assert_eq!(back.epochs_trained, 17);
        assert!((back.final_loss - 0.0123).abs() < 1e-7);
    }

    #[test]
    fn header_starts_with_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.adae");
        save_model(&sample_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"ADAE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let expected = 4 + 8 * 4 + sample_model().arch.param_count() * 4;
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.adae");
        save_model(&sample_model(), &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let bad_magic = dir.path().join("magic.adae");
        let mut b = good.clone();
        b[0] = b'X';
        std::fs::write(&bad_magic, &b).unwrap();
        assert!(matches!(load_model(&bad_magic), Err(Error::ModelFormat { .. })));

        let bad_version = dir.path().join("version.adae");
        let mut b = good.clone();
        b[4] = 9;
        std::fs::write(&bad_version, &b).unwrap();
        assert!(matches!(load_model(&bad_version), Err(Error::ModelFormat { .. })));

        let truncated = dir.path().join("short.adae");
        std::fs::write(&truncated, &good[..good.len() - 5]).unwrap();
        assert!(matches!(load_model(&truncated), Err(Error::ModelFormat { .. })));

        let padded = dir.path().join("long.adae");
        let mut b = good.clone();
        b.extend_from_slice(&[0u8; 8]);
        std::fs::write(&padded, &b).unwrap();
        assert!(matches!(load_model(&padded), Err(Error::ModelFormat { .. })));
    }

    #[test]
    fn f64_models_save_as_f32() {
        let arch = ArchDescriptor {
            side: 8,
            channels: 1,
            widths: [2, 2, 2],
        };
        let model: AEModel<f64> = init_model(&arch, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.adae");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        for (a, b) in model.layers.iter().zip(&back.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_eq!(*x as f32, *y);
            }
        }
    }
}
