//! Versioned binary caches for the expensive offline artifacts: KL bases
//! (keyed by mesh, covariance and truncation) and full surrogate component
//! sets (keyed additionally by the chaos parameters and construction).
//!
//! Format: a magic tag and version, an FNV-1a hash of the key fields for an
//! early mismatch check, the key fields verbatim, then the payload arrays in
//! little-endian order. A reader rejects anything whose header does not
//! match the requested key exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::chaos::{multi_index_set, PcMatrix};
use crate::error::{Error, Result};
use crate::field::KlBasis;
use crate::linalg::{self, Matrix};
use crate::offline::{
    ClassComponents, ScClass, ScSchurClass, SgClass, SgSchurClass, StochMethod, SurrogateComponents,
};

const KL_MAGIC: &[u8; 4] = b"SBKL";
const OFFLINE_MAGIC: &[u8; 4] = b"SBOF";
const VERSION: u32 = 1;

/// Key identifying a cached KL basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlKey {
    /// 0 = global basis, 1 = subdomain-local basis.
    pub kind: u8,
    pub ns: u32,
    pub n: u32,
    pub sigma2: f64,
    pub ell: f64,
    pub count: u32,
}

impl KlKey {
    fn bytes(&self) -> Vec<u8> {
        let mut out = vec![self.kind];
        out.extend_from_slice(&self.ns.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.sigma2.to_le_bytes());
        out.extend_from_slice(&self.ell.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out
    }

    pub fn file_name(&self) -> String {
        format!("kl-{:016x}.bin", fnv1a(&self.bytes()))
    }
}

/// Key identifying a cached offline artifact set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineKey {
    pub ns: u32,
    pub n: u32,
    pub sigma2: f64,
    pub ell: f64,
    pub mkl_global: u32,
    pub nkl: u32,
    pub degree: u32,
    pub quad_points: u32,
    pub method: u8,
    pub with_schur: bool,
}

impl OfflineKey {
    fn bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.ns.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.sigma2.to_le_bytes());
        out.extend_from_slice(&self.ell.to_le_bytes());
        out.extend_from_slice(&self.mkl_global.to_le_bytes());
        out.extend_from_slice(&self.nkl.to_le_bytes());
        out.extend_from_slice(&self.degree.to_le_bytes());
        out.extend_from_slice(&self.quad_points.to_le_bytes());
        out.push(self.method);
        out.push(self.with_schur as u8);
        out
    }

    pub fn file_name(&self) -> String {
        format!("offline-{:016x}.bin", fnv1a(&self.bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4], key_bytes: &[u8]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&fnv1a(key_bytes).to_le_bytes());
        buf.extend_from_slice(&(key_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(key_bytes);
        Self { buf }
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.buf.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    }

    fn pc_matrix(&mut self, p: &PcMatrix) {
        self.u64(p.set.dim as u64);
        self.u64(p.set.degree as u64);
        self.u64(p.coeffs.len() as u64);
        for c in &p.coeffs {
            self.matrix(c);
        }
    }

    fn finish(self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&self.buf)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path, magic: &[u8; 4], key_bytes: &[u8]) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Self { buf, pos: 0 };
        let got_magic = r.take(4)?.to_vec();
        if got_magic != magic {
            return Err(Error::Cache("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Cache(format!("version {version} != {VERSION}")));
        }
        let hash = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if hash != fnv1a(key_bytes) {
            return Err(Error::Cache("key hash mismatch".into()));
        }
        let klen = r.u64()? as usize;
        let stored = r.take(klen)?.to_vec();
        if stored != key_bytes {
            return Err(Error::Cache("key fields mismatch".into()));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(f64::from_le_bytes(self.take(8)?.try_into().unwrap()));
        }
        Ok(out)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let nrows = self.u64()? as usize;
        let ncols = self.u64()? as usize;
        let mut m = linalg::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m[(i, j)] = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
            }
        }
        Ok(m)
    }

    fn pc_matrix(&mut self) -> Result<PcMatrix> {
        let dim = self.u64()? as usize;
        let degree = self.u64()? as usize;
        let count = self.u64()? as usize;
        let set = Arc::new(multi_index_set(dim, degree));
        if set.len() != count {
            return Err(Error::Cache("coefficient count mismatch".into()));
        }
        let mut coeffs = Vec::with_capacity(count);
        for _ in 0..count {
            coeffs.push(self.matrix()?);
        }
        Ok(PcMatrix::new(set, coeffs))
    }
}

pub fn save_kl(dir: &Path, key: &KlKey, basis: &KlBasis) -> Result<PathBuf> {
    let mut w = Writer::new(KL_MAGIC, &key.bytes());
    w.f64s(&basis.lambdas);
    w.f64s(&basis.weights);
    w.matrix(&basis.modes);
    let path = dir.join(key.file_name());
    w.finish(&path)?;
    Ok(path)
}

pub fn load_kl(dir: &Path, key: &KlKey) -> Result<Option<KlBasis>> {
    let path = dir.join(key.file_name());
    if !path.exists() {
        return Ok(None);
    }
    let mut r = Reader::open(&path, KL_MAGIC, &key.bytes())?;
    let lambdas = r.f64s()?;
    let weights = r.f64s()?;
    let modes = r.matrix()?;
    Ok(Some(KlBasis {
        lambdas,
        weights,
        modes,
    }))
}

pub fn save_offline(dir: &Path, key: &OfflineKey, off: &SurrogateComponents) -> Result<PathBuf> {
    let mut w = Writer::new(OFFLINE_MAGIC, &key.bytes());
    w.u64(match off.method {
        StochMethod::Galerkin => 0,
        StochMethod::Collocation => 1,
    });
    w.u64(off.set_d.dim as u64);
    w.u64(off.set_d.degree as u64);
    w.u64(off.with_schur as u64);
    w.f64s(&off.local_basis.lambdas);
    w.f64s(&off.local_basis.weights);
    w.matrix(&off.local_basis.modes);
    w.u64(off.class_of_sub.len() as u64);
    for &c in &off.class_of_sub {
        w.u64(c as u64);
    }
    w.u64(off.classes.len() as u64);
    for class in &off.classes {
        match class {
            ClassComponents::Sg(sg) => {
                w.u64(0);
                w.pc_matrix(&sg.inverse);
                w.pc_matrix(&sg.x);
                w.pc_matrix(&sg.s_pi);
                w.u64(sg.schur.is_some() as u64);
                if let Some(s) = &sg.schur {
                    w.pc_matrix(&s.a_gg);
                    w.pc_matrix(&s.z_gg);
                }
            }
            ClassComponents::Sc(sc) => {
                w.u64(1);
                w.pc_matrix(&sc.l_rr);
                w.pc_matrix(&sc.a_cr);
                w.pc_matrix(&sc.h_pi);
                w.u64(sc.schur.is_some() as u64);
                if let Some(s) = &sc.schur {
                    w.pc_matrix(&s.l_ii);
                    w.pc_matrix(&s.a_gi);
                    w.pc_matrix(&s.a_gg);
                }
            }
        }
    }
    w.u64(off.projections.len() as u64);
    for p in &off.projections {
        w.matrix(p);
    }
    let path = dir.join(key.file_name());
    w.finish(&path)?;
    Ok(path)
}

pub fn load_offline(dir: &Path, key: &OfflineKey) -> Result<Option<SurrogateComponents>> {
    let path = dir.join(key.file_name());
    if !path.exists() {
        return Ok(None);
    }
    let mut r = Reader::open(&path, OFFLINE_MAGIC, &key.bytes())?;
    let method = match r.u64()? {
        0 => StochMethod::Galerkin,
        1 => StochMethod::Collocation,
        other => return Err(Error::Cache(format!("unknown method tag {other}"))),
    };
    let dim = r.u64()? as usize;
    let degree = r.u64()? as usize;
    let with_schur = r.u64()? != 0;
    let set_d = Arc::new(multi_index_set(dim, degree));
    let local_basis = KlBasis {
        lambdas: r.f64s()?,
        weights: r.f64s()?,
        modes: r.matrix()?,
    };
    let nsub = r.u64()? as usize;
    let mut class_of_sub = Vec::with_capacity(nsub);
    for _ in 0..nsub {
        class_of_sub.push(r.u64()? as usize);
    }
    let nclasses = r.u64()? as usize;
    let mut classes = Vec::with_capacity(nclasses);
    for _ in 0..nclasses {
        let tag = r.u64()?;
        match tag {
            0 => {
                let inverse = r.pc_matrix()?;
                let x = r.pc_matrix()?;
                let s_pi = r.pc_matrix()?;
                let schur = if r.u64()? != 0 {
                    Some(SgSchurClass {
                        a_gg: r.pc_matrix()?,
                        z_gg: r.pc_matrix()?,
                    })
                } else {
                    None
                };
                classes.push(ClassComponents::Sg(SgClass {
                    inverse,
                    x,
                    s_pi,
                    schur,
                }));
            }
            1 => {
                let l_rr = r.pc_matrix()?;
                let a_cr = r.pc_matrix()?;
                let h_pi = r.pc_matrix()?;
                let schur = if r.u64()? != 0 {
                    Some(ScSchurClass {
                        l_ii: r.pc_matrix()?,
                        a_gi: r.pc_matrix()?,
                        a_gg: r.pc_matrix()?,
                    })
                } else {
                    None
                };
                classes.push(ClassComponents::Sc(ScClass {
                    l_rr,
                    a_cr,
                    h_pi,
                    schur,
                }));
            }
            other => return Err(Error::Cache(format!("unknown class tag {other}"))),
        }
    }
    let nproj = r.u64()? as usize;
    let mut projections = Vec::with_capacity(nproj);
    for _ in 0..nproj {
        projections.push(r.matrix()?);
    }
    Ok(Some(SurrogateComponents {
        method,
        set_d,
        local_basis,
        class_of_sub,
        classes,
        projections,
        with_schur,
    }))
}
