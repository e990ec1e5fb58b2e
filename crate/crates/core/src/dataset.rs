//! Kronecker-structured datasets: `x_i = b_i ⊗ a_i`, stored by factors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{self, RealMatrix};
use crate::rng::{self, Stream};

const HEADER_MAGIC: &str = "kron-dataset";
const HEADER_VERSION: &str = "v1";

/// Counts reads of anything whose size or value depends on the data
/// dimension (`p`, `q`, factor columns, materialized columns).
///
/// Used to check that training steps stay dimension-free.
#[derive(Debug, Default)]
pub struct DimProbe(AtomicU64);

impl DimProbe {
    #[inline]
    fn hit(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn reads(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

impl Clone for DimProbe {
    fn clone(&self) -> Self {
        DimProbe(AtomicU64::new(self.reads()))
    }
}

#[derive(Debug, Clone)]
pub struct KroneckerDataset {
    a: RealMatrix,
    b: RealMatrix,
    y: Vec<f64>,
    symmetric: bool,
    probe: DimProbe,
}

impl PartialEq for KroneckerDataset {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.y == other.y && self.symmetric == other.symmetric
    }
}

impl KroneckerDataset {
    /// `a` is p×n, `b` is q×n; column i of each holds the factors of sample i.
    ///
    /// Unit norms are not enforced here, so hand-built datasets with integer
    /// factors are allowed.
    pub fn new(a: RealMatrix, b: RealMatrix, y: Vec<f64>, symmetric: bool) -> Result<Self> {
        let n = a.cols();
        Error::check_len("columns of B", n, b.cols())?;
        Error::check_len("label count", n, y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("labels must be finite".into()));
        }
        if symmetric {
            if a.rows() != b.rows() {
                return Err(Error::InvalidInput(format!(
                    "symmetric dataset requires p = q (got p={}, q={})",
                    a.rows(),
                    b.rows()
                )));
            }
            if a != b {
                return Err(Error::InvalidInput(
                    "symmetric dataset requires identical factor matrices".into(),
                ));
            }
        }
        Ok(Self {
            a,
            b,
            y,
            symmetric,
            probe: DimProbe::default(),
        })
    }

    /// Symmetric dataset with `x_i = vec(x̄_i x̄_iᵀ)`.
    pub fn symmetric(xbar: RealMatrix, y: Vec<f64>) -> Result<Self> {
        Self::new(xbar.clone(), xbar, y, true)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn p(&self) -> usize {
        self.probe.hit();
        self.a.rows()
    }

    pub fn q(&self) -> usize {
        self.probe.hit();
        self.b.rows()
    }

    /// Data dimension `d = p·q`.
    pub fn dim(&self) -> usize {
        self.probe.hit();
        self.a.rows() * self.b.rows()
    }

    pub fn factor_a(&self) -> &RealMatrix {
        self.probe.hit();
        &self.a
    }

    pub fn factor_b(&self) -> &RealMatrix {
        self.probe.hit();
        &self.b
    }

    /// `x_i = b_i ⊗ a_i = vec(a_i b_iᵀ)`.
    pub fn materialize_column(&self, i: usize) -> Result<Vec<f64>> {
        Error::check_index("sample", i, self.n())?;
        self.probe.hit();
        Ok(matrix::kron(self.b.col(i), self.a.col(i)))
    }

    /// Dense d×n data matrix. Costs O(n·d); meant for oracles and diagnostics.
    pub fn materialize(&self) -> RealMatrix {
        self.probe.hit();
        let cols: Vec<Vec<f64>> = (0..self.n())
            .map(|i| matrix::kron(self.b.col(i), self.a.col(i)))
            .collect();
        RealMatrix::from_columns(&cols).expect("materialized columns are finite and conforming")
    }

    pub fn probe(&self) -> &DimProbe {
        &self.probe
    }

    /// Writes the v1 text format (17 significant digits per value).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self) -> String {
        let (n, p, q) = (self.n(), self.a.rows(), self.b.rows());
        let mut out = format!(
            "{HEADER_MAGIC} {HEADER_VERSION} n={n} p={p} q={q} symmetric={}\n",
            u8::from(self.symmetric)
        );
        for i in 0..n {
            let fields = self
                .a
                .col(i)
                .iter()
                .chain(self.b.col(i))
                .chain(std::iter::once(&self.y[i]));
            for (k, v) in fields.enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let header = parse_header(header).map_err(|m| err(1, m))?;

        let width = header.p + header.q + 1;
        let mut a = Vec::with_capacity(header.n * header.p);
        let mut b = Vec::with_capacity(header.n * header.q);
        let mut y = Vec::with_capacity(header.n);
        for i in 0..header.n {
            let line_no = i + 2;
            let line = lines.next().ok_or_else(|| {
                err(
                    line_no,
                    format!("expected {} data lines, found {}", header.n, i),
                )
            })?;
            let values = line
                .split_whitespace()
                .map(|tok| {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| err(line_no, format!("not a number: {tok:?}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(err(line_no, format!("non-finite value: {tok}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != width {
                return Err(err(
                    line_no,
                    format!("expected {width} fields, found {}", values.len()),
                ));
            }
            a.extend_from_slice(&values[..header.p]);
            b.extend_from_slice(&values[header.p..header.p + header.q]);
            y.push(values[width - 1]);
        }
        for (k, rest) in lines.enumerate() {
            if !rest.trim().is_empty() {
                return Err(err(header.n + 2 + k, "unexpected trailing data".into()));
            }
        }
        let a = RealMatrix::from_col_major(header.p, header.n, a).map_err(|e| err(1, e.to_string()))?;
        let b = RealMatrix::from_col_major(header.q, header.n, b).map_err(|e| err(1, e.to_string()))?;
        Self::new(a, b, y, header.symmetric).map_err(|e| err(1, e.to_string()))
    }
}

struct Header {
    n: usize,
    p: usize,
    q: usize,
    symmetric: bool,
}

fn parse_header(line: &str) -> std::result::Result<Header, String> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(HEADER_MAGIC) || toks.next() != Some(HEADER_VERSION) {
        return Err(format!("expected header '{HEADER_MAGIC} {HEADER_VERSION} ...'"));
    }
    let mut field = |name: &str| -> std::result::Result<usize, String> {
        let tok = toks.next().ok_or_else(|| format!("missing field {name}"))?;
        let value = tok
            .strip_prefix(name)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| format!("expected {name}=<value>, found {tok:?}"))?;
        value
            .parse()
            .map_err(|_| format!("bad value for {name}: {value:?}"))
    };
    let n = field("n")?;
    let p = field("p")?;
    let q = field("q")?;
    let symmetric = match field("symmetric")? {
        0 => false,
        1 => true,
        other => return Err(format!("symmetric must be 0 or 1, found {other}")),
    };
    if n == 0 || p == 0 || q == 0 {
        return Err("n, p and q must be positive".into());
    }
    if symmetric && p != q {
        return Err(format!("symmetric=1 requires p = q (got p={p}, q={q})"));
    }
    Ok(Header { n, p, q, symmetric })
}

/// Random unit-norm factors with labels uniform in `[-label_scale, label_scale]`.
///
/// With `symmetric` set (requires `p == q`), `B = A`.
pub fn generate_synthetic(
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    label_scale: f64,
    symmetric: bool,
) -> Result<KroneckerDataset> {
    if n == 0 || p == 0 || q == 0 {
        return Err(Error::InvalidInput("n, p and q must be positive".into()));
    }
    if symmetric && p != q {
        return Err(Error::InvalidInput(format!(
            "symmetric dataset requires p = q (got p={p}, q={q})"
        )));
    }
    if !(label_scale.is_finite() && label_scale >= 0.0) {
        return Err(Error::InvalidInput("label scale must be finite and >= 0".into()));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let a = random_unit_columns(&mut rng, p, n);
    let b = if symmetric {
        a.clone()
    } else {
        random_unit_columns(&mut rng, q, n)
    };
    let y = (0..n)
        .map(|_| {
            if label_scale == 0.0 {
                0.0
            } else {
                rng.random_range(-label_scale..=label_scale)
            }
        })
        .collect();
    KroneckerDataset::new(a, b, y, symmetric)
}

fn random_unit_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(rows, cols);
    for j in 0..cols {
        let col = m.col_mut(j);
        loop {
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = matrix::norm2(col);
            if norm > 1e-300 {
                col.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    m
}
