//! Arithmetic in `R_q = Z_q[X]/(X^n + 1)`.

mod ntt;
mod sample;

pub use sample::{sample_cbd, sample_uniform};

pub(crate) use ntt::{add_mod, sub_mod};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree and modulus of a power-of-two cyclotomic ring.
///
/// `n` must be a power of two, `q` a prime below 2^31 with `q ≡ 1 (mod n)`.
/// Moduli with `q ≡ 1 (mod 2n)` get a full transform; `q ≡ 1 (mod n)` alone
/// (e.g. 3329 at n = 256) gets one fewer layer and degree-2 base products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingParams {
    n: usize,
    q: u32,
}

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let q = q as u64;
    let mut d = 2u64;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl RingParams {
    pub fn new(n: usize, q: u32) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidRingParams(format!("n={n} is not a power of two >= 2")));
        }
        if q >= 1 << 31 || !is_prime(q) {
            return Err(Error::InvalidRingParams(format!("q={q} is not a prime below 2^31")));
        }
        if ntt::split_count(n, q).is_none() {
            return Err(Error::InvalidRingParams(format!(
                "q={q} admits no negacyclic transform for n={n} (need q = 1 mod n)"
            )));
        }
        Ok(RingParams { n, q })
    }

    /// n = 256, q = 3329.
    pub fn kem_default() -> Self {
        RingParams { n: 256, q: 3329 }
    }

    /// n = 256, q = 8380417.
    pub fn sig_default() -> Self {
        RingParams { n: 256, q: 8_380_417 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Bytes per coefficient in the plain serialization: 2 when `q <= 2^16`,
    /// otherwise 4.
    pub fn coeff_bytes(&self) -> usize {
        if self.q <= 1 << 16 {
            2
        } else {
            4
        }
    }

    fn ensure_same(&self, other: &RingParams) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::RingMismatch {
                left_n: self.n,
                left_q: self.q,
                right_n: other.n,
                right_q: other.q,
            })
        }
    }
}

/// Reduces a signed integer into `[0, q)`.
pub fn reduce_signed(v: i64, q: u32) -> u32 {
    v.rem_euclid(q as i64) as u32
}

/// Maps a residue to its centered representative in `(-q/2, q/2]`.
pub fn centered(c: u32, q: u32) -> i64 {
    if c > q / 2 {
        c as i64 - q as i64
    } else {
        c as i64
    }
}

/// A polynomial in coefficient form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    params: RingParams,
    coeffs: Vec<u32>,
}

/// A polynomial in the transform domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NttPoly {
    params: RingParams,
    values: Vec<u32>,
}

impl Poly {
    pub fn zero(params: RingParams) -> Self {
        Poly {
            params,
            coeffs: vec![0; params.n],
        }
    }

    pub fn one(params: RingParams) -> Self {
        let mut p = Self::zero(params);
        p.coeffs[0] = 1;
        p
    }

    /// Builds a polynomial from residues, rejecting wrong lengths and
    /// out-of-range values.
    pub fn from_coeffs(params: RingParams, coeffs: Vec<u32>) -> Result<Self> {
        if coeffs.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                actual: coeffs.len(),
            });
        }
        if let Some(c) = coeffs.iter().find(|&&c| c >= params.q) {
            return Err(Error::Malformed {
                what: "polynomial",
                reason: format!("coefficient {c} not below q={}", params.q),
            });
        }
        Ok(Poly { params, coeffs })
    }

    /// Builds a polynomial from signed integers, reducing each mod q.
    pub fn from_signed(params: RingParams, values: &[i64]) -> Result<Self> {
        let coeffs = values.iter().map(|&v| reduce_signed(v, params.q)).collect();
        Self::from_coeffs(params, coeffs)
    }

    pub fn params(&self) -> RingParams {
        self.params
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn centered_coeffs(&self) -> Vec<i64> {
        self.coeffs.iter().map(|&c| centered(c, self.params.q)).collect()
    }

    /// Largest absolute centered coefficient.
    pub fn inf_norm(&self) -> u32 {
        self.coeffs
            .iter()
            .map(|&c| centered(c, self.params.q).unsigned_abs() as u32)
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Result<Poly> {
        self.params.ensure_same(&other.params)?;
        let q = self.params.q;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| add_mod(a, b, q))
            .collect();
        Ok(Poly {
            params: self.params,
            coeffs,
        })
    }

    pub fn sub(&self, other: &Poly) -> Result<Poly> {
        self.params.ensure_same(&other.params)?;
        let q = self.params.q;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| sub_mod(a, b, q))
            .collect();
        Ok(Poly {
            params: self.params,
            coeffs,
        })
    }

    pub fn neg(&self) -> Poly {
        let q = self.params.q;
        Poly {
            params: self.params,
            coeffs: self.coeffs.iter().map(|&c| sub_mod(0, c, q)).collect(),
        }
    }

    /// Negacyclic product via the transform.
    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        self.params.ensure_same(&other.params)?;
        Ok(self.ntt().pointwise(&other.ntt())?.inverse())
    }

    pub fn ntt(&self) -> NttPoly {
        let mut values = self.coeffs.clone();
        ntt::plan(self.params).forward(&mut values);
        NttPoly {
            params: self.params,
            values,
        }
    }

    /// Plain little-endian serialization, [`RingParams::coeff_bytes`] per
    /// coefficient in index order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let w = self.params.coeff_bytes();
        let mut out = Vec::with_capacity(w * self.params.n);
        for &c in &self.coeffs {
            out.extend_from_slice(&c.to_le_bytes()[..w]);
        }
        out
    }

    pub fn from_bytes(params: RingParams, bytes: &[u8]) -> Result<Poly> {
        let w = params.coeff_bytes();
        if bytes.len() != w * params.n {
            return Err(Error::Malformed {
                what: "polynomial",
                reason: format!("expected {} bytes, got {}", w * params.n, bytes.len()),
            });
        }
        let coeffs = bytes
            .chunks_exact(w)
            .map(|ch| {
                let mut b = [0u8; 4];
                b[..w].copy_from_slice(ch);
                u32::from_le_bytes(b)
            })
            .collect();
        Poly::from_coeffs(params, coeffs)
    }
}

/// Coefficientwise `(a + b) mod q`.
pub fn poly_add(a: &Poly, b: &Poly) -> Result<Poly> {
    a.add(b)
}

/// `a · b mod (X^n + 1, q)`.
pub fn poly_mul_negacyclic(a: &Poly, b: &Poly) -> Result<Poly> {
    a.mul(b)
}

pub fn ntt_forward(a: &Poly) -> NttPoly {
    a.ntt()
}

pub fn ntt_inverse(a: &NttPoly) -> Poly {
    a.inverse()
}

impl NttPoly {
    pub fn zero(params: RingParams) -> Self {
        NttPoly {
            params,
            values: vec![0; params.n],
        }
    }

    /// Wraps raw transform-domain values.
    pub fn from_values(params: RingParams, values: Vec<u32>) -> Result<Self> {
        let p = Poly::from_coeffs(params, values)?;
        Ok(NttPoly {
            params,
            values: p.coeffs,
        })
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn params(&self) -> RingParams {
        self.params
    }

    pub fn inverse(&self) -> Poly {
        let mut coeffs = self.values.clone();
        ntt::plan(self.params).inverse(&mut coeffs);
        Poly {
            params: self.params,
            coeffs,
        }
    }

    pub fn add(&self, other: &NttPoly) -> Result<NttPoly> {
        self.params.ensure_same(&other.params)?;
        let q = self.params.q;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| add_mod(a, b, q))
            .collect();
        Ok(NttPoly {
            params: self.params,
            values,
        })
    }

    pub fn pointwise(&self, other: &NttPoly) -> Result<NttPoly> {
        self.params.ensure_same(&other.params)?;
        let mut values = vec![0; self.params.n];
        ntt::plan(self.params).pointwise(&self.values, &other.values, &mut values);
        Ok(NttPoly {
            params: self.params,
            values,
        })
    }
}

/// A length-k vector of ring elements sharing one [`RingParams`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyVec {
    entries: Vec<Poly>,
}

impl PolyVec {
    pub fn new(entries: Vec<Poly>) -> Result<Self> {
        if let Some(first) = entries.first() {
            for e in &entries[1..] {
                first.params.ensure_same(&e.params)?;
            }
        }
        Ok(PolyVec { entries })
    }

    pub fn zero(params: RingParams, k: usize) -> Self {
        PolyVec {
            entries: vec![Poly::zero(params); k],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Poly] {
        &self.entries
    }

    pub fn inf_norm(&self) -> u32 {
        self.entries.iter().map(Poly::inf_norm).max().unwrap_or(0)
    }

    fn check_len(&self, other: &PolyVec) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyVec) -> Result<PolyVec> {
        self.check_len(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(PolyVec { entries })
    }

    pub fn sub(&self, other: &PolyVec) -> Result<PolyVec> {
        self.check_len(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        Ok(PolyVec { entries })
    }

    pub fn ntt(&self) -> Vec<NttPoly> {
        self.entries.iter().map(Poly::ntt).collect()
    }

    /// Inner product `Σ self_i · other_i`.
    pub fn dot(&self, other: &PolyVec) -> Result<Poly> {
        self.check_len(other)?;
        let a = self.ntt();
        let b = other.ntt();
        dot_ntt(&a, &b).map(|p| p.inverse())
    }

    /// Multiplies every entry by one ring element.
    pub fn scale(&self, c: &Poly) -> Result<PolyVec> {
        let c_hat = c.ntt();
        let entries = self
            .entries
            .iter()
            .map(|e| Ok(e.ntt().pointwise(&c_hat)?.inverse()))
            .collect::<Result<_>>()?;
        Ok(PolyVec { entries })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(Poly::to_bytes).collect()
    }

    pub fn from_bytes(params: RingParams, k: usize, bytes: &[u8]) -> Result<PolyVec> {
        let each = params.coeff_bytes() * params.n;
        if bytes.len() != each * k {
            return Err(Error::Malformed {
                what: "polynomial vector",
                reason: format!("expected {} bytes, got {}", each * k, bytes.len()),
            });
        }
        let entries = bytes
            .chunks_exact(each)
            .map(|ch| Poly::from_bytes(params, ch))
            .collect::<Result<_>>()?;
        Ok(PolyVec { entries })
    }
}

pub(crate) fn dot_ntt(a: &[NttPoly], b: &[NttPoly]) -> Result<NttPoly> {
    let params = a.first().map(|p| p.params).ok_or(Error::DimensionMismatch {
        expected: 1,
        actual: 0,
    })?;
    let mut acc = NttPoly::zero(params);
    for (x, y) in a.iter().zip(b) {
        acc = acc.add(&x.pointwise(y)?)?;
    }
    Ok(acc)
}

/// A `rows × cols` matrix of ring elements. Stored in the transform domain
/// since it is only ever used as a left or transposed multiplicand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMat {
    rows: usize,
    cols: usize,
    entries: Vec<NttPoly>,
}

impl PolyMat {
    /// Row-major entries in coefficient form.
    pub fn new(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        PolyVec::new(entries.clone())?;
        Ok(PolyMat {
            rows,
            cols,
            entries: entries.iter().map(Poly::ntt).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Poly {
        self.entries[r * self.cols + c].inverse()
    }

    /// `A · v`.
    pub fn mul_vec(&self, v: &PolyVec) -> Result<PolyVec> {
        self.mul_vec_ntt(&v.ntt(), false)
    }

    /// `Aᵀ · v`.
    pub fn mul_vec_transposed(&self, v: &PolyVec) -> Result<PolyVec> {
        self.mul_vec_ntt(&v.ntt(), true)
    }

    pub(crate) fn mul_vec_ntt(&self, v: &[NttPoly], transpose: bool) -> Result<PolyVec> {
        let (out_len, in_len) = if transpose {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        };
        if v.len() != in_len {
            return Err(Error::DimensionMismatch {
                expected: in_len,
                actual: v.len(),
            });
        }
        let entries = (0..out_len)
            .map(|i| {
                let row: Vec<NttPoly> = (0..in_len)
                    .map(|j| {
                        let idx = if transpose {
                            j * self.cols + i
                        } else {
                            i * self.cols + j
                        };
                        self.entries[idx].clone()
                    })
                    .collect();
                dot_ntt(&row, v).map(|p| p.inverse())
            })
            .collect::<Result<_>>()?;
        Ok(PolyVec { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RingParams {
        RingParams::new(4, 17).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(RingParams::new(256, 3329).is_ok());
        assert!(RingParams::new(256, 8_380_417).is_ok());
        assert!(RingParams::new(3, 17).is_err());
        assert!(RingParams::new(4, 15).is_err());
        assert!(RingParams::new(8, 7).is_err());
        assert_eq!(RingParams::kem_default(), RingParams::new(256, 3329).unwrap());
        assert_eq!(RingParams::sig_default(), RingParams::new(256, 8_380_417).unwrap());
    }

    #[test]
    fn add_wraps_mod_q() {
        let a = Poly::from_coeffs(toy(), vec![1, 2, 3, 4]).unwrap();
        let b = Poly::from_coeffs(toy(), vec![16, 16, 0, 0]).unwrap();
        assert_eq!(poly_add(&a, &b).unwrap().coeffs(), &[0, 1, 3, 4]);
        assert_eq!(poly_add(&a, &Poly::zero(toy())).unwrap(), a);
    }

    #[test]
    fn x3_times_x_is_minus_one() {
        let x3 = Poly::from_coeffs(toy(), vec![0, 0, 0, 1]).unwrap();
        let x = Poly::from_coeffs(toy(), vec![0, 1, 0, 0]).unwrap();
        assert_eq!(poly_mul_negacyclic(&x3, &x).unwrap().coeffs(), &[16, 0, 0, 0]);
    }

    #[test]
    fn one_is_identity() {
        let p = RingParams::kem_default();
        let a = Poly::from_signed(p, &(0..256).map(|i| i * 7 - 300).collect::<Vec<_>>()).unwrap();
        assert_eq!(a.mul(&Poly::one(p)).unwrap(), a);
    }

    #[test]
    fn mismatched_params_rejected() {
        let a = Poly::zero(toy());
        let b = Poly::zero(RingParams::new(8, 17).unwrap());
        assert!(matches!(a.add(&b), Err(Error::RingMismatch { .. })));
        assert!(matches!(a.mul(&b), Err(Error::RingMismatch { .. })));
        assert!(PolyVec::new(vec![a, b]).is_err());
    }

    #[test]
    fn ntt_of_zero_is_zero() {
        for p in [toy(), RingParams::kem_default(), RingParams::sig_default()] {
            assert!(Poly::zero(p).ntt().values().iter().all(|&v| v == 0));
            assert_eq!(NttPoly::zero(p).inverse(), Poly::zero(p));
        }
    }

    #[test]
    fn out_of_range_coefficients_rejected() {
        assert!(Poly::from_coeffs(toy(), vec![0, 17, 0, 0]).is_err());
        assert!(Poly::from_coeffs(toy(), vec![0, 1, 0]).is_err());
    }

    #[test]
    fn bytes_are_16_bit_le_for_small_q() {
        let a = Poly::from_coeffs(toy(), vec![1, 2, 3, 16]).unwrap();
        assert_eq!(a.to_bytes(), vec![1, 0, 2, 0, 3, 0, 16, 0]);
        assert_eq!(Poly::from_bytes(toy(), &a.to_bytes()).unwrap(), a);
        assert!(Poly::from_bytes(toy(), &[0; 7]).is_err());
    }

    #[test]
    fn centered_representation() {
        assert_eq!(centered(16, 17), -1);
        assert_eq!(centered(8, 17), 8);
        assert_eq!(centered(9, 17), -8);
        assert_eq!(reduce_signed(-3, 17), 14);
    }

    #[test]
    fn matrix_vector_products() {
        let p = toy();
        let e = |v: [i64; 4]| Poly::from_signed(p, &v).unwrap();
        let m = PolyMat::new(1, 2, vec![e([1, 0, 0, 0]), e([0, 1, 0, 0])]).unwrap();
        let v = PolyVec::new(vec![e([1, 2, 3, 4]), e([1, 0, 0, 0])]).unwrap();
        // 1·(1+2X+3X²+4X³) + X·1
        assert_eq!(m.mul_vec(&v).unwrap().entries()[0], e([1, 3, 3, 4]));
        let w = PolyVec::new(vec![e([0, 0, 0, 1])]).unwrap();
        let t = m.mul_vec_transposed(&w).unwrap();
        assert_eq!(t.entries()[0], e([0, 0, 0, 1]));
        assert_eq!(t.entries()[1], e([-1, 0, 0, 0]));
        assert!(m.mul_vec(&w).is_err());
    }
}
