//! Little-endian bit-stream packing of fixed-width fields.

pub fn pack(values: &[u32], width: u32) -> Vec<u8> {
    debug_assert!(width >= 1 && width <= 32);
    let mut out = vec![0u8; (values.len() * width as usize).div_ceil(8)];
    let mut pos = 0usize;
    for &v in values {
        for b in 0..width {
            if (v >> b) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

/// Reads `count` fields; returns `None` if `bytes` is not exactly the packed
/// length.
pub fn unpack(bytes: &[u8], width: u32, count: usize) -> Option<Vec<u32>> {
    if bytes.len() != (count * width as usize).div_ceil(8) {
        return None;
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..width {
            v |= (((bytes[pos / 8] >> (pos % 8)) & 1) as u32) << b;
            pos += 1;
        }
        out.push(v);
    }
    Some(out)
}

pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}
