//! Field-tagged payload encoding.
//!
//! ```text
//! payload := schema_version:u8 kind:u8 field*
//! field   := tag:u16le type:u8 len:u32le value[len]
//! ```
//!
//! Types: 0 u64, 1 i64, 2 f64 (IEEE-754), 3 UTF-8 string, 4 bytes,
//! 5 nested (a `field*` sequence), 6 bool. Integers are little-endian.
//! Repeated fields encode lists. Readers skip tags they do not know.

use super::WireError;

pub const SCHEMA_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum WireType {
    U64 = 0,
    I64 = 1,
    F64 = 2,
    Str = 3,
    Bytes = 4,
    Nested = 5,
    Bool = 6,
}

impl WireType {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            0 => WireType::U64,
            1 => WireType::I64,
            2 => WireType::F64,
            3 => WireType::Str,
            4 => WireType::Bytes,
            5 => WireType::Nested,
            6 => WireType::Bool,
            _ => return None,
        })
    }

    fn fixed_len(self) -> Option<usize> {
        match self {
            WireType::U64 | WireType::I64 | WireType::F64 => Some(8),
            WireType::Bool => Some(1),
            _ => None,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    fn header(&mut self, tag: u16, ty: WireType, len: usize) {
        self.buf.extend_from_slice(&tag.to_le_bytes());
        self.buf.push(ty as u8);
        self.buf.extend_from_slice(&(len as u32).to_le_bytes());
    }

    pub fn u64(&mut self, tag: u16, v: u64) -> &mut Self {
        self.header(tag, WireType::U64, 8);
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, tag: u16, v: i64) -> &mut Self {
        self.header(tag, WireType::I64, 8);
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, tag: u16, v: f64) -> &mut Self {
        self.header(tag, WireType::F64, 8);
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bool(&mut self, tag: u16, v: bool) -> &mut Self {
        self.header(tag, WireType::Bool, 1);
        self.buf.push(v as u8);
        self
    }

    pub fn str(&mut self, tag: u16, v: &str) -> &mut Self {
        self.header(tag, WireType::Str, v.len());
        self.buf.extend_from_slice(v.as_bytes());
        self
    }

    pub fn bytes(&mut self, tag: u16, v: &[u8]) -> &mut Self {
        self.header(tag, WireType::Bytes, v.len());
        self.buf.extend_from_slice(v);
        self
    }

    /// Writes a nested message built by `f`.
    pub fn nested(&mut self, tag: u16, f: impl FnOnce(&mut FieldWriter)) -> &mut Self {
        let start = self.buf.len();
        self.header(tag, WireType::Nested, 0);
        let body = self.buf.len();
        let mut inner = FieldWriter { buf: std::mem::take(&mut self.buf) };
        f(&mut inner);
        self.buf = inner.buf;
        let len = (self.buf.len() - body) as u32;
        self.buf[start + 3..start + 7].copy_from_slice(&len.to_le_bytes());
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Field<'a> {
    pub tag: u16,
    pub ty: WireType,
    pub data: &'a [u8],
}

impl<'a> Field<'a> {
    fn expect(&self, ty: WireType) -> Result<(), WireError> {
        if self.ty == ty {
            Ok(())
        } else {
            Err(WireError::MalformedPayload(format!("field {} has type {:?}, expected {:?}", self.tag, self.ty, ty)))
        }
    }

    fn eight(&self) -> [u8; 8] {
        self.data.try_into().expect("fixed-width length checked on read")
    }

    pub fn as_u64(&self) -> Result<u64, WireError> {
        self.expect(WireType::U64)?;
        Ok(u64::from_le_bytes(self.eight()))
    }

    pub fn as_i64(&self) -> Result<i64, WireError> {
        self.expect(WireType::I64)?;
        Ok(i64::from_le_bytes(self.eight()))
    }

    pub fn as_f64(&self) -> Result<f64, WireError> {
        self.expect(WireType::F64)?;
        Ok(f64::from_le_bytes(self.eight()))
    }

    pub fn as_bool(&self) -> Result<bool, WireError> {
        self.expect(WireType::Bool)?;
        match self.data[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(WireError::MalformedPayload(format!("bad bool byte {b}"))),
        }
    }

    pub fn as_str(&self) -> Result<&'a str, WireError> {
        self.expect(WireType::Str)?;
        std::str::from_utf8(self.data).map_err(|_| WireError::MalformedPayload(format!("field {} is not UTF-8", self.tag)))
    }

    pub fn as_bytes(&self) -> Result<&'a [u8], WireError> {
        self.expect(WireType::Bytes)?;
        Ok(self.data)
    }

    pub fn as_nested(&self) -> Result<Fields<'a>, WireError> {
        self.expect(WireType::Nested)?;
        Fields::parse(self.data)
    }
}

/// A parsed (but not interpreted) field sequence.
#[derive(Debug, Clone, Default)]
pub struct Fields<'a> {
    fields: Vec<Field<'a>>,
}

impl<'a> Fields<'a> {
    pub fn parse(mut data: &'a [u8]) -> Result<Self, WireError> {
        let mut fields = Vec::new();
        while !data.is_empty() {
            if data.len() < 7 {
                return Err(WireError::MalformedPayload("truncated field header".into()));
            }
            let tag = u16::from_le_bytes([data[0], data[1]]);
            let ty = WireType::from_u8(data[2])
                .ok_or_else(|| WireError::MalformedPayload(format!("unknown wire type {}", data[2])))?;
            let len = u32::from_le_bytes([data[3], data[4], data[5], data[6]]) as usize;
            let rest = &data[7..];
            if rest.len() < len {
                return Err(WireError::MalformedPayload(format!("field {tag} overruns payload")));
            }
            if let Some(fixed) = ty.fixed_len() {
                if fixed != len {
                    return Err(WireError::MalformedPayload(format!("field {tag} has length {len}, expected {fixed}")));
                }
            }
            fields.push(Field { tag, ty, data: &rest[..len] });
            data = &rest[len..];
        }
        Ok(Fields { fields })
    }

    pub fn first(&self, tag: u16) -> Option<&Field<'a>> {
        self.fields.iter().find(|f| f.tag == tag)
    }

    pub fn all(&self, tag: u16) -> impl Iterator<Item = &Field<'a>> {
        self.fields.iter().filter(move |f| f.tag == tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Field<'a>> {
        self.fields.iter()
    }

    fn required(&self, tag: u16) -> Result<&Field<'a>, WireError> {
        self.first(tag).ok_or_else(|| WireError::MalformedPayload(format!("missing field {tag}")))
    }

    pub fn u64(&self, tag: u16) -> Result<u64, WireError> {
        self.required(tag)?.as_u64()
    }

    pub fn i64(&self, tag: u16) -> Result<i64, WireError> {
        self.required(tag)?.as_i64()
    }

    pub fn f64(&self, tag: u16) -> Result<f64, WireError> {
        self.required(tag)?.as_f64()
    }

    pub fn bool(&self, tag: u16) -> Result<bool, WireError> {
        self.required(tag)?.as_bool()
    }

    pub fn str(&self, tag: u16) -> Result<&'a str, WireError> {
        self.required(tag)?.as_str()
    }

    pub fn string(&self, tag: u16) -> Result<String, WireError> {
        self.str(tag).map(str::to_string)
    }

    pub fn nested(&self, tag: u16) -> Result<Fields<'a>, WireError> {
        self.required(tag)?.as_nested()
    }

    pub fn strings(&self, tag: u16) -> Result<Vec<String>, WireError> {
        self.all(tag).map(|f| f.as_str().map(str::to_string)).collect()
    }

    pub fn nested_all(&self, tag: u16) -> Result<Vec<Fields<'a>>, WireError> {
        self.all(tag).map(Field::as_nested).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_layout_is_little_endian() {
        let mut w = FieldWriter::new();
        w.u64(0x0102, 7);
        assert_eq!(w.into_bytes(), [0x02, 0x01, 0, 8, 0, 0, 0, 7, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn nested_and_repeated() {
        let mut w = FieldWriter::new();
        w.str(1, "a").str(1, "b").nested(2, |n| {
            n.f64(1, 2.5).bool(2, true);
        });
        let bytes = w.into_bytes();
        let f = Fields::parse(&bytes).unwrap();
        assert_eq!(f.strings(1).unwrap(), ["a", "b"]);
        let n = f.nested(2).unwrap();
        assert_eq!(n.f64(1).unwrap(), 2.5);
        assert!(n.bool(2).unwrap());
    }

    #[test]
    fn unknown_tags_are_skipped() {
        let mut w = FieldWriter::new();
        w.u64(1, 5).str(999, "future field").bytes(1000, &[1, 2, 3]);
        let bytes = w.into_bytes();
        let f = Fields::parse(&bytes).unwrap();
        assert_eq!(f.u64(1).unwrap(), 5);
    }

    #[test]
    fn type_mismatch_and_truncation() {
        let mut w = FieldWriter::new();
        w.u64(1, 5);
        let bytes = w.into_bytes();
        let f = Fields::parse(&bytes).unwrap();
        assert!(f.str(1).is_err());
        assert!(f.u64(2).is_err());
        assert!(Fields::parse(&bytes[..bytes.len() - 1]).is_err());
        // Fixed-width type with the wrong length.
        assert!(Fields::parse(&[1, 0, 0, 4, 0, 0, 0, 1, 2, 3, 4]).is_err());
    }

    proptest! {
        #[test]
        fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            if let Ok(f) = Fields::parse(&bytes) {
                for field in f.iter() {
                    let _ = field.as_nested();
                    let _ = field.as_str();
                    let _ = field.as_bool();
                    let _ = field.as_u64();
                }
            }
        }
    }
}
