//! Canonical binary encoding for every signed or transmitted structure.
//!
//! Each value is `tag (1 byte) ‖ length (u32 big-endian) ‖ body`. Lists and
//! maps nest recursively. Map entries are text-keyed and must appear in
//! strictly ascending byte order of the key, so every value has exactly one
//! encoding and decoding rejects anything else.
//!
//! | tag  | kind  | body                                   |
//! |------|-------|----------------------------------------|
//! | 0x00 | null  | empty                                  |
//! | 0x01 | bool  | one byte, 0 or 1                       |
//! | 0x02 | uint  | eight bytes, big-endian                |
//! | 0x03 | bytes | raw octets                             |
//! | 0x04 | text  | UTF-8                                  |
//! | 0x05 | list  | concatenated encoded nodes             |
//! | 0x06 | map   | concatenated (text node, value node)   |

use std::collections::BTreeMap;

use thiserror::Error;

use crate::primitives::{Ciphertext, Digest, SealPublicKey, SigPublicKey, Signature};

const TAG_NULL: u8 = 0x00;
const TAG_BOOL: u8 = 0x01;
const TAG_UINT: u8 = 0x02;
const TAG_BYTES: u8 = 0x03;
const TAG_TEXT: u8 = 0x04;
const TAG_LIST: u8 = 0x05;
const TAG_MAP: u8 = 0x06;

const HEADER_LEN: usize = 5;
const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input at offset {offset}")]
    Truncated { offset: usize },
    #[error("unknown tag {tag:#04x} at offset {offset}")]
    UnknownTag { offset: usize, tag: u8 },
    #[error("invalid body length for tag at offset {offset}")]
    BadLength { offset: usize },
    #[error("invalid UTF-8 text at offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("non-canonical encoding at offset {offset}")]
    NonCanonical { offset: usize },
    #[error("nesting too deep at offset {offset}")]
    TooDeep { offset: usize },
    #[error("trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize },
    #[error("unexpected structure: {0}")]
    Shape(String),
}

impl WireError {
    pub fn shape(what: impl Into<String>) -> Self {
        WireError::Shape(what.into())
    }
}

/// A decoded wire value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Null,
    Bool(bool),
    Uint(u64),
    Bytes(Vec<u8>),
    Text(String),
    List(Vec<Node>),
    /// Entries are kept sorted and unique by key.
    Map(Vec<(String, Node)>),
}

impl Node {
    pub fn bytes(b: impl AsRef<[u8]>) -> Node {
        Node::Bytes(b.as_ref().to_vec())
    }

    pub fn text(s: impl Into<String>) -> Node {
        Node::Text(s.into())
    }

    pub fn map<I, K>(entries: I) -> Node
    where
        I: IntoIterator<Item = (K, Node)>,
        K: Into<String>,
    {
        let sorted: BTreeMap<String, Node> = entries.into_iter().map(|(k, v)| (k.into(), v)).collect();
        Node::Map(sorted.into_iter().collect())
    }

    pub fn opt<T>(value: Option<&T>, f: impl FnOnce(&T) -> Node) -> Node {
        value.map_or(Node::Null, f)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn tag(&self) -> u8 {
        match self {
            Node::Null => TAG_NULL,
            Node::Bool(_) => TAG_BOOL,
            Node::Uint(_) => TAG_UINT,
            Node::Bytes(_) => TAG_BYTES,
            Node::Text(_) => TAG_TEXT,
            Node::List(_) => TAG_LIST,
            Node::Map(_) => TAG_MAP,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let start = out.len();
        out.push(self.tag());
        out.extend_from_slice(&[0u8; 4]);
        match self {
            Node::Null => {}
            Node::Bool(b) => out.push(u8::from(*b)),
            Node::Uint(v) => out.extend_from_slice(&v.to_be_bytes()),
            Node::Bytes(b) => out.extend_from_slice(b),
            Node::Text(t) => out.extend_from_slice(t.as_bytes()),
            Node::List(items) => {
                for item in items {
                    item.encode_into(out);
                }
            }
            Node::Map(entries) => {
                for (k, v) in entries {
                    Node::Text(k.clone()).encode_into(out);
                    v.encode_into(out);
                }
            }
        }
        let body_len = out.len() - start - HEADER_LEN;
        let len = u32::try_from(body_len).expect("wire body exceeds u32::MAX");
        out[start + 1..start + HEADER_LEN].copy_from_slice(&len.to_be_bytes());
    }

    pub fn decode(input: &[u8]) -> Result<Node, WireError> {
        let (node, end) = decode_at(input, 0, 0)?;
        if end != input.len() {
            return Err(WireError::TrailingBytes { offset: end });
        }
        Ok(node)
    }

    // Accessors for typed decoding.

    pub fn as_bytes(&self) -> Result<&[u8], WireError> {
        match self {
            Node::Bytes(b) => Ok(b),
            _ => Err(WireError::shape("expected bytes")),
        }
    }

    pub fn as_array<const N: usize>(&self) -> Result<[u8; N], WireError> {
        self.as_bytes()?
            .try_into()
            .map_err(|_| WireError::shape(format!("expected {N} bytes")))
    }

    pub fn as_text(&self) -> Result<&str, WireError> {
        match self {
            Node::Text(t) => Ok(t),
            _ => Err(WireError::shape("expected text")),
        }
    }

    pub fn as_uint(&self) -> Result<u64, WireError> {
        match self {
            Node::Uint(v) => Ok(*v),
            _ => Err(WireError::shape("expected uint")),
        }
    }

    pub fn as_bool(&self) -> Result<bool, WireError> {
        match self {
            Node::Bool(v) => Ok(*v),
            _ => Err(WireError::shape("expected bool")),
        }
    }

    pub fn as_list(&self) -> Result<&[Node], WireError> {
        match self {
            Node::List(items) => Ok(items),
            _ => Err(WireError::shape("expected list")),
        }
    }

    pub fn as_map(&self) -> Result<&[(String, Node)], WireError> {
        match self {
            Node::Map(entries) => Ok(entries),
            _ => Err(WireError::shape("expected map")),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Node::Null)
    }

    /// A list of exactly `n` fields, read in order.
    pub fn fields(&self, what: &'static str, n: usize) -> Result<Fields<'_>, WireError> {
        let items = self.as_list().map_err(|_| WireError::shape(format!("{what}: expected list")))?;
        if items.len() != n {
            return Err(WireError::shape(format!("{what}: expected {n} fields, found {}", items.len())));
        }
        Ok(Fields { items: items.iter(), what })
    }

    /// Checks that this node is the expected text tag.
    pub fn expect_label(&self, label: &str) -> Result<(), WireError> {
        match self {
            Node::Text(t) if t == label => Ok(()),
            _ => Err(WireError::shape(format!("expected label {label}"))),
        }
    }
}

fn decode_at(input: &[u8], offset: usize, depth: usize) -> Result<(Node, usize), WireError> {
    if depth > MAX_DEPTH {
        return Err(WireError::TooDeep { offset });
    }
    if input.len() < offset + HEADER_LEN {
        return Err(WireError::Truncated { offset });
    }
    let tag = input[offset];
    let len = u32::from_be_bytes(input[offset + 1..offset + HEADER_LEN].try_into().expect("4 bytes")) as usize;
    let body_start = offset + HEADER_LEN;
    let body_end = body_start.checked_add(len).ok_or(WireError::Truncated { offset })?;
    if body_end > input.len() {
        return Err(WireError::Truncated { offset });
    }
    let body = &input[body_start..body_end];
    let node = match tag {
        TAG_NULL => {
            if len != 0 {
                return Err(WireError::BadLength { offset });
            }
            Node::Null
        }
        TAG_BOOL => match body {
            [0] => Node::Bool(false),
            [1] => Node::Bool(true),
            _ => return Err(WireError::BadLength { offset }),
        },
        TAG_UINT => {
            let arr: [u8; 8] = body.try_into().map_err(|_| WireError::BadLength { offset })?;
            Node::Uint(u64::from_be_bytes(arr))
        }
        TAG_BYTES => Node::Bytes(body.to_vec()),
        TAG_TEXT => Node::Text(
            std::str::from_utf8(body)
                .map_err(|_| WireError::InvalidUtf8 { offset })?
                .to_owned(),
        ),
        TAG_LIST => {
            let mut items = Vec::new();
            let mut pos = body_start;
            while pos < body_end {
                let (item, next) = decode_at(&input[..body_end], pos, depth + 1)?;
                items.push(item);
                pos = next;
            }
            Node::List(items)
        }
        TAG_MAP => {
            let mut entries: Vec<(String, Node)> = Vec::new();
            let mut pos = body_start;
            while pos < body_end {
                let key_offset = pos;
                let (key, next) = decode_at(&input[..body_end], pos, depth + 1)?;
                let Node::Text(key) = key else {
                    return Err(WireError::NonCanonical { offset: key_offset });
                };
                if let Some((prev, _)) = entries.last() {
                    if prev.as_bytes() >= key.as_bytes() {
                        return Err(WireError::NonCanonical { offset: key_offset });
                    }
                }
                let (value, next) = decode_at(&input[..body_end], next, depth + 1)?;
                entries.push((key, value));
                pos = next;
            }
            Node::Map(entries)
        }
        other => return Err(WireError::UnknownTag { offset, tag: other }),
    };
    Ok((node, body_end))
}

/// Sequential reader over the fields of a list node.
pub struct Fields<'a> {
    items: std::slice::Iter<'a, Node>,
    what: &'static str,
}

impl<'a> Fields<'a> {
    pub fn next(&mut self) -> Result<&'a Node, WireError> {
        self.items
            .next()
            .ok_or_else(|| WireError::shape(format!("{}: missing field", self.what)))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, WireError> {
        Ok(self.next()?.as_bytes()?.to_vec())
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        self.next()?.as_array()
    }

    pub fn text(&mut self) -> Result<String, WireError> {
        Ok(self.next()?.as_text()?.to_owned())
    }

    pub fn uint(&mut self) -> Result<u64, WireError> {
        self.next()?.as_uint()
    }

    pub fn label(&mut self, label: &str) -> Result<(), WireError> {
        self.next()?.expect_label(label)
    }

    pub fn decode<T: Wire>(&mut self) -> Result<T, WireError> {
        T::from_node(self.next()?)
    }

    pub fn decode_opt<T: Wire>(&mut self) -> Result<Option<T>, WireError> {
        let node = self.next()?;
        if node.is_null() {
            Ok(None)
        } else {
            T::from_node(node).map(Some)
        }
    }

    pub fn decode_list<T: Wire>(&mut self) -> Result<Vec<T>, WireError> {
        self.next()?.as_list()?.iter().map(T::from_node).collect()
    }
}

/// Types with a canonical wire representation.
pub trait Wire: Sized {
    fn to_node(&self) -> Node;
    fn from_node(node: &Node) -> Result<Self, WireError>;

    fn to_wire(&self) -> Vec<u8> {
        self.to_node().encode()
    }

    fn from_wire(bytes: &[u8]) -> Result<Self, WireError> {
        Self::from_node(&Node::decode(bytes)?)
    }
}

pub fn list_of<T: Wire>(items: &[T]) -> Node {
    Node::List(items.iter().map(Wire::to_node).collect())
}

// ---------------------------------------------------------------------------
// Encodings of the primitive key and ciphertext types

impl Wire for Digest {
    fn to_node(&self) -> Node {
        Node::bytes(self.0)
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        Ok(Digest(node.as_array()?))
    }
}

impl Wire for SigPublicKey {
    fn to_node(&self) -> Node {
        Node::bytes(self.0)
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        Ok(SigPublicKey(node.as_array()?))
    }
}

impl Wire for Signature {
    fn to_node(&self) -> Node {
        Node::bytes(self.0)
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        Ok(Signature(node.as_array()?))
    }
}

impl Wire for SealPublicKey {
    fn to_node(&self) -> Node {
        Node::bytes(self.0)
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        Ok(SealPublicKey(node.as_array()?))
    }
}

impl Wire for Ciphertext {
    fn to_node(&self) -> Node {
        Node::List(vec![Node::bytes(self.enc), Node::bytes(&self.body)])
    }

    fn from_node(node: &Node) -> Result<Self, WireError> {
        let mut f = node.fields("ciphertext", 2)?;
        Ok(Ciphertext { enc: f.array()?, body: f.bytes()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            Just(Node::Null),
            any::<bool>().prop_map(Node::Bool),
            any::<u64>().prop_map(Node::Uint),
            proptest::collection::vec(any::<u8>(), 0..40).prop_map(Node::Bytes),
            "[a-z0-9=:]{0,12}".prop_map(Node::Text),
        ];
        leaf.prop_recursive(4, 64, 6, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..6).prop_map(Node::List),
                proptest::collection::vec(("[a-z]{0,6}", inner), 0..6).prop_map(Node::map),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_decode_identity(node in arb_node()) {
            let bytes = node.encode();
            let back = Node::decode(&bytes).unwrap();
            prop_assert_eq!(&back, &node);
            prop_assert_eq!(back.encode(), bytes);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            if let Ok(node) = Node::decode(&bytes) {
                prop_assert_eq!(node.encode(), bytes);
            }
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(Node::Uint(1).encode(), vec![0x02, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(Node::text("ab").encode(), vec![0x04, 0, 0, 0, 2, b'a', b'b']);
        assert_eq!(Node::Null.encode(), vec![0x00, 0, 0, 0, 0]);
    }

    #[test]
    fn truncation_reports_offset() {
        let node = Node::List(vec![Node::bytes([1, 2, 3]), Node::text("xyz")]);
        let bytes = node.encode();
        // Cut into the second element's body: the outer list header claims
        // more than is present.
        let cut = &bytes[..bytes.len() - 1];
        assert_eq!(Node::decode(cut), Err(WireError::Truncated { offset: 0 }));
        // A list whose declared length is intact but whose inner element is
        // cut short reports the inner offset.
        let mut inner_cut = bytes.clone();
        inner_cut.truncate(bytes.len() - 1);
        let new_len = (inner_cut.len() - 5) as u32;
        inner_cut[1..5].copy_from_slice(&new_len.to_be_bytes());
        assert_eq!(Node::decode(&inner_cut), Err(WireError::Truncated { offset: 13 }));
    }

    #[test]
    fn rejects_trailing_and_unsorted() {
        let mut bytes = Node::Bool(true).encode();
        bytes.push(0);
        assert_eq!(Node::decode(&bytes), Err(WireError::TrailingBytes { offset: 6 }));

        let mut body = Node::text("b").encode();
        body.extend(Node::Null.encode());
        body.extend(Node::text("a").encode());
        body.extend(Node::Null.encode());
        let mut map = vec![TAG_MAP];
        map.extend((body.len() as u32).to_be_bytes());
        map.extend(body);
        assert!(matches!(Node::decode(&map), Err(WireError::NonCanonical { .. })));
    }

    #[test]
    fn map_constructor_canonicalizes() {
        let a = Node::map([("z", Node::Uint(1)), ("a", Node::Uint(2))]);
        let b = Node::map([("a", Node::Uint(2)), ("z", Node::Uint(1))]);
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn deep_nesting_is_an_error() {
        let mut node = Node::Null;
        for _ in 0..100 {
            node = Node::List(vec![node]);
        }
        assert!(matches!(Node::decode(&node.encode()), Err(WireError::TooDeep { .. })));
    }
}
