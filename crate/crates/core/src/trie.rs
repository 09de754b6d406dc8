//! Prefix tree over tokenized keywords.
//!
//! Keyword ends are explicit EOS edges, so "finish here" is just another
//! allowed suffix token. Children are kept sorted by token id, which makes
//! iteration order, enumeration and the binary encoding canonical.

use thiserror::Error;

use crate::vocab::TokenId;

pub const MAGIC: &[u8; 4] = b"TRIE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrieError {
    #[error("empty keyword")]
    EmptyKeyword,
    #[error("reserved token in keyword")]
    ReservedToken,
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("keyword {index}: {source}")]
    AtKeyword {
        index: usize,
        #[source]
        source: Box<TrieError>,
    },
    #[error("malformed trie at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: Vec<(TokenId, NodeId)>,
}

/// Allowed next tokens below a prefix. The dense mask it stands for is 0 for
/// every allowed id and `-inf` elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuffixSet {
    pub allowed: Vec<TokenId>,
    vocab_size: usize,
}

impl SuffixSet {
    pub fn is_allowed(&self, id: TokenId) -> bool {
        self.allowed.binary_search(&id).is_ok()
    }

    pub fn mask(&self, id: TokenId) -> f64 {
        if self.is_allowed(id) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn dense_mask(&self) -> Vec<f64> {
        (0..self.vocab_size).map(|i| self.mask(TokenId(i as u32))).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Trie {
    nodes: Vec<Node>,
    vocab_size: usize,
    keyword_count: usize,
}

impl PartialEq for Trie {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

impl Eq for Trie {}

impl Trie {
    pub fn new(vocab_size: usize) -> Self {
        Self { nodes: vec![Node::default()], vocab_size, keyword_count: 0 }
    }

    /// Fold of [`Trie::insert`] over `keywords`.
    pub fn build<I, K>(vocab_size: usize, keywords: I) -> Result<Self, TrieError>
    where
        I: IntoIterator<Item = K>,
        K: AsRef<[TokenId]>,
    {
        let mut trie = Self::new(vocab_size);
        for (index, kw) in keywords.into_iter().enumerate() {
            trie.insert(kw.as_ref())
                .map_err(|e| TrieError::AtKeyword { index, source: Box::new(e) })?;
        }
        Ok(trie)
    }

    /// Insert a keyword (EOS is appended internally). Returns whether it was new.
    pub fn insert(&mut self, keyword: &[TokenId]) -> Result<bool, TrieError> {
        if keyword.is_empty() {
            return Err(TrieError::EmptyKeyword);
        }
        for &t in keyword {
            if t == TokenId::BOS || t == TokenId::EOS {
                return Err(TrieError::ReservedToken);
            }
            if t.index() >= self.vocab_size {
                return Err(TrieError::TokenOutOfRange { id: t.0, vocab_size: self.vocab_size });
            }
        }
        let mut node = NodeId::ROOT;
        let mut fresh = false;
        for &t in keyword.iter().chain(std::iter::once(&TokenId::EOS)) {
            (node, fresh) = self.child_or_insert(node, t);
        }
        if fresh {
            self.keyword_count += 1;
        }
        Ok(fresh)
    }

    fn child_or_insert(&mut self, node: NodeId, token: TokenId) -> (NodeId, bool) {
        let next = NodeId(self.nodes.len() as u32);
        let children = &mut self.nodes[node.0 as usize].children;
        match children.binary_search_by_key(&token, |&(t, _)| t) {
            Ok(i) => (children[i].1, false),
            Err(i) => {
                children.insert(i, (token, next));
                self.nodes.push(Node::default());
                (next, true)
            }
        }
    }

    pub fn keyword_count(&self) -> usize {
        self.keyword_count
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyword_count == 0
    }

    pub fn children(&self, node: NodeId) -> &[(TokenId, NodeId)] {
        &self.nodes[node.0 as usize].children
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let children = self.children(node);
        children
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|i| children[i].1)
    }

    /// Node reached by following `prefix` from the root, if it is a path.
    pub fn node(&self, prefix: &[TokenId]) -> Option<NodeId> {
        prefix.iter().try_fold(NodeId::ROOT, |n, &t| self.child(n, t))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.child(node, TokenId::EOS).is_some()
    }

    pub fn suffixes(&self, prefix: &[TokenId]) -> SuffixSet {
        let allowed = match self.node(prefix) {
            Some(n) => self.children(n).iter().map(|&(t, _)| t).collect(),
            None => Vec::new(),
        };
        SuffixSet { allowed, vocab_size: self.vocab_size }
    }

    pub fn contains(&self, keyword: &[TokenId]) -> bool {
        !keyword.is_empty() && self.node(keyword).is_some_and(|n| self.is_terminal(n))
    }

    /// All keywords in canonical order (token-id lexicographic, shorter first).
    pub fn keywords(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::with_capacity(self.keyword_count);
        let mut path = Vec::new();
        self.collect(NodeId::ROOT, &mut path, &mut out);
        out
    }

    fn collect(&self, node: NodeId, path: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
        for &(t, child) in self.children(node) {
            if t == TokenId::EOS {
                out.push(path.clone());
            } else {
                path.push(t);
                self.collect(child, path, out);
                path.pop();
            }
        }
    }

    /// Binary encoding: `TRIE`, version u32, vocab size u32, then preorder node
    /// records `(child count u32, [(token u32, child record offset u64)])`.
    /// Little-endian throughout; offsets are absolute.
    pub fn to_bytes(&self) -> Vec<u8> {
        // children always have larger arena ids than their parent
        let mut subtree = vec![0u64; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            subtree[id] = record_len(node.children.len())
                + node.children.iter().map(|&(_, c)| subtree[c.0 as usize]).sum::<u64>();
        }

        let mut out = Vec::with_capacity(12 + subtree[0] as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());

        let mut stack = vec![(NodeId::ROOT, out.len() as u64)];
        while let Some((node, offset)) = stack.pop() {
            debug_assert_eq!(offset, out.len() as u64);
            let children = self.children(node);
            out.extend_from_slice(&(children.len() as u32).to_le_bytes());
            let mut next = offset + record_len(children.len());
            let mut pending = Vec::with_capacity(children.len());
            for &(t, c) in children {
                out.extend_from_slice(&t.0.to_le_bytes());
                out.extend_from_slice(&next.to_le_bytes());
                pending.push((c, next));
                next += subtree[c.0 as usize];
            }
            stack.extend(pending.into_iter().rev());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrieError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.error(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.error(4, &format!("unsupported format version {version}")));
        }
        let vocab_size = r.u32()? as usize;

        let mut trie = Trie::new(vocab_size);
        let root_children = r.record(vocab_size)?;
        let mut stack = vec![(NodeId::ROOT, root_children, 0usize)];
        while let Some((parent, entries, cursor)) = stack.last_mut() {
            if *cursor == entries.len() {
                stack.pop();
                continue;
            }
            let (token, offset) = entries[*cursor];
            *cursor += 1;
            let parent = *parent;
            if offset != r.pos as u64 {
                return Err(r.error(r.pos, &format!("child offset {offset} does not match record position")));
            }
            let record_at = r.pos;
            let children = r.record(vocab_size)?;
            if token == TokenId::EOS {
                if !children.is_empty() {
                    return Err(r.error(record_at, "EOS node has children"));
                }
                trie.keyword_count += 1;
            } else if children.is_empty() {
                return Err(r.error(record_at, "non-terminal leaf"));
            }
            let id = NodeId(trie.nodes.len() as u32);
            trie.nodes.push(Node::default());
            trie.nodes[parent.0 as usize].children.push((token, id));
            stack.push((id, children, 0));
        }
        if r.pos != bytes.len() {
            return Err(r.error(r.pos, "trailing bytes"));
        }
        Ok(trie)
    }
}

fn record_len(children: usize) -> u64 {
    4 + 12 * children as u64
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn error(&self, offset: usize, reason: &str) -> TrieError {
        TrieError::Format { offset, reason: reason.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&[u8], TrieError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(self.pos, "unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrieError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrieError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// One node record, with child tokens validated.
    fn record(&mut self, vocab_size: usize) -> Result<Vec<(TokenId, u64)>, TrieError> {
        let count = self.u32()? as usize;
        if count > (self.bytes.len() - self.pos) / 12 {
            return Err(self.error(self.pos - 4, "child count exceeds remaining data"));
        }
        let mut entries: Vec<(TokenId, u64)> = Vec::with_capacity(count);
        for _ in 0..count {
            let at = self.pos;
            let token = TokenId(self.u32()?);
            let offset = self.u64()?;
            if token.index() >= vocab_size || token == TokenId::BOS {
                return Err(self.error(at, &format!("invalid child token {token}")));
            }
            if entries.last().is_some_and(|&(prev, _)| prev >= token) {
                return Err(self.error(at, "children not strictly sorted"));
            }
            entries.push((token, offset));
        }
        Ok(entries)
    }
}
