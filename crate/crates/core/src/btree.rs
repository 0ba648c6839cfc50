//! An in-memory B-tree.
//!
//! Keys and values live in every node (not only leaves). A tree of order `B`
//! holds at most `B - 1` keys per node and, except for the root, at least
//! `ceil(B / 2) - 1`. Insertion splits full nodes bottom-up; deletion repairs
//! underflow by borrowing from a sibling or merging with it.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Bound, RangeBounds};

pub const DEFAULT_ORDER: usize = 64;
pub const MIN_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateKey;

impl fmt::Display for DuplicateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("duplicate key")
    }
}

impl std::error::Error for DuplicateKey {}

#[derive(Clone)]
struct Node<K, V> {
    keys: Vec<K>,
    vals: Vec<V>,
    /// Empty for leaves, `keys.len() + 1` entries otherwise.
    children: Vec<Box<Node<K, V>>>,
}

impl<K, V> Node<K, V> {
    fn leaf() -> Self {
        Node {
            keys: Vec::new(),
            vals: Vec::new(),
            children: Vec::new(),
        }
    }

    fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

type Split<K, V> = Option<(K, V, Box<Node<K, V>>)>;

#[derive(Clone)]
pub struct BTree<K, V> {
    root: Box<Node<K, V>>,
    order: usize,
    len: usize,
}

impl<K: Ord, V> Default for BTree<K, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord, V> BTree<K, V> {
    pub fn new() -> Self {
        Self::with_order(DEFAULT_ORDER)
    }

    /// Creates a tree where every node has at most `order` children.
    ///
    /// Panics if `order < 4`.
    pub fn with_order(order: usize) -> Self {
        assert!(order >= MIN_ORDER, "B-tree order must be at least {MIN_ORDER}");
        BTree {
            root: Box::new(Node::leaf()),
            order,
            len: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of node levels; 1 for a lone root (including the empty tree).
    pub fn depth(&self) -> usize {
        let mut depth = 1;
        let mut node = &*self.root;
        while let Some(child) = node.children.first() {
            depth += 1;
            node = child;
        }
        depth
    }

    fn min_keys(&self) -> usize {
        self.order.div_ceil(2) - 1
    }

    pub fn clear(&mut self) {
        self.root = Box::new(Node::leaf());
        self.len = 0;
    }

    pub fn insert(&mut self, key: K, val: V) -> Result<(), DuplicateKey> {
        let order = self.order;
        if let Some((mid_key, mid_val, right)) = insert_rec(&mut self.root, key, val, order)? {
            let left = std::mem::replace(&mut self.root, Box::new(Node::leaf()));
            self.root.keys.push(mid_key);
            self.root.vals.push(mid_val);
            self.root.children.push(left);
            self.root.children.push(right);
        }
        self.len += 1;
        Ok(())
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        let mut node = &*self.root;
        loop {
            match node.keys.binary_search(key) {
                Ok(i) => return Some(&node.vals[i]),
                Err(_) if node.is_leaf() => return None,
                Err(i) => node = &node.children[i],
            }
        }
    }

    pub fn get_mut(&mut self, key: &K) -> Option<&mut V> {
        let mut node = &mut *self.root;
        loop {
            match node.keys.binary_search(key) {
                Ok(i) => return Some(&mut node.vals[i]),
                Err(_) if node.is_leaf() => return None,
                Err(i) => node = &mut node.children[i],
            }
        }
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.get(key).is_some()
    }

    /// Removes `key`, returning its value if it was present.
    pub fn remove(&mut self, key: &K) -> Option<V> {
        let min = self.min_keys();
        let (_, val) = remove_rec(&mut self.root, key, min)?;
        if self.root.keys.is_empty() && !self.root.is_leaf() {
            let child = self.root.children.pop().expect("internal root has a child");
            self.root = child;
        }
        self.len -= 1;
        Some(val)
    }

    pub fn first(&self) -> Option<(&K, &V)> {
        self.iter().next()
    }

    /// In-order iteration over every entry.
    pub fn iter(&self) -> Iter<'_, K, V> {
        self.range_by(|_| false, None)
    }

    /// Entries whose keys fall within `range`.
    pub fn range<'a, R>(&'a self, range: R) -> Iter<'a, K, V>
    where
        R: RangeBounds<K> + 'a,
    {
        let below = |k: &K| match range.start_bound() {
            Bound::Included(lo) => k < lo,
            Bound::Excluded(lo) => k <= lo,
            Bound::Unbounded => false,
        };
        let mut iter = self.range_by(below, None);
        iter.above = Some(Box::new(move |k: &K| match range.end_bound() {
            Bound::Included(hi) => k > hi,
            Bound::Excluded(hi) => k >= hi,
            Bound::Unbounded => false,
        }));
        iter
    }

    /// In-order iteration starting at the first key for which `below`
    /// returns false. `below` must be monotone over the key order (true for
    /// a prefix of keys, false afterwards). When `above` is given, iteration
    /// stops at the first key it accepts.
    pub fn range_by<'a>(
        &'a self,
        below: impl Fn(&K) -> bool,
        above: Option<Box<dyn Fn(&K) -> bool + 'a>>,
    ) -> Iter<'a, K, V> {
        let mut stack = Vec::new();
        let mut node = &*self.root;
        loop {
            let idx = node.keys.partition_point(|k| below(k));
            stack.push((node, idx));
            if node.is_leaf() {
                break;
            }
            node = &node.children[idx];
        }
        Iter { stack, above }
    }

    /// Checks every structural invariant: per-node occupancy, uniform leaf
    /// depth, strictly increasing keys and the cached length.
    pub fn validate(&self) -> Result<(), String> {
        let min = self.min_keys();
        let max = self.order - 1;
        let mut leaf_depth = None;
        let mut count = 0;
        validate_rec(&self.root, true, min, max, None, None, 1, &mut leaf_depth, &mut count)?;
        if count != self.len {
            return Err(format!("len is {} but tree holds {count} keys", self.len));
        }
        Ok(())
    }
}

impl<K: Ord + Clone, V> BTree<K, V> {
    /// Removes and returns the smallest entry.
    pub fn pop_first(&mut self) -> Option<(K, V)> {
        let key = self.first()?.0.clone();
        let val = self.remove(&key)?;
        Some((key, val))
    }
}

impl<K: Ord + fmt::Debug, V: fmt::Debug> fmt::Debug for BTree<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

pub struct Iter<'a, K, V> {
    stack: Vec<(&'a Node<K, V>, usize)>,
    above: Option<Box<dyn Fn(&K) -> bool + 'a>>,
}

impl<'a, K, V> Iterator for Iter<'a, K, V> {
    type Item = (&'a K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (node, idx) = self.stack.last_mut()?;
            let node: &'a Node<K, V> = node;
            if *idx < node.keys.len() {
                let i = *idx;
                *idx += 1;
                if !node.is_leaf() {
                    let mut child: &'a Node<K, V> = &node.children[i + 1];
                    loop {
                        self.stack.push((child, 0));
                        if child.is_leaf() {
                            break;
                        }
                        child = &child.children[0];
                    }
                }
                let key = &node.keys[i];
                if let Some(above) = &self.above {
                    if above(key) {
                        self.stack.clear();
                        return None;
                    }
                }
                return Some((key, &node.vals[i]));
            }
            self.stack.pop();
        }
    }
}

fn insert_rec<K: Ord, V>(
    node: &mut Node<K, V>,
    key: K,
    val: V,
    order: usize,
) -> Result<Split<K, V>, DuplicateKey> {
    let idx = match node.keys.binary_search(&key) {
        Ok(_) => return Err(DuplicateKey),
        Err(i) => i,
    };
    if node.is_leaf() {
        node.keys.insert(idx, key);
        node.vals.insert(idx, val);
    } else if let Some((k, v, right)) = insert_rec(&mut node.children[idx], key, val, order)? {
        node.keys.insert(idx, k);
        node.vals.insert(idx, v);
        node.children.insert(idx + 1, right);
    }
    if node.keys.len() < order {
        return Ok(None);
    }
    // Node holds `order` keys: promote the middle one.
    let mid = node.keys.len() / 2;
    let mut right = Node {
        keys: node.keys.split_off(mid + 1),
        vals: node.vals.split_off(mid + 1),
        children: Vec::new(),
    };
    if !node.is_leaf() {
        right.children = node.children.split_off(mid + 1);
    }
    let mid_key = node.keys.pop().expect("split of non-empty node");
    let mid_val = node.vals.pop().expect("split of non-empty node");
    Ok(Some((mid_key, mid_val, Box::new(right))))
}

fn remove_rec<K: Ord, V>(node: &mut Node<K, V>, key: &K, min: usize) -> Option<(K, V)> {
    match node.keys.binary_search(key) {
        Ok(i) if node.is_leaf() => Some((node.keys.remove(i), node.vals.remove(i))),
        Ok(i) => {
            let (pk, pv) = remove_max(&mut node.children[i], min);
            let k = std::mem::replace(&mut node.keys[i], pk);
            let v = std::mem::replace(&mut node.vals[i], pv);
            repair_child(node, i, min);
            Some((k, v))
        }
        Err(_) if node.is_leaf() => None,
        Err(i) => {
            let removed = remove_rec(&mut node.children[i], key, min)?;
            repair_child(node, i, min);
            Some(removed)
        }
    }
}

fn remove_max<K: Ord, V>(node: &mut Node<K, V>, min: usize) -> (K, V) {
    if node.is_leaf() {
        let k = node.keys.pop().expect("remove_max on empty leaf");
        let v = node.vals.pop().expect("remove_max on empty leaf");
        return (k, v);
    }
    let last = node.children.len() - 1;
    let out = remove_max(&mut node.children[last], min);
    repair_child(node, last, min);
    out
}

/// Restores the occupancy bound of `node.children[i]` after a removal.
fn repair_child<K, V>(node: &mut Node<K, V>, i: usize, min: usize) {
    if node.children[i].keys.len() >= min {
        return;
    }
    if i > 0 && node.children[i - 1].keys.len() > min {
        // Rotate right through the separator.
        let (left, right) = node.children.split_at_mut(i);
        let left = &mut left[i - 1];
        let child = &mut right[0];
        let lk = left.keys.pop().unwrap();
        let lv = left.vals.pop().unwrap();
        let sk = std::mem::replace(&mut node.keys[i - 1], lk);
        let sv = std::mem::replace(&mut node.vals[i - 1], lv);
        child.keys.insert(0, sk);
        child.vals.insert(0, sv);
        if let Some(c) = left.children.pop() {
            child.children.insert(0, c);
        }
    } else if i + 1 < node.children.len() && node.children[i + 1].keys.len() > min {
        // Rotate left through the separator.
        let (left, right) = node.children.split_at_mut(i + 1);
        let child = &mut left[i];
        let sib = &mut right[0];
        let rk = sib.keys.remove(0);
        let rv = sib.vals.remove(0);
        let sk = std::mem::replace(&mut node.keys[i], rk);
        let sv = std::mem::replace(&mut node.vals[i], rv);
        child.keys.push(sk);
        child.vals.push(sv);
        if !sib.children.is_empty() {
            child.children.push(sib.children.remove(0));
        }
    } else {
        let li = if i > 0 { i - 1 } else { i };
        merge_children(node, li);
    }
}

/// Merges `children[li + 1]` and the separator `keys[li]` into `children[li]`.
fn merge_children<K, V>(node: &mut Node<K, V>, li: usize) {
    let right = node.children.remove(li + 1);
    let sk = node.keys.remove(li);
    let sv = node.vals.remove(li);
    let left = &mut node.children[li];
    let Node {
        keys,
        vals,
        children,
    } = *right;
    left.keys.push(sk);
    left.vals.push(sv);
    left.keys.extend(keys);
    left.vals.extend(vals);
    left.children.extend(children);
}

#[allow(clippy::too_many_arguments)]
fn validate_rec<K: Ord, V>(
    node: &Node<K, V>,
    is_root: bool,
    min: usize,
    max: usize,
    lo: Option<&K>,
    hi: Option<&K>,
    depth: usize,
    leaf_depth: &mut Option<usize>,
    count: &mut usize,
) -> Result<(), String> {
    let n = node.keys.len();
    if n != node.vals.len() {
        return Err(format!("depth {depth}: {n} keys but {} values", node.vals.len()));
    }
    if n > max {
        return Err(format!("depth {depth}: node holds {n} keys, max {max}"));
    }
    if !is_root && n < min {
        return Err(format!("depth {depth}: node holds {n} keys, min {min}"));
    }
    if is_root && n == 0 && !node.is_leaf() {
        return Err("empty internal root".to_string());
    }
    for w in node.keys.windows(2) {
        if w[0].cmp(&w[1]) != Ordering::Less {
            return Err(format!("depth {depth}: keys out of order"));
        }
    }
    if let (Some(lo), Some(first)) = (lo, node.keys.first()) {
        if first <= lo {
            return Err(format!("depth {depth}: key below parent separator"));
        }
    }
    if let (Some(hi), Some(last)) = (hi, node.keys.last()) {
        if last >= hi {
            return Err(format!("depth {depth}: key above parent separator"));
        }
    }
    *count += n;
    if node.is_leaf() {
        match leaf_depth {
            None => *leaf_depth = Some(depth),
            Some(d) if *d != depth => {
                return Err(format!("leaves at depths {d} and {depth}"));
            }
            _ => {}
        }
        return Ok(());
    }
    if node.children.len() != n + 1 {
        return Err(format!(
            "depth {depth}: {n} keys but {} children",
            node.children.len()
        ));
    }
    for (i, child) in node.children.iter().enumerate() {
        let clo = if i == 0 { lo } else { Some(&node.keys[i - 1]) };
        let chi = if i == n { hi } else { Some(&node.keys[i]) };
        validate_rec(child, false, min, max, clo, chi, depth + 1, leaf_depth, count)?;
    }
    Ok(())
}
