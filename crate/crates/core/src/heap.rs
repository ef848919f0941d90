//! Binary min-heap over a fixed index set with a position map, so the key of
//! any element can be read or changed in O(log n).

/// Elements are `0..n`; ordering is by (key, index), so equal keys pop the
/// smallest index first.
#[derive(Debug, Clone)]
pub struct IndexedMinHeap {
    keys: Vec<f64>,
    heap: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexedMinHeap {
    /// Heap over `keys.len()` elements, built in O(n).
    pub fn new(keys: Vec<f64>) -> Self {
        let n = keys.len();
        let mut h = Self {
            keys,
            heap: (0..n).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// (index, key) of the minimum.
    pub fn peek(&self) -> Option<(usize, f64)> {
        self.heap.first().map(|&i| (i, self.keys[i]))
    }

    pub fn key(&self, i: usize) -> f64 {
        self.keys[i]
    }

    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    /// Change the key of element `i`, restoring heap order in either direction.
    pub fn set_key(&mut self, i: usize, key: f64) {
        let old = self.keys[i];
        self.keys[i] = key;
        let p = self.pos[i];
        if key < old {
            self.sift_up(p);
        } else {
            self.sift_down(p);
        }
    }

    /// Apply many key changes at once. Large batches rewrite the keys and
    /// re-heapify in O(n) instead of sifting each one.
    pub fn set_keys(&mut self, updates: &[(usize, f64)]) {
        let n = self.heap.len();
        let depth = (usize::BITS - n.leading_zeros()) as usize;
        if updates.len() * depth < n {
            for &(i, k) in updates {
                self.set_key(i, k);
            }
            return;
        }
        for &(i, k) in updates {
            self.keys[i] = k;
        }
        for p in (0..n / 2).rev() {
            self.sift_down(p);
        }
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (ka, kb) = (self.keys[a], self.keys[b]);
        ka < kb || (ka == kb && a < b)
    }

    fn swap(&mut self, x: usize, y: usize) {
        self.heap.swap(x, y);
        self.pos[self.heap[x]] = x;
        self.pos[self.heap[y]] = y;
    }

    fn sift_up(&mut self, mut p: usize) {
        while p > 0 {
            let parent = (p - 1) / 2;
            if self.less(self.heap[p], self.heap[parent]) {
                self.swap(p, parent);
                p = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut p: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * p + 1, 2 * p + 2);
            let mut m = p;
            if l < n && self.less(self.heap[l], self.heap[m]) {
                m = l;
            }
            if r < n && self.less(self.heap[r], self.heap[m]) {
                m = r;
            }
            if m == p {
                break;
            }
            self.swap(p, m);
            p = m;
        }
    }
}
