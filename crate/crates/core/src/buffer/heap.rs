// Addressable binary max-heap over small integer item ids.

#[derive(Clone, Debug, Default)]
pub struct IndexedMaxHeap<K> {
    heap: Vec<(K, usize)>,
    positions: Vec<Option<usize>>,
}

impl<K: Ord + Copy> IndexedMaxHeap<K> {
    pub fn new() -> Self {
        Self {
            heap: Vec::new(),
            positions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.positions.get(item).copied().flatten().is_some()
    }

    pub fn key(&self, item: usize) -> Option<K> {
        let pos = self.positions.get(item).copied().flatten()?;
        Some(self.heap[pos].0)
    }

    pub fn peek(&self) -> Option<(K, usize)> {
        self.heap.first().copied()
    }

    /// Inserts `item` or changes its key.
    pub fn upsert(&mut self, item: usize, key: K) {
        if item >= self.positions.len() {
            self.positions.resize(item + 1, None);
        }
        match self.positions[item] {
            Some(pos) => {
                let old = self.heap[pos].0;
                self.heap[pos].0 = key;
                if key > old {
                    self.sift_up(pos);
                } else {
                    self.sift_down(pos);
                }
            }
            None => {
                let pos = self.heap.len();
                self.heap.push((key, item));
                self.positions[item] = Some(pos);
                self.sift_up(pos);
            }
        }
    }

    pub fn remove(&mut self, item: usize) -> Option<K> {
        let pos = self.positions.get_mut(item)?.take()?;
        let (key, _) = self.heap.swap_remove(pos);
        if pos < self.heap.len() {
            self.positions[self.heap[pos].1] = Some(pos);
            self.sift_up(pos);
            self.sift_down(pos);
        }
        Some(key)
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.positions[self.heap[a].1] = Some(a);
        self.positions[self.heap[b].1] = Some(b);
    }

    fn sift_up(&mut self, mut pos: usize) {
        while pos > 0 {
            let parent = (pos - 1) / 2;
            if self.heap[pos].0 <= self.heap[parent].0 {
                break;
            }
            self.swap(pos, parent);
            pos = parent;
        }
    }

    fn sift_down(&mut self, mut pos: usize) {
        let len = self.heap.len();
        loop {
            let left = 2 * pos + 1;
            if left >= len {
                break;
            }
            let right = left + 1;
            let child = if right < len && self.heap[right].0 > self.heap[left].0 {
                right
            } else {
                left
            };
            if self.heap[child].0 <= self.heap[pos].0 {
                break;
            }
            self.swap(pos, child);
            pos = child;
        }
    }
}
