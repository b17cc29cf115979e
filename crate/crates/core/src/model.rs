//! Vocabulary, spacetime cell grid, sufficient statistics and the smoothed
//! estimators built on top of them.
//!
//! All count tables are maintained incrementally. A token's topic label is
//! reflected in exactly two places: the global topic-word matrix and the
//! topic histogram of the cell that holds the token.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Result, RostError};
use crate::num::Scalar;

/// Side length of a spatial cell when nothing else is configured.
pub const DEFAULT_CELL_SIZE: u32 = 64;

/// A spacetime location. `x`/`y` are in abstract spatial units (pixels),
/// `t` is a 0-indexed timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Position {
    pub x: i32,
    pub y: i32,
    pub t: u32,
}

impl Position {
    pub fn new(x: i32, y: i32, t: u32) -> Self {
        Self { x, y, t }
    }

    /// Floors fractional coordinates onto the integer grid.
    pub fn from_f64(x: f64, y: f64, t: u32) -> Self {
        Self {
            x: x.floor() as i32,
            y: y.floor() as i32,
            t,
        }
    }
}

/// Grid address of a cell. Ordered by `(ct, cy, cx)`, which is the sweep
/// order of the batch sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub cx: i32,
    pub cy: i32,
    pub ct: u32,
}

impl CellKey {
    pub fn new(cx: i32, cy: i32, ct: u32) -> Self {
        Self { cx, cy, ct }
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.ct, self.cy, self.cx).cmp(&(other.ct, other.cy, other.cx))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cell containing `pos`. Temporal width is one timestep.
pub fn cell_of(pos: Position, cell_size: u32) -> CellKey {
    assert!(cell_size > 0, "cell size must be positive");
    let s = cell_size as i32;
    CellKey {
        cx: pos.x.div_euclid(s),
        cy: pos.y.div_euclid(s),
        ct: pos.t,
    }
}

/// Which cells make up the context `G(c)` of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    /// The cell plus its 4 spatial and 2 temporal axis neighbours.
    #[default]
    VonNeumann,
    /// Only the cell itself; cells then behave as LDA documents.
    SelfOnly,
}

impl Neighborhood {
    pub fn keys(self, key: CellKey) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(7);
        out.push(key);
        if self == Neighborhood::SelfOnly {
            return out;
        }
        let CellKey { cx, cy, ct } = key;
        out.push(CellKey::new(cx - 1, cy, ct));
        out.push(CellKey::new(cx + 1, cy, ct));
        out.push(CellKey::new(cx, cy - 1, ct));
        out.push(CellKey::new(cx, cy + 1, ct));
        if let Some(prev) = ct.checked_sub(1) {
            out.push(CellKey::new(cx, cy, prev));
        }
        out.push(CellKey::new(cx, cy, ct + 1));
        out
    }
}

/// Handle of a token inside a [`World`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub usize);

/// One observed word. `topic` is `None` until the token is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordToken {
    pub word: u32,
    pub pos: Position,
    pub topic: Option<u32>,
}

/// Global topic-word counts `n_k^v` and per-topic totals.
#[derive(Debug, Clone)]
pub struct TopicCounts<F> {
    counts: Vec<u32>,
    topic_totals: Vec<u32>,
    vocab_size: usize,
    topics: usize,
    beta: F,
}

impl<F: Scalar> TopicCounts<F> {
    pub fn new(topics: usize, vocab_size: usize, beta: F) -> Self {
        Self {
            counts: vec![0; topics * vocab_size],
            topic_totals: vec![0; topics],
            vocab_size,
            topics,
            beta,
        }
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    #[inline]
    pub fn count(&self, topic: usize, word: usize) -> u32 {
        self.counts[topic * self.vocab_size + word]
    }

    #[inline]
    pub fn total(&self, topic: usize) -> u32 {
        self.topic_totals[topic]
    }

    pub fn totals(&self) -> &[u32] {
        &self.topic_totals
    }

    /// Row `k` of the count matrix.
    pub fn row(&self, topic: usize) -> &[u32] {
        &self.counts[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    pub(crate) fn increment(&mut self, topic: usize, word: usize) {
        self.counts[topic * self.vocab_size + word] += 1;
        self.topic_totals[topic] += 1;
    }

    pub(crate) fn decrement(&mut self, topic: usize, word: usize) {
        let slot = &mut self.counts[topic * self.vocab_size + word];
        *slot = slot
            .checked_sub(1)
            .expect("topic-word count underflow: count tables are corrupt");
        self.topic_totals[topic] -= 1;
    }

    /// `phi_k(v) = (n_k^v + beta) / (n_k + V beta)`.
    pub fn phi(&self, topic: usize) -> Vec<F> {
        let denom = F::from_usize_lossy(self.topic_totals[topic] as usize)
            + F::from_usize_lossy(self.vocab_size) * self.beta;
        self.row(topic)
            .iter()
            .map(|&n| (F::from_usize_lossy(n as usize) + self.beta) / denom)
            .collect()
    }

    /// Single entry of `phi`, without materializing the row.
    #[inline]
    pub fn phi_at(&self, topic: usize, word: usize) -> F {
        (F::from_usize_lossy(self.count(topic, word) as usize) + self.beta)
            / (F::from_usize_lossy(self.topic_totals[topic] as usize)
                + F::from_usize_lossy(self.vocab_size) * self.beta)
    }
}

/// A spacetime bucket of tokens with its topic histogram `n_c^k`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub key: CellKey,
    pub tokens: Vec<TokenId>,
    pub topic_hist: Vec<u32>,
}

/// Cell decomposition of spacetime, the per-timestep membership `M_t`
/// and the context prior `alpha`.
#[derive(Debug, Clone)]
pub struct CellGrid<F> {
    cell_size: u32,
    alpha: F,
    topics: usize,
    neighborhood: Neighborhood,
    cells: Vec<Cell>,
    index: HashMap<CellKey, usize>,
    // time_index[t] holds cell indices sorted by (cy, cx)
    time_index: Vec<Vec<usize>>,
}

impl<F: Scalar> CellGrid<F> {
    pub fn new(cell_size: u32, topics: usize, alpha: F) -> Self {
        Self {
            cell_size,
            alpha,
            topics,
            neighborhood: Neighborhood::VonNeumann,
            cells: Vec::new(),
            index: HashMap::new(),
            time_index: Vec::new(),
        }
    }

    pub fn cell_size(&self) -> u32 {
        self.cell_size
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn neighborhood_kind(&self) -> Neighborhood {
        self.neighborhood
    }

    pub fn cell_of(&self, pos: Position) -> CellKey {
        cell_of(pos, self.cell_size)
    }

    pub fn neighborhood(&self, key: CellKey) -> Vec<CellKey> {
        self.neighborhood.keys(key)
    }

    pub fn cell(&self, key: CellKey) -> Option<&Cell> {
        self.index.get(&key).map(|&i| &self.cells[i])
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub(crate) fn cell_by_index(&self, idx: usize) -> &Cell {
        &self.cells[idx]
    }

    pub(crate) fn cell_index(&self, key: CellKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    /// Number of timesteps ingested so far.
    pub fn num_timesteps(&self) -> usize {
        self.time_index.len()
    }

    /// Keys of the cells holding at least one token with `pos.t == t`.
    pub fn cells_at(&self, t: u32) -> Vec<CellKey> {
        self.time_index
            .get(t as usize)
            .map(|v| v.iter().map(|&i| self.cells[i].key).collect())
            .unwrap_or_default()
    }

    pub(crate) fn cell_indices_at(&self, t: u32) -> &[usize] {
        self.time_index
            .get(t as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Raw summed histogram over `G(key)`, no smoothing.
    pub fn neighborhood_hist(&self, key: CellKey) -> Vec<u32> {
        let mut hist = vec![0u32; self.topics];
        for nk in self.neighborhood(key) {
            if let Some(cell) = self.cell(nk) {
                for (h, &c) in hist.iter_mut().zip(&cell.topic_hist) {
                    *h += c;
                }
            }
        }
        hist
    }

    /// `theta(k) = (n_G^k + alpha) / (sum_k n_G^k + K alpha)`.
    pub fn theta(&self, key: CellKey) -> Vec<F> {
        smooth(&self.neighborhood_hist(key), self.alpha)
    }

    fn get_or_insert(&mut self, key: CellKey) -> usize {
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.cells.len();
        self.cells.push(Cell {
            key,
            tokens: Vec::new(),
            topic_hist: vec![0; self.topics],
        });
        self.index.insert(key, i);
        let t = key.ct as usize;
        if self.time_index.len() <= t {
            self.time_index.resize_with(t + 1, Vec::new);
        }
        let cells = &self.cells;
        let slot = &mut self.time_index[t];
        let at = slot
            .binary_search_by(|&j| cells[j].key.cmp(&key))
            .unwrap_err();
        slot.insert(at, i);
        i
    }
}

/// Normalizes a raw histogram with symmetric Dirichlet smoothing.
pub(crate) fn smooth<F: Scalar>(hist: &[u32], alpha: F) -> Vec<F> {
    let total: u64 = hist.iter().map(|&h| h as u64).sum();
    let denom = F::from_usize_lossy(total as usize) + F::from_usize_lossy(hist.len()) * alpha;
    hist.iter()
        .map(|&h| (F::from_usize_lossy(h as usize) + alpha) / denom)
        .collect()
}

#[derive(Debug, Clone)]
struct TokenSlot {
    token: WordToken,
    cell: usize,
}

/// The complete model state: tokens, cells and topic counts.
#[derive(Debug, Clone)]
pub struct World<F> {
    counts: TopicCounts<F>,
    grid: CellGrid<F>,
    tokens: Vec<TokenSlot>,
}

impl<F: Scalar> World<F> {
    pub fn new(vocab_size: usize, topics: usize, alpha: F, beta: F, cell_size: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(RostError::InvalidParameter("vocabulary size must be positive".into()));
        }
        if topics == 0 {
            return Err(RostError::InvalidParameter("topic count must be positive".into()));
        }
        if alpha.is_nan() || alpha <= F::zero() || beta.is_nan() || beta <= F::zero() {
            return Err(RostError::InvalidParameter("alpha and beta must be positive".into()));
        }
        if cell_size == 0 {
            return Err(RostError::InvalidParameter("cell size must be positive".into()));
        }
        Ok(Self {
            counts: TopicCounts::new(topics, vocab_size, beta),
            grid: CellGrid::new(cell_size, topics, alpha),
            tokens: Vec::new(),
        })
    }

    /// Replaces the neighbourhood structure. Only meaningful before data
    /// arrives or for read-only comparisons.
    pub fn with_neighborhood(mut self, neighborhood: Neighborhood) -> Self {
        self.grid.neighborhood = neighborhood;
        self
    }

    pub fn set_neighborhood(&mut self, neighborhood: Neighborhood) {
        self.grid.neighborhood = neighborhood;
    }

    pub fn counts(&self) -> &TopicCounts<F> {
        &self.counts
    }

    pub fn grid(&self) -> &CellGrid<F> {
        &self.grid
    }

    pub fn topics(&self) -> usize {
        self.counts.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.vocab_size
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_timesteps(&self) -> usize {
        self.grid.num_timesteps()
    }

    pub fn token(&self, id: TokenId) -> &WordToken {
        &self.tokens[id.0].token
    }

    pub fn tokens(&self) -> impl DoubleEndedIterator<Item = &WordToken> + ExactSizeIterator + '_ {
        self.tokens.iter().map(|s| &s.token)
    }

    pub fn token_ids(&self) -> impl ExactSizeIterator<Item = TokenId> {
        (0..self.tokens.len()).map(TokenId)
    }

    pub fn cell_key_of(&self, id: TokenId) -> CellKey {
        self.grid.cells[self.tokens[id.0].cell].key
    }

    /// Tokens observed at timestep `t`, in cell sweep order then insertion order.
    pub fn tokens_at(&self, t: u32) -> Vec<TokenId> {
        self.grid
            .cell_indices_at(t)
            .iter()
            .flat_map(|&i| self.grid.cells[i].tokens.iter().copied())
            .collect()
    }

    pub fn check_token(&self, id: TokenId) -> Result<()> {
        if id.0 < self.tokens.len() {
            Ok(())
        } else {
            Err(RostError::UnknownToken(id.0))
        }
    }

    pub fn phi(&self, topic: usize) -> Vec<F> {
        self.counts.phi(topic)
    }

    pub fn theta(&self, key: CellKey) -> Vec<F> {
        self.grid.theta(key)
    }

    /// Summed topic histogram over `G(key)`, optionally with one assigned
    /// token removed. Panics if the exclusion would drive a count negative.
    pub fn neighborhood_hist(&self, key: CellKey, exclude: Option<TokenId>) -> Vec<u32> {
        let mut hist = self.grid.neighborhood_hist(key);
        if let Some(id) = exclude {
            let slot = &self.tokens[id.0];
            let topic = slot
                .token
                .topic
                .expect("excluded token must be assigned") as usize;
            let cell_key = self.grid.cells[slot.cell].key;
            assert!(
                self.grid.neighborhood(key).contains(&cell_key),
                "excluded token does not reside in the neighbourhood"
            );
            hist[topic] = hist[topic]
                .checked_sub(1)
                .expect("neighbourhood count underflow: count tables are corrupt");
        }
        hist
    }

    /// Inserts the words of timestep `t` as unassigned tokens.
    pub fn add_observation(&mut self, t: u32, words: &[(u32, Position)]) -> Result<Vec<TokenId>> {
        let expected = self.grid.num_timesteps() as u32;
        if t != expected {
            return Err(RostError::OutOfOrder { got: t, expected });
        }
        for &(word, pos) in words {
            if word as usize >= self.counts.vocab_size {
                return Err(RostError::WordOutOfRange {
                    word,
                    vocab_size: self.counts.vocab_size,
                });
            }
            if pos.t != t {
                return Err(RostError::TimestepMismatch { pos_t: pos.t, t });
            }
        }
        // an empty observation still occupies its timestep
        if self.grid.time_index.len() <= t as usize {
            self.grid.time_index.resize_with(t as usize + 1, Vec::new);
        }
        let mut ids = Vec::with_capacity(words.len());
        for &(word, pos) in words {
            let key = self.grid.cell_of(pos);
            let cell = self.grid.get_or_insert(key);
            let id = TokenId(self.tokens.len());
            self.tokens.push(TokenSlot {
                token: WordToken { word, pos, topic: None },
                cell,
            });
            self.grid.cells[cell].tokens.push(id);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Moves a token to `new_topic`, updating both count tables.
    pub fn reassign(&mut self, id: TokenId, new_topic: u32) -> Result<()> {
        self.check_token(id)?;
        if new_topic as usize >= self.topics() {
            return Err(RostError::TopicOutOfRange {
                topic: new_topic,
                topics: self.topics(),
            });
        }
        if self.tokens[id.0].token.topic == Some(new_topic) {
            return Ok(());
        }
        self.unassign(id);
        self.assign(id, new_topic);
        Ok(())
    }

    /// Removes a token's label from all tables. Returns the old label.
    pub(crate) fn unassign(&mut self, id: TokenId) -> Option<u32> {
        let slot = &mut self.tokens[id.0];
        let old = slot.token.topic.take()?;
        let word = slot.token.word as usize;
        let cell = slot.cell;
        self.counts.decrement(old as usize, word);
        let h = &mut self.grid.cells[cell].topic_hist[old as usize];
        *h = h
            .checked_sub(1)
            .expect("cell histogram underflow: count tables are corrupt");
        Some(old)
    }

    /// Labels an unassigned token.
    pub(crate) fn assign(&mut self, id: TokenId, topic: u32) {
        let slot = &mut self.tokens[id.0];
        debug_assert!(slot.token.topic.is_none());
        slot.token.topic = Some(topic);
        let word = slot.token.word as usize;
        let cell = slot.cell;
        self.counts.increment(topic as usize, word);
        self.grid.cells[cell].topic_hist[topic as usize] += 1;
    }

    /// Recomputes every count table from the token list and compares it with
    /// the incrementally maintained tables.
    pub fn is_consistent(&self) -> bool {
        let k = self.topics();
        let v = self.vocab_size();
        let mut counts = vec![0u32; k * v];
        let mut totals = vec![0u32; k];
        let mut hists = vec![vec![0u32; k]; self.grid.cells.len()];
        for slot in &self.tokens {
            if let Some(z) = slot.token.topic {
                let z = z as usize;
                counts[z * v + slot.token.word as usize] += 1;
                totals[z] += 1;
                hists[slot.cell][z] += 1;
            }
            if self.grid.cells[slot.cell].key != self.grid.cell_of(slot.token.pos) {
                return false;
            }
        }
        let cell_sums: Vec<u32> = (0..k)
            .map(|z| self.grid.cells.iter().map(|c| c.topic_hist[z]).sum())
            .collect();
        counts == self.counts.counts
            && totals == self.counts.topic_totals
            && cell_sums == totals
            && hists
                .iter()
                .zip(&self.grid.cells)
                .all(|(h, c)| *h == c.topic_hist)
    }
}
