//! Per-node block tree with a committed prefix.

use std::collections::BTreeMap;

use crate::error::CoreError;
use crate::types::{genesis_block, Block, BlockId};

#[derive(Debug, Clone)]
struct Entry {
    block: Block,
    height: u64,
}

/// A commit target that does not extend the committed prefix. Carries the
/// target's uncommitted branch, root-first, as `(block, height)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitConflict {
    pub branch: Vec<(BlockId, u64)>,
}

#[derive(Debug, Clone)]
pub struct BlockStore {
    blocks: BTreeMap<BlockId, Entry>,
    children: BTreeMap<BlockId, Vec<BlockId>>,
    committed: Vec<BlockId>,
}

impl BlockStore {
    pub fn new(n: usize) -> Self {
        let genesis = genesis_block(n);
        let id = genesis.id;
        let mut blocks = BTreeMap::new();
        blocks.insert(
            id,
            Entry {
                block: genesis,
                height: 0,
            },
        );
        BlockStore {
            blocks,
            children: BTreeMap::new(),
            committed: vec![id],
        }
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.blocks.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id).map(|e| &e.block)
    }

    pub fn height(&self, id: &BlockId) -> Option<u64> {
        self.blocks.get(id).map(|e| e.height)
    }

    pub fn children(&self, id: &BlockId) -> &[BlockId] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Inserts a block whose parent is already stored. Returns `false` for a
    /// block that was already present.
    pub fn insert(&mut self, block: Block) -> Result<bool, CoreError> {
        if self.blocks.contains_key(&block.id) {
            return Ok(false);
        }
        let parent_height = self
            .height(&block.parent)
            .ok_or(CoreError::UnknownBlock(block.parent))?;
        self.children.entry(block.parent).or_default().push(block.id);
        self.blocks.insert(
            block.id,
            Entry {
                block,
                height: parent_height + 1,
            },
        );
        Ok(true)
    }

    /// Whether `ancestor` lies on `descendant`'s parent path (reflexive).
    pub fn extends(&self, descendant: &BlockId, ancestor: &BlockId) -> Result<bool, CoreError> {
        let target = self
            .blocks
            .get(ancestor)
            .ok_or(CoreError::UnknownBlock(*ancestor))?
            .height;
        let mut cur = self
            .blocks
            .get(descendant)
            .ok_or(CoreError::UnknownBlock(*descendant))?;
        while cur.height > target {
            cur = &self.blocks[&cur.block.parent];
        }
        Ok(cur.block.id == *ancestor)
    }

    /// Committed prefix including genesis at index 0.
    pub fn committed(&self) -> &[BlockId] {
        &self.committed
    }

    pub fn committed_height(&self) -> u64 {
        (self.committed.len() - 1) as u64
    }

    pub fn is_committed(&self, id: &BlockId) -> bool {
        match self.blocks.get(id) {
            Some(e) => self.committed.get(e.height as usize) == Some(id),
            None => false,
        }
    }

    /// Commits `target` and all of its uncommitted ancestors, returning the
    /// newly committed ids in order.
    pub fn commit(&mut self, target: &BlockId) -> Result<Vec<BlockId>, CommitConflict> {
        let Some(entry) = self.blocks.get(target) else {
            return Ok(Vec::new());
        };
        let tip = self.committed_height();
        let mut branch = Vec::new();
        let mut cur = entry;
        while cur.height > tip {
            branch.push((cur.block.id, cur.height));
            cur = &self.blocks[&cur.block.parent];
        }
        if self.committed[cur.height as usize] != cur.block.id {
            // Walk back to the fork point for the report.
            while self.committed[cur.height as usize] != cur.block.id {
                branch.push((cur.block.id, cur.height));
                cur = &self.blocks[&cur.block.parent];
            }
            branch.reverse();
            return Err(CommitConflict { branch });
        }
        branch.reverse();
        let ids: Vec<BlockId> = branch.into_iter().map(|(id, _)| id).collect();
        self.committed.extend(ids.iter().copied());
        Ok(ids)
    }

    /// The `k`-th ancestor of `id` by justify links (0 is `id` itself).
    pub fn justify_ancestor(&self, id: &BlockId, k: usize) -> Option<&Block> {
        let mut cur = self.get(id)?;
        for _ in 0..k {
            if cur.is_genesis() {
                return Some(cur);
            }
            cur = self.get(&cur.justify.block_id)?;
        }
        Some(cur)
    }
}
