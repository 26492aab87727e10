use std::collections::HashMap;

use super::{Agent, BidKind, BlockBid, CurveSegment};
use crate::error::{Error, Result};

/// Largest coupled block component whose indicator patterns are enumerated.
pub(crate) const MAX_COMPONENT_BLOCKS: usize = 16;

#[derive(Debug, Clone)]
pub(crate) struct CurveLayout {
    pub bid: usize,
    pub hour: usize,
    pub segments: Vec<CurveSegment>,
    pub total_abs: f64,
}

/// Blocks of one agent coupled through exclusive groups, parent links or loops.
#[derive(Debug, Clone)]
pub(crate) struct BlockComponent {
    pub blocks: Vec<usize>,
    /// Feasible nonzero indicator patterns, indexed like `blocks`.
    pub patterns: Vec<Vec<bool>>,
}

impl BlockComponent {
    pub fn is_single(&self) -> bool {
        self.blocks.len() == 1
    }
}

/// Per-agent decomposition into independent curve slices and block components.
#[derive(Debug, Clone)]
pub(crate) struct AgentStructure {
    pub curves: Vec<CurveLayout>,
    pub components: Vec<BlockComponent>,
}

impl AgentStructure {
    pub fn new(agent: &Agent) -> Result<Self> {
        let mut curves = Vec::new();
        let mut block_ids = Vec::new();
        for (i, bid) in agent.bids.iter().enumerate() {
            match &bid.kind {
                BidKind::Curve(c) => {
                    let segments = c.segments();
                    let total_abs = segments.iter().map(|s| s.quantity.abs()).sum();
                    curves.push(CurveLayout { bid: i, hour: c.hour, segments, total_abs });
                }
                BidKind::Block(_) => block_ids.push(i),
            }
        }

        let index = agent.bid_index();
        let mut parent: Vec<usize> = (0..agent.bids.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let union = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra.max(rb)] = ra.min(rb);
            }
        };
        let mut group_first: HashMap<&str, usize> = HashMap::new();
        for &i in &block_ids {
            let b = block(agent, i);
            if let Some(g) = &b.group {
                match group_first.get(g.as_str()) {
                    Some(&first) => union(&mut parent, first, i),
                    None => {
                        group_first.insert(g.as_str(), i);
                    }
                }
            }
            for target in [&b.parent, &b.loop_partner].into_iter().flatten() {
                if let Some(&j) = index.get(target.as_str()) {
                    union(&mut parent, i, j);
                }
            }
        }

        let mut by_root: Vec<(usize, Vec<usize>)> = Vec::new();
        for &i in &block_ids {
            let r = find(&mut parent, i);
            match by_root.iter_mut().find(|(root, _)| *root == r) {
                Some((_, members)) => members.push(i),
                None => by_root.push((r, vec![i])),
            }
        }

        let mut components = Vec::with_capacity(by_root.len());
        for (_, blocks) in by_root {
            if blocks.len() > MAX_COMPONENT_BLOCKS {
                return Err(Error::TooManyBlocks { count: blocks.len(), limit: MAX_COMPONENT_BLOCKS });
            }
            let patterns = (1u32..(1u32 << blocks.len()))
                .map(|mask| (0..blocks.len()).map(|j| mask & (1 << j) != 0).collect::<Vec<_>>())
                .filter(|z| pattern_feasible(agent, &blocks, z, &index))
                .collect();
            components.push(BlockComponent { blocks, patterns });
        }
        Ok(Self { curves, components })
    }
}

fn block(agent: &Agent, i: usize) -> &BlockBid {
    agent.bids[i].as_block().expect("block index")
}

/// Indicator-level feasibility: at most one block per exclusive group, a child
/// only with its parent, looped blocks together.
pub(crate) fn pattern_feasible(
    agent: &Agent,
    blocks: &[usize],
    z: &[bool],
    index: &HashMap<&str, usize>,
) -> bool {
    let on = |bid: usize| blocks.iter().position(|&b| b == bid).map(|p| z[p]);
    let mut groups: HashMap<&str, usize> = HashMap::new();
    for (&i, &zi) in blocks.iter().zip(z) {
        let b = block(agent, i);
        if zi {
            if let Some(g) = &b.group {
                let n = groups.entry(g.as_str()).or_default();
                *n += 1;
                if *n > 1 {
                    return false;
                }
            }
        }
        if let Some(p) = b.parent.as_deref().and_then(|p| index.get(p)) {
            if zi && on(*p) == Some(false) {
                return false;
            }
        }
        if let Some(l) = b.loop_partner.as_deref().and_then(|l| index.get(l)) {
            if on(*l).is_some_and(|zl| zl != zi) {
                return false;
            }
        }
    }
    true
}

impl AgentStructure {
    /// Every feasible indicator assignment for the agent's blocks, as a
    /// per-bid on/off vector (curves are always off). The all-off pattern comes first.
    pub fn all_patterns(&self, num_bids: usize) -> Vec<Vec<bool>> {
        let mut out = vec![vec![false; num_bids]];
        for comp in &self.components {
            let mut next = Vec::with_capacity(out.len() * (comp.patterns.len() + 1));
            for base in &out {
                next.push(base.clone());
                for z in &comp.patterns {
                    let mut p = base.clone();
                    for (&b, &on) in comp.blocks.iter().zip(z) {
                        p[b] = on;
                    }
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}
