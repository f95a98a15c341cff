//! Head-array checks shared by the treebank, parser and inference code.
//!
//! A head array has one entry per token: `heads[m - 1]` is the head of token
//! `m`, with `0` denoting the artificial root.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeDefect {
    HeadOutOfRange { token: usize, head: usize },
    SelfLoop { token: usize },
    Cycle { token: usize },
}

impl fmt::Display for TreeDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDefect::HeadOutOfRange { token, head } => {
                write!(f, "token {token} has out-of-range head {head}")
            }
            TreeDefect::SelfLoop { token } => write!(f, "token {token} is its own head"),
            TreeDefect::Cycle { token } => write!(f, "token {token} lies on a cycle"),
        }
    }
}

/// Verify that `heads` encodes an arborescence rooted at 0.
pub fn check_heads(heads: &[usize]) -> Result<(), TreeDefect> {
    let n = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        let m = i + 1;
        if h > n {
            return Err(TreeDefect::HeadOutOfRange { token: m, head: h });
        }
        if h == m {
            return Err(TreeDefect::SelfLoop { token: m });
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = known to reach the root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    let mut path = Vec::new();
    for start in 1..=n {
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(TreeDefect::Cycle { token: v });
        }
        for u in path.drain(..) {
            state[u] = 2;
        }
    }
    Ok(())
}

pub fn is_tree(heads: &[usize]) -> bool {
    check_heads(heads).is_ok()
}

/// Number of tokens attached directly to the root.
pub fn root_children(heads: &[usize]) -> usize {
    heads.iter().filter(|&&h| h == 0).count()
}
