//! Rule-based Blocksworld: states, the four manipulation actions, and the
//! natural-language rendering used in prompts.
//!
//! Renders follow the fixed clause order (clear blocks, hand status,
//! on-relations, on-table relations) with the final clause joined by
//! "and", e.g. "the red block is clear, the hand is empty and the red
//! block is on the table". `parse_statement` inverts the rendering, so
//! `parse(render(s)) == s` for every valid state.

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment};

/// A goal predicate over block positions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Predicate {
    #[serde(rename = "on")]
    On(String, String),
    #[serde(rename = "on-table")]
    OnTable(String),
}

/// Conjunction of [`Predicate`]s; satisfied when every predicate holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Goal(pub Vec<Predicate>);

impl PartialEq for Goal {
    fn eq(&self, other: &Self) -> bool {
        let mut a = self.0.clone();
        let mut b = other.0.clone();
        a.sort();
        b.sort();
        a == b
    }
}
impl Eq for Goal {}

/// Block configuration: stacks bottom-to-top, an optional held block, and
/// the goal to reach. Every block appears exactly once across stacks and
/// the hand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlocksState {
    pub stacks: Vec<Vec<String>>,
    pub holding: Option<String>,
    pub goal: Goal,
}

impl PartialEq for BlocksState {
    /// Physical equality: stack order is presentation only.
    fn eq(&self, other: &Self) -> bool {
        self.canonical_key() == other.canonical_key() && self.goal == other.goal
    }
}
impl Eq for BlocksState {}

impl BlocksState {
    /// Order-independent identity of the physical configuration.
    pub fn canonical_key(&self) -> String {
        let mut stacks: Vec<String> = self.stacks.iter().map(|s| s.join(",")).collect();
        stacks.sort();
        format!("{}|{}", stacks.join(";"), self.holding.as_deref().unwrap_or("-"))
    }

    pub fn blocks(&self) -> Vec<String> {
        let mut out: Vec<String> = self.stacks.iter().flatten().cloned().collect();
        if let Some(h) = &self.holding {
            out.push(h.clone());
        }
        out.sort();
        out
    }

    /// Tops of stacks, in stack order.
    pub fn clear_blocks(&self) -> Vec<&str> {
        self.stacks
            .iter()
            .filter_map(|s| s.last().map(String::as_str))
            .collect()
    }

    pub fn holds(&self, p: &Predicate) -> bool {
        match p {
            Predicate::On(x, y) => self.stacks.iter().any(|s| {
                s.windows(2)
                    .any(|w| w[0].as_str() == y.as_str() && w[1].as_str() == x.as_str())
            }),
            Predicate::OnTable(x) => self
                .stacks
                .iter()
                .any(|s| s.first().map(String::as_str) == Some(x.as_str())),
        }
    }

    pub fn goal_satisfied(&self) -> bool {
        self.goal.0.iter().all(|p| self.holds(p))
    }
}

/// The four Blocksworld moves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlocksAction {
    PickUp(String),
    Unstack { block: String, from: String },
    PutDown(String),
    Stack { block: String, onto: String },
}

impl BlocksAction {
    /// The inverse move: pick-up/put-down and unstack/stack are paired.
    pub fn inverse(&self) -> BlocksAction {
        match self {
            BlocksAction::PickUp(b) => BlocksAction::PutDown(b.clone()),
            BlocksAction::PutDown(b) => BlocksAction::PickUp(b.clone()),
            BlocksAction::Unstack { block, from } => BlocksAction::Stack {
                block: block.clone(),
                onto: from.clone(),
            },
            BlocksAction::Stack { block, onto } => BlocksAction::Unstack {
                block: block.clone(),
                from: onto.clone(),
            },
        }
    }

    fn sort_key(&self) -> (String, u8, String) {
        match self {
            BlocksAction::PickUp(b) => (b.clone(), 0, String::new()),
            BlocksAction::Unstack { block, from } => (block.clone(), 0, from.clone()),
            BlocksAction::PutDown(b) => (b.clone(), 0, String::new()),
            BlocksAction::Stack { block, onto } => (block.clone(), 1, onto.clone()),
        }
    }
}

/// All moves legal under the four rules, ordered by block name then
/// action kind (put-down before stack) then target name.
pub fn legal_actions(s: &BlocksState) -> Vec<BlocksAction> {
    let mut out = Vec::new();
    match &s.holding {
        Some(held) => {
            out.push(BlocksAction::PutDown(held.clone()));
            for top in s.clear_blocks() {
                out.push(BlocksAction::Stack {
                    block: held.clone(),
                    onto: top.to_string(),
                });
            }
        }
        None => {
            for stack in &s.stacks {
                let top = stack.last().expect("stacks are non-empty");
                if stack.len() == 1 {
                    out.push(BlocksAction::PickUp(top.clone()));
                } else {
                    out.push(BlocksAction::Unstack {
                        block: top.clone(),
                        from: stack[stack.len() - 2].clone(),
                    });
                }
            }
        }
    }
    out.sort_by_key(BlocksAction::sort_key);
    out
}

/// Deterministic successor of `s` under `a`; rejects illegal moves with
/// the violated rule named.
pub fn apply(s: &BlocksState, a: &BlocksAction) -> Result<BlocksState, EnvError> {
    let mut next = s.clone();
    match a {
        BlocksAction::PickUp(b) => {
            if s.holding.is_some() {
                return Err(EnvError::IllegalAction("the hand is not empty".into()));
            }
            let idx = s
                .stacks
                .iter()
                .position(|st| st.first().map(String::as_str) == Some(b.as_str()))
                .ok_or_else(|| {
                    EnvError::IllegalAction(format!("the {b} block is not on the table"))
                })?;
            if s.stacks[idx].len() > 1 {
                return Err(EnvError::IllegalAction(format!(
                    "the {b} block is not clear"
                )));
            }
            next.stacks.remove(idx);
            next.holding = Some(b.clone());
        }
        BlocksAction::Unstack { block, from } => {
            if s.holding.is_some() {
                return Err(EnvError::IllegalAction("the hand is not empty".into()));
            }
            let idx = s
                .stacks
                .iter()
                .position(|st| st.last().map(String::as_str) == Some(block.as_str()))
                .ok_or_else(|| {
                    EnvError::IllegalAction(format!("the {block} block is not clear"))
                })?;
            let stack = &s.stacks[idx];
            if stack.len() < 2 || stack[stack.len() - 2] != *from {
                return Err(EnvError::IllegalAction(format!(
                    "the {block} block is not on top of the {from} block"
                )));
            }
            next.stacks[idx].pop();
            next.holding = Some(block.clone());
        }
        BlocksAction::PutDown(b) => {
            if s.holding.as_deref() != Some(b.as_str()) {
                return Err(EnvError::IllegalAction(format!(
                    "the hand is not holding the {b} block"
                )));
            }
            next.holding = None;
            next.stacks.push(vec![b.clone()]);
        }
        BlocksAction::Stack { block, onto } => {
            if s.holding.as_deref() != Some(block.as_str()) {
                return Err(EnvError::IllegalAction(format!(
                    "the hand is not holding the {block} block"
                )));
            }
            let idx = s
                .stacks
                .iter()
                .position(|st| st.last().map(String::as_str) == Some(onto.as_str()))
                .ok_or_else(|| {
                    EnvError::IllegalAction(format!("the {onto} block is not clear"))
                })?;
            next.holding = None;
            next.stacks[idx].push(block.clone());
        }
    }
    Ok(next)
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses.len() {
        0 => String::new(),
        1 => clauses[0].clone(),
        n => format!("{} and {}", clauses[..n - 1].join(", "), clauses[n - 1]),
    }
}

/// The configuration sentence: clear blocks, hand status, on-relations,
/// on-table relations, in that order.
pub fn render_config(s: &BlocksState) -> String {
    let mut clauses = Vec::new();
    for top in s.clear_blocks() {
        clauses.push(format!("the {top} block is clear"));
    }
    match &s.holding {
        None => clauses.push("the hand is empty".to_string()),
        Some(h) => clauses.push(format!("the hand is holding the {h} block")),
    }
    for stack in &s.stacks {
        for w in stack.windows(2).rev() {
            clauses.push(format!("the {} block is on top of the {} block", w[1], w[0]));
        }
    }
    for stack in &s.stacks {
        let bottom = &stack[0];
        clauses.push(format!("the {bottom} block is on the table"));
    }
    join_clauses(&clauses)
}

pub fn render_goal(goal: &Goal) -> String {
    let clauses: Vec<String> = goal
        .0
        .iter()
        .map(|p| match p {
            Predicate::On(x, y) => format!("the {x} block is on top of the {y} block"),
            Predicate::OnTable(x) => format!("the {x} block is on the table"),
        })
        .collect();
    join_clauses(&clauses)
}

/// The full statement rendering used as the canonical state text.
pub fn render_statement(s: &BlocksState) -> String {
    format!(
        "As initial conditions I have that, {}.\nMy goal is to have that {}.",
        render_config(s),
        render_goal(&s.goal)
    )
}

pub fn render_action(a: &BlocksAction) -> String {
    match a {
        BlocksAction::PickUp(b) => format!("pick up the {b} block"),
        BlocksAction::Unstack { block, from } => {
            format!("unstack the {block} block from on top of the {from} block")
        }
        BlocksAction::PutDown(b) => format!("put down the {b} block"),
        BlocksAction::Stack { block, onto } => {
            format!("stack the {block} block on top of the {onto} block")
        }
    }
}

fn split_clauses(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split(", ") {
        for c in chunk.split(" and ") {
            let c = c.trim();
            if !c.is_empty() {
                out.push(c);
            }
        }
    }
    out
}

fn strip_block<'a>(clause: &'a str, prefix: &str, suffix: &str) -> Option<&'a str> {
    clause
        .strip_prefix(prefix)
        .and_then(|rest| rest.strip_suffix(suffix))
}

/// Parses a configuration sentence into stacks and the held block.
pub fn parse_config(text: &str) -> Result<(Vec<Vec<String>>, Option<String>), EnvError> {
    let mut holding = None;
    let mut on_pairs: Vec<(String, String)> = Vec::new(); // (above, below)
    let mut table: Vec<String> = Vec::new();
    for clause in split_clauses(text) {
        if clause == "the hand is empty" {
            continue;
        } else if let Some(b) = strip_block(clause, "the hand is holding the ", " block") {
            holding = Some(b.to_string());
        } else if strip_block(clause, "the ", " block is clear").is_some() {
            // Redundant with the structure; validated below.
        } else if let Some(rest) = clause.strip_prefix("the ") {
            if let Some((x, y)) = rest
                .split_once(" block is on top of the ")
                .and_then(|(x, r)| r.strip_suffix(" block").map(|y| (x, y)))
            {
                on_pairs.push((x.to_string(), y.to_string()));
            } else if let Some(x) = rest.strip_suffix(" block is on the table") {
                table.push(x.to_string());
            } else {
                return Err(EnvError::Parse(format!("unrecognized clause: {clause}")));
            }
        } else {
            return Err(EnvError::Parse(format!("unrecognized clause: {clause}")));
        }
    }
    let mut stacks = Vec::new();
    for bottom in table {
        let mut stack = vec![bottom];
        loop {
            let top = stack.last().unwrap().clone();
            match on_pairs.iter().find(|(_, below)| *below == top) {
                Some((above, _)) => stack.push(above.clone()),
                None => break,
            }
        }
        stacks.push(stack);
    }
    // Every on-pair must have been consumed by some stack chain.
    let stacked: usize = stacks.iter().map(|s| s.len() - 1).sum();
    if stacked != on_pairs.len() {
        return Err(EnvError::Parse("dangling on-relation".into()));
    }
    Ok((stacks, holding))
}

pub fn parse_goal(text: &str) -> Result<Goal, EnvError> {
    let mut preds = Vec::new();
    for clause in split_clauses(text) {
        let rest = clause
            .strip_prefix("the ")
            .ok_or_else(|| EnvError::Parse(format!("unrecognized goal clause: {clause}")))?;
        if let Some((x, y)) = rest
            .split_once(" block is on top of the ")
            .and_then(|(x, r)| r.strip_suffix(" block").map(|y| (x, y)))
        {
            preds.push(Predicate::On(x.to_string(), y.to_string()));
        } else if let Some(x) = rest.strip_suffix(" block is on the table") {
            preds.push(Predicate::OnTable(x.to_string()));
        } else {
            return Err(EnvError::Parse(format!("unrecognized goal clause: {clause}")));
        }
    }
    Ok(Goal(preds))
}

/// Inverse of [`render_statement`].
pub fn parse_statement(text: &str) -> Result<BlocksState, EnvError> {
    let mut config = None;
    let mut goal = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("As initial conditions I have that, ") {
            config = Some(rest.trim_end_matches('.').to_string());
        } else if let Some(rest) = line.strip_prefix("My goal is to have that ") {
            goal = Some(rest.trim_end_matches('.').to_string());
        }
    }
    let config = config.ok_or_else(|| EnvError::Parse("missing initial conditions".into()))?;
    let goal = goal.ok_or_else(|| EnvError::Parse("missing goal".into()))?;
    let (stacks, holding) = parse_config(&config)?;
    Ok(BlocksState {
        stacks,
        holding,
        goal: parse_goal(&goal)?,
    })
}

pub fn parse_action(text: &str) -> Result<BlocksAction, EnvError> {
    let text = text.trim();
    if let Some(b) = strip_block(text, "pick up the ", " block") {
        return Ok(BlocksAction::PickUp(b.to_string()));
    }
    if let Some(b) = strip_block(text, "put down the ", " block") {
        return Ok(BlocksAction::PutDown(b.to_string()));
    }
    if let Some(rest) = text.strip_prefix("unstack the ") {
        if let Some((b, f)) = rest
            .split_once(" block from on top of the ")
            .and_then(|(b, r)| r.strip_suffix(" block").map(|f| (b, f)))
        {
            return Ok(BlocksAction::Unstack {
                block: b.to_string(),
                from: f.to_string(),
            });
        }
    }
    if let Some(rest) = text.strip_prefix("stack the ") {
        if let Some((b, t)) = rest
            .split_once(" block on top of the ")
            .and_then(|(b, r)| r.strip_suffix(" block").map(|t| (b, t)))
        {
            return Ok(BlocksAction::Stack {
                block: b.to_string(),
                onto: t.to_string(),
            });
        }
    }
    Err(EnvError::Parse(format!("unrecognized action: {text}")))
}

/// An instance as stored in JSON instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlocksInstance {
    pub id: String,
    pub blocks: Vec<String>,
    pub stacks: Vec<Vec<String>>,
    pub goal: Vec<Predicate>,
    /// Minimum plan length, when known (set by the generator / oracle).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
}

impl BlocksInstance {
    pub fn to_state(&self) -> BlocksState {
        BlocksState {
            stacks: self.stacks.clone(),
            holding: None,
            goal: Goal(self.goal.clone()),
        }
    }
}

/// Blocksworld as an [`Environment`] for one instance.
pub struct BlocksEnv {
    pub initial: BlocksState,
}

impl BlocksEnv {
    pub fn new(initial: BlocksState) -> Self {
        Self { initial }
    }

    pub fn from_instance(inst: &BlocksInstance) -> Self {
        Self::new(inst.to_state())
    }
}

impl Environment for BlocksEnv {
    type State = BlocksState;
    type Action = BlocksAction;

    fn initial_state(&self) -> BlocksState {
        self.initial.clone()
    }

    fn legal_actions(&self, state: &BlocksState) -> Result<Vec<BlocksAction>, EnvError> {
        Ok(legal_actions(state))
    }

    fn apply(&self, state: &BlocksState, action: &BlocksAction) -> Result<BlocksState, EnvError> {
        apply(state, action)
    }

    fn is_terminal(&self, state: &BlocksState) -> bool {
        state.goal_satisfied()
    }

    fn terminal_reward(&self, state: &BlocksState) -> f64 {
        if state.goal_satisfied() {
            1.0
        } else {
            0.0
        }
    }

    fn render_state(&self, state: &BlocksState) -> String {
        render_statement(state)
    }

    fn render_action(&self, action: &BlocksAction) -> String {
        render_action(action)
    }
}
