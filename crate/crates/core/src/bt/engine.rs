use serde::Serialize;

use super::{BtStatus, CancelError, ExecutionContext, NodeKind, TaskTree, TickError};
use crate::comms::{ActionState, GoalId, GoalPayload, SendGoalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelPhase {
    /// Cancel delivered to the node.
    Issued,
    /// The node has finished canceling (all its running descendants first).
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CancelEvent {
    pub seq: u64,
    pub node: usize,
    pub kind: &'static str,
    pub phase: CancelPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeafCancel {
    pub node: usize,
    pub subtask_name: String,
    pub goal_id: GoalId,
    pub final_state: ActionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CancelReport {
    pub task_id: i64,
    pub events: Vec<CancelEvent>,
    pub leaves: Vec<LeafCancel>,
}

impl CancelReport {
    /// Order in which nodes received the cancel.
    pub fn issue_order(&self) -> Vec<usize> {
        self.events.iter().filter(|e| e.phase == CancelPhase::Issued).map(|e| e.node).collect()
    }

    /// Order in which nodes completed canceling.
    pub fn completion_order(&self) -> Vec<usize> {
        self.events.iter().filter(|e| e.phase == CancelPhase::Completed).map(|e| e.node).collect()
    }

    fn seq_of(&self, node: usize, phase: CancelPhase) -> Option<u64> {
        self.events.iter().find(|e| e.node == node && e.phase == phase).map(|e| e.seq)
    }

    pub fn issued_at(&self, node: usize) -> Option<u64> {
        self.seq_of(node, CancelPhase::Issued)
    }

    pub fn completed_at(&self, node: usize) -> Option<u64> {
        self.seq_of(node, CancelPhase::Completed)
    }
}

impl TaskTree {
    /// Tick the tree once and return the root status. A tree that already
    /// reached a terminal status keeps returning it without touching any
    /// server.
    pub fn tick(&mut self, ctx: &mut ExecutionContext<'_>) -> Result<BtStatus, TickError> {
        if self.nodes[0].status.is_terminal() {
            return Ok(self.nodes[0].status);
        }
        self.tick_node(0, ctx)
    }

    fn tick_node(&mut self, idx: usize, ctx: &mut ExecutionContext<'_>) -> Result<BtStatus, TickError> {
        let current = self.nodes[idx].status;
        if current.is_terminal() {
            return Ok(current);
        }
        let status = match self.nodes[idx].kind.clone() {
            NodeKind::Sequence => self.tick_ordered(idx, ctx, BtStatus::Success)?,
            NodeKind::Fallback => self.tick_ordered(idx, ctx, BtStatus::Failure)?,
            NodeKind::Parallel { threshold } => self.tick_parallel(idx, threshold, ctx)?,
            NodeKind::Retry { max_attempts } => {
                let child = self.nodes[idx].children[0];
                match self.tick_node(child, ctx)? {
                    BtStatus::Failure => {
                        self.nodes[idx].attempts += 1;
                        if self.nodes[idx].attempts < max_attempts {
                            self.reset_subtree(child, ctx);
                            BtStatus::Running
                        } else {
                            BtStatus::Failure
                        }
                    }
                    other => other,
                }
            }
            NodeKind::Leaf(params) => match self.nodes[idx].goal {
                None => {
                    let payload = GoalPayload { model_name: params.model_name.clone(), record_name: params.record_name.clone() };
                    match ctx.client.send_goal(self.task_id, &params.subtask_name, payload) {
                        Ok(goal) => {
                            self.nodes[idx].goal = Some(goal);
                            BtStatus::Running
                        }
                        Err(SendGoalError::Unregistered(name)) => return Err(TickError::UnregisteredSubtask(name)),
                        Err(SendGoalError::Rejected { .. }) => BtStatus::Failure,
                    }
                }
                Some(goal) => ctx.client.goal_state(goal).map(BtStatus::from_goal_state).unwrap_or(BtStatus::Failure),
            },
            NodeKind::BlackboardGate { key, expected } => {
                if self.local.value(&key).as_ref() == Some(&expected) {
                    BtStatus::Success
                } else {
                    BtStatus::Failure
                }
            }
        };
        self.nodes[idx].status = status;
        Ok(status)
    }

    /// Sequence (`pass` = SUCCESS) and Fallback (`pass` = FAILURE): move on
    /// while children return `pass`, stop at anything else.
    fn tick_ordered(&mut self, idx: usize, ctx: &mut ExecutionContext<'_>, pass: BtStatus) -> Result<BtStatus, TickError> {
        for i in 0..self.nodes[idx].children.len() {
            let child = self.nodes[idx].children[i];
            let s = self.tick_node(child, ctx)?;
            if s != pass {
                return Ok(s);
            }
        }
        Ok(pass)
    }

    fn tick_parallel(&mut self, idx: usize, threshold: usize, ctx: &mut ExecutionContext<'_>) -> Result<BtStatus, TickError> {
        let children = self.nodes[idx].children.clone();
        let (mut ok, mut failed) = (0, 0);
        for &child in &children {
            match self.tick_node(child, ctx)? {
                BtStatus::Success => ok += 1,
                BtStatus::Failure | BtStatus::Canceled => failed += 1,
                _ => {}
            }
        }
        let result = if ok >= threshold {
            BtStatus::Success
        } else if failed > children.len() - threshold {
            BtStatus::Failure
        } else {
            return Ok(BtStatus::Running);
        };
        for &child in &children {
            if self.nodes[child].status == BtStatus::Running {
                self.halt(child, ctx);
            }
        }
        Ok(result)
    }

    /// Stop a running subtree that is no longer needed and return it to IDLE.
    fn halt(&mut self, idx: usize, ctx: &mut ExecutionContext<'_>) {
        for i in 0..self.nodes[idx].children.len() {
            let child = self.nodes[idx].children[i];
            if self.nodes[child].status == BtStatus::Running {
                self.halt(child, ctx);
            }
        }
        if let Some(goal) = self.nodes[idx].goal.take() {
            if ctx.client.goal_state(goal).is_some_and(|s| s.is_active()) {
                ctx.client.cancel_goal(goal);
            }
        }
        self.nodes[idx].status = BtStatus::Idle;
        self.nodes[idx].attempts = 0;
    }

    fn reset_subtree(&mut self, idx: usize, ctx: &mut ExecutionContext<'_>) {
        self.halt(idx, ctx);
        for i in 0..self.nodes[idx].children.len() {
            let child = self.nodes[idx].children[i];
            self.reset_subtree(child, ctx);
        }
    }

    /// Reset the whole tree to IDLE so it can be started again.
    pub fn reset(&mut self, ctx: &mut ExecutionContext<'_>) {
        self.reset_subtree(0, ctx);
    }

    /// Cancel a running tree. The cancel is delivered root first, each
    /// running leaf's goal is canceled, and every node completes only after
    /// all of its running descendants have.
    pub fn cancel(&mut self, ctx: &mut ExecutionContext<'_>) -> Result<CancelReport, CancelError> {
        let root = self.nodes[0].status;
        if root != BtStatus::Running {
            return Err(CancelError::NotRunning(root));
        }
        let mut report = CancelReport { task_id: self.task_id, events: vec![], leaves: vec![] };
        let mut seq = 0;
        self.cancel_node(0, ctx, &mut report, &mut seq);
        Ok(report)
    }

    fn cancel_node(&mut self, idx: usize, ctx: &mut ExecutionContext<'_>, report: &mut CancelReport, seq: &mut u64) {
        let kind = self.nodes[idx].kind.name();
        report.events.push(CancelEvent { seq: *seq, node: idx, kind, phase: CancelPhase::Issued });
        *seq += 1;
        for i in 0..self.nodes[idx].children.len() {
            let child = self.nodes[idx].children[i];
            if self.nodes[child].status == BtStatus::Running {
                self.cancel_node(child, ctx, report, seq);
            }
        }
        if let (NodeKind::Leaf(params), Some(goal)) = (&self.nodes[idx].kind, self.nodes[idx].goal) {
            let final_state = match ctx.client.goal_state(goal) {
                Some(s) if s.is_active() => ctx.client.cancel_goal(goal),
                Some(s) => s,
                None => ActionState::Canceled,
            };
            report.leaves.push(LeafCancel {
                node: idx,
                subtask_name: params.subtask_name.clone(),
                goal_id: goal,
                final_state,
            });
        }
        self.nodes[idx].status = BtStatus::Canceled;
        report.events.push(CancelEvent { seq: *seq, node: idx, kind, phase: CancelPhase::Completed });
        *seq += 1;
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::super::{ActionClient, BtNode};
    use super::*;
    use crate::comms::TaskId;

    /// Goals complete according to a script keyed by record name:
    /// a number of RUNNING polls followed by a final state.
    #[derive(Default)]
    struct Scripted {
        script: BTreeMap<String, (u32, ActionState)>,
        goals: BTreeMap<GoalId, (String, u32, ActionState)>,
        sent: Vec<String>,
        canceled: Vec<GoalId>,
        reject: Vec<String>,
        next: GoalId,
    }

    impl Scripted {
        fn with(script: &[(&str, u32, ActionState)]) -> Self {
            Self {
                script: script.iter().map(|(r, n, s)| (r.to_string(), (*n, *s))).collect(),
                ..Default::default()
            }
        }
    }

    impl ActionClient for Scripted {
        fn send_goal(&mut self, _task: TaskId, server: &str, payload: GoalPayload) -> Result<GoalId, SendGoalError> {
            if server == "missing" {
                return Err(SendGoalError::Unregistered(server.into()));
            }
            if self.reject.contains(&payload.record_name) {
                return Err(SendGoalError::Rejected { server: server.into(), machine: payload.model_name });
            }
            self.next += 1;
            let (n, s) = self.script.get(&payload.record_name).copied().unwrap_or((0, ActionState::Succeeded));
            self.sent.push(payload.record_name.clone());
            self.goals.insert(self.next, (payload.record_name, n, s));
            Ok(self.next)
        }

        fn goal_state(&self, goal: GoalId) -> Option<ActionState> {
            self.goals.get(&goal).map(|(_, n, s)| if *n > 0 { ActionState::Executing } else { *s })
        }

        fn cancel_goal(&mut self, goal: GoalId) -> ActionState {
            self.canceled.push(goal);
            let g = self.goals.get_mut(&goal).unwrap();
            g.1 = 0;
            g.2 = ActionState::Canceled;
            ActionState::Canceled
        }
    }

    impl Scripted {
        /// Advance every executing goal by one poll.
        fn step(&mut self) {
            for g in self.goals.values_mut() {
                g.1 = g.1.saturating_sub(1);
            }
        }
    }

    fn run(tree: &mut TaskTree, client: &mut Scripted, max: usize) -> (BtStatus, usize) {
        for i in 0..max {
            let s = tree.tick(&mut ExecutionContext { client, now: i as f64 }).unwrap();
            if s.is_terminal() {
                return (s, i + 1);
            }
            client.step();
        }
        (tree.status(), max)
    }

    fn leaf(r: &str) -> BtNode {
        BtNode::leaf("m", r, "srv")
    }

    #[test]
    fn sequence_of_two_immediate_leaves() {
        let mut tree = TaskTree::new(1, BtNode::sequence(vec![leaf("a"), leaf("b")])).unwrap();
        let mut c = Scripted::default();
        // each leaf needs one tick to open its goal and one to see the result
        let (s, ticks) = run(&mut tree, &mut c, 10);
        assert_eq!((s, ticks), (BtStatus::Success, 3));
        assert_eq!(c.sent, vec!["a", "b"]);
    }

    #[test]
    fn sequence_stops_at_first_failure() {
        let mut tree = TaskTree::new(1, BtNode::sequence(vec![leaf("a"), leaf("b"), leaf("c")])).unwrap();
        let mut c = Scripted::with(&[("b", 1, ActionState::Aborted)]);
        assert_eq!(run(&mut tree, &mut c, 20).0, BtStatus::Failure);
        assert_eq!(c.sent, vec!["a", "b"]);
    }

    #[test]
    fn fallback_takes_first_success() {
        let mut tree = TaskTree::new(1, BtNode::fallback(vec![leaf("a"), leaf("b"), leaf("c")])).unwrap();
        let mut c = Scripted::with(&[("a", 0, ActionState::Aborted)]);
        assert_eq!(run(&mut tree, &mut c, 20).0, BtStatus::Success);
        assert_eq!(c.sent, vec!["a", "b"]);
    }

    #[test]
    fn memory_keeps_finished_children_finished() {
        let mut tree = TaskTree::new(1, BtNode::sequence(vec![leaf("a"), leaf("b")])).unwrap();
        let mut c = Scripted::with(&[("b", 5, ActionState::Succeeded)]);
        run(&mut tree, &mut c, 20);
        assert_eq!(c.sent.iter().filter(|r| *r == "a").count(), 1);
    }

    #[test]
    fn retry_reopens_child_until_exhausted() {
        let mut tree = TaskTree::new(1, BtNode::retry(3, leaf("a"))).unwrap();
        let mut c = Scripted::with(&[("a", 0, ActionState::Aborted)]);
        assert_eq!(run(&mut tree, &mut c, 20).0, BtStatus::Failure);
        assert_eq!(c.sent.len(), 3);
    }

    #[test]
    fn parallel_threshold_and_halt() {
        let mut tree = TaskTree::new(1, BtNode::parallel(1, vec![leaf("fast"), leaf("slow")])).unwrap();
        let mut c = Scripted::with(&[("slow", 100, ActionState::Succeeded)]);
        assert_eq!(run(&mut tree, &mut c, 20).0, BtStatus::Success);
        assert_eq!(c.canceled.len(), 1);
        assert_eq!(tree.node_status(2), BtStatus::Idle);

        let mut tree = TaskTree::new(1, BtNode::parallel(2, vec![leaf("x"), leaf("y"), leaf("z")])).unwrap();
        let mut c = Scripted::with(&[("x", 0, ActionState::Aborted), ("y", 0, ActionState::Aborted)]);
        assert_eq!(run(&mut tree, &mut c, 20).0, BtStatus::Failure);
    }

    #[test]
    fn gate_reads_local_blackboard() {
        let mut tree = TaskTree::new(1, BtNode::sequence(vec![BtNode::gate("F", true), leaf("a")])).unwrap();
        let mut c = Scripted::default();
        assert_eq!(run(&mut tree, &mut c, 5).0, BtStatus::Failure);
        let mut tree = TaskTree::new(1, BtNode::sequence(vec![BtNode::gate("F", true), leaf("a")])).unwrap();
        tree.local_blackboard().set("F", true, 0.0).unwrap();
        assert_eq!(run(&mut tree, &mut c, 5).0, BtStatus::Success);
    }

    #[test]
    fn unregistered_and_rejected() {
        let mut tree = TaskTree::new(1, BtNode::leaf("m", "a", "missing")).unwrap();
        let mut c = Scripted::default();
        let err = tree.tick(&mut ExecutionContext { client: &mut c, now: 0.0 }).unwrap_err();
        assert_eq!(err, TickError::UnregisteredSubtask("missing".into()));

        let mut tree = TaskTree::new(1, leaf("a")).unwrap();
        c.reject.push("a".into());
        assert_eq!(tree.tick(&mut ExecutionContext { client: &mut c, now: 0.0 }), Ok(BtStatus::Failure));
    }

    #[test]
    fn completed_tree_is_idempotent() {
        let mut tree = TaskTree::new(1, leaf("a")).unwrap();
        let mut c = Scripted::default();
        run(&mut tree, &mut c, 5);
        let n = c.sent.len();
        for _ in 0..3 {
            assert_eq!(tree.tick(&mut ExecutionContext { client: &mut c, now: 0.0 }), Ok(BtStatus::Success));
        }
        assert_eq!(c.sent.len(), n);
    }

    #[test]
    fn cancel_runs_root_to_leaf_and_back() {
        let root = BtNode::sequence(vec![leaf("done"), BtNode::parallel(2, vec![leaf("p"), leaf("q")])]);
        let mut tree = TaskTree::new(1, root).unwrap();
        let mut c = Scripted::with(&[("p", 100, ActionState::Succeeded), ("q", 100, ActionState::Succeeded)]);
        run(&mut tree, &mut c, 5);
        assert_eq!(tree.running_leaves(), vec![3, 4]);
        let report = tree.cancel(&mut ExecutionContext { client: &mut c, now: 5.0 }).unwrap();
        assert_eq!(report.issue_order(), vec![0, 2, 3, 4]);
        assert_eq!(report.completion_order(), vec![3, 4, 2, 0]);
        for leaf in &report.leaves {
            assert_eq!(leaf.final_state, ActionState::Canceled);
            let mut n = Some(leaf.node);
            while let Some(i) = n {
                assert!(report.issued_at(i) <= report.issued_at(leaf.node));
                assert!(report.completed_at(i) >= report.completed_at(leaf.node));
                n = tree.parent(i);
            }
        }
        assert_eq!(tree.status(), BtStatus::Canceled);
        assert_eq!(tree.node_status(1), BtStatus::Success);
        assert_eq!(
            tree.cancel(&mut ExecutionContext { client: &mut c, now: 6.0 }),
            Err(CancelError::NotRunning(BtStatus::Canceled))
        );
    }
}
