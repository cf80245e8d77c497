//! RRT* with a risk-weighted node cost over circular obstacles.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Point2, Polyline};
use crate::risk::{wrs, RiskZoneConfig, SafePathBuffer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no node reached the goal in {iterations} iterations (best partial cost {best_partial_cost:.3}, {closest_distance:.2} m short)")]
    Failed {
        iterations: usize,
        best_partial_cost: f64,
        closest_distance: f64,
    },
    #[error("{0} lies inside an obstacle")]
    BlockedEndpoint(&'static str),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

/// A disc; serialized as `{x, y, r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(center: Point2, r: f64) -> Self {
        Self {
            x: center.x,
            y: center.y,
            r,
        }
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Obstacles block motion; hazards are carried for reporting only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMap {
    pub obstacles: Vec<Circle>,
    pub hazards: Vec<Circle>,
}

impl ObstacleMap {
    pub fn validate(&self) -> Result<(), String> {
        for c in self.obstacles.iter().chain(&self.hazards) {
            if !(c.r > 0.0) || !c.x.is_finite() || !c.y.is_finite() {
                return Err(format!("disc at ({}, {}) needs finite center and positive radius", c.x, c.y));
            }
        }
        Ok(())
    }

    pub fn point_free(&self, p: &Point2) -> bool {
        self.obstacles.iter().all(|o| o.center().distance(p) > o.r)
    }
}

/// True iff segment `p1 p2` stays strictly farther than each obstacle radius
/// from its center.
pub fn collision_free(p1: &Point2, p2: &Point2, map: &ObstacleMap) -> bool {
    map.obstacles
        .iter()
        .all(|o| point_segment_distance(&o.center(), p1, p2) > o.r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMode {
    /// Risk of the new node only.
    #[default]
    Node,
    /// Mean risk of five evenly spaced points along the edge, ending at the node.
    EdgeSampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_iterations: usize,
    pub step_size: f64,
    pub goal_radius: f64,
    pub rewire_radius: f64,
    pub goal_bias: f64,
    pub risk_mode: RiskMode,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            max_iterations: 2000,
            step_size: 2.0,
            goal_radius: 1.0,
            rewire_radius: 6.0,
            goal_bias: 0.05,
            risk_mode: RiskMode::Node,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.into()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be >= 0");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.goal_radius >= 0.0 && self.rewire_radius > 0.0) {
            return bad("goal_radius must be >= 0 and rewire_radius positive");
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal_bias must be in [0, 1]");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub point: Point2,
    pub parent: Option<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub path: Vec<Point2>,
    pub total_cost: f64,
    pub length_cost: f64,
    pub risk_cost: f64,
    pub iterations_used: usize,
    /// Best goal-reaching cost after each iteration (infinite until found).
    #[serde(skip)]
    pub cost_history: Vec<f64>,
    pub tree: Vec<TreeNode>,
}

fn edge_risk(a: &Point2, b: &Point2, central: &Polyline, zones: &RiskZoneConfig, mode: RiskMode) -> f64 {
    let risk_at = |p: &Point2| wrs(crate::geometry::closest_point_on_polyline(p, central).1, zones);
    match mode {
        RiskMode::Node => risk_at(b),
        RiskMode::EdgeSampled => (1..=5).map(|k| risk_at(&a.lerp(b, k as f64 / 5.0))).sum::<f64>() / 5.0,
    }
}

/// `(total, length, risk)` of a path. Risk sums the WRS of every path point.
pub fn path_cost(path: &Polyline, central: &Polyline, zones: &RiskZoneConfig, cfg: &PlannerConfig) -> (f64, f64, f64) {
    let length = path.length();
    let risk: f64 = path
        .points()
        .iter()
        .map(|p| wrs(crate::geometry::closest_point_on_polyline(p, central).1, zones))
        .sum();
    (cfg.alpha * length + cfg.beta * risk, length, risk)
}

struct Tree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    /// Length and risk of the edge into each node.
    edge: Vec<(f64, f64)>,
}

impl Tree {
    fn push(&mut self, node: TreeNode, edge: (f64, f64)) -> usize {
        if let Some(p) = node.parent {
            self.children[p].push(self.nodes.len());
        }
        self.nodes.push(node);
        self.children.push(Vec::new());
        self.edge.push(edge);
        self.nodes.len() - 1
    }

    fn reparent(&mut self, i: usize, parent: usize, cost: f64, edge: (f64, f64)) {
        if let Some(old) = self.nodes[i].parent {
            self.children[old].retain(|c| *c != i);
        }
        self.children[parent].push(i);
        let delta = cost - self.nodes[i].cost;
        self.nodes[i].parent = Some(parent);
        self.nodes[i].cost = cost;
        self.edge[i] = edge;
        let mut stack = self.children[i].clone();
        while let Some(c) = stack.pop() {
            self.nodes[c].cost += delta;
            stack.extend_from_slice(&self.children[c]);
        }
    }

    fn nearest(&self, p: &Point2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.point.distance(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

fn sample<R: Rng + ?Sized>(
    start: &Point2,
    goal: &Point2,
    central: &Polyline,
    half_width: f64,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Point2 {
    if rng.random::<f64>() < cfg.goal_bias {
        return *goal;
    }
    let margin = (2.0 * half_width).max(start.distance(goal) / 2.0);
    let (lo_x, hi_x) = (start.x.min(goal.x) - margin, start.x.max(goal.x) + margin);
    let (lo_y, hi_y) = (start.y.min(goal.y) - margin, start.y.max(goal.y) + margin);
    let mut p = *goal;
    for _ in 0..100 {
        p = Point2::new(rng.random_range(lo_x..hi_x), rng.random_range(lo_y..hi_y));
        // stay within the buffer dilated by one more half-width
        if crate::geometry::closest_point_on_polyline(&p, central).1 <= 2.0 * half_width {
            break;
        }
    }
    p
}

/// Grows a risk-aware RRT* tree from `start` and returns the cheapest path
/// whose end lies within `goal_radius` of `goal`.
///
/// Node cost is `C(parent) + alpha * |edge| + beta * risk`, with risk taken
/// against the buffer's central path. The start carries cost 0.
pub fn plan<R: Rng + ?Sized>(
    start: Point2,
    goal: Point2,
    map: &ObstacleMap,
    buffer: &SafePathBuffer,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanResult, PlanError> {
    cfg.validate()?;
    if !map.point_free(&start) {
        return Err(PlanError::BlockedEndpoint("start"));
    }
    if !map.point_free(&goal) {
        return Err(PlanError::BlockedEndpoint("goal"));
    }
    let root = TreeNode {
        point: start,
        parent: None,
        cost: 0.0,
    };
    if start == goal {
        return Ok(PlanResult {
            path: vec![start],
            total_cost: 0.0,
            length_cost: 0.0,
            risk_cost: 0.0,
            iterations_used: 0,
            cost_history: Vec::new(),
            tree: vec![root],
        });
    }

    let central = &buffer.central;
    let zones = &buffer.zones;
    let mut tree = Tree {
        nodes: vec![root],
        children: vec![Vec::new()],
        edge: vec![(0.0, 0.0)],
    };
    let mut goal_nodes: Vec<usize> = Vec::new();
    if start.distance(&goal) <= cfg.goal_radius {
        goal_nodes.push(0);
    }
    let mut history = Vec::with_capacity(cfg.max_iterations);
    let incremental = |a: &Point2, b: &Point2| -> (f64, f64) {
        (a.distance(b), edge_risk(a, b, central, zones, cfg.risk_mode))
    };
    let edge_cost = |e: (f64, f64)| cfg.alpha * e.0 + cfg.beta * e.1;

    for _ in 0..cfg.max_iterations {
        let target = sample(&start, &goal, central, buffer.half_width, cfg, rng);
        let near_idx = tree.nearest(&target);
        let from = tree.nodes[near_idx].point;
        let d = from.distance(&target);
        if d > 0.0 {
            let new = if d <= cfg.step_size {
                target
            } else {
                from.lerp(&target, cfg.step_size / d)
            };
            if collision_free(&from, &new, map) {
                let near: Vec<usize> = tree
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.point.distance(&new) <= cfg.rewire_radius)
                    .map(|(i, _)| i)
                    .collect();

                let e0 = incremental(&from, &new);
                let mut best = (tree.nodes[near_idx].cost + edge_cost(e0), near_idx, e0);
                for &i in &near {
                    if i == near_idx {
                        continue;
                    }
                    let p = tree.nodes[i].point;
                    let e = incremental(&p, &new);
                    let c = tree.nodes[i].cost + edge_cost(e);
                    if c < best.0 && collision_free(&p, &new, map) {
                        best = (c, i, e);
                    }
                }
                let new_idx = tree.push(
                    TreeNode {
                        point: new,
                        parent: Some(best.1),
                        cost: best.0,
                    },
                    best.2,
                );

                for &i in &near {
                    if i == best.1 {
                        continue;
                    }
                    let p = tree.nodes[i].point;
                    let e = incremental(&new, &p);
                    let c = best.0 + edge_cost(e);
                    if c < tree.nodes[i].cost && collision_free(&new, &p, map) && !is_ancestor(&tree, i, new_idx) {
                        tree.reparent(i, new_idx, c, e);
                    }
                }
                if new.distance(&goal) <= cfg.goal_radius {
                    goal_nodes.push(new_idx);
                }
            }
        }
        let best_goal = goal_nodes.iter().map(|i| tree.nodes[*i].cost).fold(f64::INFINITY, f64::min);
        history.push(best_goal);
    }

    let Some(&end) = goal_nodes.iter().min_by(|a, b| tree.nodes[**a].cost.total_cmp(&tree.nodes[**b].cost)) else {
        let closest = tree.nearest(&goal);
        return Err(PlanError::Failed {
            iterations: cfg.max_iterations,
            best_partial_cost: tree.nodes[closest].cost,
            closest_distance: tree.nodes[closest].point.distance(&goal),
        });
    };

    let mut chain = vec![end];
    while let Some(p) = tree.nodes[*chain.last().unwrap()].parent {
        chain.push(p);
    }
    chain.reverse();
    let (mut length, mut risk) = (0.0, 0.0);
    for &i in &chain[1..] {
        length += tree.edge[i].0;
        risk += tree.edge[i].1;
    }
    Ok(PlanResult {
        path: chain.iter().map(|i| tree.nodes[*i].point).collect(),
        total_cost: tree.nodes[end].cost,
        length_cost: length,
        risk_cost: risk,
        iterations_used: cfg.max_iterations,
        cost_history: history,
        tree: tree.nodes,
    })
}

fn is_ancestor(tree: &Tree, candidate: usize, mut node: usize) -> bool {
    while let Some(p) = tree.nodes[node].parent {
        if p == candidate {
            return true;
        }
        node = p;
    }
    false
}
