//! The simulated machine: a dragonfly of groups, chassis, routers and nodes,
//! where one node per chassis serves as a burst-buffer storage node and all
//! others are compute nodes.
//!
//! Node ids are flat row-major indices (group outermost, slot innermost).
//! The engine works on dense compute indices `0..M` and storage indices
//! `0..S`; [`Platform`] maps between the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyParams {
    pub groups: usize,
    pub chassis_per_group: usize,
    pub routers_per_chassis: usize,
    pub nodes_per_router: usize,
}

impl TopologyParams {
    pub fn total_nodes(&self) -> usize {
        self.groups * self.chassis_per_group * self.routers_per_chassis * self.nodes_per_router
    }

    pub fn nodes_per_chassis(&self) -> usize {
        self.routers_per_chassis * self.nodes_per_router
    }

    pub fn chassis_count(&self) -> usize {
        self.groups * self.chassis_per_group
    }

    fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("groups", self.groups),
            ("chassis_per_group", self.chassis_per_group),
            ("routers_per_chassis", self.routers_per_chassis),
            ("nodes_per_router", self.nodes_per_router),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn coord(&self, id: NodeId) -> NodeCoord {
        let slot = id % self.nodes_per_router;
        let rest = id / self.nodes_per_router;
        let router = rest % self.routers_per_chassis;
        let rest = rest / self.routers_per_chassis;
        let chassis = rest % self.chassis_per_group;
        let group = rest / self.chassis_per_group;
        NodeCoord {
            group,
            chassis,
            router,
            slot,
        }
    }

    pub fn node_id(&self, c: NodeCoord) -> NodeId {
        ((c.group * self.chassis_per_group + c.chassis) * self.routers_per_chassis + c.router)
            * self.nodes_per_router
            + c.slot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeCoord {
    pub group: usize,
    pub chassis: usize,
    pub router: usize,
    pub slot: usize,
}

/// Serialized platform description. Defaults reproduce the 108-node
/// dragonfly with 12 burst-buffer nodes of 40 GB each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    pub groups: usize,
    pub chassis_per_group: usize,
    pub routers_per_chassis: usize,
    pub nodes_per_router: usize,
    pub storage_slot: usize,
    pub storage_capacity_bytes: u64,
    pub cpu_speed: f64,
    #[serde(rename = "compute_link_Bps")]
    pub compute_link_bps: f64,
    #[serde(rename = "pfs_link_Bps")]
    pub pfs_link_bps: f64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            groups: 3,
            chassis_per_group: 4,
            routers_per_chassis: 3,
            nodes_per_router: 3,
            storage_slot: 0,
            storage_capacity_bytes: 40_000_000_000,
            cpu_speed: 1e9,
            compute_link_bps: 1.25e9,
            pfs_link_bps: 5e9,
        }
    }
}

impl PlatformConfig {
    pub fn topology(&self) -> TopologyParams {
        TopologyParams {
            groups: self.groups,
            chassis_per_group: self.chassis_per_group,
            routers_per_chassis: self.routers_per_chassis,
            nodes_per_router: self.nodes_per_router,
        }
    }

    pub fn build(&self) -> Result<Platform> {
        let mut p = build_platform(
            self.topology(),
            self.storage_slot,
            self.storage_capacity_bytes,
            self.cpu_speed,
        )?;
        if !(self.compute_link_bps > 0.0) {
            return Err(Error::config("compute_link_Bps", "must be positive"));
        }
        if !(self.pfs_link_bps > 0.0) {
            return Err(Error::config("pfs_link_Bps", "must be positive"));
        }
        p.compute_link_bps = self.compute_link_bps;
        p.pfs_link_bps = self.pfs_link_bps;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Compute(usize),
    Storage(usize),
}

/// Immutable machine description.
#[derive(Debug, Clone)]
pub struct Platform {
    pub topology: TopologyParams,
    pub storage_slot: usize,
    pub storage_capacity: u64,
    pub cpu_speed: f64,
    /// Link bandwidths are metadata for the IO-Aware workload transform only.
    pub compute_link_bps: f64,
    pub pfs_link_bps: f64,
    roles: Vec<NodeRole>,
    compute_ids: Vec<NodeId>,
    storage_ids: Vec<NodeId>,
    /// Per compute index, storage indices from nearest to farthest.
    storage_order: Vec<Vec<usize>>,
}

pub fn build_platform(
    params: TopologyParams,
    storage_slot: usize,
    capacity: u64,
    cpu_speed: f64,
) -> Result<Platform> {
    params.validate()?;
    if storage_slot >= params.nodes_per_chassis() {
        return Err(Error::config(
            "storage_slot",
            format!(
                "{storage_slot} is outside a chassis of {} nodes",
                params.nodes_per_chassis()
            ),
        ));
    }
    if capacity == 0 {
        return Err(Error::config("storage_capacity_bytes", "must be positive"));
    }
    if !(cpu_speed > 0.0) {
        return Err(Error::config("cpu_speed", "must be positive"));
    }
    if params.nodes_per_chassis() < 2 {
        return Err(Error::config(
            "nodes_per_router",
            "a chassis needs at least one compute node besides the storage node",
        ));
    }

    let per_chassis = params.nodes_per_chassis();
    let mut roles = Vec::with_capacity(params.total_nodes());
    let mut compute_ids = Vec::new();
    let mut storage_ids = Vec::new();
    for id in 0..params.total_nodes() {
        if id % per_chassis == storage_slot {
            roles.push(NodeRole::Storage(storage_ids.len()));
            storage_ids.push(id);
        } else {
            roles.push(NodeRole::Compute(compute_ids.len()));
            compute_ids.push(id);
        }
    }

    let storage_order = compute_ids
        .iter()
        .map(|&id| order_storage_for(&params, &storage_ids, id))
        .collect();

    Ok(Platform {
        topology: params,
        storage_slot,
        storage_capacity: capacity,
        cpu_speed,
        compute_link_bps: PlatformConfig::default().compute_link_bps,
        pfs_link_bps: PlatformConfig::default().pfs_link_bps,
        roles,
        compute_ids,
        storage_ids,
        storage_order,
    })
}

fn order_storage_for(params: &TopologyParams, storage_ids: &[NodeId], node: NodeId) -> Vec<usize> {
    let here = params.coord(node);
    let mut idx: Vec<usize> = (0..storage_ids.len()).collect();
    idx.sort_by_key(|&s| {
        let id = storage_ids[s];
        let c = params.coord(id);
        if c.group == here.group && c.chassis == here.chassis {
            (0, 0, 0, id)
        } else if c.group == here.group {
            (1, c.chassis.abs_diff(here.chassis), 0, id)
        } else {
            (2, c.group.abs_diff(here.group), c.chassis, id)
        }
    });
    idx
}

impl Platform {
    pub fn default_instance() -> Platform {
        PlatformConfig::default()
            .build()
            .expect("default platform is valid")
    }

    /// Total processors M.
    pub fn compute_count(&self) -> usize {
        self.compute_ids.len()
    }

    pub fn storage_count(&self) -> usize {
        self.storage_ids.len()
    }

    /// Total burst-buffer capacity B in bytes.
    pub fn total_bb(&self) -> u64 {
        self.storage_capacity * self.storage_ids.len() as u64
    }

    pub fn role(&self, id: NodeId) -> Option<NodeRole> {
        self.roles.get(id).copied()
    }

    pub fn compute_ids(&self) -> &[NodeId] {
        &self.compute_ids
    }

    pub fn storage_ids(&self) -> &[NodeId] {
        &self.storage_ids
    }

    pub fn compute_id(&self, idx: usize) -> NodeId {
        self.compute_ids[idx]
    }

    pub fn storage_id(&self, idx: usize) -> NodeId {
        self.storage_ids[idx]
    }

    /// Storage indices ordered by topological distance from compute index `idx`.
    pub fn storage_order_idx(&self, idx: usize) -> &[usize] {
        &self.storage_order[idx]
    }

    /// Storage node ids ordered by distance from `compute_node`: same chassis,
    /// then the rest of the group by chassis distance, then other groups by
    /// group distance.
    pub fn storage_order(&self, compute_node: NodeId) -> Result<Vec<NodeId>> {
        match self.role(compute_node) {
            Some(NodeRole::Compute(idx)) => Ok(self.storage_order[idx]
                .iter()
                .map(|&s| self.storage_ids[s])
                .collect()),
            _ => Err(Error::NotComputeNode(compute_node)),
        }
    }

    /// Largest job (in nodes) whose per-node burst-buffer request `bb` can be
    /// placed on an idle machine without splitting a node's request.
    pub fn max_placeable(&self, bb: u64) -> usize {
        if bb == 0 {
            return self.compute_count();
        }
        let per_node = (self.storage_capacity / bb) as usize;
        (per_node * self.storage_count()).min(self.compute_count())
    }
}
