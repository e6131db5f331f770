//! Static platform description and live platform state.
//!
//! Datacenters are homogeneous: every host of datacenter `i` shares one
//! [`HostSpec`]. A platform with mixed hardware is described as several
//! datacenters whose mutual bandwidth equals the shared backbone.
//!
//! All indices are zero-based: datacenter `i`, host `j` within it, VM slot
//! `k` on that host, client `l` (whose datum is also `l`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::ReplicationEnergyModel;
use crate::agent::state::StateBounds;
use crate::error::{Error, Result};
use crate::workload::ExecCycles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HostId {
    pub dc: usize,
    pub host: usize,
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}.{}", self.dc, self.host)
    }
}

/// Identifies VM `k` on host `j` of datacenter `i`. Ordering is lexicographic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VmId {
    pub dc: usize,
    pub host: usize,
    pub slot: usize,
}

impl VmId {
    pub fn host_id(&self) -> HostId {
        HostId {
            dc: self.dc,
            host: self.host,
        }
    }
}

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}.{}.{}", self.dc, self.host, self.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub cores: u32,
    /// Cycles per second of one core.
    #[serde(rename = "frequency_hz")]
    pub core_frequency: f64,
    /// Currency per execution cycle.
    pub cycle_cost: f64,
    /// Bytes.
    #[serde(rename = "storage_bytes")]
    pub storage_capacity: f64,
    /// Currency per stored byte, charged once per served query.
    pub storage_cost: f64,
    #[serde(rename = "power_idle_w")]
    pub power_idle: f64,
    #[serde(rename = "power_max_w")]
    pub power_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatacenterSpec {
    /// gCO2 per kWh.
    pub carbon_intensity: f64,
    pub host_count: u32,
    pub host: HostSpec,
    /// Core counts of VMs already running on every host at load time. They
    /// mark hosts as active but hold no client data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vms_per_host: Vec<u32>,
}

/// Network matrices. Bandwidths are bytes/second, costs currency per byte.
///
/// Available bandwidth is constant for a run; [`NetworkState::bandwidth`]
/// takes the time argument so a time-varying trace can be plugged in later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub inter_bw: Vec<Vec<f64>>,
    pub inter_cost: Vec<Vec<f64>>,
    pub intra_bw: Vec<f64>,
    pub intra_cost: Vec<f64>,
}

impl NetworkState {
    /// Bandwidth available for a transfer from a host in `from` to a host in `to`.
    pub fn bandwidth(&self, from: usize, to: usize, _t: f64) -> f64 {
        if from == to {
            self.intra_bw[to]
        } else {
            self.inter_bw[from][to]
        }
    }

    pub fn cost_per_byte(&self, from: usize, to: usize) -> f64 {
        if from == to {
            self.intra_cost[to]
        } else {
            self.inter_cost[from][to]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaTerms {
    pub rate_per_query: f64,
    #[serde(rename = "avo")]
    pub availability_objective: u32,
    #[serde(rename = "rto_s")]
    pub rt_objective: f64,
    pub rt_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    /// Seconds, one entry per datacenter.
    #[serde(rename = "latencies_s")]
    pub latencies: Vec<f64>,
    #[serde(flatten)]
    pub sla: SlaTerms,
    #[serde(rename = "datum_size_bytes")]
    pub datum_size: f64,
    /// Poisson arrival rate, queries per second.
    #[serde(rename = "query_rate_hz")]
    pub query_rate: f64,
}

impl ClientSpec {
    /// Lowest-latency datacenter; ties go to the lower index.
    pub fn nearest_datacenter(&self) -> usize {
        let mut best = 0;
        for (i, &lat) in self.latencies.iter().enumerate() {
            if lat < self.latencies[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSection {
    #[serde(default)]
    pub exec_cycles: ExecCycles,
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub datacenters: Vec<DatacenterSpec>,
    pub network: NetworkState,
    pub clients: Vec<ClientSpec>,
    /// Cores given to each VM created to hold a replica.
    #[serde(default = "default_replica_vm_cores")]
    pub replica_vm_cores: u32,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub replication: ReplicationEnergyModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bounds: Option<StateBounds>,
}

fn default_replica_vm_cores() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmInstance {
    pub id: VmId,
    pub cores_occupied: u32,
    pub hosted_data: BTreeSet<usize>,
    /// Bytes reserved on the host for `hosted_data`.
    pub stored_bytes: f64,
    /// Simulation time at which the FIFO backlog drains.
    pub busy_until: f64,
    /// False while the replica is still being transferred.
    pub routable: bool,
}

impl VmInstance {
    pub fn is_busy(&self, t: f64) -> bool {
        self.busy_until > t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub id: HostId,
    pub vms: Vec<VmInstance>,
    next_slot: usize,
}

impl Host {
    fn new(id: HostId) -> Self {
        Host {
            id,
            vms: Vec::new(),
            next_slot: 0,
        }
    }

    pub fn used_cores(&self) -> u32 {
        self.vms.iter().map(|v| v.cores_occupied).sum()
    }

    pub fn used_storage(&self) -> f64 {
        self.vms.iter().map(|v| v.stored_bytes).sum()
    }

    pub fn busy_cores(&self, t: f64) -> u32 {
        self.vms
            .iter()
            .filter(|v| v.is_busy(t))
            .map(|v| v.cores_occupied)
            .sum()
    }

    /// A host is active when at least one VM runs on it.
    pub fn is_active(&self) -> bool {
        !self.vms.is_empty()
    }

    pub fn holds(&self, datum: usize) -> bool {
        self.vms.iter().any(|v| v.hosted_data.contains(&datum))
    }

    pub fn holds_routable(&self, datum: usize) -> bool {
        self.vms
            .iter()
            .any(|v| v.routable && v.hosted_data.contains(&datum))
    }
}

/// Per-datacenter replica counts of one datum and where the replicas live.
/// Only routable replicas are counted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplicaMap {
    pub per_dc: Vec<u32>,
    pub locations: Vec<VmId>,
}

impl ReplicaMap {
    pub fn new(n_datacenters: usize) -> Self {
        ReplicaMap {
            per_dc: vec![0; n_datacenters],
            locations: Vec::new(),
        }
    }

    pub fn total(&self) -> u32 {
        self.per_dc.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformState {
    pub datacenters: Vec<DatacenterSpec>,
    pub network: NetworkState,
    pub clients: Vec<ClientSpec>,
    pub replica_vm_cores: u32,
    pub exec_cycles: ExecCycles,
    pub replication_energy: ReplicationEnergyModel,
    pub state_bounds: Option<StateBounds>,
    pub hosts: Vec<Vec<Host>>,
    pub replicas: Vec<ReplicaMap>,
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<PlatformState> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<PlatformState> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    PlatformState::from_scenario(scenario)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

fn nonneg_finite(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.datacenters.len();
        ensure(n >= 1, || "at least one datacenter is required".into())?;
        ensure(!self.clients.is_empty(), || "at least one client is required".into())?;
        ensure(self.replica_vm_cores >= 1, || "replica_vm_cores must be at least 1".into())?;

        for (i, dc) in self.datacenters.iter().enumerate() {
            let h = &dc.host;
            ensure(nonneg_finite(dc.carbon_intensity), || {
                format!("datacenter {i}: carbon intensity must be non-negative")
            })?;
            ensure(dc.host_count >= 1, || format!("datacenter {i}: host count must be at least 1"))?;
            ensure(h.cores >= 1, || format!("datacenter {i}: hosts need at least one core"))?;
            ensure(positive_finite(h.core_frequency), || {
                format!("datacenter {i}: core frequency must be positive")
            })?;
            ensure(nonneg_finite(h.cycle_cost), || {
                format!("datacenter {i}: cycle cost must be non-negative")
            })?;
            ensure(positive_finite(h.storage_capacity), || {
                format!("datacenter {i}: storage capacity must be positive")
            })?;
            ensure(nonneg_finite(h.storage_cost), || {
                format!("datacenter {i}: storage cost must be non-negative")
            })?;
            ensure(
                nonneg_finite(h.power_idle) && h.power_max.is_finite() && h.power_idle <= h.power_max,
                || format!("datacenter {i}: need 0 <= power idle <= power max"),
            )?;
            ensure(dc.vms_per_host.iter().all(|&c| c >= 1), || {
                format!("datacenter {i}: pre-deployed VMs need at least one core")
            })?;
            ensure(dc.vms_per_host.iter().sum::<u32>() <= h.cores, || {
                format!("datacenter {i}: pre-deployed VMs exceed host core count")
            })?;
        }

        let net = &self.network;
        let square = net.inter_bw.len() == n
            && net.inter_cost.len() == n
            && net.inter_bw.iter().all(|r| r.len() == n)
            && net.inter_cost.iter().all(|r| r.len() == n);
        ensure(square, || format!("network: inter-datacenter matrices must be {n}x{n}"))?;
        ensure(net.intra_bw.len() == n && net.intra_cost.len() == n, || {
            format!("network: intra-datacenter vectors must have length {n}")
        })?;
        let all_entries = net
            .inter_bw
            .iter()
            .chain(net.inter_cost.iter())
            .flatten()
            .chain(net.intra_bw.iter())
            .chain(net.intra_cost.iter());
        for &x in all_entries {
            ensure(nonneg_finite(x), || "network: entries must be non-negative".into())?;
        }
        for i in 0..n {
            ensure(net.inter_bw[i][i] == 0.0 && net.inter_cost[i][i] == 0.0, || {
                "network: inter-datacenter matrices must have a zero diagonal".into()
            })?;
            for k in 0..n {
                ensure(net.inter_cost[i][k] == net.inter_cost[k][i], || {
                    "network: inter-datacenter cost matrix must be symmetric".into()
                })?;
            }
        }

        for (l, c) in self.clients.iter().enumerate() {
            ensure(c.latencies.len() == n, || {
                format!("client {l}: expected {n} latencies, got {}", c.latencies.len())
            })?;
            ensure(c.latencies.iter().all(|&x| positive_finite(x)), || {
                format!("client {l}: latencies must be positive")
            })?;
            ensure(positive_finite(c.datum_size), || format!("client {l}: datum size must be positive"))?;
            ensure(positive_finite(c.query_rate), || format!("client {l}: query rate must be positive"))?;
            ensure(nonneg_finite(c.sla.rate_per_query), || {
                format!("client {l}: rate per query must be non-negative")
            })?;
            ensure(c.sla.availability_objective >= 1, || {
                format!("client {l}: availability objective must be at least 1")
            })?;
            ensure(c.sla.availability_objective as usize <= n, || {
                format!("client {l}: availability objective exceeds datacenter count")
            })?;
            ensure(positive_finite(c.sla.rt_objective), || {
                format!("client {l}: response time objective must be positive")
            })?;
            ensure(nonneg_finite(c.sla.rt_penalty), || {
                format!("client {l}: response time penalty must be non-negative")
            })?;
        }

        self.workload.exec_cycles.validate()?;
        self.replication.validate()?;
        if let Some(bounds) = &self.state_bounds {
            bounds.validate()?;
        }
        Ok(())
    }
}

impl PlatformState {
    pub fn from_scenario(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.datacenters.len();
        let mut hosts = Vec::with_capacity(n);
        for (i, dc) in scenario.datacenters.iter().enumerate() {
            let mut row = Vec::with_capacity(dc.host_count as usize);
            for j in 0..dc.host_count as usize {
                let mut host = Host::new(HostId { dc: i, host: j });
                for &cores in &dc.vms_per_host {
                    push_vm(&mut host, cores, None, 0.0, true);
                }
                row.push(host);
            }
            hosts.push(row);
        }
        let replicas = vec![ReplicaMap::new(n); scenario.clients.len()];
        Ok(PlatformState {
            datacenters: scenario.datacenters,
            network: scenario.network,
            clients: scenario.clients,
            replica_vm_cores: scenario.replica_vm_cores,
            exec_cycles: scenario.workload.exec_cycles,
            replication_energy: scenario.replication,
            state_bounds: scenario.state_bounds,
            hosts,
            replicas,
        })
    }

    /// The static description this state was built from.
    pub fn to_scenario(&self) -> Scenario {
        Scenario {
            datacenters: self.datacenters.clone(),
            network: self.network.clone(),
            clients: self.clients.clone(),
            replica_vm_cores: self.replica_vm_cores,
            workload: WorkloadSection {
                exec_cycles: self.exec_cycles.clone(),
            },
            replication: self.replication_energy.clone(),
            state_bounds: self.state_bounds.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_scenario()).expect("scenario is always serializable")
    }

    pub fn n_datacenters(&self) -> usize {
        self.datacenters.len()
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, l: usize) -> Result<&ClientSpec> {
        self.clients.get(l).ok_or(Error::UnknownClient(l))
    }

    pub fn host_spec(&self, dc: usize) -> &HostSpec {
        &self.datacenters[dc].host
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.dc][id.host]
    }

    pub fn vm(&self, id: VmId) -> Option<&VmInstance> {
        self.hosts
            .get(id.dc)?
            .get(id.host)?
            .vms
            .iter()
            .find(|v| v.id == id)
    }

    pub fn vm_mut(&mut self, id: VmId) -> Option<&mut VmInstance> {
        self.hosts
            .get_mut(id.dc)?
            .get_mut(id.host)?
            .vms
            .iter_mut()
            .find(|v| v.id == id)
    }

    pub fn all_vms(&self) -> impl Iterator<Item = &VmInstance> {
        self.hosts.iter().flatten().flat_map(|h| h.vms.iter())
    }

    pub fn vm_count(&self) -> usize {
        self.all_vms().count()
    }

    /// Routable VMs holding `datum`, in id order.
    pub fn replica_vms(&self, datum: usize) -> Vec<VmId> {
        let mut ids: Vec<VmId> = self
            .all_vms()
            .filter(|v| v.routable && v.hosted_data.contains(&datum))
            .map(|v| v.id)
            .collect();
        ids.sort();
        ids
    }

    /// Mean busy-core fraction per datacenter over hosts holding a routable
    /// replica of `l`'s datum; zero where the datacenter holds none.
    pub fn avg_utilization(&self, l: usize, t: f64) -> Result<Vec<f64>> {
        self.client(l)?;
        Ok(self
            .hosts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cores = self.datacenters[i].host.cores as f64;
                let (sum, count) = row
                    .iter()
                    .filter(|h| h.holds_routable(l))
                    .fold((0.0, 0usize), |(s, c), h| {
                        (s + h.busy_cores(t) as f64 / cores, c + 1)
                    });
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            })
            .collect())
    }

    /// Hosts of datacenter `i` with room for one more replica VM and at
    /// least `sz` free bytes. Exact fits qualify.
    pub fn free_capacity(&self, i: usize, sz: f64) -> Vec<HostId> {
        let Some(row) = self.hosts.get(i) else {
            return Vec::new();
        };
        let spec = &self.datacenters[i].host;
        row.iter()
            .filter(|h| {
                h.used_cores() + self.replica_vm_cores <= spec.cores
                    && spec.storage_capacity - h.used_storage() >= sz
            })
            .map(|h| h.id)
            .collect()
    }

    /// [`free_capacity`](Self::free_capacity) restricted to hosts that do not
    /// already store `datum` (pending copies included).
    pub fn eligible_hosts(&self, i: usize, datum: usize) -> Vec<HostId> {
        let sz = self.clients[datum].datum_size;
        self.free_capacity(i, sz)
            .into_iter()
            .filter(|&h| !self.host(h).holds(datum))
            .collect()
    }

    pub fn global_replication_factor(&self, l: usize) -> Result<u32> {
        self.replicas
            .get(l)
            .map(ReplicaMap::total)
            .ok_or(Error::UnknownClient(l))
    }

    /// Deploy a VM holding `datum` on `host`. Capacity is not checked here.
    pub(crate) fn deploy_replica_vm(&mut self, host: HostId, datum: usize, routable: bool) -> VmId {
        let cores = self.replica_vm_cores;
        let size = self.clients[datum].datum_size;
        push_vm(&mut self.hosts[host.dc][host.host], cores, Some((datum, size)), 0.0, routable)
    }

    /// Mark a pending replica VM routable and count it in the replica map.
    pub(crate) fn commit_replica(&mut self, datum: usize, vm: VmId) -> Result<()> {
        let v = self
            .vm_mut(vm)
            .ok_or_else(|| Error::Invariant(format!("replica VM {vm} disappeared")))?;
        v.routable = true;
        let map = &mut self.replicas[datum];
        map.per_dc[vm.dc] += 1;
        map.locations.push(vm);
        Ok(())
    }

    /// Core and storage occupancy of every host is within its capacity.
    pub fn check_capacity(&self) -> Result<()> {
        for row in &self.hosts {
            for h in row {
                let spec = &self.datacenters[h.id.dc].host;
                if h.used_cores() > spec.cores {
                    return Err(Error::Invariant(format!(
                        "host {} uses {} of {} cores",
                        h.id,
                        h.used_cores(),
                        spec.cores
                    )));
                }
                if h.used_storage() > spec.storage_capacity {
                    return Err(Error::Invariant(format!(
                        "host {} stores {} of {} bytes",
                        h.id,
                        h.used_storage(),
                        spec.storage_capacity
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every datum has at least its availability objective in routable
    /// replicas and the replica map agrees with the hosts.
    pub fn check_replication(&self) -> Result<()> {
        for (l, c) in self.clients.iter().enumerate() {
            let map = &self.replicas[l];
            let gr = map.total();
            if gr < c.sla.availability_objective {
                return Err(Error::Invariant(format!(
                    "client {l}: replication factor {gr} below availability objective {}",
                    c.sla.availability_objective
                )));
            }
            if map.locations.len() != gr as usize {
                return Err(Error::Invariant(format!(
                    "client {l}: {} replica locations for replication factor {gr}",
                    map.locations.len()
                )));
            }
        }
        Ok(())
    }
}

fn push_vm(
    host: &mut Host,
    cores: u32,
    datum: Option<(usize, f64)>,
    busy_until: f64,
    routable: bool,
) -> VmId {
    let id = VmId {
        dc: host.id.dc,
        host: host.id.host,
        slot: host.next_slot,
    };
    host.next_slot += 1;
    let mut hosted_data = BTreeSet::new();
    let mut stored_bytes = 0.0;
    if let Some((d, size)) = datum {
        hosted_data.insert(d);
        stored_bytes = size;
    }
    host.vms.push(VmInstance {
        id,
        cores_occupied: cores,
        hosted_data,
        stored_bytes,
        busy_until,
        routable,
    });
    id
}
