#![allow(dead_code)]

use std::path::PathBuf;

use replisim::accounting::ReplicationEnergyModel;
use replisim::platform::{
    ClientSpec, DatacenterSpec, HostSpec, NetworkState, PlatformState, Scenario, SlaTerms, WorkloadSection,
};
use replisim::sim::{SimEvent, SimObserver};
use replisim::replication::DecisionRecord;

pub fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn host(cores: u32, frequency: f64) -> HostSpec {
    HostSpec {
        cores,
        core_frequency: frequency,
        cycle_cost: 1e-10,
        storage_capacity: 1e12,
        storage_cost: 1e-12,
        power_idle: 100.0,
        power_max: 200.0,
    }
}

/// `n` identical datacenters with one client of AVO `avo`.
pub fn uniform_scenario(n: usize, hosts: u32, host: HostSpec, avo: u32) -> Scenario {
    let dc = DatacenterSpec {
        carbon_intensity: 100.0,
        host_count: hosts,
        host,
        vms_per_host: vec![],
    };
    let mut inter_bw = vec![vec![1e8; n]; n];
    let mut inter_cost = vec![vec![1e-10; n]; n];
    for i in 0..n {
        inter_bw[i][i] = 0.0;
        inter_cost[i][i] = 0.0;
    }
    Scenario {
        datacenters: vec![dc; n],
        network: NetworkState {
            inter_bw,
            inter_cost,
            intra_bw: vec![1e9; n],
            intra_cost: vec![1e-11; n],
        },
        clients: vec![ClientSpec {
            latencies: (0..n).map(|i| 0.01 * (i + 1) as f64).collect(),
            sla: SlaTerms {
                rate_per_query: 1.0,
                availability_objective: avo,
                rt_objective: 0.5,
                rt_penalty: 2.0,
            },
            datum_size: 1e6,
            query_rate: 1.0,
        }],
        replica_vm_cores: 1,
        workload: WorkloadSection::default(),
        replication: ReplicationEnergyModel::default(),
        state_bounds: None,
    }
}

/// Checks capacity, replication factors and event-time order after every
/// event and decision.
#[derive(Default)]
pub struct InvariantChecker {
    pub last_time: f64,
    pub events: u64,
    pub violations: Vec<String>,
}

impl InvariantChecker {
    fn check(&mut self, state: &PlatformState) {
        if let Err(e) = state.check_capacity() {
            self.violations.push(e.to_string());
        }
        if let Err(e) = state.check_replication() {
            self.violations.push(e.to_string());
        }
    }
}

impl SimObserver for InvariantChecker {
    fn on_event(&mut self, event: &SimEvent, state: &PlatformState) {
        if event.time < self.last_time {
            self.violations.push(format!("event at {} after {}", event.time, self.last_time));
        }
        self.last_time = event.time;
        self.events += 1;
        self.check(state);
    }

    fn on_decision(&mut self, _record: &DecisionRecord, state: &PlatformState) {
        self.check(state);
    }
}
