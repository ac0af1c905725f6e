use std::collections::BTreeSet;
use std::sync::Arc;

use indexmap::IndexMap;
use parking_lot::{Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::node::{NodeState, SimNode, World};
use crate::stdlib::{sh, Meter, NodeAccess, Output, ServiceError, Transport};

/// Virtual cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClockConfig {
    /// Units charged per session.
    pub connect_latency: u64,
    /// Units charged per step.
    pub step_latency: u64,
    /// Seed of the per-session jitter; 0 disables it.
    pub jitter_seed: u64,
}

impl Default for SimClockConfig {
    fn default() -> Self {
        SimClockConfig {
            connect_latency: 10,
            step_latency: 1,
            jitter_seed: 0,
        }
    }
}

impl SimClockConfig {
    /// Jitter in `0..=connect_latency/2`, a pure function of the seed, the
    /// action key and the session index.
    pub fn jitter(&self, key: &str, session: u64) -> u64 {
        if self.jitter_seed == 0 {
            return 0;
        }
        let mut h = Sha256::new();
        h.update(self.jitter_seed.to_le_bytes());
        h.update(key.as_bytes());
        h.update(session.to_le_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes) % (self.connect_latency / 2 + 1)
    }

    pub fn session_cost(&self, steps: usize, key: &str, session: u64) -> u64 {
        self.connect_latency + self.step_latency * steps as u64 + self.jitter(key, session)
    }
}

/// Set of simulated nodes addressed by hostname. Each node has its own
/// lock, so sessions to distinct nodes proceed concurrently.
#[derive(Debug, Default)]
pub struct Fleet {
    clock: SimClockConfig,
    nodes: IndexMap<String, Mutex<SimNode>>,
    /// Hosts handed out by reservations, in order.
    pool: Vec<String>,
    unreachable: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub clock: SimClockConfig,
    pub nodes: Vec<SimNode>,
    pub pool: Vec<String>,
    pub unreachable: BTreeSet<String>,
}

impl Fleet {
    /// `n` reservable nodes `simnode-0` .. `simnode-(n-1)`.
    pub fn create(n: usize, clock: SimClockConfig) -> Self {
        let mut fleet = Fleet {
            clock,
            ..Fleet::default()
        };
        for i in 0..n {
            let id = format!("simnode-{i}");
            fleet.pool.push(id.clone());
            fleet.nodes.insert(id.clone(), Mutex::new(SimNode::new(id)));
        }
        fleet
    }

    /// Add a named host that is not reservable (e.g. a frontend).
    pub fn add_host(&mut self, host: &str) {
        self.nodes
            .entry(host.to_string())
            .or_insert_with(|| Mutex::new(SimNode::new(host)));
        self.unreachable.remove(host);
    }

    /// Add a host that refuses connections.
    pub fn add_unreachable(&mut self, host: &str) {
        self.unreachable.insert(host.to_string());
    }

    pub fn clock(&self) -> SimClockConfig {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, host: &str) -> bool {
        self.nodes.contains_key(host)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    pub fn node(&self, host: &str) -> Option<MutexGuard<'_, SimNode>> {
        self.nodes.get(host).map(|n| n.lock())
    }

    /// Observable state of every node, in fleet order.
    pub fn states(&self) -> Vec<(String, NodeState)> {
        self.nodes
            .iter()
            .map(|(id, n)| (id.clone(), n.lock().state().clone()))
            .collect()
    }

    pub fn snapshot(&self) -> FleetSnapshot {
        FleetSnapshot {
            clock: self.clock,
            nodes: self.nodes.values().map(|n| n.lock().clone()).collect(),
            pool: self.pool.clone(),
            unreachable: self.unreachable.clone(),
        }
    }

    pub fn from_snapshot(s: FleetSnapshot) -> Self {
        Fleet {
            clock: s.clock,
            nodes: s
                .nodes
                .into_iter()
                .map(|n| (n.id().to_string(), Mutex::new(n)))
                .collect(),
            pool: s.pool,
            unreachable: s.unreachable,
        }
    }

    /// Deliver one rendered session to `host`.
    pub fn session(&self, host: &str, script: &str, meter: &Meter) -> Result<Output, ServiceError> {
        let steps = sh::parse(script)?;
        let cost = self
            .clock
            .session_cost(steps.len(), meter.key(), meter.next_session());
        meter.charge(cost);
        if self.unreachable.contains(host) {
            return Err(ServiceError::ConnectFailed {
                host: host.to_string(),
                reason: "connection refused".into(),
            });
        }
        let node = self
            .nodes
            .get(host)
            .ok_or_else(|| ServiceError::ConnectFailed {
                host: host.to_string(),
                reason: "unknown host".into(),
            })?;
        let out = node.lock().run_session(&steps, self);
        if out.status == 0 {
            Ok(out)
        } else {
            Err(ServiceError::RemoteError {
                status: out.status,
                output: out.stdout,
            })
        }
    }
}

impl World for Fleet {
    fn reserve(&self, n: u64) -> Vec<String> {
        self.pool
            .iter()
            .take(usize::try_from(n).unwrap_or(usize::MAX))
            .cloned()
            .collect()
    }
}

/// Transport delivering sessions to a [`Fleet`]; durations are virtual.
#[derive(Debug, Clone)]
pub struct SimTransport {
    fleet: Arc<Fleet>,
}

impl SimTransport {
    pub fn new(fleet: Arc<Fleet>) -> Self {
        SimTransport { fleet }
    }

    pub fn fleet(&self) -> &Arc<Fleet> {
        &self.fleet
    }
}

impl Transport for SimTransport {
    fn name(&self) -> &str {
        "sim"
    }

    fn send(&self, access: &NodeAccess, script: &str, meter: &Meter) -> Result<Output, ServiceError> {
        self.fleet.session(&access.host, script, meter)
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stdlib::Step;

    fn access(host: &str) -> NodeAccess {
        NodeAccess {
            host: host.into(),
            port: 22,
            user: None,
        }
    }

    #[test]
    fn naming() {
        assert!(Fleet::create(0, SimClockConfig::default()).is_empty());
        let f = Fleet::create(3, SimClockConfig::default());
        assert_eq!(f.ids().collect::<Vec<_>>(), ["simnode-0", "simnode-1", "simnode-2"]);
    }

    #[test]
    fn session_cost_and_effect() {
        let fleet = Arc::new(Fleet::create(2, SimClockConfig::default()));
        let t = SimTransport::new(fleet.clone());
        let m = Meter::new("k");
        let script = sh::render(&[Step::start_process("NS", "ns-launch")]).unwrap();
        t.send(&access("simnode-1"), &script, &m).unwrap();
        assert_eq!(m.units(), 11);
        assert!(fleet.node("simnode-1").unwrap().processes().contains("NS"));
        assert!(fleet.node("simnode-0").unwrap().processes().is_empty());
        let out = t.send(&access("simnode-0"), "set -e\ntrue\n", &m).unwrap();
        assert_eq!(out, Output::success(""));
    }

    #[test]
    fn unreachable_and_unknown_hosts() {
        let mut fleet = Fleet::create(1, SimClockConfig::default());
        fleet.add_unreachable("oar.example");
        let m = Meter::new("k");
        assert!(matches!(
            fleet.session("oar.example", "true\n", &m),
            Err(ServiceError::ConnectFailed { .. })
        ));
        assert!(matches!(
            fleet.session("elsewhere", "true\n", &m),
            Err(ServiceError::ConnectFailed { .. })
        ));
    }

    #[test]
    fn reservation_output() {
        let mut fleet = Fleet::create(5, SimClockConfig::default());
        fleet.add_host("frontend");
        let m = Meter::new("k");
        let out = fleet
            .session("frontend", "oargridsub gdx:rdef=/nodes=3\n", &m)
            .unwrap();
        assert_eq!(out.stdout, "simnode-0\nsimnode-1\nsimnode-2\n");
    }

    #[test]
    fn jitter_is_deterministic_and_bounded() {
        let c = SimClockConfig {
            jitter_seed: 7,
            ..SimClockConfig::default()
        };
        for s in 0..50 {
            let j = c.jitter("a#start", s);
            assert!(j <= 5);
            assert_eq!(j, c.jitter("a#start", s));
        }
        assert_eq!(SimClockConfig::default().jitter("a", 0), 0);
    }

    #[test]
    fn snapshot_round_trip() {
        let fleet = Fleet::create(2, SimClockConfig::default());
        fleet
            .session("simnode-0", "set -e\nexport A=1\n", &Meter::new("k"))
            .unwrap();
        let snap = fleet.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back = Fleet::from_snapshot(serde_json::from_str(&json).unwrap());
        assert_eq!(back.states(), fleet.states());
    }
}
