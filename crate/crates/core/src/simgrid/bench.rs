use std::fmt::Write as _;

use serde::Serialize;

use super::SimClockConfig;
use crate::personality::Registry;
use crate::pipeline::{self, PipelineError};
use crate::runtime::{self, ExecOptions, RuntimeError};

/// Deployment configuration parameterized by node count.
pub trait ConfigTemplate {
    fn render(&self, n: usize) -> String;
}

/// `n` nodes on one dynamic node list; the name service on `node-0` and,
/// from two nodes up, the manager on `node-0` and one server on each other
/// node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenCcmTemplate {
    /// Wrap servers in a `ParallelRunner` group.
    pub parallel: bool,
}

impl ConfigTemplate for OpenCcmTemplate {
    fn render(&self, n: usize) -> String {
        let last = n.saturating_sub(1);
        let mut out = String::from("Bench = OpenCCM.Deployment {\n  nodes = {\n");
        out.push_str("    hostname = DynamicHost(~/nodelist)\n");
        if n > 0 {
            let _ = writeln!(out, "    apply FOR(i,0,{last}) {{");
            out.push_str(
                "      node-%{i} = Grid5000_NODE {
        hostname = nodes/hostname
        jre = Jre(/opt/java)
        openccm = OpenCCM(/opt/OpenCCM,/opt/JacORB)
      }
    }
",
            );
        }
        out.push_str("  }\n  services = {\n");
        if n > 0 {
            out.push_str("    ns = OpenCCM.NameService { node = nodes/node-0 }\n");
        }
        if n > 1 {
            out.push_str("    dci = OpenCCM.DCIManager(DCI) {\n      ns = services/ns\n      node = nodes/node-0\n    }\n");
            let server = "server-%{i} = OpenCCM.DCI_NODE(NM_%{i}) {\n        dci = services/dci\n        node = nodes/node-%{i}\n      }";
            if self.parallel {
                let _ = writeln!(
                    out,
                    "    servers = ParallelRunner {{\n      apply FOR(i,1,{last}) {{\n        {server}\n      }}\n    }}"
                );
            } else {
                let _ = writeln!(out, "    apply FOR(i,1,{last}) {{\n      {server}\n    }}");
            }
        }
        out.push_str("  }\n}\n");
        out
    }
}

/// User template text with `${n}` (node count) and `${last}` (n - 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextTemplate(pub String);

impl ConfigTemplate for TextTemplate {
    fn render(&self, n: usize) -> String {
        self.0
            .replace("${n}", &n.to_string())
            .replace("${last}", &n.saturating_sub(1).to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScalingPoint {
    pub n_nodes: usize,
    /// Wall milliseconds spent loading, validating, planning and
    /// instantiating.
    pub overhead_ms: u64,
    /// Virtual time of the deployment itself.
    pub effective_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("n = {n}: {source}")]
    Pipeline {
        n: usize,
        #[source]
        source: PipelineError,
    },
    #[error("n = {n}: {source}")]
    Runtime {
        n: usize,
        #[source]
        source: RuntimeError,
    },
}

/// Deploy the template once per size on a fresh simulated grid.
pub fn measure_scaling(
    template: &dyn ConfigTemplate,
    sizes: &[usize],
    clock: SimClockConfig,
    max_workers: usize,
    registry: &Registry,
) -> Result<Vec<ScalingPoint>, BenchError> {
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let sources = vec![(format!("bench-{n}.gdf"), template.render(n))];
        let loaded =
            pipeline::load(&sources, registry).map_err(|source| BenchError::Pipeline { n, source })?;
        let world = pipeline::sim_world(&loaded.compiled.descriptor, registry, clock);
        let report = runtime::execute(
            &loaded.compiled.plan,
            &loaded.assembly,
            &world.environment(),
            ExecOptions::workers(max_workers),
        )
        .map_err(|source| BenchError::Runtime { n, source })?;
        out.push(ScalingPoint {
            n_nodes: n,
            overhead_ms: loaded.overhead.as_millis() as u64,
            effective_ms: report.total_ms,
        });
    }
    Ok(out)
}

/// `n_nodes,overhead_ms,effective_ms`.
pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut out = String::from("n_nodes,overhead_ms,effective_ms\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.n_nodes, p.overhead_ms, p.effective_ms);
    }
    out
}

/// Least-squares line through `(x, y)`: slope, intercept and R².
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_line() {
        let (m, b, r2) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]);
        assert!((m - 2.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9 && (r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn template_shapes() {
        let one = OpenCcmTemplate { parallel: true }.render(1);
        assert!(one.contains("ns = ") && !one.contains("dci"));
        let cfg = crate::dsl::load([("b.gdf", OpenCcmTemplate { parallel: false }.render(3).as_str())])
            .unwrap();
        let services = cfg.section("services").unwrap();
        assert_eq!(
            services.entries.keys().collect::<Vec<_>>(),
            ["ns", "dci", "server-1", "server-2"]
        );
    }
}
