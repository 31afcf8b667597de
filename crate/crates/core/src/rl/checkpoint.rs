//! Plain-text checkpoints of trained agents.
//!
//! ```text
//! starnoma-checkpoint v1
//! algorithm mappo
//! agent active
//! policy <sizes...>
//! <one parameter per line>
//! log_std <n>
//! <one value per line>
//! critic <sizes...>
//! <one parameter per line>
//! ```
//!
//! A multi-agent checkpoint holds agents `active` and `passive`; a
//! single-agent one holds `joint`. Values use the shortest representation
//! that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rl::mlp::{param_count, Mlp};
use crate::rl::policy::GaussianPolicy;
use crate::rl::train::{Agent, Agents, Algorithm};

const HEADER: &str = "starnoma-checkpoint v1";

fn write_net(out: &mut String, tag: &str, net: &Mlp) {
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{tag} {}", sizes.join(" "));
    for p in net.params() {
        let _ = writeln!(out, "{p:?}");
    }
}

fn write_agent(out: &mut String, name: &str, agent: &Agent) {
    let _ = writeln!(out, "agent {name}");
    write_net(out, "policy", &agent.policy.mean);
    let _ = writeln!(out, "log_std {}", agent.policy.log_std.len());
    for v in &agent.policy.log_std {
        let _ = writeln!(out, "{v:?}");
    }
    write_net(out, "critic", &agent.critic);
}

pub fn to_text(algorithm: Algorithm, agents: &Agents) -> Result<String> {
    let mut out = format!("{HEADER}\nalgorithm {}\n", algorithm.name());
    match agents {
        Agents::Multi { active, passive } => {
            write_agent(&mut out, "active", active);
            write_agent(&mut out, "passive", passive);
        }
        Agents::Single(agent) => write_agent(&mut out, "joint", agent),
        Agents::Random => return Err(Error::Checkpoint("the random baseline has no parameters".into())),
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => return Ok((i + 1, l.trim())),
                None => return Err(Error::Checkpoint("unexpected end of file".into())),
            }
        }
    }

    fn keyword(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (n, line) = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::Checkpoint(format!("line {n}: expected '{key}'")));
        }
        Ok(parts.collect())
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                let (n, line) = self.next()?;
                line.parse::<f64>()
                    .map_err(|e| Error::Checkpoint(format!("line {n}: {e}")))
            })
            .collect()
    }
}

fn parse_sizes(fields: &[&str]) -> Result<Vec<usize>> {
    fields
        .iter()
        .map(|s| s.parse().map_err(|e| Error::Checkpoint(format!("layer size '{s}': {e}"))))
        .collect()
}

fn read_net(lines: &mut Lines<'_>, tag: &str) -> Result<Mlp> {
    let sizes = parse_sizes(&lines.keyword(tag)?)?;
    if sizes.len() < 2 {
        return Err(Error::Checkpoint(format!("{tag}: need at least two layer sizes")));
    }
    let params = lines.values(param_count(&sizes))?;
    Mlp::from_params(sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn read_agent(lines: &mut Lines<'_>, name: &str) -> Result<Agent> {
    let got = lines.keyword("agent")?;
    if got != [name] {
        return Err(Error::Checkpoint(format!("expected agent '{name}', found {got:?}")));
    }
    let mean = read_net(lines, "policy")?;
    let n: usize = lines
        .keyword("log_std")?
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint("log_std count".into()))?;
    if n != mean.output_len() {
        return Err(Error::Checkpoint(format!("{n} log-stds for {} actions", mean.output_len())));
    }
    let log_std = lines.values(n)?;
    let critic = read_net(lines, "critic")?;
    if critic.output_len() != 1 || critic.input_len() != mean.input_len() {
        return Err(Error::Checkpoint("critic shape does not match the policy".into()));
    }
    Ok(Agent::from_parts(GaussianPolicy { mean, log_std }, critic, 3e-4))
}

pub fn from_text(text: &str) -> Result<(Algorithm, Agents)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, header) = lines.next()?;
    if header != HEADER {
        return Err(Error::Checkpoint(format!("bad header '{header}'")));
    }
    let algo = match lines.keyword("algorithm")?.as_slice() {
        [name] => Algorithm::parse(name).map_err(|e| Error::Checkpoint(e.to_string()))?,
        _ => return Err(Error::Checkpoint("algorithm line".into())),
    };
    let agents = match algo {
        Algorithm::Mappo | Algorithm::A2c => Agents::Multi {
            active: read_agent(&mut lines, "active")?,
            passive: read_agent(&mut lines, "passive")?,
        },
        Algorithm::Ppo => Agents::Single(read_agent(&mut lines, "joint")?),
        Algorithm::Random => return Err(Error::Checkpoint("the random baseline has no parameters".into())),
    };
    Ok((algo, agents))
}

pub fn save(path: &Path, algorithm: Algorithm, agents: &Agents) -> Result<()> {
    std::fs::write(path, to_text(algorithm, agents)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Algorithm, Agents)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    from_text(&text)
}
