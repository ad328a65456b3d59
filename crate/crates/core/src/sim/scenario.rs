//! Scenario scripts, in a line-oriented text form or as JSON.
//!
//! ```text
//! topology fig3                 # builtin fixture name or a path
//! regions fig3                  # builtin, path, or `all` (every full region)
//! seed 7
//! duration 400
//! config * effort=maximal courtesy=on
//! config region 4 courtesy=off
//! send from 11 to 81 count 100 every 1 at 0 fid 1
//! send from 11 to * region 8 count 10   # every node of region 8
//! move 81 to 5 at 50
//! fail-link 60 70 at 100
//! explorer-period 50
//! explorer-reply stacks          # the only supported reply form
//! attack from 4 to 81 rate 2 at 0 until 100
//! alert target 81 rogue 4 ttl 500 trh 51 at 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dynamics::MobilityConfig;
use crate::regions::{Horizon, Multiplicity};
use crate::routing::{Effort, IntraStrategy, RoutingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "id")]
pub enum ConfigScope {
    All,
    Region(u16),
    Switch(u16),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigPatch {
    pub effort: Option<Effort>,
    pub rbs_courtesy: Option<bool>,
    pub cache_ttl: Option<u64>,
    pub intra: Option<IntraStrategy>,
    pub multiplicity: Option<Multiplicity>,
    pub region_fee: Option<f64>,
}

impl ConfigPatch {
    pub fn apply(&self, cfg: &mut RoutingConfig) {
        if let Some(v) = self.effort {
            cfg.effort = v;
        }
        if let Some(v) = self.rbs_courtesy {
            cfg.rbs_courtesy = v;
        }
        if let Some(v) = self.cache_ttl {
            cfg.cache_ttl = v;
        }
        if let Some(v) = self.intra {
            cfg.intra = v;
        }
        if let Some(v) = self.multiplicity {
            cfg.multiplicity = v;
        }
        if let Some(v) = self.region_fee {
            cfg.region_fee = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRule {
    pub scope: ConfigScope,
    pub patch: ConfigPatch,
}

fn one() -> u32 {
    1
}

fn one_tick() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SendSpec {
    pub from: u16,
    /// `None` addresses every node of the destination region.
    #[serde(default)]
    pub to: Option<u16>,
    /// Destination region; defaults to the receiver's region.
    #[serde(default)]
    pub region: Option<u16>,
    /// Explicit waypoint stack, destination last.
    #[serde(default)]
    pub stack: Option<Vec<u16>>,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default = "one_tick")]
    pub every: u64,
    #[serde(default)]
    pub fid: Option<u16>,
    #[serde(default)]
    pub fission: Option<u8>,
    #[serde(default = "yes")]
    pub rbs: bool,
    #[serde(default)]
    pub path_latency: Option<u64>,
    #[serde(default)]
    pub hop_latency: Option<u64>,
    #[serde(default)]
    pub path_loss: Option<f64>,
    #[serde(default)]
    pub hop_loss: Option<f64>,
    /// Wrap an opaque legacy header instead of building the IDs SuperField.
    #[serde(default)]
    pub legacy: bool,
}

impl SendSpec {
    pub fn new(from: u16, to: Option<u16>) -> Self {
        SendSpec {
            from,
            to,
            region: None,
            stack: None,
            count: 1,
            every: 1,
            fid: None,
            fission: None,
            rbs: true,
            path_latency: None,
            hop_latency: None,
            path_loss: None,
            hop_loss: None,
            legacy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verb")]
pub enum Verb {
    Send(SendSpec),
    Move {
        nid: u16,
        to: u16,
    },
    FailLink {
        a: u16,
        b: u16,
    },
    Attack {
        from_region: u16,
        to: u16,
        rate: f64,
        #[serde(default)]
        until: Option<u64>,
    },
    Alert {
        target: u16,
        rogue: Vec<u16>,
        ttl: u64,
        #[serde(default)]
        trh: Option<u16>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedVerb {
    pub at: u64,
    #[serde(default)]
    pub line: usize,
    #[serde(flatten)]
    pub verb: Verb,
}

fn global() -> Horizon {
    Horizon::Global
}

fn hop_ttl() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub topology: String,
    #[serde(default)]
    pub regions: Option<String>,
    pub seed: u64,
    pub duration: u64,
    #[serde(default)]
    pub link_loss: Option<f64>,
    #[serde(default = "global")]
    pub horizon: Horizon,
    /// Ticks for one region hop of a control message.
    #[serde(default = "one_tick")]
    pub hop_delay: u64,
    /// Region handlings after which a packet copy is dropped.
    #[serde(default = "hop_ttl")]
    pub hop_ttl: u32,
    #[serde(default)]
    pub mobility: MobilityConfig,
    #[serde(default)]
    pub pull_retain: bool,
    /// Packets per tick a regulator hub re-emits.
    #[serde(default = "one")]
    pub trh_rate: u32,
    #[serde(default)]
    pub score_window: Option<u64>,
    #[serde(default)]
    pub explorer_period: Option<u64>,
    #[serde(default)]
    pub configs: Vec<ConfigRule>,
    #[serde(default)]
    pub verbs: Vec<TimedVerb>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioScript {
    pub fn new(topology: &str, regions: Option<&str>, seed: u64, duration: u64) -> Self {
        ScenarioScript {
            topology: topology.to_string(),
            regions: regions.map(str::to_string),
            seed,
            duration,
            link_loss: None,
            horizon: Horizon::Global,
            hop_delay: 1,
            hop_ttl: 64,
            mobility: MobilityConfig::default(),
            pull_retain: false,
            trh_rate: 1,
            score_window: None,
            explorer_period: None,
            configs: Vec::new(),
            verbs: Vec::new(),
            base_dir: None,
        }
    }

    pub fn push(&mut self, at: u64, verb: Verb) {
        self.verbs.push(TimedVerb { at, line: 0, verb });
        self.sort_verbs();
    }

    pub fn sort_verbs(&mut self) {
        self.verbs.sort_by_key(|v| v.at);
    }

    pub fn configure(&mut self, scope: ConfigScope, patch: ConfigPatch) {
        self.configs.push(ConfigRule { scope, patch });
    }

    pub fn resolve(&self, reference: &str) -> PathBuf {
        match &self.base_dir {
            Some(d) => d.join(reference),
            None => PathBuf::from(reference),
        }
    }
}

struct Line<'a> {
    no: usize,
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Line<'a> {
    fn err(&self, message: impl Into<String>) -> SimError {
        SimError::Script {
            line: self.no,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, SimError> {
        let t = self
            .toks
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(format!("expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SimError> {
        let t = self.next(&format!("`{kw}`"))?;
        if t != kw {
            return Err(self.err(format!("expected `{kw}`, found `{t}`")));
        }
        Ok(())
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, SimError>
    where
        T::Err: std::fmt::Display,
    {
        let t = self.next(what)?;
        t.parse::<T>()
            .map_err(|e| self.err(format!("bad {what} `{t}`: {e}")))
    }

    fn list(&mut self, what: &str) -> Result<Vec<u16>, SimError> {
        let t = self.next(what)?;
        t.split(',')
            .map(|x| {
                x.trim()
                    .trim_start_matches('R')
                    .parse::<u16>()
                    .map_err(|e| self.err(format!("bad {what} `{t}`: {e}")))
            })
            .collect()
    }

    fn done(&self) -> Result<(), SimError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected `{t}`"))),
        }
    }

    fn at(&mut self) -> Result<u64, SimError> {
        self.keyword("at")?;
        self.num("tick")
    }
}

fn on_off(line: &Line<'_>, v: &str) -> Result<bool, SimError> {
    match v {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(line.err(format!("expected on/off, found `{v}`"))),
    }
}

fn parse_patch(line: &mut Line<'_>) -> Result<ConfigPatch, SimError> {
    let mut patch = ConfigPatch::default();
    while let Some(tok) = line.peek() {
        line.pos += 1;
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| line.err(format!("expected key=value, found `{tok}`")))?;
        match k {
            "effort" => {
                patch.effort = Some(match v {
                    "minimal" => Effort::Minimal,
                    "maximal" => Effort::Maximal,
                    _ => return Err(line.err(format!("unknown effort `{v}`"))),
                })
            }
            "courtesy" => patch.rbs_courtesy = Some(on_off(line, v)?),
            "cache-ttl" => {
                patch.cache_ttl = Some(
                    v.parse()
                        .map_err(|e| line.err(format!("bad cache-ttl: {e}")))?,
                )
            }
            "intra" => {
                patch.intra = Some(match v {
                    "shortest" => IntraStrategy::ShortestPath,
                    "ecmp" => IntraStrategy::Ecmp,
                    _ => return Err(line.err(format!("unknown intra strategy `{v}`"))),
                })
            }
            "multiplicity" => {
                patch.multiplicity = Some(match v {
                    "aggregate" => Multiplicity::Aggregate,
                    "per-path" => Multiplicity::PerPath,
                    _ => return Err(line.err(format!("unknown multiplicity `{v}`"))),
                })
            }
            "fee" => {
                patch.region_fee = Some(v.parse().map_err(|e| line.err(format!("bad fee: {e}")))?)
            }
            _ => return Err(line.err(format!("unknown config key `{k}`"))),
        }
    }
    Ok(patch)
}

fn parse_send(line: &mut Line<'_>) -> Result<(u64, SendSpec), SimError> {
    line.keyword("from")?;
    let from = line.num("sender")?;
    line.keyword("to")?;
    let to = match line.next("receiver")? {
        "*" => None,
        t => Some(
            t.parse()
                .map_err(|e| line.err(format!("bad receiver `{t}`: {e}")))?,
        ),
    };
    let mut spec = SendSpec::new(from, to);
    let mut at = 0;
    while let Some(key) = line.peek() {
        line.pos += 1;
        match key {
            "region" => spec.region = Some(line.list("region")?[0]),
            "stack" => spec.stack = Some(line.list("stack")?),
            "count" => spec.count = line.num("count")?,
            "every" => spec.every = line.num("interval")?,
            "at" => at = line.num("tick")?,
            "fid" => spec.fid = Some(line.num("fid")?),
            "fission" => spec.fission = Some(line.num("fission rate")?),
            "rbs" => {
                let v = line.next("on/off")?;
                spec.rbs = on_off(line, v)?;
            }
            "path-latency" => spec.path_latency = Some(line.num("latency")?),
            "hop-latency" => spec.hop_latency = Some(line.num("latency")?),
            "path-loss" => spec.path_loss = Some(line.num("loss")?),
            "hop-loss" => spec.hop_loss = Some(line.num("loss")?),
            "legacy" => spec.legacy = true,
            _ => return Err(line.err(format!("unknown send option `{key}`"))),
        }
    }
    if spec.to.is_none() && spec.region.is_none() && spec.stack.is_none() {
        return Err(line.err("multicast send needs `region` or `stack`"));
    }
    if spec.every == 0 {
        return Err(line.err("`every` must be positive"));
    }
    Ok((at, spec))
}

/// Parse a scenario. JSON is detected by a leading `{`. Relative file
/// references resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<ScenarioScript, SimError> {
    let mut script = if text.trim_start().starts_with('{') {
        let mut s: ScenarioScript = serde_json::from_str(text).map_err(|e| SimError::Script {
            line: e.line(),
            message: e.to_string(),
        })?;
        s.sort_verbs();
        s
    } else {
        parse_text(text)?
    };
    script.base_dir = base_dir.map(Path::to_path_buf);
    Ok(script)
}

fn parse_text(text: &str) -> Result<ScenarioScript, SimError> {
    let mut topology = None;
    let mut regions = None;
    let mut seed = None;
    let mut duration = None;
    let mut s = ScenarioScript::new("", None, 0, 0);
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let mut line = Line {
            no: i + 1,
            toks,
            pos: 0,
        };
        let verb = line.next("verb")?;
        match verb {
            "topology" => topology = Some(line.next("topology")?.to_string()),
            "regions" => regions = Some(line.next("regions")?.to_string()),
            "seed" => seed = Some(line.num::<u64>("seed")?),
            "duration" => duration = Some(line.num::<u64>("duration")?),
            "link-loss" => {
                let p: f64 = line.num("loss")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(line.err("loss must be in [0, 1]"));
                }
                s.link_loss = Some(p);
            }
            "horizon" => {
                s.horizon = match line.next("horizon")? {
                    "global" => Horizon::Global,
                    "neighbors" | "neighbors-only" => Horizon::NeighborsOnly,
                    t => Horizon::Extended(
                        t.parse()
                            .map_err(|_| line.err(format!("unknown horizon `{t}`")))?,
                    ),
                }
            }
            "hop-delay" => s.hop_delay = line.num("ticks")?,
            "hop-ttl" => s.hop_ttl = line.num("hops")?,
            "mobility" => {
                while let Some(tok) = line.peek() {
                    line.pos += 1;
                    let (k, v) = tok
                        .split_once('=')
                        .ok_or_else(|| line.err(format!("expected key=value, found `{tok}`")))?;
                    let n: u64 = v
                        .parse()
                        .map_err(|e| line.err(format!("bad {k} `{v}`: {e}")))?;
                    match k {
                        "forward" => s.mobility.forward_for = n,
                        "inform" => s.mobility.inform_for = n,
                        "redirect-ttl" => s.mobility.redirect_ttl = n as u32,
                        _ => return Err(line.err(format!("unknown mobility key `{k}`"))),
                    }
                }
            }
            "pull" => {
                s.pull_retain = match line.next("retain/discard")? {
                    "retain" => true,
                    "discard" => false,
                    t => return Err(line.err(format!("expected retain/discard, found `{t}`"))),
                }
            }
            "trh-rate" => s.trh_rate = line.num("rate")?,
            "score-window" => {
                s.score_window = match line.next("window")? {
                    "none" => None,
                    t => Some(
                        t.parse()
                            .map_err(|e| line.err(format!("bad window: {e}")))?,
                    ),
                }
            }
            "explorer-period" => {
                let p: u64 = line.num("period")?;
                if p == 0 {
                    return Err(line.err("explorer period must be positive"));
                }
                s.explorer_period = Some(p);
            }
            "explorer-reply" => match line.next("stacks/binary")? {
                "stacks" => {}
                // A yes/no reachability reply would leave the origin nothing
                // to build a map from.
                "binary" => return Err(line.err("binary explorer replies are not supported")),
                t => return Err(line.err(format!("unknown explorer reply `{t}`"))),
            },
            "config" => {
                let scope = match line.next("scope")? {
                    "*" => ConfigScope::All,
                    "region" => ConfigScope::Region(line.num("region")?),
                    "switch" => ConfigScope::Switch(line.num("switch")?),
                    t => return Err(line.err(format!("unknown config scope `{t}`"))),
                };
                let patch = parse_patch(&mut line)?;
                s.configs.push(ConfigRule { scope, patch });
            }
            "send" => {
                let (at, spec) = parse_send(&mut line)?;
                s.verbs.push(TimedVerb {
                    at,
                    line: line.no,
                    verb: Verb::Send(spec),
                });
            }
            "move" => {
                let nid = line.num("node")?;
                line.keyword("to")?;
                let to = line.list("region")?[0];
                let at = line.at()?;
                line.done()?;
                s.verbs.push(TimedVerb {
                    at,
                    line: line.no,
                    verb: Verb::Move { nid, to },
                });
            }
            "fail-link" => {
                let a = line.num("vertex")?;
                let b = line.num("vertex")?;
                let at = line.at()?;
                line.done()?;
                s.verbs.push(TimedVerb {
                    at,
                    line: line.no,
                    verb: Verb::FailLink { a, b },
                });
            }
            "attack" => {
                line.keyword("from")?;
                let from_region = line.list("region")?[0];
                line.keyword("to")?;
                let to = line.num("target")?;
                line.keyword("rate")?;
                let rate: f64 = line.num("rate")?;
                if rate <= 0.0 || !rate.is_finite() {
                    return Err(line.err("rate must be positive"));
                }
                let at = line.at()?;
                let until = if line.peek() == Some("until") {
                    line.pos += 1;
                    Some(line.num("tick")?)
                } else {
                    None
                };
                line.done()?;
                s.verbs.push(TimedVerb {
                    at,
                    line: line.no,
                    verb: Verb::Attack {
                        from_region,
                        to,
                        rate,
                        until,
                    },
                });
            }
            "alert" => {
                line.keyword("target")?;
                let target = line.num("target")?;
                line.keyword("rogue")?;
                let rogue = line.list("rogue regions")?;
                line.keyword("ttl")?;
                let ttl: u64 = line.num("ttl")?;
                if ttl == 0 {
                    return Err(line.err("ttl must be positive"));
                }
                let mut trh = None;
                let mut at = 0;
                while let Some(k) = line.peek() {
                    line.pos += 1;
                    match k {
                        "trh" => trh = Some(line.num("trh node")?),
                        "at" => at = line.num("tick")?,
                        _ => return Err(line.err(format!("unknown alert option `{k}`"))),
                    }
                }
                s.verbs.push(TimedVerb {
                    at,
                    line: line.no,
                    verb: Verb::Alert {
                        target,
                        rogue,
                        ttl,
                        trh,
                    },
                });
            }
            other => return Err(line.err(format!("unknown verb `{other}`"))),
        }
    }
    let missing = |what: &str| SimError::Script {
        line: 0,
        message: format!("missing `{what}`"),
    };
    s.topology = topology.ok_or_else(|| missing("topology"))?;
    s.regions = regions;
    s.seed = seed.ok_or_else(|| missing("seed"))?;
    s.duration = duration.ok_or_else(|| missing("duration"))?;
    s.sort_verbs();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = "\
topology fig3
regions fig3
seed 7
duration 400
config * effort=maximal
config region 4 courtesy=off
send from 11 to 81 count 10 every 2 at 5 fid 3 fission 2
move 81 to 5 at 50
fail-link 60 70 at 20
attack from 4 to 81 rate 0.5 at 0 until 100
alert target 81 rogue 4 ttl 500 trh 51 at 3
";

    #[test]
    fn text_parses_and_sorts_by_tick() {
        let s = parse_scenario(DEMO, None).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.configs.len(), 2);
        let ticks: Vec<_> = s.verbs.iter().map(|v| v.at).collect();
        assert_eq!(ticks, vec![0, 3, 5, 20, 50]);
        let Verb::Send(spec) = &s.verbs[2].verb else {
            panic!("expected send");
        };
        assert_eq!((spec.count, spec.every, spec.fission), (10, 2, Some(2)));
    }

    #[test]
    fn json_equals_text() {
        let s = parse_scenario(DEMO, None).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(parse_scenario(&json, None).unwrap(), s);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "topology fig3\nseed 1\nduration 5\nsend from 11 to 81 bogus 3\n";
        match parse_scenario(bad, None).unwrap_err() {
            SimError::Script { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let no_seed = "topology fig3\nduration 5\n";
        assert!(matches!(
            parse_scenario(no_seed, None),
            Err(SimError::Script { .. })
        ));
    }

    #[test]
    fn explorer_reply_forms() {
        let text =
            |form: &str| format!("topology fig3\nseed 1\nduration 5\nexplorer-reply {form}\n");
        assert!(parse_scenario(&text("stacks"), None).is_ok());
        match parse_scenario(&text("binary"), None).unwrap_err() {
            SimError::Script { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
    }
}
