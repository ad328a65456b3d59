use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use smartpacket::header::{decode, parse_hex};
use smartpacket::regions::{
    build_decomposition, enumerate_full_regions, load_decomposition, RegionId,
};
use smartpacket::sim::{emit_report, load_scenario, run_scenario, ReportFormat, SimError};
use smartpacket::topology::{fixtures, load_topology, NetworkGraph, TopologyFormat};

#[derive(Parser)]
#[command(
    name = "smartpacket",
    version,
    about = "Region-based SmartPacket routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a region decomposition of a topology.
    Decompose {
        /// Builtin fixture name or topology file.
        topo: String,
        /// Every complete full region, ignoring any shipped decomposition.
        #[arg(long, conflicts_with = "select")]
        all_regions: bool,
        /// Keep only these enumerated region ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        select: Vec<u16>,
        /// A decomposition file to validate instead of enumerating.
        #[arg(long, conflicts_with_all = ["all_regions", "select"])]
        regions: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario and write its report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Decode a hex-encoded header and print its fields.
    InspectHeader { hexfile: PathBuf },
    /// Builtin fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixturesCmd,
    },
}

#[derive(Subcommand)]
enum FixturesCmd {
    List,
}

fn load_graph(topo: &str) -> Result<NetworkGraph, SimError> {
    let text = match fixtures::source(topo) {
        Some(t) => t.to_string(),
        None => fs::read_to_string(topo).map_err(|e| SimError::Io(format!("{topo}: {e}")))?,
    };
    let format = if text.trim_start().starts_with('{') {
        TopologyFormat::Json
    } else {
        TopologyFormat::Text
    };
    load_topology(text.as_bytes(), format).map_err(|e| SimError::Load(e.to_string()))
}

fn decompose(
    topo: &str,
    all_regions: bool,
    select: &[u16],
    regions: Option<&PathBuf>,
    json: bool,
) -> Result<String, SimError> {
    let graph = load_graph(topo)?;
    let load = |e: smartpacket::regions::RegionError| SimError::Load(e.to_string());
    let decomp = if let Some(path) = regions {
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        load_decomposition(&text, &graph).map_err(load)?
    } else if let (false, false, Some(text)) = (
        all_regions,
        !select.is_empty(),
        fixtures::decomposition_source(topo),
    ) {
        load_decomposition(text, &graph).map_err(load)?
    } else {
        let mut full = enumerate_full_regions(&graph).map_err(load)?;
        if !select.is_empty() {
            for &rid in select {
                if !full.iter().any(|r| r.rid == RegionId::new(rid)) {
                    return Err(SimError::Load(format!("no enumerated region {rid}")));
                }
            }
            full.retain(|r| select.contains(&r.rid.raw));
        }
        build_decomposition(&graph, full, Vec::new()).map_err(load)?
    };
    let mut out = if json {
        decomp.to_json()
    } else {
        decomp.to_text()
    };
    let cov = decomp.coverage();
    if !json && !cov.uncovered.is_empty() {
        let list: Vec<String> = cov.uncovered.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("# uncovered: {}\n", list.join(",")));
    }
    Ok(out)
}

fn inspect(path: &PathBuf) -> Result<String, SimError> {
    let text =
        fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let bytes = parse_hex(&text).map_err(|e| SimError::Load(e.to_string()))?;
    let header = decode(&bytes).map_err(|e| SimError::Load(e.to_string()))?;
    Ok(serde_json::to_string_pretty(&header).expect("header serializes"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Decompose {
            topo,
            all_regions,
            select,
            regions,
            json,
        } => decompose(&topo, all_regions, &select, regions.as_ref(), json).map(|s| print!("{s}")),
        Cmd::Run {
            scenario,
            out,
            format,
        } => load_scenario(&scenario)
            .and_then(|s| run_scenario(&s))
            .and_then(|r| emit_report(&r, format, &out))
            .map(|paths| {
                for p in paths {
                    println!("{}", p.display());
                }
            }),
        Cmd::InspectHeader { hexfile } => inspect(&hexfile).map(|s| println!("{s}")),
        Cmd::Fixtures {
            action: FixturesCmd::List,
        } => {
            for name in fixtures::NAMES {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
