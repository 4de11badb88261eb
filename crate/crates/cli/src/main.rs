//! `clnp`: decode, craft, checksum and fragment CLNP PDUs stored as hex
//! files, and run simulator scenarios.
//!
//! Exit status is 0 on success, 1 when a PDU is invalid or would be
//! discarded, and 2 on usage or I/O errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clnp_core::checksum::{compute_checksum, verify_checksum, ChecksumVerdict};
use clnp_core::netsim::build_topology;
use clnp_core::output::{compose, fragment, DuidCounter, SendRequest};
use clnp_core::pdu::{
    analyze_header, parse_pdu, Npdu, NsapAddress, Pdu, CHECKSUM_POS, FIXED_PART_LEN,
};
use clnp_core::routing::{SourceRouteKind, SourceRouteParam};

#[derive(Parser)]
#[command(
    name = "clnp",
    version,
    about = "CLNP PDU toolkit and network simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every header field of a PDU, one per line.
    Decode { file: PathBuf },
    /// Compose a DT PDU and write it as hex.
    Craft {
        #[arg(long)]
        dst: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        sp: bool,
        #[arg(long)]
        er: bool,
        #[arg(long)]
        ms: bool,
        #[arg(long)]
        lifetime: u8,
        /// Hex file holding the data part.
        #[arg(long)]
        payload: Option<PathBuf>,
        /// `complete:<hex>,...` or `partial:<hex>,...`
        #[arg(long)]
        srcroute: Option<String>,
        #[arg(short = 'o')]
        out: PathBuf,
    },
    /// Verify or stamp the header checksum.
    Checksum { mode: ChecksumMode, file: PathBuf },
    /// Segment a PDU to fit an MTU, writing seg000.hex, seg001.hex, ...
    Fragment {
        #[arg(long)]
        mtu: usize,
        file: PathBuf,
        #[arg(short = 'o')]
        out: PathBuf,
    },
    /// Run a scenario and write its trace.
    Run {
        scenario: PathBuf,
        /// Stop after this virtual time; runs until idle when omitted.
        #[arg(long)]
        until: Option<u64>,
        #[arg(short = 'o')]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChecksumMode {
    Verify,
    Stamp,
}

enum Failure {
    Invalid(String),
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn read_hex(path: &Path) -> Result<Vec<u8>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let digits: String = text.split_whitespace().collect();
    hex::decode(digits).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_hex(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, format!("{}\n", hex::encode(bytes)))
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_pdu(path: &Path) -> Result<Pdu, Failure> {
    match parse_pdu(&read_hex(path)?).map_err(invalid)? {
        Npdu::Clnp(p) => Ok(p),
        Npdu::Inactive { .. } => Err(invalid("inactive-protocol PDU has no CLNP header")),
    }
}

fn describe(pdu: &Pdu) -> String {
    let h = &pdu.header;
    let mut s = String::new();
    let _ = writeln!(s, "nlpid: {:02x}", h.nlpid);
    let _ = writeln!(s, "header_length: {}", h.header_length);
    let _ = writeln!(s, "version: {}", h.version);
    let _ = writeln!(s, "lifetime: {}", h.lifetime);
    let _ = writeln!(s, "sp: {}", u8::from(h.flags.sp));
    let _ = writeln!(s, "ms: {}", u8::from(h.flags.ms));
    let _ = writeln!(s, "er: {}", u8::from(h.flags.er));
    let _ = writeln!(s, "type: {}", h.pdu_type.mnemonic());
    let _ = writeln!(s, "segment_length: {}", h.segment_length);
    let _ = writeln!(s, "checksum: {}", hex::encode(h.checksum));
    let _ = writeln!(s, "dest: {}", h.dest);
    let _ = writeln!(s, "src: {}", h.src);
    if let Some(seg) = &h.seg {
        let _ = writeln!(s, "data_unit_id: {}", seg.data_unit_id);
        let _ = writeln!(s, "segment_offset: {}", seg.segment_offset);
        let _ = writeln!(s, "total_length: {}", seg.total_length);
    }
    for o in &h.options {
        let _ = writeln!(s, "option: {:02x} {}", o.code, hex::encode(&o.value));
    }
    let _ = writeln!(s, "payload: {}", hex::encode(&pdu.payload));
    s
}

fn decode(file: &Path) -> Outcome {
    let pdu = match parse_pdu(&read_hex(file)?).map_err(invalid)? {
        Npdu::Inactive { payload } => {
            print!("nlpid: 00\npayload: {}\n", hex::encode(payload));
            return Ok(());
        }
        Npdu::Clnp(p) => p,
    };
    print!("{}", describe(&pdu));
    analyze_header(&pdu).map_err(|e| invalid(e.reason))
}

fn parse_source_route(v: &str) -> Result<SourceRouteParam, Failure> {
    let (kind, list) = v
        .split_once(':')
        .ok_or_else(|| usage("srcroute needs complete: or partial:"))?;
    let kind = match kind {
        "complete" => SourceRouteKind::Complete,
        "partial" => SourceRouteKind::Partial,
        _ => return Err(usage(format!("unknown source route kind {kind:?}"))),
    };
    let entries = list
        .split(',')
        .map(|a| NsapAddress::from_hex(a).map_err(usage))
        .collect::<Result<_, _>>()?;
    Ok(SourceRouteParam::new(kind, entries))
}

#[allow(clippy::too_many_arguments)]
fn craft(
    dst: &str,
    src: &str,
    sp: bool,
    er: bool,
    ms: bool,
    lifetime: u8,
    payload: Option<&Path>,
    srcroute: Option<&str>,
    out: &Path,
) -> Outcome {
    if ms && !sp {
        return Err(usage("--ms requires --sp"));
    }
    let request = SendRequest {
        payload: payload.map(read_hex).transpose()?.unwrap_or_default(),
        src: NsapAddress::from_hex(src).map_err(usage)?,
        dst: NsapAddress::from_hex(dst).map_err(usage)?,
        er_flag: er,
        sp_flag: sp,
        lifetime,
        options: srcroute
            .map(parse_source_route)
            .transpose()?
            .map(|p| p.to_option())
            .into_iter()
            .collect(),
    };
    let mut pdu = compose(&request, &mut DuidCounter::default()).map_err(usage)?;
    if ms {
        pdu.header.flags.ms = true;
        pdu.stamp_checksum();
    }
    write_hex(out, &pdu.encode())
}

/// Header octets of a raw PDU, as far as its length indicator reaches.
fn header_of(raw: &[u8]) -> Result<std::ops::Range<usize>, Failure> {
    let len = usize::from(
        *raw.get(1)
            .ok_or_else(|| invalid("PDU shorter than two octets"))?,
    );
    if len < FIXED_PART_LEN || len > raw.len() {
        return Err(invalid(format!(
            "header length {len} does not fit {} octets",
            raw.len()
        )));
    }
    Ok(0..len)
}

fn checksum(mode: ChecksumMode, file: &Path) -> Outcome {
    let mut raw = read_hex(file)?;
    let header = header_of(&raw)?;
    match mode {
        ChecksumMode::Verify => {
            let verdict = verify_checksum(&raw[header], CHECKSUM_POS).map_err(invalid)?;
            let word = match verdict {
                ChecksumVerdict::Valid => "valid",
                ChecksumVerdict::Invalid => "invalid",
                ChecksumVerdict::NotUsed => "not-used",
            };
            println!("{word}");
            if verdict == ChecksumVerdict::Invalid {
                return Err(Failure::Invalid(String::new()));
            }
            Ok(())
        }
        ChecksumMode::Stamp => {
            let (c0, c1) = compute_checksum(&raw[header], CHECKSUM_POS).map_err(invalid)?;
            raw[CHECKSUM_POS] = c0;
            raw[CHECKSUM_POS + 1] = c1;
            write_hex(file, &raw)?;
            println!("{c0:02x}{c1:02x}");
            Ok(())
        }
    }
}

fn fragment_cmd(mtu: usize, file: &Path, out: &Path) -> Outcome {
    let pdu = read_pdu(file)?;
    let pieces = fragment(&pdu, mtu).map_err(invalid)?;
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    for (i, p) in pieces.iter().enumerate() {
        write_hex(&out.join(format!("seg{i:03}.hex")), &p.encode())?;
    }
    println!("segments: {}", pieces.len());
    Ok(())
}

fn run(scenario: &Path, until: Option<u64>, out: &Path) -> Outcome {
    let text =
        fs::read_to_string(scenario).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
    let mut sim =
        build_topology(&text).map_err(|e| usage(format!("{}: {e}", scenario.display())))?;
    let trace = match until {
        Some(t) => sim.run(t),
        None => sim.run_to_completion(),
    };
    fs::write(out, trace.to_string()).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    println!("{}", trace.summary());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Decode { file } => decode(file),
        Command::Craft {
            dst,
            src,
            sp,
            er,
            ms,
            lifetime,
            payload,
            srcroute,
            out,
        } => craft(
            dst,
            src,
            *sp,
            *er,
            *ms,
            *lifetime,
            payload.as_deref(),
            srcroute.as_deref(),
            out,
        ),
        Command::Checksum { mode, file } => checksum(*mode, file),
        Command::Fragment { mtu, file, out } => fragment_cmd(*mtu, file, out),
        Command::Run {
            scenario,
            until,
            out,
        } => run(scenario, *until, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            if !msg.is_empty() {
                eprintln!("clnp: {msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("clnp: {msg}");
            ExitCode::from(2)
        }
    }
}
