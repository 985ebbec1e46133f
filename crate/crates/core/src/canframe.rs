//! CAN frame data model and the on-disk traffic formats.
//!
//! Three line formats are understood:
//!
//! * attack CSV (Car-Hacking layout): `timestamp,canid_hex,dlc,b0,...,b{dlc-1},flag`
//!   where `flag` is `T` (injected) or `R` (regular). The attack class of `T`
//!   rows is supplied per file.
//! * normal log (candump style): `(<seconds.micros>) <iface> <HEX_ID>#<HEXPAIRS>`.
//!   The layout of the original normal-traffic capture was never published; this
//!   grammar is a stand-in so real SocketCAN captures can be used.
//! * unified CSV: the attack layout widened to eight fixed byte columns plus a
//!   trailing class-name column. Unused byte columns are left empty.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest 11-bit standard arbitration ID.
pub const MAX_STANDARD_ID: u16 = 0x7FF;
/// Maximum classic CAN payload length.
pub const MAX_DLC: u8 = 8;

/// Header row of the unified CSV.
pub const UNIFIED_HEADER: &str =
    "timestamp,can_id,dlc,data0,data1,data2,data3,data4,data5,data6,data7,flag,class";

const UNIFIED_FIELDS: usize = 13;

/// Ground-truth traffic class. Ordinals are fixed: Normal=0, DoS=1, Fuzzy=2,
/// RpmSpoof=3, GearSpoof=4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Normal,
    DoS,
    Fuzzy,
    RpmSpoof,
    GearSpoof,
}

impl ClassLabel {
    pub const COUNT: usize = 5;
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Normal,
        ClassLabel::DoS,
        ClassLabel::Fuzzy,
        ClassLabel::RpmSpoof,
        ClassLabel::GearSpoof,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        Self::ALL.get(ordinal).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::DoS => "DoS",
            ClassLabel::Fuzzy => "Fuzzy",
            ClassLabel::RpmSpoof => "RpmSpoof",
            ClassLabel::GearSpoof => "GearSpoof",
        }
    }

    pub fn is_attack(self) -> bool {
        self != ClassLabel::Normal
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        match lowered.as_str() {
            "normal" => Ok(ClassLabel::Normal),
            "dos" => Ok(ClassLabel::DoS),
            "fuzzy" => Ok(ClassLabel::Fuzzy),
            "rpmspoof" | "rpm" => Ok(ClassLabel::RpmSpoof),
            "gearspoof" | "gear" => Ok(ClassLabel::GearSpoof),
            _ => Err(format!("unknown class label `{s}`")),
        }
    }
}

/// Seconds since the Unix epoch at microsecond resolution.
///
/// Stored as an integer microsecond count so that formatting with six decimals
/// and parsing back is exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    /// Rounds to the nearest microsecond. Returns `None` for negative or
    /// non-finite input.
    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        if !secs.is_finite() || secs < 0.0 || secs * 1e6 > u64::MAX as f64 {
            return None;
        }
        Some(Timestamp((secs * 1e6).round() as u64))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Seconds elapsed since `earlier` (negative if `earlier` is later).
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 as i128 - earlier.0 as i128) as f64 / 1e6
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl FromStr for Timestamp {
    type Err = ParseErrorKind;

    /// Plain decimal seconds, e.g. `1478198376.389427`. Digits beyond the sixth
    /// decimal are rounded half-up.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseErrorKind::BadTimestamp(s.to_string());
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let secs: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let mut micros: u64 = 0;
        for (i, b) in frac_part.bytes().take(6).enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        if frac_part.len() > 6 && frac_part.as_bytes()[6] >= b'5' {
            micros += 1;
        }
        secs.checked_mul(1_000_000)
            .and_then(|v| v.checked_add(micros))
            .map(Timestamp)
            .ok_or_else(bad)
    }
}

/// One timestamped classic CAN message with its ground-truth label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanFrame {
    pub timestamp: Timestamp,
    can_id: u16,
    dlc: u8,
    payload: [u8; 8],
    pub label: ClassLabel,
}

impl CanFrame {
    /// Builds a frame, enforcing the 11-bit ID and `dlc == data.len() <= 8`.
    pub fn new(
        timestamp: Timestamp,
        can_id: u16,
        data: &[u8],
        label: ClassLabel,
    ) -> Result<Self, ParseErrorKind> {
        if can_id > MAX_STANDARD_ID {
            return Err(ParseErrorKind::IdOutOfRange(u32::from(can_id)));
        }
        if data.len() > usize::from(MAX_DLC) {
            return Err(ParseErrorKind::DlcOutOfRange(data.len() as u64));
        }
        let mut payload = [0u8; 8];
        payload[..data.len()].copy_from_slice(data);
        Ok(CanFrame {
            timestamp,
            can_id,
            dlc: data.len() as u8,
            payload,
            label,
        })
    }

    pub fn can_id(&self) -> u16 {
        self.can_id
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    pub fn data(&self) -> &[u8] {
        &self.payload[..usize::from(self.dlc)]
    }

    /// Payload padded to eight bytes with zeros.
    pub fn padded_payload(&self) -> [u8; 8] {
        self.payload
    }

    pub fn with_label(mut self, label: ClassLabel) -> Self {
        self.label = label;
        self
    }
}

/// Origin of a tokenized line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordSource {
    AttackCsv,
    NormalLog,
}

/// A line split into text tokens, before any field is interpreted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub source: RecordSource,
    /// 1-based.
    pub line_number: usize,
    pub fields: Vec<String>,
}

impl RawRecord {
    pub fn tokenize(source: RecordSource, line_number: usize, line: &str) -> Self {
        let line = line.trim_end_matches(['\r', '\n']);
        let fields = match source {
            RecordSource::AttackCsv => line.split(',').map(|f| f.trim().to_string()).collect(),
            RecordSource::NormalLog => line.split_whitespace().map(str::to_string).collect(),
        };
        RawRecord {
            source,
            line_number: line_number.max(1),
            fields,
        }
    }

    /// True when every mandatory field is present and non-empty.
    pub fn is_complete(&self) -> bool {
        let non_empty = |i: usize| self.fields.get(i).is_some_and(|f| !f.is_empty());
        match self.source {
            RecordSource::NormalLog => self.fields.len() == 3 && (0..3).all(non_empty),
            RecordSource::AttackCsv => {
                let n = self.fields.len();
                // timestamp, id, dlc and flag are mandatory; the unified layout
                // adds a class column after the flag.
                if n < 4 || !(0..3).all(non_empty) {
                    return false;
                }
                if n == UNIFIED_FIELDS {
                    non_empty(11) && non_empty(12)
                } else {
                    non_empty(n - 1)
                }
            }
        }
    }

    pub fn to_frame(&self, attack_class: ClassLabel) -> Result<CanFrame, ParseError> {
        let result = match self.source {
            RecordSource::AttackCsv => frame_from_csv_fields(&self.fields, attack_class),
            RecordSource::NormalLog => frame_from_log_fields(&self.fields).map(|(f, _)| f),
        };
        result.map_err(|kind| ParseError {
            line: self.line_number,
            kind,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("malformed hex field `{0}`")]
    MalformedHex(String),
    #[error("DLC field `{0}` is not a decimal count")]
    BadDlc(String),
    #[error("DLC {0} outside 0..=8")]
    DlcOutOfRange(u64),
    #[error("CAN ID {0:#x} exceeds the 11-bit range")]
    IdOutOfRange(u32),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("bad timestamp `{0}`")]
    BadTimestamp(String),
    #[error("bad flag `{0}`, expected T or R")]
    BadFlag(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("flag `{flag}` contradicts class {class}")]
    FlagMismatch { flag: String, class: ClassLabel },
    #[error("byte column {0} must be empty beyond the DLC")]
    UnexpectedByte(usize),
    #[error("line does not match `(<ts>) <iface> <ID>#<data>`")]
    Grammar,
    #[error("odd-length payload hex `{0}`")]
    OddHexLength(String),
}

/// A parse failure tagged with its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Decodes one or two hex digits, case-insensitively.
pub fn decode_hex_byte(s: &str) -> Result<u8, ParseErrorKind> {
    if !is_hex(s) || s.len() > 2 {
        return Err(ParseErrorKind::MalformedHex(s.to_string()));
    }
    u8::from_str_radix(s, 16).map_err(|_| ParseErrorKind::MalformedHex(s.to_string()))
}

pub fn format_hex_byte(b: u8) -> String {
    format!("{b:02x}")
}

fn decode_can_id(s: &str) -> Result<u16, ParseErrorKind> {
    if !is_hex(s) || s.len() > 8 {
        return Err(ParseErrorKind::MalformedHex(s.to_string()));
    }
    let id = u32::from_str_radix(s, 16).map_err(|_| ParseErrorKind::MalformedHex(s.to_string()))?;
    if id > u32::from(MAX_STANDARD_ID) {
        return Err(ParseErrorKind::IdOutOfRange(id));
    }
    Ok(id as u16)
}

fn parse_dlc(s: &str) -> Result<u8, ParseErrorKind> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseErrorKind::BadDlc(s.to_string()));
    }
    let v: u64 = s.parse().unwrap_or(u64::MAX);
    if v > u64::from(MAX_DLC) {
        return Err(ParseErrorKind::DlcOutOfRange(v));
    }
    Ok(v as u8)
}

fn parse_flag(s: &str) -> Result<bool, ParseErrorKind> {
    match s {
        "T" | "t" => Ok(true),
        "R" | "r" => Ok(false),
        _ => Err(ParseErrorKind::BadFlag(s.to_string())),
    }
}

fn frame_from_csv_fields<S: AsRef<str>>(
    fields: &[S],
    attack_class: ClassLabel,
) -> Result<CanFrame, ParseErrorKind> {
    let n = fields.len();
    if n < 4 {
        return Err(ParseErrorKind::FieldCount {
            expected: 4,
            found: n,
        });
    }
    let f = |i: usize| fields[i].as_ref();
    let timestamp: Timestamp = f(0).parse()?;
    let can_id = decode_can_id(f(1))?;
    let dlc = usize::from(parse_dlc(f(2))?);

    let (flag_idx, class) = if n == 3 + dlc + 1 {
        (3 + dlc, None)
    } else if n == UNIFIED_FIELDS {
        for i in 3 + dlc..11 {
            if !f(i).is_empty() {
                return Err(ParseErrorKind::UnexpectedByte(i - 3));
            }
        }
        let class: ClassLabel = f(12)
            .parse()
            .map_err(|_| ParseErrorKind::UnknownClass(f(12).to_string()))?;
        (11, Some(class))
    } else {
        return Err(ParseErrorKind::FieldCount {
            expected: 3 + dlc + 1,
            found: n,
        });
    };

    let mut data = [0u8; 8];
    for (slot, i) in data.iter_mut().zip(3..3 + dlc) {
        *slot = decode_hex_byte(f(i))?;
    }
    let injected = parse_flag(f(flag_idx))?;
    let label = match (injected, class) {
        (false, None) => ClassLabel::Normal,
        (true, None) if attack_class.is_attack() => attack_class,
        (true, None) => {
            return Err(ParseErrorKind::FlagMismatch {
                flag: f(flag_idx).to_string(),
                class: attack_class,
            })
        }
        (inj, Some(c)) if inj == c.is_attack() => c,
        (_, Some(c)) => {
            return Err(ParseErrorKind::FlagMismatch {
                flag: f(flag_idx).to_string(),
                class: c,
            })
        }
    };
    CanFrame::new(timestamp, can_id, &data[..dlc], label)
}

/// Parses one attack-CSV row. `R` rows become `Normal`, `T` rows take
/// `attack_class`. Rows in the unified layout carry their own class column and
/// ignore `attack_class`.
pub fn parse_attack_csv_row(
    row: &str,
    line_number: usize,
    attack_class: ClassLabel,
) -> Result<CanFrame, ParseError> {
    RawRecord::tokenize(RecordSource::AttackCsv, line_number, row).to_frame(attack_class)
}

/// Parses a unified-CSV row (the layout written by [`write_frame_csv`]).
pub fn parse_unified_row(row: &str, line_number: usize) -> Result<CanFrame, ParseError> {
    let record = RawRecord::tokenize(RecordSource::AttackCsv, line_number, row);
    if record.fields.len() != UNIFIED_FIELDS {
        return Err(ParseError {
            line: record.line_number,
            kind: ParseErrorKind::FieldCount {
                expected: UNIFIED_FIELDS,
                found: record.fields.len(),
            },
        });
    }
    record.to_frame(ClassLabel::Normal)
}

fn frame_from_log_fields<S: AsRef<str>>(fields: &[S]) -> Result<(CanFrame, String), ParseErrorKind> {
    if fields.len() != 3 {
        return Err(ParseErrorKind::Grammar);
    }
    let ts_tok = fields[0].as_ref();
    let ts_inner = ts_tok
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or(ParseErrorKind::Grammar)?;
    let timestamp: Timestamp = ts_inner.parse()?;
    let iface = fields[1].as_ref();
    let (id_hex, data_hex) = fields[2].as_ref().split_once('#').ok_or(ParseErrorKind::Grammar)?;
    let can_id = decode_can_id(id_hex)?;
    if data_hex.len() % 2 != 0 {
        return Err(ParseErrorKind::OddHexLength(data_hex.to_string()));
    }
    if !data_hex.is_empty() && !is_hex(data_hex) {
        return Err(ParseErrorKind::MalformedHex(data_hex.to_string()));
    }
    let n_bytes = data_hex.len() / 2;
    if n_bytes > usize::from(MAX_DLC) {
        return Err(ParseErrorKind::DlcOutOfRange(n_bytes as u64));
    }
    let mut data = [0u8; 8];
    for (i, slot) in data.iter_mut().take(n_bytes).enumerate() {
        *slot = decode_hex_byte(&data_hex[2 * i..2 * i + 2])?;
    }
    let frame = CanFrame::new(timestamp, can_id, &data[..n_bytes], ClassLabel::Normal)?;
    Ok((frame, iface.to_string()))
}

/// A normal-log line together with the interface it was captured on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub frame: CanFrame,
    pub interface: String,
}

pub fn parse_normal_log_record(line: &str, line_number: usize) -> Result<LogEntry, ParseError> {
    let record = RawRecord::tokenize(RecordSource::NormalLog, line_number, line);
    frame_from_log_fields(&record.fields)
        .map(|(frame, interface)| LogEntry { frame, interface })
        .map_err(|kind| ParseError {
            line: record.line_number,
            kind,
        })
}

/// Parses a candump-style line. The frame is always labeled `Normal`.
pub fn parse_normal_log_line(line: &str, line_number: usize) -> Result<CanFrame, ParseError> {
    parse_normal_log_record(line, line_number).map(|e| e.frame)
}

/// Formats a frame as a unified-CSV row (no trailing newline).
pub fn write_frame_csv(frame: &CanFrame) -> String {
    let mut out = String::with_capacity(64);
    out.push_str(&frame.timestamp.to_string());
    out.push_str(&format!(",{:04x},{}", frame.can_id, frame.dlc));
    for i in 0..8 {
        out.push(',');
        if i < usize::from(frame.dlc) {
            out.push_str(&format_hex_byte(frame.payload[i]));
        }
    }
    out.push_str(if frame.label.is_attack() { ",T," } else { ",R," });
    out.push_str(frame.label.name());
    out
}

/// Formats a frame as a candump-style line on `iface`.
pub fn write_normal_log_line(frame: &CanFrame, iface: &str) -> String {
    let data: String = frame.data().iter().map(|b| format!("{b:02X}")).collect();
    format!("({}) {} {:03X}#{}", frame.timestamp, iface, frame.can_id, data)
}

/// Input layouts accepted by the readers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// Car-Hacking attack file; `T` rows take the given class.
    AttackCsv(ClassLabel),
    NormalLog,
    Unified,
}

/// Result of reading a whole file: parsed frames plus per-line failures.
#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub frames: Vec<CanFrame>,
    pub errors: Vec<ParseError>,
    /// Lines dropped by [`crate::pipeline::clean`] for missing mandatory fields.
    pub removed_incomplete: usize,
    pub out_of_order: usize,
}

/// Reads every line of `reader` in `format`.
///
/// Incomplete records are removed first, then each remaining record is parsed.
/// A header line (first field not starting with a digit or `(`) is skipped.
/// Non-monotone timestamps are counted and logged, not rejected.
pub fn read_frames<R: BufRead>(reader: R, format: InputFormat) -> std::io::Result<ReadOutcome> {
    let source = match format {
        InputFormat::NormalLog => RecordSource::NormalLog,
        _ => RecordSource::AttackCsv,
    };
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 && is_header(&line) {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        records.push(RawRecord::tokenize(source, idx + 1, &line));
    }
    let (records, report) = crate::pipeline::clean(records);
    let attack_class = match format {
        InputFormat::AttackCsv(c) => c,
        _ => ClassLabel::Normal,
    };
    let mut outcome = ReadOutcome {
        removed_incomplete: report.removed,
        ..ReadOutcome::default()
    };
    let mut last: Option<Timestamp> = None;
    for record in &records {
        let parsed = match format {
            InputFormat::Unified if record.fields.len() != UNIFIED_FIELDS => Err(ParseError {
                line: record.line_number,
                kind: ParseErrorKind::FieldCount {
                    expected: UNIFIED_FIELDS,
                    found: record.fields.len(),
                },
            }),
            _ => record.to_frame(attack_class),
        };
        match parsed {
            Ok(frame) => {
                if last.is_some_and(|t| frame.timestamp < t) {
                    outcome.out_of_order += 1;
                    log::warn!(
                        "line {}: timestamp {} earlier than previous frame",
                        record.line_number,
                        frame.timestamp
                    );
                }
                last = Some(frame.timestamp);
                outcome.frames.push(frame);
            }
            Err(e) => outcome.errors.push(e),
        }
    }
    Ok(outcome)
}

pub(crate) fn is_header(line: &str) -> bool {
    !line
        .trim_start()
        .starts_with(|c: char| c.is_ascii_digit() || c == '(' || c == '.')
}

/// Writes the unified CSV with its header row.
pub fn write_unified_csv<W: Write>(mut out: W, frames: &[CanFrame]) -> std::io::Result<()> {
    writeln!(out, "{UNIFIED_HEADER}")?;
    for frame in frames {
        writeln!(out, "{}", write_frame_csv(frame))?;
    }
    out.flush()
}
