mod common;

use std::io::Cursor;

use canids::canframe::{
    parse_attack_csv_row, parse_normal_log_line, parse_unified_row, read_frames, write_frame_csv,
    write_normal_log_line, write_unified_csv, InputFormat,
};
use canids::ClassLabel;
use common::{check_fuzz, check_roundtrip, random_frame, random_line, rng};
use proptest::prelude::*;

#[test]
fn random_lines_never_panic() {
    check_fuzz(100_000).unwrap();
}

#[test]
fn valid_frames_round_trip() {
    check_roundtrip(10_000).unwrap();
}

#[test]
fn attack_rows_take_their_class_from_the_flag() {
    let t = parse_attack_csv_row("1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,T", 1, ClassLabel::RpmSpoof).unwrap();
    assert_eq!((t.label, t.can_id(), t.data()[7]), (ClassLabel::RpmSpoof, 0x316, 0x6f));
    assert_eq!(t.timestamp.as_micros(), 1_478_198_376_389_427);
    let r = parse_attack_csv_row("1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R", 1, ClassLabel::RpmSpoof).unwrap();
    assert_eq!(r.label, ClassLabel::Normal);
}

#[test]
fn short_dlc_rows_parse() {
    let f = parse_attack_csv_row("1478198376.389427,0545,2,d8,00,R", 1, ClassLabel::DoS).unwrap();
    assert_eq!(f.data(), &[0xd8, 0x00]);
}

#[test]
fn candump_lines_parse() {
    let f = parse_normal_log_line("(1436509052.249713) vcan0 044#2A366C2BBA", 3).unwrap();
    assert_eq!((f.can_id(), f.dlc()), (0x44, 5));
    assert_eq!(f.data(), &[0x2a, 0x36, 0x6c, 0x2b, 0xba]);
}

#[test]
fn malformed_rows_report_their_line() {
    for (line, text) in [(4, "1.0,zzzz,8,00"), (9, "(1.0) can0 0800#00")] {
        let a = parse_unified_row(text, line).unwrap_err();
        let b = parse_normal_log_line(text, line).unwrap_err();
        assert_eq!((a.line, b.line), (line, line));
    }
    // Identifiers above the 11-bit range and payloads longer than 8 bytes.
    assert!(parse_normal_log_line("(1.0) can0 800#00", 1).is_err());
    assert!(parse_normal_log_line("(1.0) can0 100#000000000000000000", 1).is_err());
    assert!(parse_attack_csv_row("1.0,0100,9,00,00,00,00,00,00,00,00,T", 1, ClassLabel::DoS).is_err());
}

#[test]
fn whole_files_round_trip_and_count_errors() {
    let mut r = rng(8);
    let mut frames: Vec<_> = (0..500).map(|_| random_frame(&mut r)).collect();
    frames.sort_by_key(|f| f.timestamp);
    let mut buf = Vec::new();
    write_unified_csv(&mut buf, &frames).unwrap();
    let back = read_frames(Cursor::new(&buf), InputFormat::Unified).unwrap();
    assert_eq!(back.frames, frames);
    assert!(back.errors.is_empty());

    let mut text = String::from_utf8(buf).unwrap();
    text.push_str("1.5,0zz1,8,,,,,,,,,R,Normal\n,,,\n");
    let back = read_frames(Cursor::new(text), InputFormat::Unified).unwrap();
    assert_eq!(back.frames.len(), 500);
    assert_eq!(back.errors.len() + back.removed_incomplete, 2);
}

#[test]
fn garbage_files_read_without_panicking() {
    let mut r = rng(9);
    let text: String = (0..2_000).map(|_| random_line(&mut r) + "\n").collect();
    // Raw-byte lines may contain their own newlines.
    let lines = text.lines().count();
    for format in [InputFormat::Unified, InputFormat::NormalLog, InputFormat::AttackCsv(ClassLabel::Fuzzy)] {
        let out = read_frames(Cursor::new(text.as_bytes()), format).unwrap();
        assert!(out.frames.len() + out.errors.len() + out.removed_incomplete <= lines);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_strings_never_panic(s in ".{0,120}") {
        let _ = parse_unified_row(&s, 1);
        let _ = parse_normal_log_line(&s, 1);
        let _ = parse_attack_csv_row(&s, 1, ClassLabel::GearSpoof);
    }

    #[test]
    fn structured_noise_never_panics(s in "[0-9a-fA-F,.#() TRx-]{0,80}") {
        let _ = parse_unified_row(&s, 1);
        let _ = parse_normal_log_line(&s, 1);
        let _ = parse_attack_csv_row(&s, 1, ClassLabel::DoS);
    }

    #[test]
    fn any_valid_frame_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_frame(&mut r);
        prop_assert_eq!(parse_unified_row(&write_frame_csv(&f), 1).unwrap(), f);
        let log = write_normal_log_line(&f, "can1");
        prop_assert_eq!(parse_normal_log_line(&log, 1).unwrap(), f.with_label(ClassLabel::Normal));
    }
}
