use ibgp_transient::cli::{preset, run_experiment, RunOptions, TraceSelection};
use ibgp_transient::trace::{read_trace, read_trace_from, validate_trace, write_trace, write_trace_to, HardwareMapping, Trace, TraceError};

fn sample_trace() -> (Trace, HardwareMapping) {
    let scn = preset("path3-deflection").unwrap().resolve().unwrap();
    let opts = RunOptions {
        traces: TraceSelection::First,
        trace_dir: None,
        keep_traces: true,
    };
    let mut exp = run_experiment(&scn, &opts).unwrap();
    (exp.samples[0].trace.take().unwrap(), exp.mapping)
}

#[test]
fn file_round_trip_is_lossless() {
    let (trace, mapping) = sample_trace();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.trace");
    write_trace(&path, &trace).unwrap();
    let back = read_trace(&path).unwrap();
    assert_eq!(back.header, trace.header);
    assert_eq!(back.records, trace.records);
    assert!(validate_trace(&back.records, &mapping).is_empty());

    let mpath = dir.path().join("mapping.toml");
    mapping.save(&mpath).unwrap();
    assert_eq!(HardwareMapping::load(&mpath).unwrap(), mapping);
}

#[test]
fn reader_rejects_damaged_input() {
    let (trace, _) = sample_trace();
    let text = String::from_utf8(write_trace_to(Vec::new(), &trace).unwrap()).unwrap();
    let (header, body) = text.split_once('\n').unwrap();

    let wrong_version = format!("{}\n{body}", header.replacen("ibgptrace/1", "ibgptrace/9", 1));
    assert!(matches!(read_trace_from(wrong_version.as_bytes()), Err(TraceError::Version(_))));

    let no_summary: String = text.lines().filter(|l| !l.contains("kind=summary")).map(|l| format!("{l}\n")).collect();
    assert!(matches!(read_trace_from(no_summary.as_bytes()), Err(TraceError::Incomplete)));

    let garbled = text.replacen("stage=pre", "stage=sideways", 1);
    assert!(matches!(read_trace_from(garbled.as_bytes()), Err(TraceError::Malformed { .. })));

    let mut lines: Vec<&str> = text.lines().collect();
    let n = lines.len();
    lines.swap(1, n - 2);
    let reordered = lines.join("\n") + "\n";
    assert!(matches!(read_trace_from(reordered.as_bytes()), Err(TraceError::Unordered { .. })));
}
