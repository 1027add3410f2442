use super::AnalyzeError;
use crate::trace::{BgpMsgKind, RecordBody, TraceRecord};
use crate::Micros;

/// Quiet-period convergence: the first BGP update or withdraw `T` with no
/// other update or withdraw in `(T, T + quiet]`. Keep-alives are ignored.
///
/// Without any update the stream start is returned. When the capture ends
/// before the quiet period has elapsed the result is inconclusive.
pub fn detect_convergence(records: &[TraceRecord], quiet: Micros) -> Result<Micros, AnalyzeError> {
    let start = records.first().ok_or(AnalyzeError::IncompleteTrace)?.ts;
    let end = records.iter().map(|r| r.ts).max().unwrap_or(start);
    let mut updates: Vec<Micros> = records
        .iter()
        .filter(|r| {
            matches!(
                r.body,
                RecordBody::Bgp {
                    msg: BgpMsgKind::Update | BgpMsgKind::Withdraw,
                    ..
                }
            )
        })
        .map(|r| r.ts)
        .collect();
    updates.sort_unstable();
    if updates.is_empty() {
        return Ok(start);
    }
    for pair in updates.windows(2) {
        if pair[1] - pair[0] > quiet {
            return Ok(pair[0]);
        }
    }
    let last = *updates.last().expect("non-empty");
    if end - last < quiet {
        return Err(AnalyzeError::Inconclusive {
            last_update: last,
            stream_end: end,
        });
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{LinkRef, Stage};
    use crate::SEC;

    fn bgp(ts: Micros, msg: BgpMsgKind) -> TraceRecord {
        let link = LinkRef { from: 0, to: 1 };
        TraceRecord {
            ts,
            body: RecordBody::Bgp {
                link,
                stage: Stage::PreDelay,
                msg,
                prefix: None,
                session: link,
                id: ts as u64,
            },
        }
    }

    fn end(ts: Micros) -> TraceRecord {
        TraceRecord {
            ts,
            body: RecordBody::Summary { drops: 0 },
        }
    }

    #[test]
    fn last_update_before_quiet_period() {
        let t = [
            bgp(0, BgpMsgKind::Update),
            bgp(3 * SEC, BgpMsgKind::Withdraw),
            bgp(8 * SEC, BgpMsgKind::Update),
            bgp(12 * SEC, BgpMsgKind::KeepAlive),
            end(20 * SEC),
        ];
        assert_eq!(detect_convergence(&t, 10 * SEC).unwrap(), 8 * SEC);
    }

    #[test]
    fn no_updates_means_stream_start() {
        let t = [bgp(SEC, BgpMsgKind::KeepAlive), end(30 * SEC)];
        assert_eq!(detect_convergence(&t, 10 * SEC).unwrap(), SEC);
    }

    #[test]
    fn short_capture_is_inconclusive() {
        let t = [bgp(0, BgpMsgKind::Update), bgp(8 * SEC, BgpMsgKind::Update), end(15 * SEC)];
        assert!(matches!(
            detect_convergence(&t, 10 * SEC),
            Err(AnalyzeError::Inconclusive { last_update, .. }) if last_update == 8 * SEC
        ));
    }

    #[test]
    fn gap_longer_than_quiet_stops_early() {
        let t = [bgp(0, BgpMsgKind::Update), bgp(11 * SEC, BgpMsgKind::Update), end(30 * SEC)];
        assert_eq!(detect_convergence(&t, 10 * SEC).unwrap(), 0);
    }
}
