//! `metrics.csv`: one row per client and one `GLOBAL` row per round.

use std::fmt::Write as _;

use fqt_core::fed::RoundMetrics;

pub const HEADER: &str = "round,client_id,train_loss,train_acc,test_acc\n";

/// Rows for one round. Client rows leave the accuracy columns empty.
pub fn round_rows(m: &RoundMetrics) -> String {
    let mut out = String::new();
    for (id, loss) in m.client_train_loss.iter().enumerate() {
        writeln!(out, "{},{id},{loss},,", m.round).unwrap();
    }
    writeln!(
        out,
        "{},GLOBAL,{},{},{}",
        m.round, m.train_loss, m.train_accuracy, m.test_accuracy
    )
    .unwrap();
    out
}
