// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::datagen::EOD;

/// One packed training row: `inputs[i]` predicts `targets[i]`; `None`
/// marks padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub inputs: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

/// Greedily packs whole documents, each truncated to `seq_len - 1` tokens
/// plus an end-of-document token, into rows of `seq_len` inputs.
pub fn pack_rows(docs: &[&[usize]], seq_len: usize) -> Vec<Row> {
    let cap = seq_len + 1;
    let mut rows = Vec::new();
    let mut cur: Vec<usize> = Vec::with_capacity(cap);
    let flush = |cur: &mut Vec<usize>, rows: &mut Vec<Row>| {
        if cur.len() < 2 {
            cur.clear();
            return;
        }
        let n = cur.len() - 1;
        let mut inputs = cur[..n].to_vec();
        let mut targets: Vec<Option<usize>> = cur[1..].iter().map(|&t| Some(t)).collect();
        inputs.resize(seq_len, EOD);
        targets.resize(seq_len, None);
        rows.push(Row { inputs, targets });
        cur.clear();
    };
    for doc in docs {
        let body = &doc[..doc.len().min(seq_len - 1)];
        if cur.len() + body.len() + 1 > cap {
            flush(&mut cur, &mut rows);
        }
        cur.extend_from_slice(body);
        cur.push(EOD);
    }
    flush(&mut cur, &mut rows);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_whole_documents() {
        let a = [10, 11, 12];
        let b = [20, 21];
        let c = [30, 31, 32, 33, 34, 35, 36, 37, 38];
        let rows = pack_rows(&[&a, &b, &c], 8);
        // a+EOD (4) and b+EOD (3) share a row; c is truncated to 7 + EOD.
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].inputs, vec![10, 11, 12, EOD, 20, 21, EOD, EOD]);
        assert_eq!(
            rows[0].targets,
            vec![Some(11), Some(12), Some(EOD), Some(20), Some(21), Some(EOD), None, None]
        );
        assert_eq!(rows[1].inputs, vec![30, 31, 32, 33, 34, 35, 36, EOD]);
        assert_eq!(rows[1].targets[..6], [Some(31), Some(32), Some(33), Some(34), Some(35), Some(36)]);
        assert_eq!(rows[1].targets[6..], [Some(EOD), None]);
    }

    #[test]
    fn every_row_has_fixed_length() {
        let docs: Vec<Vec<usize>> = (0..20).map(|i| (0..(i % 7 + 1)).collect()).collect();
        let refs: Vec<&[usize]> = docs.iter().map(Vec::as_slice).collect();
        for r in pack_rows(&refs, 6) {
            assert_eq!(r.inputs.len(), 6);
            assert_eq!(r.targets.len(), 6);
        }
    }
}
