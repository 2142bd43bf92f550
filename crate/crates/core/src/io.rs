//! Line-oriented JSON serialization of matching instances.
//!
//! One instance per line with fields `n1, n2, edges1, edges2, sv, se, v_gt`:
//! edges as `[tail, head]` pairs in list order, `sv`/`se` in the fixed
//! column-wise vectorization order, `v_gt` as a 0/1 vector (optional).
//! Descriptors are not part of the interchange format; parsed graphs carry
//! zero-dimensional descriptors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_matching_constraints, AttributedGraph, MatchingInstance};

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    n1: usize,
    n2: usize,
    edges1: Vec<[usize; 2]>,
    edges2: Vec<[usize; 2]>,
    sv: Vec<f64>,
    se: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_gt: Option<Vec<u8>>,
}

/// An instance together with its optional ground-truth node matching.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredInstance {
    pub instance: MatchingInstance,
    pub v_gt: Option<Vec<bool>>,
}

/// Serializes to a single JSON line (no trailing newline).
pub fn to_json_line(instance: &MatchingInstance, v_gt: Option<&[bool]>) -> String {
    let doc = InstanceDoc {
        n1: instance.n1(),
        n2: instance.n2(),
        edges1: instance.g1().edges().iter().map(|&(t, h)| [t, h]).collect(),
        edges2: instance.g2().edges().iter().map(|&(t, h)| [t, h]).collect(),
        sv: instance.sv().to_vec(),
        se: instance.se().to_vec(),
        v_gt: v_gt.map(|v| v.iter().map(|&b| u8::from(b)).collect()),
    };
    serde_json::to_string(&doc).expect("instance serialization cannot fail")
}

/// Parses one JSON line and re-validates every structural invariant.
pub fn from_json_line(line: &str) -> Result<StoredInstance> {
    let doc: InstanceDoc =
        serde_json::from_str(line.trim()).map_err(|e| Error::Parse(e.to_string()))?;
    let g1 = AttributedGraph::plain(doc.n1, doc.edges1.iter().map(|&[t, h]| (t, h)).collect())?;
    let g2 = AttributedGraph::plain(doc.n2, doc.edges2.iter().map(|&[t, h]| (t, h)).collect())?;
    let instance = MatchingInstance::new(g1, g2, doc.sv, doc.se)?;
    let v_gt = match doc.v_gt {
        None => None,
        Some(raw) => {
            for &bit in &raw {
                if bit > 1 {
                    return Err(Error::Parse(format!("v_gt entry {bit} is not binary")));
                }
            }
            let bits: Vec<bool> = raw.into_iter().map(|b| b == 1).collect();
            check_matching_constraints(&bits, doc.n1, doc.n2, "v_gt")?;
            Some(bits)
        }
    };
    Ok(StoredInstance { instance, v_gt })
}
