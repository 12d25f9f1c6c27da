use std::fmt::Write as _;

use super::{count_macs, count_params, GraphGeometry};
use crate::graph::Graph;

pub const TSV_HEADER: &str = "node\tstride\trf_min\trf_max\tout_h\tout_w\tpad_cells";

/// `key: value` blocks, one per node, preceded by a summary header.
pub fn render_human(graph: &Graph, geo: &GraphGeometry, header: &[(&str, String)]) -> String {
    let (h, w) = geo.input_size();
    let out = geo.output();
    let mut s = String::new();
    let _ = writeln!(s, "arch: {}", graph.name());
    let _ = writeln!(s, "input: {h}x{w}");
    let _ = writeln!(s, "stride: {}", out.stride);
    if out.rf_min == out.rf_max {
        let _ = writeln!(s, "rf: {}", out.rf_max);
    } else {
        let _ = writeln!(s, "rf: {}-{}", out.rf_min, out.rf_max);
    }
    let _ = writeln!(s, "out_size: {}x{}", out.out_h, out.out_w);
    let _ = writeln!(s, "padding_influenced: {}", out.padding_influenced());
    let _ = writeln!(s, "params: {}", count_params(graph));
    if let Ok(macs) = count_macs(graph, (h, w)) {
        let _ = writeln!(s, "macs: {macs}");
    }
    for (k, v) in header {
        let _ = writeln!(s, "{k}: {v}");
    }
    for node in graph.nodes() {
        let g = geo.get(&node.id).expect("geometry covers every node");
        let _ = write!(
            s,
            "\nnode: {}\nkind: {}\nstride: {}\nrf_min: {}\nrf_max: {}\nout: {}x{}x{}\npad_cells: {}\n",
            node.id,
            node.op.kind(),
            g.stride,
            g.rf_min,
            g.rf_max,
            node.channels,
            g.out_h,
            g.out_w,
            g.padding_influenced()
        );
    }
    s
}

/// One tab-separated row per node under [`TSV_HEADER`].
pub fn render_tsv(geo: &GraphGeometry) -> String {
    let mut s = String::from(TSV_HEADER);
    s.push('\n');
    for (id, g) in geo.iter() {
        let _ = writeln!(
            s,
            "{id}\t{}\t{}\t{}\t{}\t{}\t{}",
            g.stride,
            g.rf_min,
            g.rf_max,
            g.out_h,
            g.out_w,
            g.padding_influenced()
        );
    }
    s
}
