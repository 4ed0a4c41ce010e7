#[test]
fn dbg_p90() {
    // replicate sample_atlas from io tests
    use atlas_core::builder::{build_atlas, BuildConfig};
    use atlas_core::ingest::{Lcm, RawEdge};
    let lcms: Vec<Lcm> = [
        ("d1", "m1", 0.5, vec![("Hub", "increases", "X"), ("Hub", "reduces", "Y")]),
        ("d1", "m2", 0.25, vec![("Hub", "increases", "X"), ("X", "causes", "Y")]),
        ("d2", "m1", 0.75, vec![("Y", "leads to", "Hub"), ("Hub", "increases", "X")]),
    ]
    .into_iter()
    .map(|(doc, id, score, edges)| Lcm {
        doc_id: doc.into(), lcm_instance_id: id.into(), focus: String::new(),
        edges: edges.into_iter().map(|(s, r, d)| RawEdge { src: s.into(), rel: r.into(), dst: d.into() }).collect(),
        score: Some(score), score_raw: None, coupling: None, radius: None, model_size: None,
    })
    .collect();
    let atlas = build_atlas(&lcms, &BuildConfig::default(), &mut Vec::new()).unwrap();
    let s1 = atlas_core::analytics::atlas_summary(&atlas).unwrap();
    let s2 = atlas_core::analytics::atlas_summary(&atlas).unwrap();
    println!("direct p90 bits: {:x} {:x}", s1.p90.to_bits(), s2.p90.to_bits());
    let json = atlas_core::io::stats_report_json(&atlas).unwrap();
    for line in json.lines() { if line.contains("p90") { println!("json line: {line}"); } }
}
