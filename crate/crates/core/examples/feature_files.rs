//! Writes and reads back a binary feature file and a JSONL dataset.
//!
//!     cargo run --example feature_files [dir]

use std::path::PathBuf;

use xmodal::dataio::{load_dataset, read_feature_file, write_dataset, write_feature_file, DatasetRecord, FeatureTable};

fn main() -> xmodal::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let mut table = FeatureTable::new(4)?;
    table.insert("beach.jpg", vec![0.5, -1.0, 2.25, 0.0])?;
    table.insert("café.jpg", vec![1.0, 1.0, 1.0, 1.0])?;
    let feats = dir.join("example.imft");
    write_feature_file(&table, &feats)?;
    let back = read_feature_file(&feats)?;
    assert_eq!(back, table);
    println!("{}: {} vectors of dim {}, {} bytes", feats.display(), back.len(), back.dim(), table.to_bytes().len());

    let records = vec![
        DatasetRecord {
            id: "r0".into(),
            feature_ref: "beach.jpg".into(),
            captions: vec!["waves on a sandy beach".into(), "people walking by the sea".into()],
        },
        DatasetRecord {
            id: "r1".into(),
            feature_ref: "café.jpg".into(),
            captions: vec!["a small cafe with outdoor tables".into()],
        },
    ];
    let data = dir.join("example.jsonl");
    write_dataset(&records, &data)?;
    let loaded = load_dataset(&data, &back)?;
    println!("{}: {} records", data.display(), loaded.len());

    // a record pointing at a missing image is reported with its line
    let mut bad = records.clone();
    bad[1].feature_ref = "missing.jpg".into();
    write_dataset(&bad, &data)?;
    match load_dataset(&data, &back) {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
