//! Reading IDX files: a hand-made pair, then the bundled subset with its
//! stratified split.

use std::path::Path;

use pacgrad::data::idx;
use pacgrad::{load_idx, split};

fn main() -> pacgrad::Result<()> {
    let tmp = std::env::temp_dir().join(format!("pacgrad-idx-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).expect("temp dir");
    let pixels: Vec<u8> = (0..2 * 2 * 3).map(|i| (i * 20) as u8).collect();
    std::fs::write(tmp.join("images"), idx::encode_images(2, 2, &pixels)).expect("write");
    std::fs::write(tmp.join("labels"), idx::encode_labels(&[0, 1, 1])).expect("write");
    let small = load_idx(tmp.join("images"), tmp.join("labels"))?;
    println!("hand-made: {} images of dim {}, first row {:?}", small.len(), small.input_dim(), small.row(0));
    std::fs::remove_dir_all(&tmp).ok();

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let data = load_idx(dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))?;
    let (train, heldout) = split(&data, 0.8, 0)?;
    println!("subset: {} images, {} classes, per class {:?}", data.len(), data.class_count(), data.class_counts());
    println!("split: train {} {:?}, held out {}", train.len(), train.class_counts(), heldout.len());
    println!("provenance: {:?}", data.provenance());
    Ok(())
}
