//! Renders a small synthetic word corpus and writes it as a PGM manifest.
//!
//! ```bash
//! cargo run --release --example render_corpus -- /tmp/words
//! ```

use std::path::PathBuf;

use simtext::data::{load_dataset, synthetic_corpus, write_manifest, Canvas, SyntheticStyle};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("simtext-words"));
    let style = SyntheticStyle {
        font_scale: 1.5,
        slant: 0.1,
        noise: 0.3,
    };
    let samples = synthetic_corpus(&["OAK", "ELM", "FIR", "ASH"], 10, &style, 7, Canvas::TEXT)?;
    write_manifest(&out, &samples)?;

    let back = load_dataset(&out, Canvas::TEXT)?;
    println!("wrote {} samples to {}", back.len(), out.display());

    // ASCII preview of the first sample
    let s = &back[0];
    println!("label {:?}", s.label);
    for row in s.pixels.data().chunks(s.width()) {
        let line: String = row.iter().map(|&v| if v > 0.5 { '#' } else if v > 0.2 { '+' } else { '.' }).collect();
        println!("{line}");
    }
    Ok(())
}
