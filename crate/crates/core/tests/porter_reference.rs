//! Full Porter reference vocabulary (`voc.txt` / `output.txt`).

use xmodal::textpipe::stem;

const VOC: &str = include_str!("data/porter_voc.txt");
const OUTPUT: &str = include_str!("data/porter_output.txt");

#[test]
fn agrees_with_reference_vocabulary() {
    let words: Vec<&str> = VOC.lines().collect();
    let stems: Vec<&str> = OUTPUT.lines().collect();
    assert_eq!(words.len(), stems.len());
    assert_eq!(words.len(), 23531);
    let mismatches: Vec<String> = words
        .iter()
        .zip(&stems)
        .filter(|(w, s)| stem(w) != **s)
        .map(|(w, s)| format!("{w}: got {}, want {s}", stem(w)))
        .collect();
    assert!(mismatches.is_empty(), "{} mismatches, first: {:?}", mismatches.len(), &mismatches[..mismatches.len().min(10)]);
}
