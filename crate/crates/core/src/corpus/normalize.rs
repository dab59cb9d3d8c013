const SPACED: &[char] = &['"', '.', '?', '!', ':', '(', ')', '[', ']', ','];

/// Lowercases, pads each of `" . ? ! : ( ) [ ] ,` with spaces, collapses
/// whitespace runs and trims.
pub fn normalize_text(text: &str) -> String {
    let mut padded = String::with_capacity(text.len() + 8);
    for c in text.chars().flat_map(char::to_lowercase) {
        if SPACED.contains(&c) {
            padded.push(' ');
            padded.push(c);
            padded.push(' ');
        } else {
            padded.push(c);
        }
    }
    padded.split_whitespace().collect::<Vec<_>>().join(" ")
}
