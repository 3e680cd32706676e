#[derive(Debug, Default, PartialEq)]
pub struct Counts {
    pub fixations: usize,
    pub saccades: usize,
    pub blinks: usize,
}

/// Count event end lines between each SYNCTIME and the following ENDBUTTON.
/// A fixation that began before SYNCTIME is dropped by the default config.
pub fn scan_counts(text: &str) -> Vec<Counts> {
    let mut out = Vec::new();
    let mut open: Option<(i64, Counts)> = None;
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match (f.first().copied(), f.get(2).copied()) {
            (Some("MSG"), Some("SYNCTIME")) => open = Some((f[1].parse().unwrap(), Counts::default())),
            (Some("MSG"), Some("ENDBUTTON")) => out.extend(open.take().map(|(_, c)| c)),
            _ => {}
        }
        let Some((sync, c)) = open.as_mut() else { continue };
        match f.first().copied() {
            Some("EFIX") if f[2].parse::<i64>().unwrap() >= *sync => c.fixations += 1,
            Some("ESACC") => c.saccades += 1,
            Some("EBLINK") => c.blinks += 1,
            _ => {}
        }
    }
    out
}
